#include "stnn/trainer.hpp"

#include "stnn/network_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

namespace stnn {

double mse_loss(const std::vector<RVector>& pred, const std::vector<RVector>& target, std::size_t n) {
    if (pred.size() != target.size()) throw ShapeError("mse_loss: row counts differ");
    if (pred.empty()) throw ShapeError("mse_loss: empty batch");
    if (n == 0) throw ShapeError("mse_loss: N must be positive");
    double sum = 0.0;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        if (pred[s].size() != 2 * n || target[s].size() != 2 * n) throw ShapeError("mse_loss: rows must have length 2N");
        for (std::size_t i = 0; i < pred[s].size(); ++i) {
            const double d = pred[s][i] - target[s][i];
            sum += d * d;
        }
    }
    return sum / (static_cast<double>(n) * static_cast<double>(pred.size()));
}

// --- backward ------------------------------------------------------------------

namespace {

// y = d * x in the given diagonal mode; accumulates dL/dd and returns dL/dx.
inline cplx diag_backward(DiagonalMode mode, cplx d, cplx x, cplx gy, cplx& gd) {
    if (mode == DiagonalMode::complex) {
        gd += gy * std::conj(x);
        return std::conj(d) * gy;
    }
    gd += cplx{x.real() * gy.real(), x.imag() * gy.imag()};
    return {d.real() * gy.real(), d.imag() * gy.imag()};
}

RVector block_backward(const Network& net, const BlockParams& bp, const BlockTrace& tr, std::span<const double> gout,
                       BlockParams& g) {
    const auto& cfg = net.config();
    const std::size_t n = cfg.n;
    const std::size_t m = cfg.m();
    const std::size_t hidden = cfg.hidden();
    const std::size_t hidden_c = hidden / 2;
    const auto mode = cfg.diagonal_mode;
    const auto& layout = net.frozen().chain;

    for (std::size_t i = 0; i < 2 * n; ++i) g.bias_out[i] += gout[i];

    RVector gy3(hidden, 0.0);
    if (cfg.kind == ModelKind::structured) {
        CVector gy3c(hidden_c);
        CVector gw(m);
        for (std::size_t i = 0; i < cfg.p; ++i) {
            const auto& s = bp.subs[i];
            auto& gs = g.subs[i];
            const auto& st = tr.subs[i];
            std::fill(gw.begin(), gw.end(), cplx{});
            for (std::size_t k = 0; k < n; ++k) {
                const cplx go{gout[k], gout[n + k]};
                gw[k] = diag_backward(mode, s.d_hat_out[k], st.truncated[k], go, gs.d_hat_out[k]);
            }
            chain_backward(layout, s.f_star, st.f_star, gw, std::span<cplx>(gy3c.data() + i * m, m), gs.f_star);
        }
        gy3 = real_split(gy3c);
    } else {
        for (std::size_t r = 0; r < 2 * n; ++r) {
            const double go = gout[r];
            if (go == 0.0) continue;
            const double* row = &bp.w4[r * hidden];
            double* grow = &g.w4[r * hidden];
            for (std::size_t c = 0; c < hidden; ++c) {
                grow[c] += go * tr.y3[c];
                gy3[c] += row[c] * go;
            }
        }
    }

    // y3 = y2 + skip * y1, y2 = split(delay * join(y1))
    RVector gy1(hidden);
    for (std::size_t k = 0; k < hidden; ++k) {
        g.skip[k] += gy3[k] * tr.y1[k];
        gy1[k] = bp.skip[k] * gy3[k];
    }
    const auto& delay = net.frozen().delay_diag;
    for (std::size_t k = 0; k < hidden_c; ++k) {
        const cplx gd = std::conj(delay[k]) * cplx{gy3[k], gy3[hidden_c + k]};
        gy1[k] += gd.real();
        gy1[hidden_c + k] += gd.imag();
    }

    RVector gpre(hidden);
    for (std::size_t k = 0; k < hidden; ++k) {
        gpre[k] = tr.pre1[k] >= 0.0 ? gy1[k] : cfg.activation_slope * gy1[k];
        g.bias1[k] += gpre[k];
    }

    RVector gx(2 * n, 0.0);
    if (cfg.kind == ModelKind::structured) {
        CVector gxc(n);
        CVector gc(m);
        CVector gpadded(m);
        for (std::size_t i = 0; i < cfg.p; ++i) {
            const auto& s = bp.subs[i];
            auto& gs = g.subs[i];
            const auto& st = tr.subs[i];
            for (std::size_t k = 0; k < m; ++k) {
                const cplx gz{gpre[i * m + k], gpre[hidden_c + i * m + k]};
                gc[k] = diag_backward(mode, s.d_breve[k], st.f_out[k], gz, gs.d_breve[k]);
            }
            chain_backward(layout, s.f, st.f, gc, gpadded, gs.f);
            for (std::size_t k = 0; k < n; ++k) gxc[k] += diag_backward(mode, s.d_hat_in[k], tr.input_complex[k], gpadded[k], gs.d_hat_in[k]);
        }
        gx = real_split(gxc);
    } else {
        const std::size_t in = 2 * n;
        for (std::size_t r = 0; r < hidden; ++r) {
            const double gp = gpre[r];
            if (gp == 0.0) continue;
            const double* row = &bp.w1[r * in];
            double* grow = &g.w1[r * in];
            for (std::size_t c = 0; c < in; ++c) {
                grow[c] += gp * tr.input[c];
                gx[c] += row[c] * gp;
            }
        }
    }
    return gx;
}

}  // namespace

RVector backward_from_output_grad(const Network& net, const ForwardTrace& trace, std::span<const double> grad_out,
                                  GradientPack& grad) {
    const auto& blocks = net.params().blocks;
    if (trace.blocks.size() != blocks.size()) throw ShapeError("backward: trace does not belong to this network");
    if (grad.blocks.size() != blocks.size()) throw ShapeError("backward: gradient pack does not match the network");
    if (grad_out.size() != net.output_dim()) throw ShapeError("backward: output gradient has the wrong length");
    RVector g(grad_out.begin(), grad_out.end());
    for (std::size_t b = blocks.size(); b-- > 0;) {
        if (trace.blocks[b].pre1.size() != net.config().hidden()) throw ShapeError("backward: trace does not belong to this network");
        g = block_backward(net, blocks[b], trace.blocks[b], g, grad.blocks[b]);
    }
    return g;
}

GradientPack backward(const Network& net, const ForwardTrace& trace, std::span<const double> target) {
    if (target.size() != net.output_dim()) throw ShapeError("backward: target has the wrong length");
    if (trace.blocks.empty()) throw ShapeError("backward: empty trace");
    const RVector& out = trace.blocks.back().output;
    const double scale = 2.0 / static_cast<double>(net.config().n);
    RVector gout(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) gout[i] = scale * (out[i] - target[i]);
    GradientPack grad = net.zero_pack();
    backward_from_output_grad(net, trace, gout, grad);
    return grad;
}

void add_into(const Network& net, GradientPack& dst, const GradientPack& src) {
    std::vector<std::span<double>> views;
    auto& s = const_cast<GradientPack&>(src);
    for_each_stored(net, s, [&](const std::string&, std::span<double> v) { views.push_back(v); });
    std::size_t i = 0;
    for_each_stored(net, dst, [&](const std::string&, std::span<double> v) {
        const auto& from = views.at(i++);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += from[k];
    });
}

BatchView whole(const std::vector<Sample>& samples) { return BatchView{&samples, {}}; }

namespace {

void check_sample(const Network& net, const Sample& s) {
    if (s.input.size() != net.input_dim() || s.target.size() != net.output_dim())
        throw ShapeError("sample length " + std::to_string(s.input.size()) + " does not match network input " +
                         std::to_string(net.input_dim()));
}

constexpr std::size_t kChunks = 8;

template <class Fn>
void run_chunks(std::size_t count, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t c = 0; c < count; ++c) fn(c);
        return;
    }
    const std::size_t workers = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t c = w; c < count; c += workers) fn(c);
        });
    for (auto& t : pool) t.join();
}

}  // namespace

double batch_mse(const Network& net, const BatchView& batch) {
    if (batch.size() == 0) throw ShapeError("batch_mse: empty batch");
    double sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample& s = batch[i];
        check_sample(net, s);
        const RVector y = predict(net, s.input);
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double d = y[k] - s.target[k];
            sum += d * d;
        }
    }
    return sum / (static_cast<double>(net.config().n) * static_cast<double>(batch.size()));
}

LossAndGrad loss_and_gradient(const Network& net, const BatchView& batch, std::size_t threads) {
    const std::size_t b = batch.size();
    if (b == 0) throw ShapeError("loss_and_gradient: empty batch");
    const std::size_t chunks = std::min(kChunks, b);
    std::vector<double> sums(chunks, 0.0);
    std::vector<GradientPack> grads(chunks);
    const double norm = static_cast<double>(net.config().n) * static_cast<double>(b);

    run_chunks(chunks, threads, [&](std::size_t c) {
        grads[c] = net.zero_pack();
        const std::size_t lo = c * b / chunks;
        const std::size_t hi = (c + 1) * b / chunks;
        RVector gout(net.output_dim());
        for (std::size_t i = lo; i < hi; ++i) {
            const Sample& s = batch[i];
            check_sample(net, s);
            const ForwardResult fr = forward(net, s.input);
            for (std::size_t k = 0; k < gout.size(); ++k) {
                const double d = fr.y[k] - s.target[k];
                sums[c] += d * d;
                gout[k] = 2.0 * d / norm;
            }
            backward_from_output_grad(net, fr.trace, gout, grads[c]);
        }
    });

    LossAndGrad out;
    out.grad = std::move(grads[0]);
    double sum = sums[0];
    for (std::size_t c = 1; c < chunks; ++c) {
        add_into(net, out.grad, grads[c]);
        sum += sums[c];
    }
    out.loss = sum / norm;
    return out;
}

std::vector<std::string> trainable_names(const Network& net) {
    std::vector<std::string> names;
    ParameterPack scratch = net.zero_pack();
    for_each_trainable(net, scratch, [&](const std::string& name, std::span<double> v) {
        for (std::size_t j = 0; j < v.size(); ++j) names.push_back(name + "[" + std::to_string(j) + "]");
    });
    return names;
}

GradCheckResult grad_check(const Network& net, const BatchView& batch, const GradCheckOptions& options) {
    const LossAndGrad lg = loss_and_gradient(net, batch);
    RVector analytic = flatten_trainable(net, lg.grad);
    if (options.corrupt_index && *options.corrupt_index < analytic.size()) analytic[*options.corrupt_index] *= options.corrupt_factor;

    const RVector theta = flatten_trainable(net, net.params());
    const auto names = trainable_names(net);
    Network probe = net;
    RVector work = theta;

    GradCheckResult res;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double h = options.h_rel * std::max(1.0, std::abs(theta[i]));
        work[i] = theta[i] + h;
        unflatten_trainable(probe, probe.params(), work);
        const double up = batch_mse(probe, batch);
        work[i] = theta[i] - h;
        unflatten_trainable(probe, probe.params(), work);
        const double down = batch_mse(probe, batch);
        work[i] = theta[i];
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[i];
        const double resolution =
            options.resolution_ulps * std::numeric_limits<double>::epsilon() * std::max(std::abs(up), std::abs(down)) / h;
        const double err = std::max(0.0, std::abs(a - numeric) - resolution) / std::max({std::abs(a), std::abs(numeric), options.floor});
        ++res.checked;
        res.raw_max_rel_error =
            std::max(res.raw_max_rel_error, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.floor}));
        if (err > res.max_rel_error || i == 0) {
            res.max_rel_error = err;
            res.worst_param = names[i];
            res.worst_index = i;
            res.analytic = a;
            res.numeric = numeric;
            res.resolution = resolution;
        }
    }
    return res;
}

bool resample_away_from_kinks(const Network& net, std::vector<Sample>& samples, const std::function<Sample()>& redraw,
                              double margin, int max_tries) {
    for (auto& s : samples) {
        int tries = 0;
        while (min_kink_distance(forward(net, s.input).trace) < margin) {
            if (++tries > max_tries) return false;
            s = redraw();
        }
    }
    return true;
}

// --- optimisers ----------------------------------------------------------------

std::string to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::lm: return "lm";
    }
    return "?";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    if (s == "lm" || s == "gauss_newton_lm") return OptimizerKind::lm;
    throw ConfigError("unknown optimizer '" + s + "' (expected adam, sgd or lm)");
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
    if (!(lm_damping > 0.0) || !(lm_increase > 1.0) || !(lm_decrease > 0.0 && lm_decrease < 1.0) || lm_max_tries < 1)
        throw ConfigError("invalid LM damping settings");
    if (!(target_mse >= 0.0)) throw ConfigError("target MSE must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
}

std::string optimizer_config_json(const OptimizerConfig& cfg) {
    const nlohmann::json j = {{"kind", to_string(cfg.kind)},
                              {"learning_rate", cfg.learning_rate},
                              {"beta1", cfg.beta1},
                              {"beta2", cfg.beta2},
                              {"eps", cfg.eps},
                              {"lm_damping", cfg.lm_damping},
                              {"lm_increase", cfg.lm_increase},
                              {"lm_decrease", cfg.lm_decrease},
                              {"lm_max_tries", cfg.lm_max_tries},
                              {"batch_size", cfg.batch_size},
                              {"epochs", cfg.epochs},
                              {"seed", cfg.seed},
                              {"target_mse", cfg.target_mse},
                              {"patience", cfg.patience},
                              {"threads", cfg.threads}};
    return j.dump();
}

void sgd_step(std::span<double> theta, std::span<const double> grad, double lr) {
    if (theta.size() != grad.size()) throw ShapeError("sgd_step: size mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
}

void AdamState::step(std::span<double> theta, std::span<const double> grad, const OptimizerConfig& cfg) {
    if (theta.size() != grad.size() || theta.size() != m_.size()) throw ShapeError("adam: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * grad[i];
        v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mh = m_[i] / c1;
        const double vh = v_[i] / c2;
        theta[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.eps);
    }
}

namespace {

double sum_squares(const RVector& r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return s;
}

}  // namespace

LmStepResult lm_step(const LeastSquaresProblem& problem, RVector& theta, LmState& state, const OptimizerConfig& cfg) {
    if (theta.size() != problem.num_params) throw ShapeError("lm_step: parameter count mismatch");
    const RVector r = problem.residuals(theta);
    const Eigen::MatrixXd jac = problem.jacobian(theta);
    if (static_cast<std::size_t>(jac.rows()) != r.size() || static_cast<std::size_t>(jac.cols()) != theta.size())
        throw ShapeError("lm_step: Jacobian shape mismatch");
    const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * rv;

    LmStepResult res;
    res.cost_before = sum_squares(r);
    res.cost_after = res.cost_before;
    if (!std::isfinite(res.cost_before)) throw DivergenceError("lm: non-finite residuals");
    const auto n = static_cast<Eigen::Index>(theta.size());
    RVector trial(theta.size());
    for (int attempt = 0; attempt < cfg.lm_max_tries; ++attempt) {
        ++res.tries;
        Eigen::MatrixXd a = jtj;
        a.diagonal().array() += state.mu;
        const Eigen::VectorXd delta = a.ldlt().solve(-jtr);
        for (Eigen::Index i = 0; i < n; ++i) trial[static_cast<std::size_t>(i)] = theta[static_cast<std::size_t>(i)] + delta(i);
        const double cost = sum_squares(problem.residuals(trial));
        if (std::isfinite(cost) && cost < res.cost_before) {
            theta = trial;
            res.accepted = true;
            res.cost_after = cost;
            state.mu = std::max(state.mu * cfg.lm_decrease, 1e-15);
            return res;
        }
        state.mu = std::min(state.mu * cfg.lm_increase, 1e15);
    }
    return res;
}

LeastSquaresProblem network_least_squares(const Network& net, const BatchView& batch) {
    if (batch.size() == 0) throw ShapeError("network_least_squares: empty batch");
    LeastSquaresProblem p;
    p.num_params = flatten_trainable(net, net.params()).size();
    const double scale = 1.0 / std::sqrt(static_cast<double>(net.config().n) * static_cast<double>(batch.size()));
    const std::size_t out_dim = net.output_dim();

    p.residuals = [&net, batch, scale, out_dim](std::span<const double> theta) {
        Network probe = net;
        unflatten_trainable(probe, probe.params(), theta);
        RVector r;
        r.reserve(batch.size() * out_dim);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const Sample& s = batch[i];
            check_sample(probe, s);
            const RVector y = predict(probe, s.input);
            for (std::size_t k = 0; k < out_dim; ++k) r.push_back(scale * (y[k] - s.target[k]));
        }
        return r;
    };
    p.jacobian = [&net, batch, scale, out_dim, np = p.num_params](std::span<const double> theta) {
        Network probe = net;
        unflatten_trainable(probe, probe.params(), theta);
        Eigen::MatrixXd jac(static_cast<Eigen::Index>(batch.size() * out_dim), static_cast<Eigen::Index>(np));
        RVector e(out_dim, 0.0);
        Eigen::Index row = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const ForwardResult fr = forward(probe, batch[i].input);
            for (std::size_t k = 0; k < out_dim; ++k, ++row) {
                GradientPack g = probe.zero_pack();
                e[k] = scale;
                backward_from_output_grad(probe, fr.trace, e, g);
                e[k] = 0.0;
                const RVector flat = flatten_trainable(probe, g);
                for (std::size_t c = 0; c < np; ++c) jac(row, static_cast<Eigen::Index>(c)) = flat[c];
            }
        }
        return jac;
    };
    return p;
}

// --- training loop -----------------------------------------------------------

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::epochs: return "epochs";
        case StopReason::target_mse: return "target_mse";
        case StopReason::patience: return "patience";
    }
    return "?";
}

std::string report_to_json(const TrainReport& report, bool include_wall_time, int indent) {
    nlohmann::json j;
    j["version"] = kVersion;
    j["config"] = {{"network", nlohmann::json::parse(network_config_json(report.network))}, {"optimizer", nlohmann::json::parse(optimizer_config_json(report.optimizer))}};
    j["seed"] = report.optimizer.seed;
    j["train_samples"] = report.train_samples;
    j["val_samples"] = report.val_samples;
    j["epochs_run"] = report.epochs_run;
    j["steps"] = report.steps;
    j["train_mse"] = report.train_mse;
    j["val_mse"] = report.val_mse;
    j["final_train_mse"] = report.train_mse.empty() ? nlohmann::json() : nlohmann::json(report.train_mse.back());
    j["final_val_mse"] = report.val_mse.empty() ? nlohmann::json() : nlohmann::json(report.val_mse.back());
    j["param_count"] = report.param_count;
    if (include_wall_time) j["wall_time_s"] = report.wall_time_s;
    j["stop_reason"] = to_string(report.stop_reason);
    return j.dump(indent);
}

namespace {

void check_dataset(const Network& net, const Dataset& ds, const char* what) {
    if (ds.samples.empty()) return;
    if (ds.n != net.config().n)
        throw ShapeError(std::string(what) + " data has N = " + std::to_string(ds.n) + " but the network has N = " +
                         std::to_string(net.config().n));
    for (const auto& s : ds.samples) check_sample(net, s);
}

void check_finite(double v, const char* what, std::size_t epoch) {
    if (!std::isfinite(v)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s MSE became %g at epoch %zu; lower the learning rate", what, v, epoch);
        throw DivergenceError(buf);
    }
}

}  // namespace

TrainResult train(Network net, const Dataset& train_set, const Dataset& val_set, const OptimizerConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.samples.empty()) throw ConfigError("train: empty training set");
    check_dataset(net, train_set, "training");
    check_dataset(net, val_set, "validation");

    const auto start = std::chrono::steady_clock::now();
    TrainReport rep;
    rep.network = net.config();
    rep.optimizer = cfg;
    rep.train_samples = train_set.size();
    rep.val_samples = val_set.size();
    rep.param_count = count_parameters(net).total;
    if (cfg.kind == OptimizerKind::lm && rep.param_count > kLmMaxParams)
        throw ConfigError("lm optimizer is limited to " + std::to_string(kLmMaxParams) + " trainable parameters (this network has " +
                          std::to_string(rep.param_count) + "); use adam");

    const bool has_val = !val_set.samples.empty();
    auto evaluate = [&](std::size_t epoch) {
        const double tr = batch_mse(net, whole(train_set.samples));
        check_finite(tr, "training", epoch);
        rep.train_mse.push_back(tr);
        double va = tr;
        if (has_val) {
            va = batch_mse(net, whole(val_set.samples));
            check_finite(va, "validation", epoch);
            rep.val_mse.push_back(va);
        }
        if (on_epoch) on_epoch(epoch, tr, has_val ? va : std::nan(""));
        return va;
    };

    double best = evaluate(0);
    std::size_t since_best = 0;
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    AdamState adam(flatten_trainable(net, net.params()).size());
    LmState lm{cfg.lm_damping};
    if (cfg.target_mse > 0.0 && best <= cfg.target_mse) rep.stop_reason = StopReason::target_mse;

    for (std::size_t epoch = 1; epoch <= cfg.epochs && rep.stop_reason == StopReason::epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            BatchView batch{&train_set.samples, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                                                         order.begin() + static_cast<std::ptrdiff_t>(hi))};
            RVector theta = flatten_trainable(net, net.params());
            if (cfg.kind == OptimizerKind::lm) {
                lm_step(network_least_squares(net, batch), theta, lm, cfg);
            } else {
                const LossAndGrad lg = loss_and_gradient(net, batch, cfg.threads);
                check_finite(lg.loss, "mini-batch", epoch);
                const RVector g = flatten_trainable(net, lg.grad);
                if (cfg.kind == OptimizerKind::sgd)
                    sgd_step(theta, g, cfg.learning_rate);
                else
                    adam.step(theta, g, cfg);
            }
            unflatten_trainable(net, net.params(), theta);
            ++rep.steps;
        }
        rep.epochs_run = epoch;
        const double monitored = evaluate(epoch);
        if (cfg.target_mse > 0.0 && monitored <= cfg.target_mse) {
            rep.stop_reason = StopReason::target_mse;
        } else if (monitored < best) {
            best = monitored;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            rep.stop_reason = StopReason::patience;
        }
    }
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return TrainResult{std::move(net), std::move(rep)};
}

}  // namespace stnn
