#include "stnn/network.hpp"

#include "stnn/fft.hpp"
#include "stnn/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace stnn {

std::string to_string(ModelKind kind) { return kind == ModelKind::structured ? "stnn" : "ffnn"; }

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "stnn" || s == "structured") return ModelKind::structured;
    if (s == "ffnn" || s == "fully_connected") return ModelKind::fully_connected;
    throw ConfigError("unknown model kind '" + s + "' (expected stnn or ffnn)");
}

std::string to_string(DiagonalMode mode) { return mode == DiagonalMode::complex ? "complex" : "real_split"; }

DiagonalMode diagonal_mode_from_string(const std::string& s) {
    if (s == "complex") return DiagonalMode::complex;
    if (s == "real_split") return DiagonalMode::real_split;
    throw ConfigError("unknown diagonal mode '" + s + "' (expected complex or real_split)");
}

void NetworkConfig::validate() const {
    if (n < 2 || !is_power_of_two(n)) throw ConfigError("network: N must be a power of two >= 2, got " + std::to_string(n));
    if (p < 1) throw ConfigError("network: p must be >= 1");
    if (l_layers < 5 || (l_layers - 1) % 4 != 0)
        throw ConfigError("network: layer count must satisfy L >= 5 with L - 1 a multiple of 4, got " + std::to_string(l_layers));
    if (!std::isfinite(activation_slope)) throw ConfigError("network: activation slope must be finite");
    if (!std::isfinite(delay_phase)) throw ConfigError("network: delay phase must be finite");
    if (kind == ModelKind::structured) {
        const int max_depth = log2_exact(m());
        if (lambda < 1 || lambda > max_depth)
            throw ConfigError("network: lambda must lie in [1, " + std::to_string(max_depth) + "] for N = " + std::to_string(n) +
                              ", got " + std::to_string(lambda));
    }
}

// --- construction --------------------------------------------------------------

Network::Network(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    if (config_.kind == ModelKind::structured) {
        ChainOptions options;
        options.normalized = true;
        options.independent_twiddles = config_.independent_twiddles;
        options.pin_gauge = config_.gauge_pinned();
        frozen_.chain = ChainLayout::make(config_.m(), config_.lambda, options);
    }
    std::vector<int> exponents(config_.hidden() / 2);
    for (std::size_t k = 0; k < exponents.size(); ++k) exponents[k] = static_cast<int>(k);
    set_delay_exponents(std::move(exponents));
    params_ = zero_pack();
}

void Network::set_delay_exponents(std::vector<int> exponents) {
    if (exponents.size() != config_.hidden() / 2) throw ShapeError("delay exponents must have length 2pN");
    frozen_.delay_exponents = std::move(exponents);
    frozen_.delay_diag.resize(frozen_.delay_exponents.size());
    for (std::size_t k = 0; k < frozen_.delay_diag.size(); ++k)
        frozen_.delay_diag[k] = unit_power(config_.delay_phase, static_cast<double>(frozen_.delay_exponents[k]));
}

ParameterPack Network::zero_pack() const {
    const std::size_t n = config_.n;
    const std::size_t m = config_.m();
    const std::size_t hidden = config_.hidden();
    ParameterPack pack;
    pack.blocks.resize(config_.blocks());
    for (auto& b : pack.blocks) {
        if (config_.kind == ModelKind::structured) {
            b.subs.resize(config_.p);
            for (auto& s : b.subs) {
                s.d_hat_in.assign(n, cplx{});
                s.f = ChainParams::zeros(frozen_.chain);
                s.d_breve.assign(m, cplx{});
                s.f_star = ChainParams::zeros(frozen_.chain);
                s.d_hat_out.assign(n, cplx{});
            }
        } else {
            b.w1.assign(hidden * 2 * n, 0.0);
            b.w4.assign(2 * n * hidden, 0.0);
        }
        b.bias1.assign(hidden, 0.0);
        b.skip.assign(hidden, 0.0);
        b.bias_out.assign(2 * n, 0.0);
    }
    return pack;
}

double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

namespace {

cplx random_unit(Rng& rng) {
    const double a = rng.uniform(0.0, 2.0 * kPi);
    return {std::cos(a), std::sin(a)};
}

void fill_unit(CVector& v, Rng& rng, double scale = 1.0) {
    for (auto& x : v) x = scale * random_unit(rng);
}

void pin_chain_gauge(const ChainLayout& layout, ChainParams& params) {
    if (!layout.pin_gauge) return;
    for (int level = 0; level < layout.depth; ++level) {
        const std::size_t h = layout.half(level);
        for (std::size_t start = 0; start < params.twiddles[level].size(); start += h) params.twiddles[level][start] = 1.0;
    }
    params.leaf[0] = 1.0 / std::sqrt(static_cast<double>(layout.leaf_size));
}

}  // namespace

Network build_network(const NetworkConfig& config) {
    Network net(config);
    Rng rng(config.seed);
    const auto& layout = net.frozen().chain;
    for (auto& b : net.params().blocks) {
        if (config.kind == ModelKind::structured) {
            const double leaf_scale = 1.0 / std::sqrt(static_cast<double>(layout.leaf_size));
            for (auto& s : b.subs) {
                fill_unit(s.d_hat_in, rng);
                for (auto& tw : s.f.twiddles) fill_unit(tw, rng);
                fill_unit(s.f.leaf, rng, leaf_scale);
                pin_chain_gauge(layout, s.f);
                fill_unit(s.d_breve, rng);
                for (auto& tw : s.f_star.twiddles) fill_unit(tw, rng);
                fill_unit(s.f_star.leaf, rng, leaf_scale);
                pin_chain_gauge(layout, s.f_star);
                fill_unit(s.d_hat_out, rng);
            }
        } else {
            const double s1 = 1.0 / std::sqrt(static_cast<double>(net.input_dim()));
            const double s4 = 1.0 / std::sqrt(static_cast<double>(config.hidden()));
            for (auto& w : b.w1) w = s1 * rng.normal();
            for (auto& w : b.w4) w = s4 * rng.normal();
        }
    }
    return net;
}

Network init_from_dvm(Network net, const DvmSpec& spec) {
    const auto& cfg = net.config();
    if (cfg.kind != ModelKind::structured) throw ConfigError("init_from_dvm: only structured networks carry DVM factors");
    if (cfg.diagonal_mode != DiagonalMode::complex) throw ConfigError("init_from_dvm: exact factors need complex diagonals");
    spec.validate();
    if (spec.n != cfg.n) throw ShapeError("init_from_dvm: DVM size does not match the network");

    CVector chirp(cfg.n);
    for (std::size_t k = 0; k < cfg.n; ++k) chirp[k] = unit_power(spec.phase, 0.5 * static_cast<double>(k * k));
    const CVector d_breve = fft(circulant_first_column(spec), false);
    const auto& layout = net.frozen().chain;
    const double inv_p = 1.0 / static_cast<double>(cfg.p);

    for (auto& b : net.params().blocks) {
        for (auto& s : b.subs) {
            s.d_hat_in = chirp;
            s.f = ChainParams::exact(layout, false, true);
            s.d_breve = d_breve;
            s.f_star = ChainParams::exact(layout, true, true);
            s.d_hat_out = chirp;
            for (auto& v : s.d_hat_out) v *= inv_p;
        }
        std::fill(b.bias1.begin(), b.bias1.end(), 0.0);
        std::fill(b.skip.begin(), b.skip.end(), 0.0);
        std::fill(b.bias_out.begin(), b.bias_out.end(), 0.0);
    }
    return net;
}

void init_dft_chains(Network& net) {
    if (net.config().kind != ModelKind::structured) throw ConfigError("init_dft_chains: only structured networks have chains");
    const auto& layout = net.frozen().chain;
    for (auto& b : net.params().blocks) {
        for (auto& s : b.subs) {
            s.f = ChainParams::exact(layout, false, true);
            s.f_star = ChainParams::exact(layout, true, true);
        }
    }
}

// --- forward -------------------------------------------------------------------

namespace {

inline cplx diag_mul(DiagonalMode mode, cplx d, cplx x) {
    if (mode == DiagonalMode::complex) return d * x;
    return {d.real() * x.real(), d.imag() * x.imag()};
}

RVector forward_block(const Network& net, const BlockParams& bp, std::span<const double> x, BlockTrace* tr) {
    const auto& cfg = net.config();
    const std::size_t n = cfg.n;
    const std::size_t m = cfg.m();
    const std::size_t hidden = cfg.hidden();
    const std::size_t hidden_c = hidden / 2;
    const auto mode = cfg.diagonal_mode;
    const auto& layout = net.frozen().chain;

    RVector pre1(hidden);
    CVector xc;
    if (cfg.kind == ModelKind::structured) {
        xc = real_join(x);
        CVector zc(hidden_c);
        if (tr) tr->subs.resize(cfg.p);
        CVector padded(m);
        for (std::size_t i = 0; i < cfg.p; ++i) {
            const auto& s = bp.subs[i];
            std::fill(padded.begin(), padded.end(), cplx{});
            for (std::size_t k = 0; k < n; ++k) padded[k] = diag_mul(mode, s.d_hat_in[k], xc[k]);
            CVector c = chain_apply(layout, s.f, padded, tr ? &tr->subs[i].f : nullptr);
            for (std::size_t k = 0; k < m; ++k) zc[i * m + k] = diag_mul(mode, s.d_breve[k], c[k]);
            if (tr) tr->subs[i].f_out = std::move(c);
        }
        for (std::size_t k = 0; k < hidden_c; ++k) {
            pre1[k] = zc[k].real() + bp.bias1[k];
            pre1[hidden_c + k] = zc[k].imag() + bp.bias1[hidden_c + k];
        }
    } else {
        const std::size_t in = 2 * n;
        for (std::size_t r = 0; r < hidden; ++r) {
            double acc = bp.bias1[r];
            const double* row = &bp.w1[r * in];
            for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
            pre1[r] = acc;
        }
    }

    RVector y1(hidden);
    for (std::size_t k = 0; k < hidden; ++k) y1[k] = leaky_relu(pre1[k], cfg.activation_slope);

    CVector delay_in = real_join(y1);
    CVector delay_out(hidden_c);
    const auto& delay = net.frozen().delay_diag;
    for (std::size_t k = 0; k < hidden_c; ++k) delay_out[k] = delay[k] * delay_in[k];
    RVector y2 = real_split(delay_out);

    RVector y3(hidden);
    for (std::size_t k = 0; k < hidden; ++k) y3[k] = y2[k] + bp.skip[k] * y1[k];

    RVector out(2 * n);
    if (cfg.kind == ModelKind::structured) {
        CVector y3c = real_join(y3);
        CVector outc(n);
        for (std::size_t i = 0; i < cfg.p; ++i) {
            const auto& s = bp.subs[i];
            std::span<const cplx> v(y3c.data() + i * m, m);
            CVector w = chain_apply(layout, s.f_star, v, tr ? &tr->subs[i].f_star : nullptr);
            for (std::size_t k = 0; k < n; ++k) outc[k] += diag_mul(mode, s.d_hat_out[k], w[k]);
            if (tr) tr->subs[i].truncated.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
        }
        for (std::size_t k = 0; k < n; ++k) {
            out[k] = outc[k].real() + bp.bias_out[k];
            out[n + k] = outc[k].imag() + bp.bias_out[n + k];
        }
    } else {
        for (std::size_t r = 0; r < 2 * n; ++r) {
            double acc = bp.bias_out[r];
            const double* row = &bp.w4[r * hidden];
            for (std::size_t c = 0; c < hidden; ++c) acc += row[c] * y3[c];
            out[r] = acc;
        }
    }

    if (tr) {
        tr->input.assign(x.begin(), x.end());
        tr->input_complex = std::move(xc);
        tr->pre1 = std::move(pre1);
        tr->y1 = std::move(y1);
        tr->delay_in = std::move(delay_in);
        tr->delay_out = std::move(delay_out);
        tr->y2 = std::move(y2);
        tr->y3 = std::move(y3);
        tr->output = out;
    }
    return out;
}

}  // namespace

ForwardResult forward(const Network& net, std::span<const double> x) {
    if (x.size() != net.input_dim())
        throw ShapeError("forward: input length " + std::to_string(x.size()) + ", expected " + std::to_string(net.input_dim()));
    ForwardResult result;
    result.trace.blocks.resize(net.params().blocks.size());
    RVector v(x.begin(), x.end());
    for (std::size_t b = 0; b < net.params().blocks.size(); ++b) v = forward_block(net, net.params().blocks[b], v, &result.trace.blocks[b]);
    result.y = std::move(v);
    return result;
}

RVector predict(const Network& net, std::span<const double> x) {
    if (x.size() != net.input_dim())
        throw ShapeError("predict: input length " + std::to_string(x.size()) + ", expected " + std::to_string(net.input_dim()));
    RVector v(x.begin(), x.end());
    for (const auto& b : net.params().blocks) v = forward_block(net, b, v, nullptr);
    return v;
}

double min_kink_distance(const ForwardTrace& trace) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : trace.blocks)
        for (double v : b.pre1) best = std::min(best, std::abs(v));
    return best;
}

void init_bias_offset(Network& net, const std::vector<RVector>& inputs, double factor) {
    if (inputs.empty()) throw ConfigError("init_bias_offset: no inputs");
    if (!(factor > 1.0)) throw ConfigError("init_bias_offset: factor must exceed 1");
    std::vector<RVector> v = inputs;
    for (const auto& x : v)
        if (x.size() != net.input_dim()) throw ShapeError("init_bias_offset: input length does not match the network");
    const RVector zero(net.input_dim(), 0.0);
    for (auto& bp : net.params().blocks) {
        RVector reach(bp.bias1.size(), 0.0);
        BlockTrace tr;
        for (const auto& x : v) {
            forward_block(net, bp, x, &tr);
            for (std::size_t k = 0; k < reach.size(); ++k) reach[k] = std::max(reach[k], std::abs(tr.pre1[k] - bp.bias1[k]));
        }
        for (std::size_t k = 0; k < reach.size(); ++k) bp.bias1[k] = factor * reach[k];
        // the block is affine on the shifted region; remove its constant term
        const RVector offset = forward_block(net, bp, zero, nullptr);
        for (std::size_t k = 0; k < offset.size(); ++k) bp.bias_out[k] -= offset[k];
        for (auto& x : v) x = forward_block(net, bp, x, nullptr);
    }
}

// --- parameter views -------------------------------------------------------------

namespace {

std::span<double> reals(CVector& v) { return {reinterpret_cast<double*>(v.data()), 2 * v.size()}; }

void visit_chain_stored(const ChainLayout&, ChainParams& params, const std::string& prefix,
                        const std::function<void(const std::string&, std::span<double>)>& fn) {
    for (std::size_t level = 0; level < params.twiddles.size(); ++level)
        fn(prefix + ".twiddle" + std::to_string(level), reals(params.twiddles[level]));
    fn(prefix + ".leaf", reals(params.leaf));
}

void visit(const Network& net, ParameterPack& pack, bool trainable_only,
           const std::function<void(const std::string&, std::span<double>)>& fn) {
    const auto& cfg = net.config();
    const auto& layout = net.frozen().chain;
    if (pack.blocks.size() != cfg.blocks()) throw ShapeError("parameter pack does not match network shape");
    for (std::size_t bi = 0; bi < pack.blocks.size(); ++bi) {
        auto& b = pack.blocks[bi];
        const std::string block = "block" + std::to_string(bi);
        if (cfg.kind == ModelKind::structured) {
            for (std::size_t i = 0; i < b.subs.size(); ++i) {
                auto& s = b.subs[i];
                const std::string sub = block + ".w1.sub" + std::to_string(i);
                fn(sub + ".d_hat_in", reals(s.d_hat_in));
                if (trainable_only)
                    for_each_trainable(layout, s.f, sub + ".f", fn);
                else
                    visit_chain_stored(layout, s.f, sub + ".f", fn);
                fn(sub + ".d_breve", reals(s.d_breve));
            }
        } else {
            fn(block + ".w1", b.w1);
        }
        fn(block + ".bias1", b.bias1);
        fn(block + ".skip", b.skip);
        if (cfg.kind == ModelKind::structured) {
            for (std::size_t i = 0; i < b.subs.size(); ++i) {
                auto& s = b.subs[i];
                const std::string sub = block + ".w4.sub" + std::to_string(i);
                if (trainable_only)
                    for_each_trainable(layout, s.f_star, sub + ".f_star", fn);
                else
                    visit_chain_stored(layout, s.f_star, sub + ".f_star", fn);
                fn(sub + ".d_hat_out", reals(s.d_hat_out));
            }
        } else {
            fn(block + ".w4", b.w4);
        }
        fn(block + ".bias_out", b.bias_out);
    }
}

}  // namespace

void for_each_trainable(const Network& net, ParameterPack& pack,
                        const std::function<void(const std::string&, std::span<double>)>& fn) {
    visit(net, pack, true, fn);
}

void for_each_stored(const Network& net, ParameterPack& pack,
                     const std::function<void(const std::string&, std::span<double>)>& fn) {
    visit(net, pack, false, fn);
}

RVector flatten_trainable(const Network& net, const ParameterPack& pack) {
    RVector out;
    auto& mutable_pack = const_cast<ParameterPack&>(pack);
    for_each_trainable(net, mutable_pack, [&](const std::string&, std::span<double> v) { out.insert(out.end(), v.begin(), v.end()); });
    return out;
}

void unflatten_trainable(const Network& net, ParameterPack& pack, std::span<const double> values) {
    std::size_t pos = 0;
    for_each_trainable(net, pack, [&](const std::string&, std::span<double> v) {
        if (pos + v.size() > values.size()) throw ShapeError("unflatten_trainable: too few values");
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(pos), values.begin() + static_cast<std::ptrdiff_t>(pos + v.size()), v.begin());
        pos += v.size();
    });
    if (pos != values.size()) throw ShapeError("unflatten_trainable: too many values");
}

ParameterCount count_parameters(const Network& net) {
    std::vector<std::pair<std::string, std::size_t>> groups = {
        {"W1", 0}, {"bias1", 0}, {"W2 (delay)", 0}, {"W3 (skip)", 0}, {"W4", 0}, {"bias_out", 0}};
    ParameterPack scratch = net.zero_pack();
    for_each_trainable(net, scratch, [&](const std::string& name, std::span<double> v) {
        const auto first = name.find('.');
        const auto second = name.find('.', first + 1);
        const std::string layer = name.substr(first + 1, second == std::string::npos ? std::string::npos : second - first - 1);
        std::size_t idx = 0;
        if (layer == "w1") idx = 0;
        else if (layer == "bias1") idx = 1;
        else if (layer == "skip") idx = 3;
        else if (layer == "w4") idx = 4;
        else if (layer == "bias_out") idx = 5;
        else throw std::logic_error("count_parameters: unexpected parameter " + name);
        groups[idx].second += v.size();
    });
    ParameterCount count;
    count.layers = std::move(groups);
    for (const auto& [_, c] : count.layers) count.total += c;
    return count;
}

// --- densification -------------------------------------------------------------

namespace {

using Eigen::MatrixXd;

MatrixXd real_form(const ComplexMatrix& a) {
    const auto r = static_cast<Eigen::Index>(a.rows());
    const auto c = static_cast<Eigen::Index>(a.cols());
    MatrixXd out = MatrixXd::Zero(2 * r, 2 * c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            const cplx v = a(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            out(i, j) = v.real();
            out(i, c + j) = -v.imag();
            out(r + i, j) = v.imag();
            out(r + i, c + j) = v.real();
        }
    }
    return out;
}

MatrixXd diagonal_form(DiagonalMode mode, const CVector& d) {
    if (mode == DiagonalMode::complex) {
        ComplexMatrix a(d.size(), d.size());
        for (std::size_t k = 0; k < d.size(); ++k) a(k, k) = d[k];
        return real_form(a);
    }
    const auto k = static_cast<Eigen::Index>(d.size());
    MatrixXd out = MatrixXd::Zero(2 * k, 2 * k);
    for (Eigen::Index i = 0; i < k; ++i) {
        out(i, i) = d[static_cast<std::size_t>(i)].real();
        out(k + i, k + i) = d[static_cast<std::size_t>(i)].imag();
    }
    return out;
}

MatrixXd pad_form(std::size_t from, std::size_t to) {
    ComplexMatrix j(to, from);
    for (std::size_t k = 0; k < from; ++k) j(k, k) = 1.0;
    return real_form(j);
}

}  // namespace

DenseBlock densify_block(const Network& net, std::size_t block) {
    const auto& cfg = net.config();
    if (cfg.kind != ModelKind::structured) throw ConfigError("densify_block: network is already fully connected");
    const auto& bp = net.params().blocks.at(block);
    const std::size_t n = cfg.n;
    const std::size_t m = cfg.m();
    const std::size_t hidden = cfg.hidden();
    const std::size_t hidden_c = hidden / 2;
    const auto& layout = net.frozen().chain;

    MatrixXd w1 = MatrixXd::Zero(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(2 * n));
    MatrixXd w4 = MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(hidden));
    const MatrixXd j = pad_form(n, m);
    for (std::size_t i = 0; i < cfg.p; ++i) {
        const auto& s = bp.subs[i];
        const MatrixXd f = real_form(RecursiveDftChain(layout, s.f).to_dense());
        const MatrixXd f_star = real_form(RecursiveDftChain(layout, s.f_star).to_dense());
        const MatrixXd sub1 = diagonal_form(cfg.diagonal_mode, s.d_breve) * f * j * diagonal_form(cfg.diagonal_mode, s.d_hat_in);
        const MatrixXd sub4 = diagonal_form(cfg.diagonal_mode, s.d_hat_out) * j.transpose() * f_star;
        const auto mi = static_cast<Eigen::Index>(m);
        const auto row_re = static_cast<Eigen::Index>(i * m);
        const auto row_im = static_cast<Eigen::Index>(hidden_c + i * m);
        w1.block(row_re, 0, mi, w1.cols()) = sub1.topRows(mi);
        w1.block(row_im, 0, mi, w1.cols()) = sub1.bottomRows(mi);
        w4.block(0, row_re, w4.rows(), mi) += sub4.leftCols(mi);
        w4.block(0, row_im, w4.rows(), mi) += sub4.rightCols(mi);
    }
    DenseBlock out;
    for (Eigen::Index r = 0; r < w1.rows(); ++r) out.w1_rows.emplace_back(w1.row(r).begin(), w1.row(r).end());
    for (Eigen::Index r = 0; r < w4.rows(); ++r) out.w4_rows.emplace_back(w4.row(r).begin(), w4.row(r).end());
    return out;
}

Network densify(const Network& net) {
    NetworkConfig cfg = net.config();
    cfg.kind = ModelKind::fully_connected;
    Network dense(cfg);
    dense.set_delay_exponents(net.frozen().delay_exponents);
    for (std::size_t b = 0; b < net.params().blocks.size(); ++b) {
        const DenseBlock d = densify_block(net, b);
        auto& dst = dense.params().blocks[b];
        const auto& src = net.params().blocks[b];
        dst.w1.clear();
        for (const auto& row : d.w1_rows) dst.w1.insert(dst.w1.end(), row.begin(), row.end());
        dst.w4.clear();
        for (const auto& row : d.w4_rows) dst.w4.insert(dst.w4.end(), row.begin(), row.end());
        dst.bias1 = src.bias1;
        dst.skip = src.skip;
        dst.bias_out = src.bias_out;
    }
    return dense;
}

}  // namespace stnn
