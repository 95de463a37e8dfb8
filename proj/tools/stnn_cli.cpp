// stnn - data generation, training, evaluation, verification and complexity
// benchmarks for the structured beamforming network.

#include "stnn/beamsim.hpp"
#include "stnn/complexity.hpp"
#include "stnn/network_io.hpp"
#include "stnn/trainer.hpp"
#include "stnn/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace stnn;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kVerifyFailed = 1, kUsage = 2, kIo = 3, kDiverged = 4, kShape = 5 };

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + item + "' in list '" + s + "'");
        }
        if (used != item.size()) throw ConfigError("bad number '" + item + "' in list '" + s + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("empty list '" + s + "'");
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Turns `key = value` lines into flag tokens. Later command-line flags win
// because every option keeps its last value.
std::vector<std::string> config_tokens(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path);
    std::vector<std::string> tokens;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        for (char& c : key)
            if (c == '_') c = '-';
        if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        if (value == "true") {
            tokens.push_back("--" + key);
        } else if (value != "false") {
            tokens.push_back("--" + key);
            tokens.push_back(value);
        }
    }
    return tokens;
}

json resolved_options(const CLI::App* app) {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "config" || name.empty()) continue;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            j[name] = opt->get_expected_min() == 0 ? json(true) : json(res.back());
        } else if (opt->get_expected_min() == 0) {
            j[name] = false;
        } else {
            j[name] = opt->get_default_str();
        }
    }
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << text;
    if (!text.empty() && text.back() != '\n') os << '\n';
    if (!os) throw IoError("write failed: " + path);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// --- gen-data ------------------------------------------------------------------

struct GenOpts {
    std::size_t n = 16;
    double freq_ghz = 24.0;
    std::string angles = "30,40,50";
    std::size_t samples_per_angle = 1000;
    double noise_std = 0.1;
    std::uint64_t seed = 1;
    std::string out;
    std::string format = "binary";
    double f_max_ghz = 32.0;
    double tau_s = 0.0;
    double spacing_m = 0.0;
    std::string noise_convention = "complex_total";
};

int cmd_gen_data(const GenOpts& o, const CLI::App* sub) {
    if (o.samples_per_angle < 1) throw ConfigError("--samples-per-angle must be >= 1");
    const auto geometry = ArrayGeometry::make(o.n, o.f_max_ghz * 1e9, o.spacing_m > 0.0 ? std::optional<double>(o.spacing_m) : std::nullopt,
                                              o.tau_s > 0.0 ? std::optional<double>(o.tau_s) : std::nullopt);
    const Dataset ds = make_dataset(geometry, o.freq_ghz * 1e9, parse_double_list(o.angles), o.samples_per_angle, o.noise_std, o.seed,
                                    noise_convention_from_string(o.noise_convention));
    const auto format = dataset_format_from_string(o.format);
    save_dataset(ds, o.out, format);
    const Dataset back = load_dataset(o.out, format);
    const double dev = max_target_deviation(back);

    json summary = {{"command", "gen-data"}, {"version", kVersion}, {"config", resolved_options(sub)}, {"samples", ds.size()},
                    {"tau_s", ds.tau_s}, {"spacing_m", ds.spacing_m}, {"alpha_phase", ds.dvm_phase()},
                    {"consistency_max_deviation", dev}, {"consistency", dev <= kDatasetLoadTolerance ? "PASS" : "FAIL"}};
    std::cout << "wrote " << ds.size() << " samples (N = " << ds.n << ") to " << o.out << '\n';
    std::cout << "target consistency: " << (dev <= kDatasetLoadTolerance ? "PASS" : "FAIL") << " (max deviation "
              << fmt("%.3e", dev) << ")\n";
    std::cout << summary.dump() << '\n';
    return kOk;
}

// --- train ---------------------------------------------------------------------

struct TrainOpts {
    std::string data;
    std::string model = "stnn";
    std::size_t p = 1;
    int lambda = 0;
    int layers = 5;
    double slope = 0.2;
    std::size_t epochs = 2000;
    std::string optimizer = "adam";
    double lr = 1e-3;
    std::size_t batch_size = 32;
    double target_mse = 0.0;
    std::size_t patience = 0;
    std::uint64_t seed = 1;
    double split = 0.8;
    std::string out_model;
    std::string out_report;
    std::string init = "dft-chains";
    double bias_offset = 1.5;
    std::size_t threads = 1;
    std::string diagonal_mode = "complex";
    bool independent_twiddles = false;
    bool no_pin_gauge = false;
    bool zero_delay = false;
    bool no_wall_time = false;
    std::size_t log_every = 100;
    bool quiet = false;
};

int cmd_train(const TrainOpts& o, const CLI::App* sub) {
    const Dataset ds = load_dataset(o.data);
    auto [train_set, val_set] = split_dataset(ds, o.split, o.seed);

    NetworkConfig cfg;
    cfg.n = ds.n;
    cfg.p = o.p;
    cfg.kind = model_kind_from_string(o.model);
    cfg.lambda = o.lambda > 0 ? o.lambda : default_lambda(ds.n);
    cfg.l_layers = o.layers;
    cfg.activation_slope = o.slope;
    cfg.delay_phase = ds.dvm_phase();
    cfg.seed = o.seed;
    cfg.diagonal_mode = diagonal_mode_from_string(o.diagonal_mode);
    cfg.independent_twiddles = o.independent_twiddles;
    cfg.pin_gauge = !o.no_pin_gauge;

    Network net = build_network(cfg);
    if (o.zero_delay) net.set_delay_exponents(std::vector<int>(cfg.hidden() / 2, 0));
    if (cfg.kind == ModelKind::structured) {
        if (o.init == "dft-chains")
            init_dft_chains(net);
        else if (o.init == "dvm")
            net = init_from_dvm(std::move(net), ds.dvm());
        else if (o.init != "random")
            throw ConfigError("unknown --init '" + o.init + "' (expected random, dft-chains or dvm)");
    } else if (o.init == "dvm") {
        throw ConfigError("--init dvm needs --model stnn");
    }
    if (o.bias_offset != 0.0) {
        std::vector<RVector> inputs;
        inputs.reserve(train_set.size());
        for (const auto& s : train_set.samples) inputs.push_back(s.input);
        init_bias_offset(net, inputs, o.bias_offset);
    }

    OptimizerConfig opt;
    opt.kind = optimizer_kind_from_string(o.optimizer);
    opt.learning_rate = o.lr;
    opt.batch_size = o.batch_size;
    opt.epochs = o.epochs;
    opt.seed = o.seed;
    opt.target_mse = o.target_mse;
    opt.patience = o.patience;
    opt.threads = o.threads;

    EpochCallback log;
    if (!o.quiet)
        log = [&](std::size_t epoch, double tr, double va) {
            if (epoch % std::max<std::size_t>(1, o.log_every) == 0 || epoch == o.epochs)
                std::cerr << "epoch " << epoch << "  train " << fmt("%.4e", tr) << "  val " << fmt("%.4e", va) << '\n';
        };
    TrainResult res = train(std::move(net), train_set, val_set, opt, log);

    const ParameterCount pc = count_parameters(res.net);
    const FlopCount counted = flops_counted(res.net);
    json report = json::parse(report_to_json(res.report, !o.no_wall_time));
    report["command"] = "train";
    report["cli"] = resolved_options(sub);
    report["init"] = o.init;
    report["dataset"] = {{"path", o.data}, {"n", ds.n}, {"freq_hz", ds.freq_hz}, {"tau_s", ds.tau_s}, {"noise_std", ds.noise_std},
                         {"seed", ds.seed}, {"angles_deg", ds.angles_deg}, {"samples", ds.size()}};
    json layers = json::object();
    for (const auto& [name, count] : pc.layers) layers[name] = count;
    report["param_layers"] = layers;
    report["flops_counted"] = {{"adds", counted.adds}, {"muls", counted.muls}, {"total", counted.total()}};
    const auto m = static_cast<std::uint64_t>(cfg.m());
    const FlopCount formula = cfg.kind == ModelKind::structured
                                  ? flops_truncated(m, static_cast<std::uint64_t>(cfg.l_layers), cfg.p, static_cast<std::uint64_t>(cfg.lambda))
                                  : ffnn_flops_formula(m, static_cast<std::uint64_t>(cfg.l_layers), cfg.p);
    report["flops_formula"] = {{"adds", formula.adds}, {"muls", formula.muls}, {"total", formula.total()}};
    report["parameter_convention"] = "trainable real scalars; complex entries count 2; frozen entries count 0";

    if (!o.out_model.empty()) save_network(res.net, o.out_model);
    if (!o.out_report.empty()) write_text(o.out_report, report.dump(2));

    std::cout << "model " << to_string(cfg.kind) << "  N " << cfg.n << "  p " << cfg.p << "  lambda " << cfg.lambda << '\n';
    std::cout << "params " << pc.total << "  epochs " << res.report.epochs_run << "  steps " << res.report.steps << "  stop "
              << to_string(res.report.stop_reason) << '\n';
    std::cout << "final train mse " << fmt("%.6e", res.report.final_train_mse());
    if (!res.report.val_mse.empty()) std::cout << "  val mse " << fmt("%.6e", res.report.final_val_mse());
    std::cout << '\n';
    return kOk;
}

// --- eval ----------------------------------------------------------------------

int cmd_eval(const std::string& model_path, const std::string& data_path) {
    const Network net = load_network(model_path);
    const Dataset ds = load_dataset(data_path);
    if (ds.n != net.config().n)
        throw ShapeError("dataset has N = " + std::to_string(ds.n) + " but the model has N = " + std::to_string(net.config().n));
    if (ds.samples.empty()) throw ShapeError("dataset is empty");
    std::cout << "samples " << ds.size() << "  mse " << fmt("%.6e", batch_mse(net, whole(ds.samples))) << '\n';
    std::map<double, std::vector<std::size_t>> by_angle;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) by_angle[ds.samples[i].angle_deg].push_back(i);
    for (const auto& [angle, idx] : by_angle) {
        const double mse = batch_mse(net, BatchView{&ds.samples, idx});
        std::cout << "angle " << fmt("%g", angle) << "  samples " << idx.size() << "  mse " << fmt("%.6e", mse) << '\n';
    }
    return kOk;
}

// --- verify --------------------------------------------------------------------

int cmd_verify(std::size_t n_max, std::size_t trials, std::uint64_t seed, bool corrupt) {
    if (n_max < 2 || !is_power_of_two(n_max)) throw ConfigError("--n-max must be a power of two >= 2");
    if (trials < 1) throw ConfigError("--trials must be >= 1");
    std::vector<std::size_t> sizes;
    for (std::size_t n : {4, 8, 16})
        if (n <= n_max) sizes.push_back(n);
    std::vector<CheckResult> checks;
    checks.push_back(check_factorization(n_max, trials, seed));
    checks.push_back(check_fast_apply(n_max, trials, seed + 1));
    checks.push_back(check_recursive_dft(std::min<std::size_t>(2 * n_max, 64), corrupt));
    if (!sizes.empty()) checks.push_back(check_exact_init(sizes, trials, seed + 2));
    checks.push_back(check_gradients(trials, seed + 3));

    bool ok = true;
    std::printf("%-15s %-6s %12s %10s %7s  %s\n", "check", "result", "worst", "tol", "cases", "worst case");
    for (const auto& c : checks) {
        ok = ok && c.passed();
        std::printf("%-15s %-6s %12.3e %10.1e %7zu  %s\n", c.name.c_str(), c.passed() ? "PASS" : "FAIL", c.worst, c.tolerance, c.cases,
                    c.worst_case.c_str());
    }
    if (!ok) {
        for (const auto& c : checks)
            if (!c.passed()) std::printf("FAILED: %s (worst %s)\n", c.name.c_str(), c.worst_case.c_str());
    }
    return ok ? kOk : kVerifyFailed;
}

// --- bench ---------------------------------------------------------------------

int cmd_bench(const std::string& n_list, const std::string& lambda_list, std::size_t p, int layers, const std::string& out,
              const std::string& convention, const CLI::App* sub) {
    const auto ns = parse_double_list(n_list);
    std::vector<double> lambdas;
    if (!lambda_list.empty()) {
        lambdas = parse_double_list(lambda_list);
        if (lambdas.size() != ns.size()) throw ConfigError("--lambda-list must have one entry per N");
    }
    std::vector<BenchConfig> configs;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        const auto n = static_cast<std::size_t>(ns[i]);
        if (static_cast<double>(n) != ns[i]) throw ConfigError("N must be an integer");
        configs.push_back({n, p, lambdas.empty() ? default_lambda(n) : static_cast<int>(lambdas[i]), layers});
    }
    CountConvention conv;
    if (convention == "proof")
        conv = CountConvention::proof;
    else if (convention == "full_complex")
        conv = CountConvention::full_complex;
    else
        throw ConfigError("unknown --convention '" + convention + "'");

    const ComplexityReport rep = reduction_report(configs, conv);
    const std::string csv = report_to_csv(rep);
    json j = json::parse(report_to_json(rep));
    j["command"] = "bench";
    j["cli"] = resolved_options(sub);
    if (!out.empty()) {
        std::string stem = out;
        if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".csv") stem.resize(stem.size() - 4);
        write_text(stem + ".csv", csv);
        write_text(stem + ".json", j.dump(2));
    }
    std::cout << csv;
    for (const auto& note : rep.notes) std::cout << "# " << note << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structured DVM beamforming networks"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

    std::string config_path;
    auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config_path, "key = value file; flags override it"); };

    GenOpts g;
    auto* gen = app.add_subcommand("gen-data", "Generate a ULA dataset with DVM-beamformed targets");
    add_config(gen);
    gen->add_option("--n", g.n, "antennas (power of two)");
    gen->add_option("--freq-ghz", g.freq_ghz, "signal frequency in GHz");
    gen->add_option("--angles", g.angles, "comma-separated arrival angles in degrees");
    gen->add_option("--samples-per-angle", g.samples_per_angle, "samples per angle");
    gen->add_option("--noise-std", g.noise_std, "complex noise standard deviation");
    gen->add_option("--seed", g.seed, "random seed");
    gen->add_option("--out", g.out, "output file")->required();
    gen->add_option("--format", g.format, "binary or csv")->check(CLI::IsMember({"binary", "csv"}));
    gen->add_option("--f-max-ghz", g.f_max_ghz, "maximum signal frequency in GHz (sets tau and spacing)");
    gen->add_option("--tau-s", g.tau_s, "override tau in seconds");
    gen->add_option("--spacing-m", g.spacing_m, "override antenna spacing in metres");
    gen->add_option("--noise-convention", g.noise_convention, "complex_total or per_component")
        ->check(CLI::IsMember({"complex_total", "per_component"}));

    TrainOpts t;
    auto* tr = app.add_subcommand("train", "Train a structured or fully connected network");
    add_config(tr);
    tr->add_option("--data", t.data, "dataset file")->required();
    tr->add_option("--model", t.model, "stnn or ffnn")->check(CLI::IsMember({"stnn", "ffnn"}));
    tr->add_option("--p", t.p, "submatrices per structured layer");
    tr->add_option("--lambda", t.lambda, "recursion depth (0 = default for N)");
    tr->add_option("--layers", t.layers, "total layers L (L - 1 a multiple of 4)");
    tr->add_option("--slope", t.slope, "leaky activation slope");
    tr->add_option("--epochs", t.epochs, "epochs");
    tr->add_option("--optimizer", t.optimizer, "adam, sgd or lm")->check(CLI::IsMember({"adam", "sgd", "lm"}));
    tr->add_option("--lr", t.lr, "learning rate");
    tr->add_option("--batch-size", t.batch_size, "mini-batch size");
    tr->add_option("--target-mse", t.target_mse, "stop once validation MSE reaches this (0 = off)");
    tr->add_option("--patience", t.patience, "stop after this many epochs without improvement (0 = off)");
    tr->add_option("--seed", t.seed, "seed for split, initialisation and shuffling");
    tr->add_option("--split", t.split, "training fraction");
    tr->add_option("--out-model", t.out_model, "model output file");
    tr->add_option("--out-report", t.out_report, "JSON report output file");
    tr->add_option("--init", t.init, "random, dft-chains or dvm")->check(CLI::IsMember({"random", "dft-chains", "dvm"}));
    tr->add_option("--bias-offset", t.bias_offset, "hidden biases start at this multiple of the largest pre-activation (0 = off)");
    tr->add_option("--threads", t.threads, "gradient worker threads");
    tr->add_option("--diagonal-mode", t.diagonal_mode, "complex or real_split")->check(CLI::IsMember({"complex", "real_split"}));
    tr->add_flag("--independent-twiddles", t.independent_twiddles, "one twiddle diagonal per sibling block");
    tr->add_flag("--no-pin-gauge", t.no_pin_gauge, "train the leading twiddle and leaf entries too");
    tr->add_flag("--zero-delay", t.zero_delay, "use delay exponents of 0");
    tr->add_flag("--no-wall-time", t.no_wall_time, "omit wall_time_s from the report");
    tr->add_option("--log-every", t.log_every, "progress interval in epochs");
    tr->add_flag("--quiet", t.quiet, "no progress output");

    std::string model_path, data_path;
    auto* ev = app.add_subcommand("eval", "Evaluate a saved model on a dataset");
    add_config(ev);
    ev->add_option("--model", model_path, "model file")->required();
    ev->add_option("--data", data_path, "dataset file")->required();

    std::size_t n_max = 256, trials = 10;
    std::uint64_t vseed = 1;
    bool corrupt = false;
    auto* ver = app.add_subcommand("verify", "Run the oracle and gradient checks");
    add_config(ver);
    ver->add_option("--n-max", n_max, "largest N for the factorisation checks");
    ver->add_option("--trials", trials, "trials per size")->check(CLI::PositiveNumber);
    ver->add_option("--seed", vseed, "random seed");
    ver->add_flag("--corrupt-twiddle", corrupt, "")->group("");

    std::string n_list = "8,16,32", lambda_list, bench_out, convention = "proof";
    std::size_t bench_p = 1;
    int bench_layers = 5;
    auto* bench = app.add_subcommand("bench", "Weight and FLOP comparison of structured and dense networks");
    add_config(bench);
    bench->add_option("--n-list", n_list, "comma-separated N values");
    bench->add_option("--lambda-list", lambda_list, "comma-separated depths (default per N)");
    bench->add_option("--p", bench_p, "submatrices per structured layer");
    bench->add_option("--layers", bench_layers, "total layers L");
    bench->add_option("--out", bench_out, "output prefix; writes <out>.csv and <out>.json");
    bench->add_option("--convention", convention, "proof or full_complex")->check(CLI::IsMember({"proof", "full_complex"}));

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        for (std::size_t i = 0; i + 1 < args.size(); ++i) {
            if (args[i] == "--config") {
                auto tokens = config_tokens(args[i + 1]);
                args.insert(args.begin() + 1, tokens.begin(), tokens.end());
                break;
            }
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    std::reverse(args.begin(), args.end());

    try {
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*gen) return cmd_gen_data(g, gen);
        if (*tr) return cmd_train(t, tr);
        if (*ev) return cmd_eval(model_path, data_path);
        if (*ver) return cmd_verify(n_max, trials, vseed, corrupt);
        if (*bench) return cmd_bench(n_list, lambda_list, bench_p, bench_layers, bench_out, convention, bench);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDiverged;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kShape;
    }
    return kUsage;
}
