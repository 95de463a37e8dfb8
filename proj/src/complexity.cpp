#include "stnn/complexity.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace stnn {

namespace {

// value = num / den, den > 0; rounds half up.
std::uint64_t round_half_up(std::uint64_t num, std::uint64_t den, bool& rounded) {
    rounded = num % den != 0;
    return (2 * num + den) / (2 * den);
}

void validate_formula_input(std::uint64_t m, std::uint64_t l_layers, std::uint64_t p) {
    if (m == 0 || p == 0) throw ConfigError("FLOP formula: M and p must be positive");
    if (l_layers < 5 || (l_layers - 1) % 4 != 0) throw ConfigError("FLOP formula: L - 1 must be a positive multiple of 4");
}

}  // namespace

FlopCount flops_full(std::uint64_t m, std::uint64_t l_layers, std::uint64_t p, std::uint64_t r) {
    validate_formula_input(m, l_layers, p);
    if (r == 0) throw ConfigError("FLOP formula: r must be positive");
    const std::uint64_t l1 = l_layers - 1;
    // scaled by 4 to stay integral
    const std::uint64_t adds4 = 4 * p * l1 * m * r + 16 * p * l1 * m - l1 * m;
    const std::uint64_t muls4 = 2 * p * l1 * m * r + 23 * p * m * l1;
    FlopCount c;
    c.adds = round_half_up(adds4, 4, c.adds_rounded);
    c.muls = round_half_up(muls4, 4, c.muls_rounded);
    return c;
}

FlopCount flops_truncated(std::uint64_t m, std::uint64_t l_layers, std::uint64_t p, std::uint64_t lambda) {
    validate_formula_input(m, l_layers, p);
    if (lambda == 0 || lambda > 60) throw ConfigError("FLOP formula: lambda must lie in [1, 60]");
    const std::uint64_t l1 = l_layers - 1;
    const std::uint64_t half = std::uint64_t{1} << (lambda - 1);
    const std::uint64_t den = 4 * half;
    const std::uint64_t adds = 4 * p * l1 * m * m + half * (4 * p * lambda * l1 * m + 3 * p * l1 * m);
    const std::uint64_t muls = 4 * l1 * p * m * m + half * (12 * m * p * l1 + 3 * p * lambda * l1 * m);
    FlopCount c;
    c.adds = round_half_up(adds, den, c.adds_rounded);
    c.muls = round_half_up(muls, den, c.muls_rounded);
    return c;
}

FlopCount count_dense_matvec(std::uint64_t rows, std::uint64_t cols) {
    FlopCount c;
    c.muls = rows * cols;
    c.adds = cols == 0 ? 0 : rows * (cols - 1);
    return c;
}

std::string to_string(CountConvention c) { return c == CountConvention::proof ? "proof" : "full_complex"; }

std::map<std::string, std::string> counting_conventions(CountConvention convention) {
    std::map<std::string, std::string> m;
    m["convention"] = to_string(convention);
    if (convention == CountConvention::proof) {
        m["complex_diagonal"] = "2 muls per complex entry, 0 adds";
        m["twiddle_product"] = "3 muls, 0 adds";
        m["chain_scale"] = "folded into the adjacent diagonal, not counted";
    } else {
        m["complex_diagonal"] = "4 muls + 2 adds per complex entry";
        m["twiddle_product"] = "4 muls + 2 adds";
        m["chain_scale"] = "2 muls per complex output when the scale is not 1";
    }
    m["real_split_diagonal"] = "1 mul per real coordinate";
    m["butterfly"] = "2 adds per complex add/sub";
    m["leaf_block"] = "dense complex products, 4 muls + 2 adds each, 2 adds per complex accumulation";
    m["dense_matvec"] = "K*J muls + K*(J-1) adds";
    m["bias"] = "1 add per element";
    m["activation"] = "1 mul per hidden element";
    m["delay"] = "4 muls + 2 adds per complex element";
    m["skip"] = "1 mul + 1 add per element";
    m["submatrix_accumulation"] = "(p-1)*M adds";
    m["formula_rounding"] = "exact rational value rounded half up";
    return m;
}

FlopCount flops_counted(const Network& net, CountConvention convention) {
    const auto& cfg = net.config();
    const std::uint64_t n = cfg.n;
    const std::uint64_t m = cfg.m();
    const std::uint64_t hidden = cfg.hidden();
    const std::uint64_t p = cfg.p;
    OpCounter c;

    auto diagonal = [&](std::uint64_t len) {
        if (cfg.diagonal_mode == DiagonalMode::real_split || convention == CountConvention::proof)
            c.muls += 2 * len;
        else
            c.complex_mul(len);
    };
    auto chain = [&] {
        const auto& layout = net.frozen().chain;
        if (convention == CountConvention::proof) {
            count_chain_ops(layout, 3, 0, c);
        } else {
            count_chain_ops(layout, 4, 2, c);
            if (layout.scale != 1.0) c.muls += 2 * layout.size;
        }
    };

    OpCounter block;
    if (cfg.kind == ModelKind::structured) {
        for (std::uint64_t i = 0; i < p; ++i) {
            diagonal(n);
            chain();
            diagonal(m);
        }
    } else {
        const FlopCount d = count_dense_matvec(hidden, 2 * n);
        c.adds += d.adds;
        c.muls += d.muls;
    }
    c.adds += hidden;        // bias1
    c.muls += hidden;        // activation
    c.complex_mul(hidden / 2);  // delay
    c.adds += hidden;        // skip
    c.muls += hidden;
    if (cfg.kind == ModelKind::structured) {
        for (std::uint64_t i = 0; i < p; ++i) {
            chain();
            diagonal(n);
        }
        c.adds += (p - 1) * m;
    } else {
        const FlopCount d = count_dense_matvec(2 * n, hidden);
        c.adds += d.adds;
        c.muls += d.muls;
    }
    c.adds += 2 * n;  // bias_out

    FlopCount out;
    out.adds = c.adds * cfg.blocks();
    out.muls = c.muls * cfg.blocks();
    return out;
}

FlopCount ffnn_flops_formula(std::uint64_t m, std::uint64_t l_layers, std::uint64_t p) {
    validate_formula_input(m, l_layers, p);
    const std::uint64_t h = 2 * p * m;
    const std::uint64_t blocks = (l_layers - 1) / 4;
    FlopCount c;
    c.adds = blocks * (h * (m - 1) + h + h / 2 * 2 + h + m * (h - 1) + m);
    c.muls = blocks * (h * m + h + h / 2 * 4 + h + m * h);
    return c;
}

std::uint64_t ffnn_param_formula(std::uint64_t m, std::uint64_t l_layers, std::uint64_t p) {
    validate_formula_input(m, l_layers, p);
    const std::uint64_t blocks = (l_layers - 1) / 4;
    return blocks * (2 * (2 * p * m * m) + 2 * p * m + 2 * p * m + m);
}

double percentage_reduction(double ffnn, double stnn) {
    if (!(ffnn > 0.0)) throw ConfigError("percentage reduction needs a positive baseline");
    return (ffnn - stnn) / ffnn * 100.0;
}

int default_lambda(std::size_t n) {
    switch (n) {
        case 8: return 4;
        case 16: return 5;
        case 32: return 6;
        default: return std::max(1, log2_exact(4 * n) - 2);
    }
}

ComplexityReport reduction_report(const std::vector<BenchConfig>& configs, CountConvention convention) {
    ComplexityReport rep;
    rep.configs = configs;
    rep.conventions = counting_conventions(convention);
    rep.conventions["parameters"] =
        "trainable real scalars; complex entries count 2; pinned chain entries and the frozen delay count 0";
    rep.conventions["pr_flops"] = "counted FLOPs of the structured row against the dense row";
    for (const auto& bc : configs) {
        NetworkConfig sc;
        sc.n = bc.n;
        sc.p = bc.p;
        sc.lambda = bc.lambda;
        sc.l_layers = bc.l_layers;
        sc.kind = ModelKind::structured;
        NetworkConfig fc = sc;
        fc.kind = ModelKind::fully_connected;
        const Network snet(sc);
        const Network fnet(fc);

        const std::uint64_t m = sc.m();
        const auto L = static_cast<std::uint64_t>(bc.l_layers);
        const FlopCount s_formula = flops_truncated(m, L, bc.p, static_cast<std::uint64_t>(bc.lambda));
        const FlopCount s_count = flops_counted(snet, convention);
        const FlopCount f_formula = ffnn_flops_formula(m, L, bc.p);
        const FlopCount f_count = flops_counted(fnet, convention);
        const std::uint64_t s_params = count_parameters(snet).total;
        const std::uint64_t f_params = count_parameters(fnet).total;

        ComplexityRow s{bc.n, "stnn", s_params, s_formula.adds, s_formula.muls, s_count.adds, s_count.muls,
                        percentage_reduction(static_cast<double>(f_params), static_cast<double>(s_params)),
                        percentage_reduction(static_cast<double>(f_count.total()), static_cast<double>(s_count.total()))};
        ComplexityRow f{bc.n, "ffnn", f_params, f_formula.adds, f_formula.muls, f_count.adds, f_count.muls, 0.0, 0.0};
        rep.rows.push_back(s);
        rep.rows.push_back(f);

        const std::string tag = "n=" + std::to_string(bc.n) + ": ";
        if (s_formula.adds_rounded || s_formula.muls_rounded) rep.notes.push_back(tag + "depth formula rounded half up");
        const auto st = static_cast<double>(s_count.total());
        const auto ft = static_cast<double>(s_formula.total());
        char buf[160];
        std::snprintf(buf, sizeof buf, "%sstructured counted/formula FLOP ratio %.4f", tag.c_str(), st / ft);
        rep.notes.push_back(buf);
    }
    return rep;
}

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string report_to_csv(const ComplexityReport& report) {
    std::ostringstream os;
    os << kComplexityCsvHeader << '\n';
    for (const auto& r : report.rows) {
        os << r.n << ',' << r.model << ',' << r.params << ',' << r.flops_formula_add << ',' << r.flops_formula_mul << ','
           << r.flops_counted_add << ',' << r.flops_counted_mul << ',' << fmt17(r.pr_weights_pct) << ',' << fmt17(r.pr_flops_pct)
           << '\n';
    }
    return os.str();
}

std::string report_to_json(const ComplexityReport& report, int indent) {
    nlohmann::json j;
    j["version"] = kVersion;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"n", r.n},
                        {"model", r.model},
                        {"params", r.params},
                        {"flops_formula_add", r.flops_formula_add},
                        {"flops_formula_mul", r.flops_formula_mul},
                        {"flops_counted_add", r.flops_counted_add},
                        {"flops_counted_mul", r.flops_counted_mul},
                        {"pr_weights_pct", r.pr_weights_pct},
                        {"pr_flops_pct", r.pr_flops_pct}});
    }
    j["rows"] = std::move(rows);
    nlohmann::json cfgs = nlohmann::json::array();
    for (const auto& c : report.configs) cfgs.push_back({{"n", c.n}, {"p", c.p}, {"lambda", c.lambda}, {"l_layers", c.l_layers}});
    j["configs"] = std::move(cfgs);
    j["conventions"] = report.conventions;
    j["notes"] = report.notes;
    return j.dump(indent);
}

std::vector<ComplexityRow> parse_complexity_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kComplexityCsvHeader) throw IoError("complexity CSV: bad header");
    std::vector<ComplexityRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 9) throw IoError("complexity CSV line " + std::to_string(lineno) + ": expected 9 fields");
        try {
            ComplexityRow r;
            r.n = std::stoull(f[0]);
            r.model = f[1];
            r.params = std::stoull(f[2]);
            r.flops_formula_add = std::stoull(f[3]);
            r.flops_formula_mul = std::stoull(f[4]);
            r.flops_counted_add = std::stoull(f[5]);
            r.flops_counted_mul = std::stoull(f[6]);
            r.pr_weights_pct = std::stod(f[7]);
            r.pr_flops_pct = std::stod(f[8]);
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw IoError("complexity CSV line " + std::to_string(lineno) + ": bad number");
        }
    }
    return rows;
}

}  // namespace stnn
