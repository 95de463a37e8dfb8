#include "stnn/beamsim.hpp"

#include "stnn/binary_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace stnn {

ArrayGeometry ArrayGeometry::make(std::size_t n, double f_max_hz, std::optional<double> spacing_m, std::optional<double> tau_s) {
    ArrayGeometry g;
    g.n = n;
    g.f_max_hz = f_max_hz;
    g.spacing_m = spacing_m.value_or(kSpeedOfLight / (2.0 * f_max_hz));
    g.tau_s = tau_s.value_or(1.0 / (f_max_hz * static_cast<double>(n)));
    g.validate();
    return g;
}

void ArrayGeometry::validate() const {
    if (n < 2 || !is_power_of_two(n)) throw ConfigError("array size must be a power of two >= 2");
    if (!(spacing_m > 0.0) || !std::isfinite(spacing_m)) throw ConfigError("antenna spacing must be positive");
    if (!(f_max_hz > 0.0) || !std::isfinite(f_max_hz)) throw ConfigError("f_max must be positive");
    if (!(tau_s > 0.0) || !std::isfinite(tau_s)) throw ConfigError("tau must be positive");
}

std::string to_string(NoiseConvention c) { return c == NoiseConvention::complex_total ? "complex_total" : "per_component"; }

NoiseConvention noise_convention_from_string(const std::string& s) {
    if (s == "complex_total") return NoiseConvention::complex_total;
    if (s == "per_component") return NoiseConvention::per_component;
    throw ConfigError("unknown noise convention '" + s + "'");
}

double steering_delay(std::size_t k, const ArrayGeometry& geometry, double angle_deg) {
    if (k < 1 || k > geometry.n) throw ConfigError("steering_delay: antenna index " + std::to_string(k) + " outside [1, N]");
    const double s = std::sin(angle_deg * kPi / 180.0);
    return static_cast<double>(k - 1) * geometry.spacing_m * s / kSpeedOfLight;
}

namespace {

// e^{-2 pi j cycles}, reducing the cycle count before taking the angle.
cplx rotor(long double cycles) {
    const long double frac = cycles - std::floor(cycles);
    const double a = -2.0 * kPi * static_cast<double>(frac);
    return {std::cos(a), std::sin(a)};
}

}  // namespace

CVector synth_received(const ArrayGeometry& geometry, double freq_hz, double angle_deg, double t, double noise_std, Rng& rng,
                       NoiseConvention convention) {
    const double sigma = convention == NoiseConvention::complex_total ? noise_std / std::sqrt(2.0) : noise_std;
    CVector u(geometry.n);
    for (std::size_t k = 1; k <= geometry.n; ++k) {
        const long double dt = steering_delay(k, geometry, angle_deg);
        const long double cycles = static_cast<long double>(freq_hz) * (static_cast<long double>(t) - dt);
        cplx v = rotor(cycles);
        if (noise_std > 0.0) {
            const double re = rng.normal();
            const double im = rng.normal();
            v += cplx{sigma * re, sigma * im};
        }
        u[k - 1] = v;
    }
    return u;
}

DvmSpec dvm_for(const ArrayGeometry& geometry, double freq_hz) {
    const long double cycles = static_cast<long double>(freq_hz) * static_cast<long double>(geometry.tau_s);
    const long double frac = cycles - std::floor(cycles);
    double phase = -2.0 * kPi * static_cast<double>(frac);
    if (phase <= -kPi) phase += 2.0 * kPi;
    return DvmSpec::from_phase(geometry.n, phase);
}

double Dataset::dvm_phase() const {
    ArrayGeometry g;
    g.n = n;
    g.tau_s = tau_s;
    return dvm_for(g, freq_hz).phase;
}

Dataset make_dataset(const ArrayGeometry& geometry, double freq_hz, const std::vector<double>& angles_deg,
                     std::size_t samples_per_angle, double noise_std, std::uint64_t seed, NoiseConvention convention) {
    geometry.validate();
    if (samples_per_angle < 1) throw ConfigError("samples per angle must be >= 1");
    if (angles_deg.empty()) throw ConfigError("at least one angle is required");
    if (!(freq_hz > 0.0)) throw ConfigError("frequency must be positive");
    if (!(noise_std >= 0.0)) throw ConfigError("noise std must be >= 0");

    Dataset ds;
    ds.n = geometry.n;
    ds.freq_hz = freq_hz;
    ds.f_max_hz = geometry.f_max_hz;
    ds.spacing_m = geometry.spacing_m;
    ds.tau_s = geometry.tau_s;
    ds.noise_std = noise_std;
    ds.noise_convention = convention;
    ds.seed = seed;
    ds.angles_deg = angles_deg;

    const FactorChain chain = build_bluestein_chain(ds.dvm());
    ds.samples.reserve(angles_deg.size() * samples_per_angle);
    std::uint64_t index = 0;
    for (double angle : angles_deg) {
        for (std::size_t s = 0; s < samples_per_angle; ++s, ++index) {
            Rng rng(seed, index);
            Sample sample;
            sample.t = static_cast<double>(s) / static_cast<double>(samples_per_angle);
            sample.angle_deg = angle;
            const CVector u = synth_received(geometry, freq_hz, angle, sample.t, noise_std, rng, convention);
            sample.input = real_split(u);
            sample.target = real_split(fast_dvm_apply(chain, u));
            ds.samples.push_back(std::move(sample));
        }
    }
    return ds;
}

double max_target_deviation(const Dataset& ds) {
    const DvmSpec spec = ds.dvm();
    const FactorChain chain = build_bluestein_chain(spec);
    const bool dense = ds.n <= 64;
    ComplexMatrix a = dense ? build_scaled_dvm_dense(spec) : ComplexMatrix();
    double worst = 0.0;
    for (const auto& s : ds.samples) {
        if (s.input.size() != 2 * ds.n || s.target.size() != 2 * ds.n) throw ShapeError("dataset sample has the wrong length");
        const CVector x = real_join(s.input);
        const RVector y = real_split(dense ? a.multiply(x) : fast_dvm_apply(chain, x));
        for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - s.target[i]));
    }
    return worst;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie strictly between 0 and 1");
    std::map<double, std::vector<std::size_t>> by_angle;
    std::vector<double> order;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        auto [it, fresh] = by_angle.try_emplace(ds.samples[i].angle_deg);
        if (fresh) order.push_back(ds.samples[i].angle_deg);
        it->second.push_back(i);
    }
    Dataset train = ds;
    Dataset val = ds;
    train.samples.clear();
    val.samples.clear();
    Rng rng(seed);
    for (double angle : order) {
        auto& idx = by_angle[angle];
        rng.shuffle(idx.begin(), idx.end());
        const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
        for (std::size_t k = 0; k < idx.size(); ++k) (k < cut ? train : val).samples.push_back(ds.samples[idx[k]]);
    }
    return {std::move(train), std::move(val)};
}

DatasetFormat dataset_format_from_string(const std::string& s) {
    if (s == "binary" || s == "bin") return DatasetFormat::binary;
    if (s == "csv") return DatasetFormat::csv;
    throw ConfigError("unknown dataset format '" + s + "' (expected binary or csv)");
}

// --- files -------------------------------------------------------------------

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

void check_loaded(const Dataset& ds, const std::string& path) {
    const double dev = max_target_deviation(ds);
    if (!(dev <= kDatasetLoadTolerance)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", dev);
        throw IoError(path + ": targets disagree with A~ * input (max deviation " + buf + ")");
    }
}

void save_binary(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write("DVMB", 4);
    bin::put_u32(os, kDatasetVersion);
    bin::put_u64(os, ds.n);
    bin::put_f64(os, ds.freq_hz);
    bin::put_f64(os, ds.f_max_hz);
    bin::put_f64(os, ds.spacing_m);
    bin::put_f64(os, ds.tau_s);
    bin::put_f64(os, ds.noise_std);
    bin::put_u32(os, ds.noise_convention == NoiseConvention::complex_total ? 0 : 1);
    bin::put_u64(os, ds.seed);
    bin::put_u64(os, ds.angles_deg.size());
    for (double a : ds.angles_deg) bin::put_f64(os, a);
    bin::put_u64(os, ds.samples.size());
    for (const auto& s : ds.samples) {
        bin::put_f64(os, s.t);
        bin::put_f64(os, s.angle_deg);
        for (double v : s.input) bin::put_f64(os, v);
        for (double v : s.target) bin::put_f64(os, v);
    }
    if (!os) throw IoError("write failed: " + path);
}

Dataset load_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    bin::expect_magic(is, "DVMB", path);
    const std::uint32_t version = bin::get_u32(is);
    if (version != kDatasetVersion) throw IoError(path + ": unsupported dataset version " + std::to_string(version));
    Dataset ds;
    ds.n = bin::get_u64(is);
    if (ds.n < 2 || ds.n > (1u << 20) || !is_power_of_two(ds.n)) throw IoError(path + ": bad array size in header");
    ds.freq_hz = bin::get_f64(is);
    ds.f_max_hz = bin::get_f64(is);
    ds.spacing_m = bin::get_f64(is);
    ds.tau_s = bin::get_f64(is);
    ds.noise_std = bin::get_f64(is);
    const std::uint32_t conv = bin::get_u32(is);
    if (conv > 1) throw IoError(path + ": bad noise convention");
    ds.noise_convention = conv == 0 ? NoiseConvention::complex_total : NoiseConvention::per_component;
    ds.seed = bin::get_u64(is);
    const std::uint64_t n_angles = bin::get_u64(is);
    if (n_angles > (1u << 20)) throw IoError(path + ": bad angle count");
    for (std::uint64_t i = 0; i < n_angles; ++i) ds.angles_deg.push_back(bin::get_f64(is));
    const std::uint64_t count = bin::get_u64(is);
    if (count > (1ull << 32)) throw IoError(path + ": bad sample count");
    ds.samples.resize(count);
    for (auto& s : ds.samples) {
        s.t = bin::get_f64(is);
        s.angle_deg = bin::get_f64(is);
        s.input.resize(2 * ds.n);
        s.target.resize(2 * ds.n);
        for (double& v : s.input) v = bin::get_f64(is);
        for (double& v : s.target) v = bin::get_f64(is);
    }
    if (is.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after the last sample");
    return ds;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view s, const std::string& path, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError(path + ":" + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
}

std::vector<std::string> csv_header(std::size_t n) {
    std::vector<std::string> cols = {"sample_id", "t", "angle_deg"};
    for (const char* prefix : {"x_re_", "x_im_", "y_re_", "y_im_"})
        for (std::size_t k = 0; k < n; ++k) cols.push_back(prefix + std::to_string(k));
    return cols;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    const auto cols = csv_header(ds.n);
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        os << i << ',' << fmt17(s.t) << ',' << fmt17(s.angle_deg);
        for (double v : s.input) os << ',' << fmt17(v);
        for (double v : s.target) os << ',' << fmt17(v);
        os << '\n';
    }
    if (!os) throw IoError("write failed: " + path);

    nlohmann::json meta = {{"format", "DVMB-csv"},
                           {"version", kDatasetVersion},
                           {"n", ds.n},
                           {"freq_hz", ds.freq_hz},
                           {"f_max_hz", ds.f_max_hz},
                           {"spacing_m", ds.spacing_m},
                           {"tau_s", ds.tau_s},
                           {"noise_std", ds.noise_std},
                           {"noise_convention", to_string(ds.noise_convention)},
                           {"seed", ds.seed},
                           {"angles_deg", ds.angles_deg}};
    std::ofstream ms(path + ".meta.json", std::ios::trunc);
    if (!ms) throw IoError("cannot open " + path + ".meta.json for writing");
    ms << meta.dump(2) << '\n';
    if (!ms) throw IoError("write failed: " + path + ".meta.json");
}

Dataset load_csv(const std::string& path) {
    std::ifstream ms(path + ".meta.json");
    if (!ms) throw IoError(path + ": missing metadata sidecar " + path + ".meta.json");
    Dataset ds;
    try {
        const auto meta = nlohmann::json::parse(ms);
        ds.n = meta.at("n").get<std::size_t>();
        ds.freq_hz = meta.at("freq_hz").get<double>();
        ds.f_max_hz = meta.at("f_max_hz").get<double>();
        ds.spacing_m = meta.at("spacing_m").get<double>();
        ds.tau_s = meta.at("tau_s").get<double>();
        ds.noise_std = meta.at("noise_std").get<double>();
        ds.noise_convention = noise_convention_from_string(meta.at("noise_convention").get<std::string>());
        ds.seed = meta.at("seed").get<std::uint64_t>();
        ds.angles_deg = meta.at("angles_deg").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ".meta.json: " + e.what());
    } catch (const ConfigError& e) {
        throw IoError(path + ".meta.json: " + e.what());
    }
    if (ds.n < 2 || !is_power_of_two(ds.n)) throw IoError(path + ".meta.json: bad array size");

    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw IoError(path + ": empty file");
    const auto cols = csv_header(ds.n);
    std::string expected;
    for (std::size_t i = 0; i < cols.size(); ++i) expected += (i ? "," : "") + cols[i];
    if (line != expected) throw IoError(path + ": header does not match N = " + std::to_string(ds.n));

    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() != cols.size())
            throw ShapeError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols.size()) + " columns, got " +
                             std::to_string(fields.size()));
        Sample s;
        s.t = parse_double(fields[1], path, lineno);
        s.angle_deg = parse_double(fields[2], path, lineno);
        for (std::size_t k = 0; k < 2 * ds.n; ++k) s.input.push_back(parse_double(fields[3 + k], path, lineno));
        for (std::size_t k = 0; k < 2 * ds.n; ++k) s.target.push_back(parse_double(fields[3 + 2 * ds.n + k], path, lineno));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path, DatasetFormat format) {
    if (format == DatasetFormat::binary)
        save_binary(ds, path);
    else
        save_csv(ds, path);
}

Dataset load_dataset(const std::string& path, DatasetFormat format) {
    Dataset ds = format == DatasetFormat::binary ? load_binary(path) : load_csv(path);
    check_loaded(ds, path);
    return ds;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char b[4] = {};
    is.read(b, 4);
    const bool binary = is.gcount() == 4 && std::string_view(b, 4) == "DVMB";
    return load_dataset(path, binary ? DatasetFormat::binary : DatasetFormat::csv);
}

}  // namespace stnn
