#include "stnn/network_io.hpp"

#include "stnn/binary_io.hpp"

#include "json.hpp"

#include <fstream>

namespace stnn {

namespace {

constexpr std::uint32_t kModelVersion = 1;

nlohmann::json config_json(const NetworkConfig& cfg) {
    return {{"n", cfg.n},
            {"p", cfg.p},
            {"lambda", cfg.lambda},
            {"l_layers", cfg.l_layers},
            {"activation_slope", cfg.activation_slope},
            {"kind", to_string(cfg.kind)},
            {"delay_phase", cfg.delay_phase},
            {"seed", cfg.seed},
            {"diagonal_mode", to_string(cfg.diagonal_mode)},
            {"independent_twiddles", cfg.independent_twiddles},
            {"pin_gauge", cfg.pin_gauge}};
}

}  // namespace

std::string network_config_json(const NetworkConfig& cfg) { return config_json(cfg).dump(); }

void save_network(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    const auto& cfg = net.config();
    os.write("STNN", 4);
    bin::put_u32(os, kModelVersion);
    bin::put_u64(os, cfg.n);
    bin::put_u64(os, cfg.p);
    bin::put_i64(os, cfg.lambda);
    bin::put_i64(os, cfg.l_layers);
    bin::put_f64(os, cfg.activation_slope);
    bin::put_u32(os, cfg.kind == ModelKind::structured ? 0 : 1);
    bin::put_f64(os, cfg.delay_phase);
    bin::put_u64(os, cfg.seed);
    bin::put_u32(os, cfg.diagonal_mode == DiagonalMode::complex ? 0 : 1);
    bin::put_u32(os, cfg.independent_twiddles ? 1 : 0);
    bin::put_u32(os, cfg.pin_gauge ? 1 : 0);
    const auto& exps = net.frozen().delay_exponents;
    bin::put_u64(os, exps.size());
    for (int e : exps) bin::put_i64(os, e);

    Network copy = net;
    std::vector<double> values;
    for_each_stored(copy, copy.params(), [&](const std::string&, std::span<double> v) { values.insert(values.end(), v.begin(), v.end()); });
    bin::put_u64(os, values.size());
    for (double v : values) bin::put_f64(os, v);
    if (!os) throw IoError("write failed: " + path);
}

Network load_network(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    bin::expect_magic(is, "STNN", path);
    const std::uint32_t version = bin::get_u32(is);
    if (version != kModelVersion) throw IoError(path + ": unsupported model version " + std::to_string(version));
    NetworkConfig cfg;
    cfg.n = bin::get_u64(is);
    cfg.p = bin::get_u64(is);
    cfg.lambda = static_cast<int>(bin::get_i64(is));
    cfg.l_layers = static_cast<int>(bin::get_i64(is));
    cfg.activation_slope = bin::get_f64(is);
    const std::uint32_t kind = bin::get_u32(is);
    cfg.delay_phase = bin::get_f64(is);
    cfg.seed = bin::get_u64(is);
    const std::uint32_t mode = bin::get_u32(is);
    const std::uint32_t indep = bin::get_u32(is);
    const std::uint32_t pin = bin::get_u32(is);
    if (kind > 1 || mode > 1 || indep > 1 || pin > 1) throw IoError(path + ": corrupt header flags");
    if (cfg.n > (1u << 20) || cfg.p > (1u << 16)) throw IoError(path + ": implausible network size");
    cfg.kind = kind == 0 ? ModelKind::structured : ModelKind::fully_connected;
    cfg.diagonal_mode = mode == 0 ? DiagonalMode::complex : DiagonalMode::real_split;
    cfg.independent_twiddles = indep == 1;
    cfg.pin_gauge = pin == 1;

    Network net = [&] {
        try {
            return Network(cfg);
        } catch (const ConfigError& e) {
            throw IoError(path + ": invalid network config: " + e.what());
        }
    }();
    const std::uint64_t n_exp = bin::get_u64(is);
    if (n_exp != cfg.hidden() / 2) throw IoError(path + ": delay table has the wrong length");
    std::vector<int> exps(n_exp);
    for (auto& e : exps) e = static_cast<int>(bin::get_i64(is));
    net.set_delay_exponents(std::move(exps));

    const std::uint64_t count = bin::get_u64(is);
    std::size_t expected = 0;
    for_each_stored(net, net.params(), [&](const std::string&, std::span<double> v) { expected += v.size(); });
    if (count != expected)
        throw IoError(path + ": parameter section holds " + std::to_string(count) + " values, expected " + std::to_string(expected));
    for_each_stored(net, net.params(), [&](const std::string&, std::span<double> v) {
        for (double& x : v) x = bin::get_f64(is);
    });
    if (is.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after the parameters");
    return net;
}

std::string network_to_json(const Network& net, int indent) {
    nlohmann::json j;
    j["format"] = "STNN";
    j["version"] = kModelVersion;
    j["config"] = config_json(net.config());
    j["delay_exponents"] = net.frozen().delay_exponents;
    nlohmann::json params = nlohmann::json::array();
    Network copy = net;
    for_each_stored(copy, copy.params(), [&](const std::string& name, std::span<double> v) {
        params.push_back({{"name", name}, {"values", std::vector<double>(v.begin(), v.end())}});
    });
    j["params"] = std::move(params);
    return j.dump(indent);
}

}  // namespace stnn
