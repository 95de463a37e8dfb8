// network_io.hpp - model files ("STNN" binary) and JSON views of a network.

#pragma once

#include "stnn/network.hpp"

namespace stnn {

std::string network_config_json(const NetworkConfig& cfg);

// Binary layout, all little-endian: "STNN", u32 version, config fields, delay
// exponents, then every stored scalar (pinned entries included) as f64 in
// for_each_stored order.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

// Same content as the binary file, for inspection.
std::string network_to_json(const Network& net, int indent = 2);

}  // namespace stnn
