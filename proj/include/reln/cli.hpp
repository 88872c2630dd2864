#pragma once

#include <string>
#include <vector>

#include "reln/layers.hpp"

namespace reln {

/// Runs the CLI with the given arguments (without argv[0]). Exit codes:
/// 0 success, 1 property/audit failure, 2 usage error, 3 I/O error.
int run_cli(const std::vector<std::string>& args);

/// Parses the layer DSL used by --layers: a comma list of
/// linear:<out>, relu, leaky_relu[:alpha], bracket, pool. Channel counts
/// are chained from in_channels.
std::vector<LayerSpec> parse_layers(const std::string& dsl, std::size_t in_channels);

}  // namespace reln
