#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "madf/model.hpp"

namespace madf {

struct FlopsComponent {
    std::string name;
    std::uint64_t multiplies = 0;
};

struct FlopsReport {
    std::vector<FlopsComponent> components;
    std::uint64_t total() const;
    std::string table() const;       // aligned plain-text table
    std::string key_values() const;  // one component=count line each
};

// Multiplies of one dense convolution, counted per sample: every output
// location pairs with every kernel tap.
std::uint64_t conv_multiplies(int nh, int nw, int c_out, int c_in, int k);

// Per-sample multiply counts for the configured network at the given
// input size, split into encoder, recovery and refinement components.
FlopsReport count_flops(const ModelConfig& cfg, int h, int w);

}  // namespace madf
