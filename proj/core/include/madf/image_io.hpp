#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "madf/common.hpp"

namespace madf {

// CPU-side image in (c, h, w) order with values in [0, 1]. Doubles keep
// the metric path exact; model inputs are cast at the graph boundary.
struct ImageSample {
    int c = 3, h = 0, w = 0;
    std::vector<double> px;
    std::string provenance;

    ImageSample() = default;
    ImageSample(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_), px(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    double& at(int ci, int y, int x) {
        return px[(static_cast<std::size_t>(ci) * h + y) * w + x];
    }
    double at(int ci, int y, int x) const {
        return px[(static_cast<std::size_t>(ci) * h + y) * w + x];
    }
    std::size_t numel() const { return px.size(); }
};

// Binary validity mask: 1 = valid pixel, 0 = hole.
struct Mask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> m;

    Mask() = default;
    Mask(int h_, int w_) : h(h_), w(w_), m(static_cast<std::size_t>(h_) * w_, 1) {}

    std::uint8_t& at(int y, int x) { return m[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return m[static_cast<std::size_t>(y) * w + x]; }
};

// Binary PPM (P6) for images, 8-bit per channel. Values are quantized
// on save (round(v * 255)); loading maps bytes back to k/255.
ImageSample load_image(const std::string& path);
void save_image(const ImageSample& img, const std::string& path);

// Binary PGM (P5) for masks: 255 = valid, 0 = hole.
Mask load_mask(const std::string& path);
void save_mask(const Mask& mask, const std::string& path);

// Snaps pixel values onto the 8-bit grid, the fixed point of a
// save/load round trip.
ImageSample quantized8(const ImageSample& img);

ImageSample clamp01(const ImageSample& img);

}  // namespace madf
