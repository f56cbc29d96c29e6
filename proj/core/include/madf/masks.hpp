#pragma once

#include <cstdint>

#include "madf/image_io.hpp"

namespace madf {

// Hole-to-image area ratio buckets: (0.01,0.1], (0.1,0.2], ... (0.5,0.6].
inline constexpr int kBucketCount = 6;
double bucket_lo(int bucket);
double bucket_hi(int bucket);
std::string bucket_label(int bucket);

// Fraction of hole (zero) pixels.
double hole_ratio(const Mask& mask);

// Bucket index for a ratio, or -1 when outside (0.01, 0.6].
int bucket_of(double ratio);

enum class MaskKind { kRegularCenter, kFreeform };

struct MaskSpec {
    MaskKind kind = MaskKind::kFreeform;
    int bucket = 2;  // target ratio bucket, 0..5
    std::uint64_t seed = 0;
};

// Centered rectangular hole covering a quarter of the image.
Mask gen_regular_mask(int h, int w);

struct FreeformInfo {
    int strokes = 0;
    int attempts = 0;
};

// Maximum strokes per freeform mask (thick polylines plus occasional
// ellipses); generation statistics are reported through FreeformInfo.
inline constexpr int kMaxStrokes = 64;

// Union of seeded random thick strokes and ellipses, resampled until
// the hole ratio lands in the target bucket. Deterministic per
// (h, w, spec). Throws GenerationError after 1000 failed attempts.
Mask gen_freeform_mask(int h, int w, const MaskSpec& spec, FreeformInfo* info = nullptr);

// Seeded random subset of {hflip, vflip, rot90*n, crop-and-resize,
// 1px hole dilation}; each applied independently with probability 1/2.
Mask augment_mask(const Mask& mask, std::uint64_t seed);

// Hole region dilated by one pixel with a 3x3 structuring element
// (the smoothing-penalty support region).
std::vector<std::uint8_t> dilated_hole_region(const Mask& mask);

// Procedural texture image: smooth gradient, a few sinusoidal fields
// and solid shapes; deterministic per seed, values in [0, 1].
ImageSample gen_synthetic_image(int h, int w, std::uint64_t seed);

}  // namespace madf
