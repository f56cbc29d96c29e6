#pragma once

#include <functional>
#include <string>
#include <vector>

#include "madf/image_io.hpp"

namespace madf {

// Zero-MSE pairs return this cap instead of infinity.
inline constexpr double kPsnrCap = 100.0;

double psnr(const ImageSample& a, const ImageSample& b, double peak = 1.0);

// PSNR with the MSE restricted to hole pixels (all channels).
double psnr_hole(const ImageSample& a, const ImageSample& b, const Mask& mask,
                 double peak = 1.0);

// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1; computed per channel over fully interior
// windows, then averaged.
double ssim(const ImageSample& a, const ImageSample& b);

// Hole pixels replaced by the prediction, valid pixels by ground truth.
ImageSample compose_image(const ImageSample& pred, const ImageSample& gt, const Mask& mask);

struct EvalRow {
    int bucket = -1;  // -1 is the ALL row
    double psnr_db = 0.0;
    double ssim = 0.0;
    int count = 0;
};

// Produces the (possibly raw) inpainted image for one sample.
using ForwardFn = std::function<ImageSample(const ImageSample&, const Mask&)>;

// Per-bucket means of PSNR/SSIM over composed, clamped outputs, plus a
// trailing ALL row. Masks are bucketed by their measured hole ratio.
std::vector<EvalRow> evaluate_set(const ForwardFn& forward,
                                  const std::vector<ImageSample>& samples,
                                  const std::vector<Mask>& masks);

std::string eval_table(const std::vector<EvalRow>& rows);
std::string eval_csv(const std::vector<EvalRow>& rows);

}  // namespace madf
