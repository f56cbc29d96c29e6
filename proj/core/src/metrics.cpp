#include "madf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "madf/common.hpp"
#include "madf/masks.hpp"

namespace madf {

namespace {

void check_same_dims(const ImageSample& a, const ImageSample& b, const char* what) {
    if (a.c != b.c || a.h != b.h || a.w != b.w)
        throw ConfigError(std::string(what) + ": image dims differ");
}

}  // namespace

double psnr(const ImageSample& a, const ImageSample& b, double peak) {
    check_same_dims(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.px.size(); ++i) {
        const double d = a.px[i] - b.px[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.px.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr_hole(const ImageSample& a, const ImageSample& b, const Mask& mask, double peak) {
    check_same_dims(a, b, "psnr_hole");
    if (mask.h != a.h || mask.w != a.w) throw ConfigError("psnr_hole: mask dims differ");
    double mse = 0.0;
    std::size_t count = 0;
    for (int ci = 0; ci < a.c; ++ci)
        for (int y = 0; y < a.h; ++y)
            for (int x = 0; x < a.w; ++x) {
                if (mask.at(y, x) != 0) continue;
                const double d = a.at(ci, y, x) - b.at(ci, y, x);
                mse += d * d;
                ++count;
            }
    if (count == 0) return kPsnrCap;
    mse /= static_cast<double>(count);
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

const std::vector<double>& ssim_kernel() {
    static const std::vector<double> kernel = [] {
        std::vector<double> k(kSsimWindow * kSsimWindow);
        const int half = kSsimWindow / 2;
        double total = 0.0;
        for (int y = 0; y < kSsimWindow; ++y)
            for (int x = 0; x < kSsimWindow; ++x) {
                const double dy = y - half, dx = x - half;
                const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * kSsimSigma * kSsimSigma));
                k[y * kSsimWindow + x] = v;
                total += v;
            }
        for (auto& v : k) v /= total;
        return k;
    }();
    return kernel;
}

}  // namespace

double ssim(const ImageSample& a, const ImageSample& b) {
    check_same_dims(a, b, "ssim");
    if (a.h < kSsimWindow || a.w < kSsimWindow)
        throw ConfigError("ssim: image smaller than the 11x11 window");
    const auto& kernel = ssim_kernel();
    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;
    const int oh = a.h - kSsimWindow + 1;
    const int ow = a.w - kSsimWindow + 1;

    double total = 0.0;
    for (int ci = 0; ci < a.c; ++ci) {
        double acc = 0.0;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double ma = 0.0, mb = 0.0;
                for (int ky = 0; ky < kSsimWindow; ++ky)
                    for (int kx = 0; kx < kSsimWindow; ++kx) {
                        const double wgt = kernel[ky * kSsimWindow + kx];
                        ma += wgt * a.at(ci, y + ky, x + kx);
                        mb += wgt * b.at(ci, y + ky, x + kx);
                    }
                double va = 0.0, vb = 0.0, cov = 0.0;
                for (int ky = 0; ky < kSsimWindow; ++ky)
                    for (int kx = 0; kx < kSsimWindow; ++kx) {
                        const double wgt = kernel[ky * kSsimWindow + kx];
                        const double da = a.at(ci, y + ky, x + kx) - ma;
                        const double db = b.at(ci, y + ky, x + kx) - mb;
                        va += wgt * da * da;
                        vb += wgt * db * db;
                        cov += wgt * da * db;
                    }
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        total += acc / (static_cast<double>(oh) * ow);
    }
    return total / a.c;
}

ImageSample compose_image(const ImageSample& pred, const ImageSample& gt, const Mask& mask) {
    check_same_dims(pred, gt, "compose_image");
    if (mask.h != gt.h || mask.w != gt.w) throw ConfigError("compose_image: mask dims differ");
    ImageSample out = gt;
    for (int ci = 0; ci < gt.c; ++ci)
        for (int y = 0; y < gt.h; ++y)
            for (int x = 0; x < gt.w; ++x)
                if (mask.at(y, x) == 0) out.at(ci, y, x) = pred.at(ci, y, x);
    return out;
}

std::vector<EvalRow> evaluate_set(const ForwardFn& forward,
                                  const std::vector<ImageSample>& samples,
                                  const std::vector<Mask>& masks) {
    if (samples.size() != masks.size())
        throw ConfigError("evaluate_set: sample/mask count mismatch");
    struct Agg {
        double psnr = 0.0, ssim = 0.0;
        int count = 0;
    };
    std::map<int, Agg> buckets;
    Agg all;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const ImageSample pred = forward(samples[i], masks[i]);
        const ImageSample composed = clamp01(compose_image(pred, samples[i], masks[i]));
        const double p = psnr(composed, samples[i]);
        const double s = ssim(composed, samples[i]);
        const int b = bucket_of(hole_ratio(masks[i]));
        auto& agg = buckets[b];
        agg.psnr += p;
        agg.ssim += s;
        agg.count += 1;
        all.psnr += p;
        all.ssim += s;
        all.count += 1;
    }
    std::vector<EvalRow> rows;
    for (const auto& [b, agg] : buckets)
        rows.push_back({b, agg.psnr / agg.count, agg.ssim / agg.count, agg.count});
    if (all.count > 0)
        rows.push_back({-1, all.psnr / all.count, all.ssim / all.count, all.count});
    return rows;
}

std::string eval_table(const std::vector<EvalRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "bucket" << std::right << std::setw(10) << "psnr"
       << std::setw(10) << "ssim" << std::setw(8) << "count" << "\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(14) << (r.bucket == -1 ? "ALL" : bucket_label(r.bucket))
           << std::right << std::setw(10) << std::fixed << std::setprecision(2) << r.psnr_db
           << std::setw(10) << std::setprecision(4) << r.ssim << std::setw(8) << r.count
           << "\n";
    }
    return os.str();
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
    std::ostringstream os;
    os << "bucket,psnr,ssim,count\n";
    for (const auto& r : rows)
        os << (r.bucket == -1 ? std::string("ALL") : bucket_label(r.bucket)) << ","
           << std::fixed << std::setprecision(6) << r.psnr_db << "," << r.ssim << ","
           << r.count << "\n";
    return os.str();
}

}  // namespace madf
