#include "madf/masks.hpp"

#include <algorithm>
#include <cmath>

#include "madf/common.hpp"

namespace madf {

namespace {
constexpr double kBucketEdges[kBucketCount + 1] = {0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
constexpr double kPi = 3.14159265358979323846;
}  // namespace

double bucket_lo(int bucket) {
    if (bucket < 0 || bucket >= kBucketCount) throw ConfigError("bucket index out of range");
    return kBucketEdges[bucket];
}

double bucket_hi(int bucket) {
    if (bucket < 0 || bucket >= kBucketCount) throw ConfigError("bucket index out of range");
    return kBucketEdges[bucket + 1];
}

std::string bucket_label(int bucket) {
    if (bucket < 0) return "unbucketed";
    char buf[32];
    std::snprintf(buf, sizeof buf, "(%.2f,%.2f]", bucket_lo(bucket), bucket_hi(bucket));
    return buf;
}

double hole_ratio(const Mask& mask) {
    std::size_t holes = 0;
    for (const auto v : mask.m) holes += v == 0;
    return static_cast<double>(holes) / static_cast<double>(mask.m.size());
}

int bucket_of(double ratio) {
    for (int b = 0; b < kBucketCount; ++b)
        if (ratio > kBucketEdges[b] && ratio <= kBucketEdges[b + 1]) return b;
    return -1;
}

Mask gen_regular_mask(int h, int w) {
    if (h % 2 != 0 || w % 2 != 0)
        throw ConfigError("gen_regular_mask: dimensions must be even");
    Mask mask(h, w);
    const int y0 = h / 4, x0 = w / 4;
    for (int y = y0; y < y0 + h / 2; ++y)
        for (int x = x0; x < x0 + w / 2; ++x) mask.at(y, x) = 0;
    return mask;
}

namespace {

// Stamps a filled disc of hole pixels; returns newly holed count.
int stamp_disc(Mask& mask, double cy, double cx, double r) {
    int added = 0;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y1 = std::min(mask.h - 1, static_cast<int>(std::ceil(cy + r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x1 = std::min(mask.w - 1, static_cast<int>(std::ceil(cx + r)));
    const double r2 = r * r;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = y - cy, dx = x - cx;
            if (dy * dy + dx * dx <= r2 && mask.at(y, x)) {
                mask.at(y, x) = 0;
                ++added;
            }
        }
    return added;
}

int stamp_stroke(Mask& mask, Rng& rng, double radius) {
    const int segments = rng.uniform_int(2, 6);
    double y = rng.uniform(0.0, mask.h - 1.0);
    double x = rng.uniform(0.0, mask.w - 1.0);
    double angle = rng.uniform(0.0, 2.0 * kPi);
    int added = 0;
    for (int s = 0; s < segments; ++s) {
        const double len = rng.uniform(mask.h / 8.0, mask.h / 3.0);
        angle += rng.uniform(-0.8, 0.8);
        const double ny = std::clamp(y + len * std::sin(angle), 0.0, mask.h - 1.0);
        const double nx = std::clamp(x + len * std::cos(angle), 0.0, mask.w - 1.0);
        const double dist = std::hypot(ny - y, nx - x);
        const int steps = std::max(1, static_cast<int>(std::ceil(dist)));
        for (int t = 0; t <= steps; ++t) {
            const double fy = y + (ny - y) * t / steps;
            const double fx = x + (nx - x) * t / steps;
            added += stamp_disc(mask, fy, fx, radius);
        }
        y = ny;
        x = nx;
    }
    return added;
}

int stamp_ellipse(Mask& mask, Rng& rng, double scale) {
    const double cy = rng.uniform(0.0, mask.h - 1.0);
    const double cx = rng.uniform(0.0, mask.w - 1.0);
    const double ry = rng.uniform(mask.h / 24.0, mask.h / 8.0) * scale;
    const double rx = rng.uniform(mask.w / 24.0, mask.w / 8.0) * scale;
    const double rot = rng.uniform(0.0, kPi);
    const double cr = std::cos(rot), sr = std::sin(rot);
    int added = 0;
    const double rad = std::max(ry, rx);
    const int y0 = std::max(0, static_cast<int>(cy - rad - 1));
    const int y1 = std::min(mask.h - 1, static_cast<int>(cy + rad + 1));
    const int x0 = std::max(0, static_cast<int>(cx - rad - 1));
    const int x1 = std::min(mask.w - 1, static_cast<int>(cx + rad + 1));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = y - cy, dx = x - cx;
            const double u = (dx * cr + dy * sr) / std::max(rx, 1.0);
            const double v = (-dx * sr + dy * cr) / std::max(ry, 1.0);
            if (u * u + v * v <= 1.0 && mask.at(y, x)) {
                mask.at(y, x) = 0;
                ++added;
            }
        }
    return added;
}

}  // namespace

Mask gen_freeform_mask(int h, int w, const MaskSpec& spec, FreeformInfo* info) {
    if (spec.kind == MaskKind::kRegularCenter) {
        if (info) *info = FreeformInfo{};
        return gen_regular_mask(h, w);
    }
    if (spec.bucket < 0 || spec.bucket >= kBucketCount)
        throw ConfigError("gen_freeform_mask: bucket must be 0..5");
    const double lo = bucket_lo(spec.bucket);
    const double hi = bucket_hi(spec.bucket);
    const double total = static_cast<double>(h) * w;
    Rng rng(Rng::mix(Rng::mix(spec.seed, (static_cast<std::uint64_t>(h) << 20) | w),
                     static_cast<std::uint64_t>(spec.bucket) + 101));

    for (int attempt = 1; attempt <= 1000; ++attempt) {
        Mask mask(h, w);
        int holes = 0;
        int strokes = 0;
        while (holes <= lo * total && strokes < kMaxStrokes) {
            // Cap the brush so one stroke cannot overshoot the bucket.
            const double remaining = hi * total - holes;
            double radius = rng.uniform(std::min(h, w) / 28.0, std::min(h, w) / 10.0);
            const double est_area_cap = remaining / 6.0;
            const double max_r = std::sqrt(est_area_cap / (kPi * 4.0));
            radius = std::clamp(radius, 1.0, std::max(1.0, max_r));
            if (rng.uniform() < 0.2)
                holes += stamp_ellipse(mask, rng, std::min(1.0, max_r / 4.0 + 0.25));
            else
                holes += stamp_stroke(mask, rng, radius);
            ++strokes;
        }
        const double ratio = holes / total;
        if (ratio > lo && ratio <= hi) {
            if (info) {
                info->strokes = strokes;
                info->attempts = attempt;
            }
            return mask;
        }
    }
    throw GenerationError("gen_freeform_mask: bucket " + bucket_label(spec.bucket) +
                          " unreachable after 1000 attempts on " + std::to_string(h) + "x" +
                          std::to_string(w));
}

namespace {

Mask rotate90(const Mask& in, int quarters) {
    quarters = ((quarters % 4) + 4) % 4;
    if (quarters == 0) return in;
    if (quarters == 2) {
        Mask out(in.h, in.w);
        for (int y = 0; y < in.h; ++y)
            for (int x = 0; x < in.w; ++x) out.at(in.h - 1 - y, in.w - 1 - x) = in.at(y, x);
        return out;
    }
    Mask out(in.w, in.h);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            if (quarters == 1)
                out.at(x, in.h - 1 - y) = in.at(y, x);
            else
                out.at(in.w - 1 - x, y) = in.at(y, x);
        }
    return out;
}

Mask crop_resize(const Mask& in, Rng& rng) {
    const double scale = rng.uniform(0.6, 0.95);
    const int ch = std::max(2, static_cast<int>(in.h * scale));
    const int cw = std::max(2, static_cast<int>(in.w * scale));
    const int oy = rng.uniform_int(0, in.h - ch);
    const int ox = rng.uniform_int(0, in.w - cw);
    Mask out(in.h, in.w);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            const int sy = oy + std::min(ch - 1, y * ch / in.h);
            const int sx = ox + std::min(cw - 1, x * cw / in.w);
            out.at(y, x) = in.at(sy, sx);
        }
    return out;
}

Mask dilate_hole(const Mask& in) {
    Mask out = in;
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            if (in.at(y, x) != 0) continue;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny >= 0 && ny < in.h && nx >= 0 && nx < in.w) out.at(ny, nx) = 0;
                }
        }
    return out;
}

}  // namespace

Mask augment_mask(const Mask& mask, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xA0A0));
    Mask out = mask;
    if (rng.uniform() < 0.5) {  // horizontal flip
        Mask flipped = out;
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) flipped.at(y, out.w - 1 - x) = out.at(y, x);
        out = flipped;
    }
    if (rng.uniform() < 0.5) {  // vertical flip
        Mask flipped = out;
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) flipped.at(out.h - 1 - y, x) = out.at(y, x);
        out = flipped;
    }
    if (rng.uniform() < 0.5) {
        const int quarters = out.h == out.w ? rng.uniform_int(1, 3) : 2;
        out = rotate90(out, quarters);
    }
    if (rng.uniform() < 0.5) out = crop_resize(out, rng);
    if (rng.uniform() < 0.5) out = dilate_hole(out);
    return out;
}

std::vector<std::uint8_t> dilated_hole_region(const Mask& mask) {
    const Mask dil = dilate_hole(mask);
    std::vector<std::uint8_t> region(mask.m.size());
    for (std::size_t i = 0; i < region.size(); ++i) region[i] = dil.m[i] == 0 ? 1 : 0;
    return region;
}

ImageSample gen_synthetic_image(int h, int w, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 0x51E3D));
    ImageSample img(3, h, w);

    // Smooth per-channel gradient.
    double base[3], gx[3], gy[3];
    for (int ci = 0; ci < 3; ++ci) {
        base[ci] = rng.uniform(0.25, 0.75);
        gx[ci] = rng.uniform(-0.3, 0.3);
        gy[ci] = rng.uniform(-0.3, 0.3);
    }
    for (int ci = 0; ci < 3; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(ci, y, x) = base[ci] + gx[ci] * x / w + gy[ci] * y / h;

    // Sinusoidal texture fields shared across channels with differing
    // amplitudes.
    const int fields = rng.uniform_int(2, 4);
    for (int f = 0; f < fields; ++f) {
        const double fy = rng.uniform(1.0, 6.0);
        const double fx = rng.uniform(1.0, 6.0);
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        double amp[3];
        for (int ci = 0; ci < 3; ++ci) amp[ci] = rng.uniform(0.02, 0.12);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double v =
                    std::sin(2.0 * kPi * (fy * y / h + fx * x / w) + phase);
                for (int ci = 0; ci < 3; ++ci) img.at(ci, y, x) += amp[ci] * v;
            }
    }

    // Solid shapes.
    const int shapes = rng.uniform_int(1, 3);
    for (int s = 0; s < shapes; ++s) {
        double color[3];
        for (int ci = 0; ci < 3; ++ci) color[ci] = rng.uniform(0.0, 1.0);
        if (rng.uniform() < 0.5) {  // rectangle
            const int rh = rng.uniform_int(h / 8, h / 3);
            const int rw = rng.uniform_int(w / 8, w / 3);
            const int y0 = rng.uniform_int(0, h - rh);
            const int x0 = rng.uniform_int(0, w - rw);
            for (int y = y0; y < y0 + rh; ++y)
                for (int x = x0; x < x0 + rw; ++x)
                    for (int ci = 0; ci < 3; ++ci) img.at(ci, y, x) = color[ci];
        } else {  // ellipse
            const double cy = rng.uniform(0.2 * h, 0.8 * h);
            const double cx = rng.uniform(0.2 * w, 0.8 * w);
            const double ry = rng.uniform(h / 12.0, h / 5.0);
            const double rx = rng.uniform(w / 12.0, w / 5.0);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double u = (x - cx) / rx, v = (y - cy) / ry;
                    if (u * u + v * v <= 1.0)
                        for (int ci = 0; ci < 3; ++ci) img.at(ci, y, x) = color[ci];
                }
        }
    }

    for (auto& v : img.px) v = std::clamp(v, 0.0, 1.0);
    img.provenance = "synthetic(" + std::to_string(seed) + ")";
    return img;
}

}  // namespace madf
