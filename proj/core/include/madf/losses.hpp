#pragma once

#include <array>
#include <memory>
#include <sstream>

#include "madf/masks.hpp"
#include "madf/ops.hpp"

namespace madf {

// Composite weights: L1 = valid + 6*hole; the final objective adds
// 0.05*perceptual + 120*style + 0.1*tv.
struct LossWeights {
    double hole = 6.0;
    double perc = 0.05;
    double style = 120.0;
    double tv = 0.1;
};

enum class SupervisionSchedule { kCoarseToFine, kSame, kNone };

inline SupervisionSchedule schedule_from_string(const std::string& s) {
    if (s == "coarse-to-fine") return SupervisionSchedule::kCoarseToFine;
    if (s == "same") return SupervisionSchedule::kSame;
    if (s == "none") return SupervisionSchedule::kNone;
    throw ConfigError("unknown supervision schedule '" + s +
                      "' (expected coarse-to-fine, same or none)");
}

inline std::string to_string(SupervisionSchedule s) {
    switch (s) {
        case SupervisionSchedule::kCoarseToFine: return "coarse-to-fine";
        case SupervisionSchedule::kSame: return "same";
        case SupervisionSchedule::kNone: return "none";
    }
    return "?";
}

namespace detail {

// Replicates a 1-channel binary mask to c channels as a graph constant;
// inverted = hole indicator (1 - M).
template <typename T>
Var<T> mask_to_channels(Graph<T>& g, Var<T> mask, int channels, bool inverted) {
    const Tensor4<T>& mv = mask->value;
    if (mv.c != 1) throw ConfigError("mask must have a single channel");
    Tensor4<T> out(mv.n, channels, mv.h, mv.w);
    const int plane = mv.plane();
    for (int i = 0; i < mv.n; ++i) {
        const T* src = mv.item(i);
        for (int ci = 0; ci < channels; ++ci) {
            T* dst = out.item(i) + static_cast<std::size_t>(ci) * plane;
            for (int j = 0; j < plane; ++j) {
                const T v = src[j];
                if (v != T(0) && v != T(1))
                    throw ConfigError("mask must be binary {0,1}");
                dst[j] = inverted ? T(1) - v : v;
            }
        }
    }
    return g.constant(std::move(out), inverted ? "hole_mask" : "valid_mask");
}

}  // namespace detail

// I_com: hole pixels from the raw output, valid pixels from ground
// truth. Differentiable in i_out through the hole indicator.
template <typename T>
Var<T> compose(Graph<T>& g, Var<T> i_out, Var<T> i_gt, Var<T> mask) {
    detail::check_same_dims(i_out, i_gt, "compose");
    Var<T> valid = detail::mask_to_channels(g, mask, i_gt->value.c, false);
    Var<T> hole = detail::mask_to_channels(g, mask, i_gt->value.c, true);
    return add(g, mul(g, i_gt, valid), mul(g, i_out, hole));
}

// L1 over hole pixels, normalized by the total element count of i_gt.
template <typename T>
Var<T> loss_hole(Graph<T>& g, Var<T> i_out, Var<T> i_gt, Var<T> mask) {
    detail::check_same_dims(i_out, i_gt, "loss_hole");
    Var<T> hole = detail::mask_to_channels(g, mask, i_gt->value.c, true);
    Var<T> masked = mul(g, sub(g, i_out, i_gt), hole);
    return scale(g, abs_sum(g, masked), 1.0 / static_cast<double>(i_gt->value.numel()));
}

// L1 over valid pixels, same normalizer.
template <typename T>
Var<T> loss_valid(Graph<T>& g, Var<T> i_out, Var<T> i_gt, Var<T> mask) {
    detail::check_same_dims(i_out, i_gt, "loss_valid");
    Var<T> valid = detail::mask_to_channels(g, mask, i_gt->value.c, false);
    Var<T> masked = mul(g, sub(g, i_out, i_gt), valid);
    return scale(g, abs_sum(g, masked), 1.0 / static_cast<double>(i_gt->value.numel()));
}

// Frozen three-stage feature extractor standing in for a pretrained
// perceptual backbone: (3x3 conv, ReLU, 2x2 average pool) x 3 with
// channels 16/32/64, taps after each pool. Weights are fixed by seed
// and never trained; gradients still flow through to the images.
template <typename T>
class FeatureNet {
public:
    static constexpr int kTaps = 3;
    static constexpr std::uint64_t kDefaultSeed = 0x7EA7F00Dull;
    static constexpr std::array<int, kTaps> kChannels = {16, 32, 64};

    explicit FeatureNet(std::uint64_t seed = kDefaultSeed) {
        Rng rng(Rng::mix(seed, 0xFEA7));
        int c_in = 3;
        for (int s = 0; s < kTaps; ++s) {
            auto node = std::make_unique<Node<T>>();
            Tensor4<T> w(kChannels[s], c_in, 3, 3);
            // He-style scale keeps tap magnitudes comparable across stages.
            const T stddev = static_cast<T>(std::sqrt(2.0 / (9.0 * c_in)));
            w.fill_normal(rng, stddev);
            node->value = std::move(w);
            node->requires_grad = false;
            node->op = "featurenet_w";
            weights_[s] = std::move(node);
            c_in = kChannels[s];
        }
    }

    std::array<Var<T>, kTaps> extract(Graph<T>& g, Var<T> img) const {
        if (img->value.c != 3)
            throw ConfigError("feature_extract: image must have 3 channels");
        if (img->value.h % 8 != 0 || img->value.w % 8 != 0)
            throw ConfigError("feature_extract: spatial dims must be divisible by 8");
        std::array<Var<T>, kTaps> taps;
        Var<T> x = img;
        for (int s = 0; s < kTaps; ++s) {
            x = avg_pool2x2(
                g, relu(g, conv2d(g, x, weights_[s].get(),
                                  same_conv3(x->value.c, kChannels[s]))));
            taps[s] = x;
        }
        return taps;
    }

private:
    std::array<std::unique_ptr<Node<T>>, kTaps> weights_;
};

// Normalized L1 feature distance summed over taps, for both the raw
// output and the composed image against ground truth.
template <typename T>
Var<T> loss_perceptual(Graph<T>& g, const std::array<Var<T>, 3>& taps_out,
                       const std::array<Var<T>, 3>& taps_com,
                       const std::array<Var<T>, 3>& taps_gt) {
    Var<T> total = nullptr;
    for (int p = 0; p < 3; ++p) {
        const double inv = 1.0 / static_cast<double>(taps_gt[p]->value.numel());
        Var<T> term = add(g, scale(g, abs_sum(g, sub(g, taps_out[p], taps_gt[p])), inv),
                          scale(g, abs_sum(g, sub(g, taps_com[p], taps_gt[p])), inv));
        total = total ? add(g, total, term) : term;
    }
    return total;
}

template <typename T>
Var<T> loss_perceptual(Graph<T>& g, Var<T> i_out, Var<T> i_com, Var<T> i_gt,
                       const FeatureNet<T>& net) {
    return loss_perceptual(g, net.extract(g, i_out), net.extract(g, i_com),
                           net.extract(g, i_gt));
}

// L1 between K_p-scaled Gram matrices, divided by C_p^2 and averaged
// over the batch; both output and composition branches.
template <typename T>
Var<T> loss_style(Graph<T>& g, const std::array<Var<T>, 3>& taps_out,
                  const std::array<Var<T>, 3>& taps_com,
                  const std::array<Var<T>, 3>& taps_gt) {
    Var<T> total = nullptr;
    for (int p = 0; p < 3; ++p) {
        const Tensor4<T>& tv = taps_gt[p]->value;
        const double kp = 1.0 / (static_cast<double>(tv.c) * tv.h * tv.w);
        const double inv = 1.0 / (static_cast<double>(tv.c) * tv.c * tv.n);
        Var<T> g_out = scale(g, gram(g, taps_out[p]), kp);
        Var<T> g_com = scale(g, gram(g, taps_com[p]), kp);
        Var<T> g_gt = scale(g, gram(g, taps_gt[p]), kp);
        Var<T> term = add(g, scale(g, abs_sum(g, sub(g, g_out, g_gt)), inv),
                          scale(g, abs_sum(g, sub(g, g_com, g_gt)), inv));
        total = total ? add(g, total, term) : term;
    }
    return total;
}

template <typename T>
Var<T> loss_style(Graph<T>& g, Var<T> i_out, Var<T> i_com, Var<T> i_gt,
                  const FeatureNet<T>& net) {
    return loss_style(g, net.extract(g, i_out), net.extract(g, i_com), net.extract(g, i_gt));
}

// Smoothing penalty over the 1-pixel dilated hole region; a difference
// pair contributes only when both endpoints are inside the region.
template <typename T>
Var<T> loss_tv(Graph<T>& g, Var<T> i_com, const std::vector<Mask>& masks) {
    const Tensor4<T>& cv = i_com->value;
    if (static_cast<int>(masks.size()) != cv.n)
        throw ConfigError("loss_tv: one mask per batch item required");
    std::vector<std::uint8_t> region(static_cast<std::size_t>(cv.n) * cv.h * cv.w);
    for (int i = 0; i < cv.n; ++i) {
        if (masks[i].h != cv.h || masks[i].w != cv.w)
            throw ConfigError("loss_tv: mask dims do not match image");
        const auto r = dilated_hole_region(masks[i]);
        std::copy(r.begin(), r.end(),
                  region.begin() + static_cast<std::size_t>(i) * cv.h * cv.w);
    }
    return scale(g, region_pair_abs_sum(g, i_com, std::move(region)),
                 1.0 / static_cast<double>(cv.numel()));
}

// Per-decoder scalar terms for one training step; absent terms are
// those the schedule did not request.
struct LossEntry {
    double hole = 0.0;
    double valid = 0.0;
    double l1 = 0.0;
    double perc = 0.0;
    double style = 0.0;
    double tv = 0.0;
    double composite = 0.0;
    bool has_perc = false;
    bool has_style_tv = false;
    bool supervised = false;
};

struct LossReport {
    std::vector<LossEntry> decoders;
    double total = 0.0;

    std::string log_fields() const {
        std::ostringstream os;
        os << "total=" << total;
        for (std::size_t d = 0; d < decoders.size(); ++d) {
            const auto& e = decoders[d];
            os << " d" << d << ".l1=" << e.l1 << " d" << d << ".hole=" << e.hole << " d" << d
               << ".valid=" << e.valid;
            if (e.has_perc) os << " d" << d << ".perc=" << e.perc;
            if (e.has_style_tv)
                os << " d" << d << ".style=" << e.style << " d" << d << ".tv=" << e.tv;
            if (e.supervised) os << " d" << d << ".loss=" << e.composite;
        }
        return os.str();
    }
};

template <typename T>
struct SupervisionResult {
    Var<T> total = nullptr;
    LossReport report;
};

// Incremental supervision across the decoder cascade. Coarse-to-fine:
// decoder d gets L1, adds the perceptual term from d >= 1 and the
// style + tv terms on the last decoder. "same" applies the full
// objective everywhere; "none" supervises only the last decoder.
template <typename T>
SupervisionResult<T> supervision_losses(Graph<T>& g, const std::vector<Var<T>>& outputs,
                                        Var<T> i_gt, Var<T> mask,
                                        const std::vector<Mask>& cpu_masks,
                                        const FeatureNet<T>& net,
                                        const LossWeights& weights = {},
                                        SupervisionSchedule schedule =
                                            SupervisionSchedule::kCoarseToFine) {
    if (outputs.empty()) throw ConfigError("supervision_losses: no decoder outputs");
    const int last = static_cast<int>(outputs.size()) - 1;

    std::array<Var<T>, 3> taps_gt{};
    bool have_gt_taps = false;

    SupervisionResult<T> res;
    for (int d = 0; d <= last; ++d) {
        LossEntry entry;
        Var<T> out = outputs[d];
        Var<T> l_hole = loss_hole(g, out, i_gt, mask);
        Var<T> l_valid = loss_valid(g, out, i_gt, mask);
        Var<T> l1 = add(g, l_valid, scale(g, l_hole, weights.hole));
        entry.hole = static_cast<double>(l_hole->value.data[0]);
        entry.valid = static_cast<double>(l_valid->value.data[0]);
        entry.l1 = static_cast<double>(l1->value.data[0]);

        const bool supervised = schedule != SupervisionSchedule::kNone || d == last;
        bool want_perc = false, want_style_tv = false;
        switch (schedule) {
            case SupervisionSchedule::kCoarseToFine:
                want_perc = d >= 1;
                want_style_tv = d == last;
                break;
            case SupervisionSchedule::kSame:
                want_perc = want_style_tv = true;
                break;
            case SupervisionSchedule::kNone:
                want_perc = want_style_tv = d == last;
                break;
        }

        Var<T> composite = l1;
        if (want_perc || want_style_tv) {
            Var<T> i_com = compose(g, out, i_gt, mask);
            if (!have_gt_taps) {
                taps_gt = net.extract(g, i_gt);
                have_gt_taps = true;
            }
            const auto taps_out = net.extract(g, out);
            const auto taps_com = net.extract(g, i_com);
            if (want_perc) {
                Var<T> l_perc = loss_perceptual(g, taps_out, taps_com, taps_gt);
                entry.perc = static_cast<double>(l_perc->value.data[0]);
                entry.has_perc = true;
                composite = add(g, composite, scale(g, l_perc, weights.perc));
            }
            if (want_style_tv) {
                Var<T> l_style = loss_style(g, taps_out, taps_com, taps_gt);
                Var<T> l_tv = loss_tv(g, i_com, cpu_masks);
                entry.style = static_cast<double>(l_style->value.data[0]);
                entry.tv = static_cast<double>(l_tv->value.data[0]);
                entry.has_style_tv = true;
                composite = add(g, composite, scale(g, l_style, weights.style));
                composite = add(g, composite, scale(g, l_tv, weights.tv));
            }
        }

        if (supervised) {
            entry.supervised = true;
            entry.composite = static_cast<double>(composite->value.data[0]);
            res.total = res.total ? add(g, res.total, composite) : composite;
        }
        res.report.decoders.push_back(entry);
    }
    res.report.total = static_cast<double>(res.total->value.data[0]);
    return res;
}

}  // namespace madf
