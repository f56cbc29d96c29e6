#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "madf/layers.hpp"

namespace madf {

// Architecture description: an L-level encoder ladder with stride-2
// levels, a recovery decoder and K refinement decoders. Image-branch
// channels follow min(128, 16 * 2^l); decoder widths start at 64 and
// double per deeper level, capped at 512. Level 0 is the full-resolution
// skip with half the base width.
struct ModelConfig {
    std::string name = "custom";
    int levels = 4;
    int refinements = 2;
    bool pn_enabled = true;
    int input_channels = 3;
    std::vector<int> kernel_ladder;   // size = levels, one odd kernel per level
    std::vector<int> image_channels;  // c_e at levels 1..L
    int mask_channels = 16;
    int base_width = 64;
    int max_width = 512;
    int pn_latent = 64;

    int c_e(int l) const { return l == 0 ? input_channels : image_channels[l - 1]; }
    int c_m(int l) const { return l == 0 ? 1 : mask_channels; }
    int width(int l) const {
        if (l == 0) return std::max(1, base_width / 2);
        return std::min(max_width, base_width << (l - 1));
    }
    int c_u(int l) const { return width(l); }
    int kernel(int l) const { return kernel_ladder[l - 1]; }

    ConvSpec level_spec(int l) const {
        const int k = kernel(l);
        return ConvSpec{k, 2, (k - 1) / 2, c_e(l - 1), c_e(l)};
    }

    int theta_dim(int l) const {
        const int k = kernel(l);
        return c_e(l - 1) * k * k * c_e(l);
    }

    void validate() const {
        if (levels < 2) throw ConfigError("ModelConfig: levels must be >= 2");
        if (refinements < 0) throw ConfigError("ModelConfig: refinements must be >= 0");
        if (static_cast<int>(kernel_ladder.size()) != levels)
            throw ConfigError("ModelConfig: kernel ladder size must equal level count");
        if (static_cast<int>(image_channels.size()) != levels)
            throw ConfigError("ModelConfig: image channel ladder size must equal level count");
        for (const int k : kernel_ladder)
            if (k < 1 || k % 2 == 0)
                throw ConfigError("ModelConfig: kernels must be odd and positive");
        if (input_channels < 1 || mask_channels < 1 || base_width < 2 || pn_latent < 1)
            throw ConfigError("ModelConfig: bad channel configuration");
    }

    // Smallest input edge this ladder supports: the deepest feature map
    // must still cover its kernel's padded window.
    void validate_input(int h, int w) const {
        const int div = 1 << levels;
        if (h % div != 0 || w % div != 0)
            throw ConfigError("input " + std::to_string(h) + "x" + std::to_string(w) +
                              " not divisible by 2^" + std::to_string(levels));
        int hh = h, ww = w;
        for (int l = 1; l <= levels; ++l) {
            const ConvSpec sp = level_spec(l);
            const int nh = sp.out_dim(hh), nw = sp.out_dim(ww);
            if (nh < 1 || nw < 1)
                throw ConfigError("kernel " + std::to_string(sp.k) + " at level " +
                                  std::to_string(l) + " too large for feature map " +
                                  std::to_string(hh) + "x" + std::to_string(ww));
            hh = nh;
            ww = nw;
        }
    }

    static std::vector<int> image_channel_ladder(int levels) {
        std::vector<int> out(levels);
        for (int l = 1; l <= levels; ++l) out[l - 1] = std::min(128, 16 << l);
        return out;
    }

    // 64x64-class preset: 4 levels, kernels 7/5/3/3, two refinement
    // decoders with point-wise normalization.
    static ModelConfig desk() {
        ModelConfig c;
        c.name = "desk";
        c.levels = 4;
        c.kernel_ladder = {7, 5, 3, 3};
        c.image_channels = image_channel_ladder(4);
        c.refinements = 2;
        c.pn_enabled = true;
        c.validate();
        return c;
    }

    // 256x256-class preset: 7 levels, kernels 7/5/5/3/3/3/3.
    static ModelConfig full() {
        ModelConfig c;
        c.name = "full";
        c.levels = 7;
        c.kernel_ladder = {7, 5, 5, 3, 3, 3, 3};
        c.image_channels = image_channel_ladder(7);
        c.refinements = 2;
        c.pn_enabled = true;
        c.validate();
        return c;
    }

    static ModelConfig by_name(const std::string& preset) {
        if (preset == "desk") return desk();
        if (preset == "full") return full();
        throw ConfigError("unknown preset '" + preset + "' (expected desk or full)");
    }
};

// Per-level encoder features for one forward pass. Index l runs 0..L;
// level 0 holds the raw mask, the masked input image and its lift.
template <typename T>
struct EncoderState {
    std::vector<Var<T>> m;
    std::vector<Var<T>> e;
    std::vector<Var<T>> u;
    std::vector<KernelField<T>> theta;  // index l-1 for levels 1..L
};

// The K+1 decoder outputs plus the per-decoder feature pyramids
// (features[d][l], d = 0 is the recovery decoder).
template <typename T>
struct DecoderOutputs {
    std::vector<Var<T>> images;                  // size K+1, each (n, 3, H, W)
    std::vector<std::vector<Var<T>>> features;   // [decoder][level 0..L]
};

template <typename T>
class Model {
public:
    Model(ModelConfig config, std::uint64_t seed) : cfg_(std::move(config)) {
        cfg_.validate();
        Rng rng(seed);
        const T stddev = static_cast<T>(0.1);  // variance 0.01
        const int L = cfg_.levels;

        auto weight = [&](const std::string& name, int n, int c, int h, int w) {
            Tensor4<T> t(n, c, h, w);
            t.fill_normal(rng, stddev);
            return params_.add(name, std::move(t));
        };
        auto bias = [&](const std::string& name, int c) {
            return params_.add(name, Tensor4<T>(1, c, 1, 1));
        };

        for (int l = 1; l <= L; ++l) {
            const std::string p = "enc.l" + std::to_string(l) + ".";
            const int k = cfg_.kernel(l);
            MadfLayerParams<T> mp;
            mp.mask_conv_w = weight(p + "mask_conv.w", cfg_.c_m(l), cfg_.c_m(l - 1), k, k);
            mp.kernel_gen_w = weight(p + "kernel_gen.w", cfg_.theta_dim(l), cfg_.c_m(l), 1, 1);
            mp.kernel_gen_b = bias(p + "kernel_gen.b", cfg_.theta_dim(l));
            enc_.push_back(mp);
        }
        for (int l = 0; l <= L; ++l) {
            const std::string p = "enc.l" + std::to_string(l) + ".lift.";
            lift_w_.push_back(weight(p + "w", cfg_.c_u(l), cfg_.c_e(l), 1, 1));
            lift_b_.push_back(bias(p + "b", cfg_.c_u(l)));
        }
        for (int l = L; l >= 1; --l) {
            const std::string p = "rec.l" + std::to_string(l) + ".";
            RecoveryBlock blk;
            blk.tconv_w = weight(p + "tconv.w", cfg_.width(l), cfg_.width(l - 1), 4, 4);
            blk.tconv_b = bias(p + "tconv.b", cfg_.width(l - 1));
            blk.blend_w =
                weight(p + "blend.w", cfg_.width(l - 1), 2 * cfg_.width(l - 1), 3, 3);
            blk.blend_b = bias(p + "blend.b", cfg_.width(l - 1));
            recovery_.push_back(blk);
        }
        for (int k = 1; k <= cfg_.refinements; ++k) {
            std::vector<RefineBlock> blocks;
            for (int l = L; l >= 1; --l) {
                const std::string p =
                    "ref" + std::to_string(k) + ".l" + std::to_string(l) + ".";
                RefineBlock blk;
                const int cin = cfg_.width(l) + cfg_.width(l - 1);
                const int cout = cfg_.width(l - 1);
                blk.conv_w = weight(p + "conv.w", cout, cin, 3, 3);
                blk.conv_b = bias(p + "conv.b", cout);
                if (cfg_.pn_enabled) {
                    blk.pn.proj_w = weight(p + "pn.proj.w", cfg_.pn_latent, cout, 3, 3);
                    blk.pn.proj_b = bias(p + "pn.proj.b", cfg_.pn_latent);
                    blk.pn.scale_w = weight(p + "pn.scale.w", cout, cfg_.pn_latent, 3, 3);
                    blk.pn.scale_b = bias(p + "pn.scale.b", cout);
                    blk.pn.bias_w = weight(p + "pn.bias.w", cout, cfg_.pn_latent, 3, 3);
                    blk.pn.bias_b = bias(p + "pn.bias.b", cout);
                } else {
                    blk.bn_gamma = params_.add(p + "bn.gamma", Tensor4<T>::full(1, cout, 1, 1,
                                                                                T(1)));
                    blk.bn_beta = bias(p + "bn.beta", cout);
                }
                blk.bn_index = static_cast<int>(bn_states_.size());
                bn_states_.emplace_back(cout);
                bn_names_.push_back("bn.ref" + std::to_string(k) + ".l" + std::to_string(l));
                blocks.push_back(blk);
            }
            refine_.push_back(std::move(blocks));
        }
        for (int d = 0; d <= cfg_.refinements; ++d) {
            const std::string p = "head.d" + std::to_string(d) + ".";
            head_w_.push_back(weight(p + "w", 3, cfg_.width(0), 3, 3));
            head_b_.push_back(bias(p + "b", 3));
        }
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    std::vector<BnState<T>>& bn_states() { return bn_states_; }
    const std::vector<std::string>& bn_names() const { return bn_names_; }
    const MadfLayerParams<T>& encoder_level(int l) const { return enc_[l - 1]; }

    EncoderState<T> encode(Graph<T>& g, Var<T> image_in, Var<T> mask) const {
        const Tensor4<T>& iv = image_in->value;
        const Tensor4<T>& mv = mask->value;
        if (iv.c != cfg_.input_channels)
            throw ConfigError("encode: image " + iv.dims_str() + " must have " +
                              std::to_string(cfg_.input_channels) + " channels");
        if (mv.n != iv.n || mv.c != 1 || mv.h != iv.h || mv.w != iv.w)
            throw ConfigError("encode: mask " + mv.dims_str() + " does not match image " +
                              iv.dims_str());
        for (const T v : mv.data)
            if (v != T(0) && v != T(1))
                throw ConfigError("encode: mask must be binary {0,1}");
        cfg_.validate_input(iv.h, iv.w);

        EncoderState<T> st;
        st.m.push_back(mask);
        st.e.push_back(image_in);
        st.u.push_back(channel_lift(g, image_in, lift_w_[0], lift_b_[0]));
        for (int l = 1; l <= cfg_.levels; ++l) {
            const ConvSpec spec = cfg_.level_spec(l);
            MaskBranchOut<T> mb = mask_branch_step(g, st.m.back(), enc_[l - 1], spec);
            Var<T> e_next = madf_conv(g, st.e.back(), mb.theta);
            st.m.push_back(mb.m_next);
            st.theta.push_back(mb.theta);
            st.e.push_back(e_next);
            st.u.push_back(channel_lift(g, e_next, lift_w_[l], lift_b_[l]));
        }
        return st;
    }

    // One recovery step: upsample r^l by a stride-2 transposed conv,
    // concat the skip u^{l-1}, blend with a 3x3 conv, leaky ReLU.
    Var<T> recovery_block(Graph<T>& g, Var<T> r_l, Var<T> u_prev, int l) const {
        if (u_prev->value.h != 2 * r_l->value.h || u_prev->value.w != 2 * r_l->value.w)
            throw ConfigError("recovery_block: skip " + u_prev->value.dims_str() +
                              " must be double " + r_l->value.dims_str());
        const RecoveryBlock& blk = recovery_[cfg_.levels - l];
        ConvSpec up{4, 2, 1, r_l->value.c, cfg_.width(l - 1)};
        Var<T> x = add_channel_bias(g, conv2d_transpose(g, r_l, blk.tconv_w, up), blk.tconv_b);
        Var<T> cat = concat_channels(g, x, u_prev);
        Var<T> blended = add_channel_bias(
            g, conv2d(g, cat, blk.blend_w, same_conv3(cat->value.c, cfg_.width(l - 1))),
            blk.blend_b);
        return leaky_relu(g, blended);
    }

    // One refinement step: nearest-upsample the decoder's own feature,
    // concat the previous decoder's finer feature as guide, blend,
    // normalize (PN conditioned on the guide, or affine BN), leaky ReLU.
    Var<T> refine_block(Graph<T>& g, Var<T> f_lk, Var<T> guide, int k, int l,
                        bool training) {
        if (guide->value.h != 2 * f_lk->value.h || guide->value.w != 2 * f_lk->value.w)
            throw ConfigError("refine_block: guide " + guide->value.dims_str() +
                              " must be double " + f_lk->value.dims_str());
        RefineBlock& blk = refine_[k - 1][cfg_.levels - l];
        Var<T> up = upsample_nearest2x(g, f_lk);
        Var<T> cat = concat_channels(g, up, guide);
        Var<T> x = add_channel_bias(
            g, conv2d(g, cat, blk.conv_w, same_conv3(cat->value.c, cfg_.width(l - 1))),
            blk.conv_b);
        Var<T> normed;
        if (cfg_.pn_enabled) {
            normed = point_norm(g, x, guide, blk.pn, bn_states_[blk.bn_index], training);
        } else {
            Var<T> bn = batch_norm(g, x, bn_states_[blk.bn_index], training);
            normed = add_channel_bias(g, channel_scale(g, bn, blk.bn_gamma), blk.bn_beta);
        }
        return leaky_relu(g, normed);
    }

    DecoderOutputs<T> forward_full(Graph<T>& g, Var<T> image_in, Var<T> mask, bool training) {
        EncoderState<T> enc = encode(g, image_in, mask);
        const int L = cfg_.levels;

        DecoderOutputs<T> out;
        std::vector<Var<T>> prev(L + 1);
        prev[L] = enc.u[L];  // r^L = u^L
        for (int l = L; l >= 1; --l)
            prev[l - 1] = recovery_block(g, prev[l], enc.u[l - 1], l);
        out.images.push_back(output_head(g, prev[0], 0));
        out.features.push_back(prev);

        for (int k = 1; k <= cfg_.refinements; ++k) {
            std::vector<Var<T>> cur(L + 1);
            cur[L] = enc.u[L];  // f^{L,k} = u^L
            for (int l = L; l >= 1; --l)
                cur[l - 1] = refine_block(g, cur[l], prev[l - 1], k, l, training);
            out.images.push_back(output_head(g, cur[0], k));
            out.features.push_back(cur);
            prev = std::move(cur);
        }
        return out;
    }

private:
    struct RecoveryBlock {
        Var<T> tconv_w = nullptr, tconv_b = nullptr;
        Var<T> blend_w = nullptr, blend_b = nullptr;
    };
    struct RefineBlock {
        Var<T> conv_w = nullptr, conv_b = nullptr;
        PnParams<T> pn;
        Var<T> bn_gamma = nullptr, bn_beta = nullptr;
        int bn_index = -1;
    };

    Var<T> output_head(Graph<T>& g, Var<T> feat, int d) const {
        return add_channel_bias(g, conv2d(g, feat, head_w_[d], same_conv3(feat->value.c, 3)),
                                head_b_[d]);
    }

    ModelConfig cfg_;
    ParamStore<T> params_;
    std::vector<MadfLayerParams<T>> enc_;
    std::vector<Var<T>> lift_w_, lift_b_;
    std::vector<RecoveryBlock> recovery_;
    std::vector<std::vector<RefineBlock>> refine_;
    std::vector<BnState<T>> bn_states_;
    std::vector<std::string> bn_names_;
    std::vector<Var<T>> head_w_, head_b_;
};

}  // namespace madf
