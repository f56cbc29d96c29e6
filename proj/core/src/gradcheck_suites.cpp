#include "madf/gradcheck.hpp"

#include <cstring>
#include <string_view>

#include "madf/losses.hpp"
#include "madf/model.hpp"

namespace madf {

namespace {

Tensor4<double> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0,
                              double hi = 1.0) {
    Tensor4<double> t(n, c, h, w);
    Rng rng(Rng::mix(0x6EAD, seed));
    t.fill_uniform(rng, lo, hi);
    return t;
}

// Values bounded away from activation kinks so +-h probes stay on one
// side.
Tensor4<double> random_kink_safe(int n, int c, int h, int w, std::uint64_t seed) {
    Tensor4<double> t = random_tensor(n, c, h, w, seed, -2.0, 2.0);
    for (auto& v : t.data)
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.3 : v + 0.3;
    return t;
}

// Ground truth on a coarse lattice plus a strict per-element ramp, and
// an output offset bounded away from zero: keeps every L1 residual and
// neighbor difference off the |.| kink under the probe step.
std::pair<Tensor4<double>, Tensor4<double>> loss_pair(int n, int c, int h, int w,
                                                      std::uint64_t seed) {
    Rng rng(Rng::mix(0x10CC, seed));
    Tensor4<double> gt(n, c, h, w);
    for (std::size_t i = 0; i < gt.numel(); ++i)
        gt.data[i] = 0.05 * rng.uniform_int(2, 16) + 0.0031 * static_cast<double>(i % 97);
    Tensor4<double> out = gt;
    for (auto& v : out.data) {
        const double off = rng.uniform(0.04, 0.25);
        v += rng.uniform() < 0.5 ? -off : off;
    }
    return {gt, out};
}

Tensor4<double> checker_mask(int n, int h, int w) {
    Tensor4<double> m(n, 1, h, w);
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                m.at(i, 0, y, x) = ((y / 2 + x / 2 + i) % 3 == 0) ? 0.0 : 1.0;
    return m;
}

Mask cpu_mask_from(const Tensor4<double>& m, int item) {
    Mask mask(m.h, m.w);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            mask.at(y, x) = m.at(item, 0, y, x) != 0.0 ? 1 : 0;
    return mask;
}

struct Suite {
    std::string name;
    std::string module;
    double tolerance;
    std::function<GradCheckReport()> run;
};

GradCheckReport check_loss(const char* which) {
    auto [gt, out] = loss_pair(1, 3, 8, 8, 77);
    Tensor4<double> mask = checker_mask(1, 8, 8);
    std::vector<Mask> cpu_masks = {cpu_mask_from(mask, 0)};
    const std::string name = which;
    return grad_check(
        {out}, [gt, mask, cpu_masks, name](Graph<double>& g,
                                           const std::vector<Var<double>>& in) {
            static const FeatureNet<double> net;
            Var<double> gtc = g.constant(gt, "gt");
            Var<double> mk = g.constant(mask, "mask");
            if (name == "loss_hole") return loss_hole(g, in[0], gtc, mk);
            if (name == "loss_valid") return loss_valid(g, in[0], gtc, mk);
            Var<double> com = compose(g, in[0], gtc, mk);
            if (name == "loss_perceptual") return loss_perceptual(g, in[0], com, gtc, net);
            if (name == "loss_style") return loss_style(g, in[0], com, gtc, net);
            if (name == "loss_tv") return loss_tv(g, com, cpu_masks);
            throw ConfigError("unknown loss suite");
        });
}

ModelConfig micro_config() {
    ModelConfig mc;
    mc.name = "micro";
    mc.levels = 2;
    mc.kernel_ladder = {3, 3};
    mc.image_channels = {4, 8};
    mc.mask_channels = 2;
    mc.base_width = 4;
    mc.max_width = 8;
    mc.pn_latent = 4;
    mc.refinements = 1;
    mc.pn_enabled = true;
    mc.validate();
    return mc;
}

// A finite-difference probe is only valid where the network is smooth
// within +-h of the evaluation point, so the micro-model check shifts
// biases to hold every activation away from its kink (verified below)
// and contracts the outputs through a smooth quadratic. The L1 losses
// have their own kink-safe suites above.
GradCheckReport check_micro_model() {
    Model<double> model(micro_config(), 2024);
    ParamStore<double>& params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& e = params.entry(i);
        auto shift = [&](const char* suffix, double delta) {
            if (e.name.size() >= std::strlen(suffix) &&
                e.name.rfind(suffix) == e.name.size() - std::strlen(suffix))
                for (auto& v : e.node->value.data) v += delta;
        };
        shift(".lift.b", 0.5);
        shift(".tconv.b", 0.5);
        shift(".blend.b", 1.0);
        shift(".conv.b", 1.0);
        shift(".pn.proj.b", 0.5);
        shift(".pn.scale.b", 1.0);
        shift(".pn.bias.b", 2.5);
    }

    auto [gt, out_unused] = loss_pair(1, 3, 8, 8, 3);
    Tensor4<double> mask = checker_mask(1, 8, 8);
    Tensor4<double> input = gt;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            if (mask.at(0, 0, y, x) == 0.0)
                for (int ci = 0; ci < 3; ++ci) input.at(0, ci, y, x) = 0.0;

    auto build = [&](Graph<double>& g) {
        Var<double> in = g.constant(input, "input");
        Var<double> mk = g.constant(mask, "mask");
        DecoderOutputs<double> outs = model.forward_full(g, in, mk, true);
        Var<double> loss = nullptr;
        for (std::size_t d = 0; d < outs.images.size(); ++d) {
            Tensor4<double> proj = Tensor4<double>::zeros_like(outs.images[d]->value);
            Rng rng(Rng::mix(0x9806, d));
            proj.fill_uniform(rng, 0.5, 1.5);
            Var<double> term =
                mean_all(g, mul(g, mul(g, outs.images[d], outs.images[d]),
                                g.constant(std::move(proj), "proj")));
            loss = loss ? add(g, loss, term) : term;
        }
        return loss;
    };

    // Kink margin: the smallest |pre-activation| seen anywhere.
    {
        Graph<double> g;
        build(g);
        double margin = 1e30;
        for (const auto& node : g.nodes())
            if (std::string_view(node->op) == "activation")
                for (const double v : node->parents[0]->value.data)
                    if (v != 0.0)  // exact zeros are structural (masked-out windows)
                        margin = std::min(margin, std::abs(v));
        // The probe moves a pre-activation by at most h * |d pre/d theta|,
        // a few 1e-4 here; 4e-3 keeps a comfortable factor on top.
        if (margin < 4e-3) {
            GradCheckReport bad;
            bad.max_rel_err = 1.0;  // fixture sits on an activation kink
            return bad;
        }
    }

    return grad_check_params(params, build);
}

std::vector<Suite> build_suites() {
    std::vector<Suite> suites;

    suites.push_back({"conv2d", "tensor", 1e-5, [] {
        GradCheckReport worst;
        const int configs[][6] = {  // c_in, c_out, h, w, k/s/pad packed below
            {1, 1, 1, 1, 1, 0}, {2, 3, 5, 5, 3, 1}, {3, 2, 6, 6, 3, 1}, {2, 4, 7, 7, 5, 2}};
        const int strides[] = {1, 2, 2, 1};
        for (int i = 0; i < 4; ++i) {
            const auto& c = configs[i];
            ConvSpec spec{c[4], strides[i], c[5], c[0], c[1]};
            auto x = random_tensor(2, c[0], c[2], c[3], 11 + i);
            auto w = random_tensor(c[1], c[0], c[4], c[4], 21 + i);
            auto r = grad_check({x, w}, [spec](Graph<double>& g,
                                                const std::vector<Var<double>>& in) {
                return conv2d(g, in[0], in[1], spec);
            });
            worst.max_rel_err = std::max(worst.max_rel_err, r.max_rel_err);
            worst.checked += r.checked;
        }
        return worst;
    }});

    suites.push_back({"conv2d_transpose", "tensor", 1e-5, [] {
        ConvSpec spec{4, 2, 1, 3, 2};
        auto x = random_tensor(2, 3, 4, 4, 31);
        auto w = random_tensor(3, 2, 4, 4, 32);
        return grad_check({x, w},
                          [spec](Graph<double>& g, const std::vector<Var<double>>& in) {
                              return conv2d_transpose(g, in[0], in[1], spec);
                          });
    }});

    suites.push_back({"activations", "tensor", 1e-5, [] {
        GradCheckReport worst;
        for (const Activation kind :
             {Activation::kRelu, Activation::kLeakyRelu, Activation::kSigmoid}) {
            auto x = random_kink_safe(2, 3, 4, 4, 41 + static_cast<int>(kind));
            auto r = grad_check({x}, [kind](Graph<double>& g,
                                            const std::vector<Var<double>>& in) {
                return activation(g, in[0], kind);
            });
            worst.max_rel_err = std::max(worst.max_rel_err, r.max_rel_err);
            worst.checked += r.checked;
        }
        return worst;
    }});

    suites.push_back({"concat_channels", "tensor", 1e-5, [] {
        auto a = random_tensor(2, 2, 4, 4, 51);
        auto b = random_tensor(2, 3, 4, 4, 52);
        return grad_check({a, b}, [](Graph<double>& g, const std::vector<Var<double>>& in) {
            return concat_channels(g, in[0], in[1]);
        });
    }});

    suites.push_back({"upsample_nearest2x", "tensor", 1e-5, [] {
        auto x = random_tensor(2, 3, 3, 5, 61);
        return grad_check({x}, [](Graph<double>& g, const std::vector<Var<double>>& in) {
            return upsample_nearest2x(g, in[0]);
        });
    }});

    suites.push_back({"avg_pool2x2", "tensor", 1e-5, [] {
        auto x = random_tensor(2, 3, 4, 6, 62);
        return grad_check({x}, [](Graph<double>& g, const std::vector<Var<double>>& in) {
            return avg_pool2x2(g, in[0]);
        });
    }});

    suites.push_back({"batch_norm", "layers", 1e-5, [] {
        auto x = random_tensor(3, 4, 5, 5, 71);
        return grad_check({x}, [](Graph<double>& g, const std::vector<Var<double>>& in) {
            BnState<double> bn(4);
            return batch_norm(g, in[0], bn, true);
        });
    }});

    suites.push_back({"point_norm", "layers", 1e-5, [] {
        auto x = random_tensor(2, 4, 6, 6, 81);
        auto guide = random_tensor(2, 3, 6, 6, 82);
        auto proj_w = random_tensor(4, 3, 3, 3, 83);
        auto proj_b = random_tensor(1, 4, 1, 1, 84);
        auto scale_w = random_tensor(4, 4, 3, 3, 85);
        auto scale_b = random_tensor(1, 4, 1, 1, 86);
        auto bias_w = random_tensor(4, 4, 3, 3, 87);
        auto bias_b = random_tensor(1, 4, 1, 1, 88);
        return grad_check({x, guide, proj_w, proj_b, scale_w, scale_b, bias_w, bias_b},
                          [](Graph<double>& g, const std::vector<Var<double>>& in) {
                              PnParams<double> pn{in[2], in[3], in[4], in[5], in[6], in[7]};
                              BnState<double> bn(4);
                              return point_norm(g, in[0], in[1], pn, bn, true);
                          });
    }});

    suites.push_back({"mask_branch_step", "layers", 1e-5, [] {
        // theta as a function of mask features and generator weights
        ConvSpec img_spec{3, 2, 1, 2, 3};
        const int d = 2 * 9 * 3;
        auto m = random_tensor(2, 2, 6, 6, 91, 0.0, 1.0);
        auto mw = random_tensor(2, 2, 3, 3, 92);
        auto kw = random_tensor(d, 2, 1, 1, 93);
        auto kb = random_tensor(1, d, 1, 1, 94);
        return grad_check({m, mw, kw, kb},
                          [img_spec](Graph<double>& g, const std::vector<Var<double>>& in) {
                              MadfLayerParams<double> p{in[1], in[2], in[3]};
                              return mask_branch_step(g, in[0], p, img_spec).theta.theta;
                          });
    }});

    suites.push_back({"madf_conv", "layers", 1e-5, [] {
        ConvSpec spec{3, 2, 1, 2, 3};
        auto e = random_tensor(2, 2, 6, 6, 95);
        const int nh = spec.out_dim(6), nw = spec.out_dim(6);
        const int d = 2 * 9 * 3;
        auto theta = random_tensor(2, 1, nh * nw, d, 96);
        return grad_check({e, theta},
                          [spec, nh, nw, d](Graph<double>& g,
                                            const std::vector<Var<double>>& in) {
                              KernelField<double> field{in[1], nh, nw, d, spec};
                              return madf_conv(g, in[0], field);
                          });
    }});

    for (const char* loss :
         {"loss_hole", "loss_valid", "loss_perceptual", "loss_style", "loss_tv"})
        suites.push_back({loss, "losses", 1e-4,
                          [loss] { return check_loss(loss); }});

    suites.push_back({"micro_model", "model", 1e-4, check_micro_model});

    return suites;
}

}  // namespace

std::vector<GradSuiteResult> run_gradcheck_suites(const std::string& module_filter) {
    std::vector<GradSuiteResult> results;
    for (const auto& suite : build_suites()) {
        if (module_filter != "all" && module_filter != suite.module &&
            module_filter != suite.name)
            continue;
        GradSuiteResult res;
        res.name = suite.name;
        res.tolerance = suite.tolerance;
        res.max_rel_err = suite.run().max_rel_err;
        res.passed = res.max_rel_err < suite.tolerance;
        results.push_back(res);
    }
    if (results.empty())
        throw ConfigError("gradcheck: no suites match module '" + module_filter + "'");
    return results;
}

}  // namespace madf
