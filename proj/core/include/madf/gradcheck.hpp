#pragma once

#include <functional>
#include <vector>

#include "madf/ops.hpp"

namespace madf {

// Central-difference comparison of analytic gradients at f64. The op
// output is contracted against a fixed random projection so the check
// covers every output element; relative error is
// |a - n| / max(1, |a|, |n|).
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

using GradBuildFn =
    std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

inline GradCheckReport grad_check(const std::vector<Tensor4<double>>& inputs,
                                  const GradBuildFn& build, double h = 1e-4) {
    auto project = [](Graph<double>& g, Var<double> out) {
        Tensor4<double> proj = Tensor4<double>::zeros_like(out->value);
        Rng rng(Rng::mix(0xC0FFEE, out->value.numel()));
        proj.fill_uniform(rng, -1.0, 1.0);
        return sum_all(g, mul(g, out, g.constant(std::move(proj), "projection")));
    };

    auto evaluate = [&](const std::vector<Tensor4<double>>& vals) {
        Graph<double> g;
        std::vector<Var<double>> leaves;
        leaves.reserve(vals.size());
        for (const auto& t : vals) leaves.push_back(g.leaf(t, false));
        Var<double> out = build(g, leaves);
        return project(g, out)->value.data[0];
    };

    // Analytic pass.
    std::vector<Tensor4<double>> analytic;
    {
        Graph<double> g;
        std::vector<Var<double>> leaves;
        for (const auto& t : inputs) leaves.push_back(g.leaf(t, true));
        Var<double> out = build(g, leaves);
        Var<double> s = project(g, out);
        g.backward(s);
        for (Var<double> leaf : leaves) {
            leaf->ensure_grad();
            analytic.push_back(leaf->grad);
        }
    }

    GradCheckReport report;
    std::vector<Tensor4<double>> work = inputs;
    for (std::size_t t = 0; t < work.size(); ++t) {
        for (std::size_t i = 0; i < work[t].numel(); ++i) {
            const double orig = work[t].data[i];
            work[t].data[i] = orig + h;
            const double up = evaluate(work);
            work[t].data[i] = orig - h;
            const double down = evaluate(work);
            work[t].data[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[t].data[i];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.checked;
        }
    }
    return report;
}

// Finite-difference check of every parameter in a store against the
// analytic gradients of a scalar loss. The builder must construct the
// same forward graph each call (fresh Graph, reusing the store's
// parameter nodes).
template <typename BuildLoss>
GradCheckReport grad_check_params(ParamStore<double>& params, BuildLoss build,
                                  double h = 1e-4) {
    params.zero_grad();
    std::vector<Tensor4<double>> analytic;
    {
        Graph<double> g;
        Var<double> loss = build(g);
        g.backward(loss);
        for (std::size_t i = 0; i < params.size(); ++i) {
            params.entry(i).node->ensure_grad();
            analytic.push_back(params.entry(i).node->grad);
        }
    }
    GradCheckReport report;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor4<double>& value = params.entry(t).node->value;
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double orig = value.data[i];
            double up, down;
            {
                Graph<double> g;
                value.data[i] = orig + h;
                up = build(g)->value.data[0];
            }
            {
                Graph<double> g;
                value.data[i] = orig - h;
                down = build(g)->value.data[0];
            }
            value.data[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[t].data[i];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.checked;
        }
    }
    params.zero_grad();
    return report;
}

// Named check for suite runners.
struct GradSuiteResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

// Runs the full gradient suite (plain ops, dynamic filtering,
// normalization, losses, micro model); module_filter selects a subset
// ("tensor", "layers", "losses", "model", "all").
std::vector<GradSuiteResult> run_gradcheck_suites(const std::string& module_filter);

}  // namespace madf
