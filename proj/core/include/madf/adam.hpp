#pragma once

#include <cmath>

#include "madf/graph.hpp"

namespace madf {

// Fixed learning rate, zero weight decay.
struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a ParamStore; moment slots follow the
// store's creation order.
template <typename T>
class Adam {
public:
    explicit Adam(const ParamStore<T>& params, AdamConfig cfg = {}) : cfg_(cfg) {
        slots_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            const std::size_t count = params.entry(i).node->value.numel();
            slots_[i].m.assign(count, T(0));
            slots_[i].v.assign(count, T(0));
        }
    }

    void step(ParamStore<T>& params) {
        if (slots_.size() != params.size())
            throw ConfigError("Adam: slot/parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& e = params.entry(i);
            if (e.node->grad.numel() != 0 && !e.node->grad.all_finite())
                throw NumericError("Adam: non-finite gradient for " + e.name);
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& node = *params.entry(i).node;
            node.ensure_grad();
            Slot& slot = slots_[i];
            const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
            const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.eps);
            const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
            for (std::size_t j = 0; j < slot.m.size(); ++j) {
                const T grad = node.grad.data[j];
                slot.m[j] = b1 * slot.m[j] + (T(1) - b1) * grad;
                slot.v[j] = b2 * slot.v[j] + (T(1) - b2) * grad * grad;
                const T m_hat = slot.m[j] * inv_bc1;
                const T v_hat = slot.v[j] * inv_bc2;
                node.value.data[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
            }
        }
    }

    std::int64_t t() const { return t_; }
    void set_t(std::int64_t t) { t_ = t; }
    const AdamConfig& config() const { return cfg_; }

    std::size_t slot_count() const { return slots_.size(); }
    std::vector<T>& moment1(std::size_t i) { return slots_[i].m; }
    std::vector<T>& moment2(std::size_t i) { return slots_[i].v; }
    const std::vector<T>& moment1(std::size_t i) const { return slots_[i].m; }
    const std::vector<T>& moment2(std::size_t i) const { return slots_[i].v; }

private:
    struct Slot {
        std::vector<T> m, v;
    };
    AdamConfig cfg_;
    std::vector<Slot> slots_;
    std::int64_t t_ = 0;
};

}  // namespace madf
