#pragma once

#include "madf/image_io.hpp"
#include "madf/model.hpp"

namespace madf {

// Qualitative dump of the first encoder level's generated kernels.
// Rows are selected windows ordered from fully valid to fully masked;
// columns are output channels (up to 16). Each cell renders the k x k
// kernel averaged over input channels, min-max normalized over the
// whole grid and upscaled for inspection.
struct KernelDump {
    ImageSample grid;          // single grid rendered as grayscale RGB
    double energy_valid = 0.0;   // mean kernel L2 at the most-valid window
    double energy_masked = 0.0;  // mean kernel L2 at the most-masked window
};

template <typename T>
KernelDump dump_first_layer_kernels(Model<T>& model, const Mask& mask) {
    const ModelConfig& cfg = model.config();
    Graph<T> g;
    Tensor4<T> m0(1, 1, mask.h, mask.w);
    for (std::size_t i = 0; i < mask.m.size(); ++i) m0.data[i] = static_cast<T>(mask.m[i]);
    Var<T> mask_leaf = g.constant(std::move(m0), "mask");
    const ConvSpec spec = cfg.level_spec(1);
    MaskBranchOut<T> mb = mask_branch_step(g, mask_leaf, model.encoder_level(1), spec);
    const KernelField<T>& field = mb.theta;

    // Valid fraction per window of the level-1 lattice.
    const int nh = field.nh, nw = field.nw;
    std::vector<double> frac(static_cast<std::size_t>(nh) * nw, 0.0);
    for (int oy = 0; oy < nh; ++oy)
        for (int ox = 0; ox < nw; ++ox) {
            int valid = 0, taps = 0;
            for (int ky = 0; ky < spec.k; ++ky)
                for (int kx = 0; kx < spec.k; ++kx) {
                    const int y = oy * spec.s - spec.pad + ky;
                    const int x = ox * spec.s - spec.pad + kx;
                    if (y < 0 || y >= mask.h || x < 0 || x >= mask.w) continue;
                    ++taps;
                    valid += mask.at(y, x);
                }
            frac[static_cast<std::size_t>(oy) * nw + ox] =
                taps > 0 ? static_cast<double>(valid) / taps : 0.0;
        }

    auto window_closest = [&](double target) {
        std::size_t best = 0;
        double best_d = 1e9;
        for (std::size_t i = 0; i < frac.size(); ++i) {
            const double d = std::abs(frac[i] - target);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    };
    const std::size_t rows[4] = {window_closest(1.0), window_closest(0.66),
                                 window_closest(0.33), window_closest(0.0)};

    const int k = spec.k;
    const int cols = std::min(16, spec.c_out);
    const int cell = k;
    const int up = 8;
    ImageSample grid(3, 4 * cell * up + 5 * up, cols * cell * up + (cols + 1) * up);
    for (auto& v : grid.px) v = 0.5;

    auto kernel_mean = [&](std::size_t win, int co, int ky, int kx) {
        double acc = 0.0;
        for (int ci = 0; ci < spec.c_in; ++ci)
            acc += static_cast<double>(field.kernel_at(0, static_cast<int>(win / nw),
                                                       static_cast<int>(win % nw), ci, ky, kx,
                                                       co));
        return acc / spec.c_in;
    };

    double lo = 1e30, hi = -1e30;
    for (const auto win : rows)
        for (int co = 0; co < cols; ++co)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const double v = kernel_mean(win, co, ky, kx);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;

    for (int r = 0; r < 4; ++r)
        for (int co = 0; co < cols; ++co)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const double v = (kernel_mean(rows[r], co, ky, kx) - lo) / span;
                    const int y0 = up + r * (cell * up + up) + ky * up;
                    const int x0 = up + co * (cell * up + up) + kx * up;
                    for (int dy = 0; dy < up; ++dy)
                        for (int dx = 0; dx < up; ++dx)
                            for (int ci = 0; ci < 3; ++ci)
                                grid.at(ci, y0 + dy, x0 + dx) = v;
                }

    auto window_energy = [&](std::size_t win) {
        double acc = 0.0;
        const T* th = field.theta->value.item(0) + win * field.d;
        for (int i = 0; i < field.d; ++i) acc += static_cast<double>(th[i]) * th[i];
        return std::sqrt(acc / field.d);
    };

    KernelDump dump;
    dump.grid = std::move(grid);
    dump.energy_valid = window_energy(rows[0]);
    dump.energy_masked = window_energy(rows[3]);
    return dump;
}

}  // namespace madf
