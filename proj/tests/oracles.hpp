// Brute-force reference implementations used only by tests. These stay
// independent of the library's im2col/GEMM path: plain nested loops,
// one index at a time.
#pragma once

#include <algorithm>
#include <vector>

#include "madf/layers.hpp"
#include "madf/tensor.hpp"

namespace oracle {

using madf::ConvSpec;
using madf::KernelField;
using madf::PadMode;
using madf::Tensor4;

template <typename T>
T read_padded(const Tensor4<T>& x, int n, int c, int y, int xx, PadMode mode) {
    if (mode == PadMode::kReplicate) {
        y = std::clamp(y, 0, x.h - 1);
        xx = std::clamp(xx, 0, x.w - 1);
        return x.at(n, c, y, xx);
    }
    if (y < 0 || y >= x.h || xx < 0 || xx >= x.w) return T(0);
    return x.at(n, c, y, xx);
}

// Sliding-window convolution, weights (c_out, c_in, k, k).
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& w, const ConvSpec& sp) {
    const int nh = sp.out_dim(x.h), nw = sp.out_dim(x.w);
    Tensor4<T> y(x.n, sp.c_out, nh, nw);
    for (int n = 0; n < x.n; ++n)
        for (int co = 0; co < sp.c_out; ++co)
            for (int oy = 0; oy < nh; ++oy)
                for (int ox = 0; ox < nw; ++ox) {
                    T acc = T(0);
                    for (int ci = 0; ci < sp.c_in; ++ci)
                        for (int ky = 0; ky < sp.k; ++ky)
                            for (int kx = 0; kx < sp.k; ++kx)
                                acc += w.at(co, ci, ky, kx) *
                                       read_padded(x, n, ci, oy * sp.s - sp.pad + ky,
                                                   ox * sp.s - sp.pad + kx, sp.pad_mode);
                    y.at(n, co, oy, ox) = acc;
                }
    return y;
}

// Scatter-add transposed convolution, weights (c_in, c_out, k, k).
template <typename T>
Tensor4<T> conv2d_transpose(const Tensor4<T>& x, const Tensor4<T>& w, const ConvSpec& sp) {
    const int ho = (x.h - 1) * sp.s - 2 * sp.pad + sp.k;
    const int wo = (x.w - 1) * sp.s - 2 * sp.pad + sp.k;
    Tensor4<T> y(x.n, sp.c_out, ho, wo);
    for (int n = 0; n < x.n; ++n)
        for (int ci = 0; ci < sp.c_in; ++ci)
            for (int iy = 0; iy < x.h; ++iy)
                for (int ix = 0; ix < x.w; ++ix)
                    for (int co = 0; co < sp.c_out; ++co)
                        for (int ky = 0; ky < sp.k; ++ky)
                            for (int kx = 0; kx < sp.k; ++kx) {
                                const int oy = iy * sp.s - sp.pad + ky;
                                const int ox = ix * sp.s - sp.pad + kx;
                                if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
                                y.at(n, co, oy, ox) +=
                                    x.at(n, ci, iy, ix) * w.at(ci, co, ky, kx);
                            }
    return y;
}

// Per-window dynamic convolution straight off the kernel-field
// accessor.
template <typename T>
Tensor4<T> madf_conv(const Tensor4<T>& e, const KernelField<T>& field) {
    const ConvSpec sp = field.spec;
    Tensor4<T> y(e.n, sp.c_out, field.nh, field.nw);
    for (int n = 0; n < e.n; ++n)
        for (int oy = 0; oy < field.nh; ++oy)
            for (int ox = 0; ox < field.nw; ++ox)
                for (int co = 0; co < sp.c_out; ++co) {
                    T acc = T(0);
                    for (int ci = 0; ci < sp.c_in; ++ci)
                        for (int ky = 0; ky < sp.k; ++ky)
                            for (int kx = 0; kx < sp.k; ++kx)
                                acc += field.kernel_at(n, oy, ox, ci, ky, kx, co) *
                                       read_padded(e, n, ci, oy * sp.s - sp.pad + ky,
                                                   ox * sp.s - sp.pad + kx, PadMode::kZero);
                    y.at(n, co, oy, ox) = acc;
                }
    return y;
}

// Channel auto-correlation by explicit double loop.
template <typename T>
std::vector<T> gram(const Tensor4<T>& x, int item) {
    std::vector<T> g(static_cast<std::size_t>(x.c) * x.c, T(0));
    for (int a = 0; a < x.c; ++a)
        for (int b = 0; b < x.c; ++b) {
            T acc = T(0);
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx)
                    acc += x.at(item, a, y, xx) * x.at(item, b, y, xx);
            g[static_cast<std::size_t>(a) * x.c + b] = acc;
        }
    return g;
}

template <typename T>
double max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return worst;
}

template <typename T>
Tensor4<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0,
                         double hi = 1.0) {
    Tensor4<T> t(n, c, h, w);
    madf::Rng rng(madf::Rng::mix(0x7E57, seed));
    t.fill_uniform(rng, static_cast<T>(lo), static_cast<T>(hi));
    return t;
}

}  // namespace oracle
