#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "madf/blas.hpp"
#include "madf/graph.hpp"
#include "madf/threading.hpp"

namespace madf {

enum class PadMode { kZero, kReplicate };

// Geometry of one convolution: k x k kernel, stride s, symmetric
// padding. Output spatial dims follow N = (in + 2*pad - k) / s + 1.
struct ConvSpec {
    int k = 1;
    int s = 1;
    int pad = 0;
    int c_in = 1;
    int c_out = 1;
    PadMode pad_mode = PadMode::kZero;

    int out_dim(int in) const { return (in + 2 * pad - k) / s + 1; }

    void validate() const {
        if (k < 1 || s < 1 || pad < 0 || c_in < 1 || c_out < 1)
            throw ConfigError("ConvSpec: k>=1, s>=1, pad>=0, channels>=1 required");
    }
};

inline ConvSpec same_conv3(int c_in, int c_out) { return ConvSpec{3, 1, 1, c_in, c_out}; }

namespace detail {

// Patch extraction in (c*k*k) x (nh*nw) layout, one column per window.
// Stride-1 zero-pad rows reduce to a memcpy with zeroed margins.
template <typename T>
void im2col(const T* src, int c, int h, int w, const ConvSpec& sp, int nh, int nw, T* cols) {
    const int npix = nh * nw;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const bool fast = sp.s == 1 && sp.pad_mode == PadMode::kZero;
    for (int ci = 0; ci < c; ++ci) {
        const T* chan = src + ci * plane;
        for (int kh = 0; kh < sp.k; ++kh) {
            for (int kw = 0; kw < sp.k; ++kw) {
                T* row = cols + (static_cast<std::size_t>(ci) * sp.k * sp.k + kh * sp.k + kw) *
                                    npix;
                if (fast) {
                    const int shift = kw - sp.pad;
                    const int ow0 = std::max(0, -shift);
                    const int ow1 = std::min(nw, w - shift);  // exclusive
                    for (int oh = 0; oh < nh; ++oh) {
                        const int iy = oh - sp.pad + kh;
                        T* line = row + static_cast<std::size_t>(oh) * nw;
                        if (iy < 0 || iy >= h || ow1 <= ow0) {
                            std::fill(line, line + nw, T(0));
                            continue;
                        }
                        std::fill(line, line + ow0, T(0));
                        std::memcpy(line + ow0,
                                    chan + static_cast<std::size_t>(iy) * w + ow0 + shift,
                                    static_cast<std::size_t>(ow1 - ow0) * sizeof(T));
                        std::fill(line + ow1, line + nw, T(0));
                    }
                    continue;
                }
                for (int oh = 0; oh < nh; ++oh) {
                    int iy = oh * sp.s - sp.pad + kh;
                    for (int ow = 0; ow < nw; ++ow) {
                        int ix = ow * sp.s - sp.pad + kw;
                        T v;
                        if (sp.pad_mode == PadMode::kReplicate) {
                            const int cy = std::clamp(iy, 0, h - 1);
                            const int cx = std::clamp(ix, 0, w - 1);
                            v = chan[static_cast<std::size_t>(cy) * w + cx];
                        } else {
                            v = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? chan[static_cast<std::size_t>(iy) * w + ix]
                                    : T(0);
                        }
                        row[oh * nw + ow] = v;
                    }
                }
            }
        }
    }
}

// Patch extraction in (nh*nw) x (c*k*k) layout, one row per window.
template <typename T>
void im2row(const T* src, int c, int h, int w, const ConvSpec& sp, int nh, int nw, T* rows) {
    const int ck = c * sp.k * sp.k;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int oh = 0; oh < nh; ++oh) {
        for (int ow = 0; ow < nw; ++ow) {
            T* row = rows + static_cast<std::size_t>(oh * nw + ow) * ck;
            for (int ci = 0; ci < c; ++ci) {
                const T* chan = src + ci * plane;
                for (int kh = 0; kh < sp.k; ++kh) {
                    const int iy = oh * sp.s - sp.pad + kh;
                    for (int kw = 0; kw < sp.k; ++kw) {
                        const int ix = ow * sp.s - sp.pad + kw;
                        T v;
                        if (sp.pad_mode == PadMode::kReplicate) {
                            const int cy = std::clamp(iy, 0, h - 1);
                            const int cx = std::clamp(ix, 0, w - 1);
                            v = chan[static_cast<std::size_t>(cy) * w + cx];
                        } else {
                            v = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? chan[static_cast<std::size_t>(iy) * w + ix]
                                    : T(0);
                        }
                        row[(ci * sp.k + kh) * sp.k + kw] = v;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds patch columns back onto the image
// grid. Replicate padding folds clamped taps onto the border pixels.
template <typename T>
void col2im_add(const T* cols, int c, int h, int w, const ConvSpec& sp, int nh, int nw,
                T* dst) {
    const int npix = nh * nw;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const bool fast = sp.s == 1 && sp.pad_mode == PadMode::kZero;
    for (int ci = 0; ci < c; ++ci) {
        T* chan = dst + ci * plane;
        for (int kh = 0; kh < sp.k; ++kh) {
            for (int kw = 0; kw < sp.k; ++kw) {
                const T* row =
                    cols + (static_cast<std::size_t>(ci) * sp.k * sp.k + kh * sp.k + kw) * npix;
                if (fast) {
                    const int shift = kw - sp.pad;
                    const int ow0 = std::max(0, -shift);
                    const int ow1 = std::min(nw, w - shift);  // exclusive
                    for (int oh = 0; oh < nh; ++oh) {
                        const int iy = oh - sp.pad + kh;
                        if (iy < 0 || iy >= h || ow1 <= ow0) continue;
                        const T* line = row + static_cast<std::size_t>(oh) * nw;
                        T* out = chan + static_cast<std::size_t>(iy) * w + shift;
                        for (int ow = ow0; ow < ow1; ++ow) out[ow] += line[ow];
                    }
                    continue;
                }
                for (int oh = 0; oh < nh; ++oh) {
                    int iy = oh * sp.s - sp.pad + kh;
                    for (int ow = 0; ow < nw; ++ow) {
                        int ix = ow * sp.s - sp.pad + kw;
                        if (sp.pad_mode == PadMode::kReplicate) {
                            const int cy = std::clamp(iy, 0, h - 1);
                            const int cx = std::clamp(ix, 0, w - 1);
                            chan[static_cast<std::size_t>(cy) * w + cx] += row[oh * nw + ow];
                        } else if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                            chan[static_cast<std::size_t>(iy) * w + ix] += row[oh * nw + ow];
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2row.
template <typename T>
void row2im_add(const T* rows, int c, int h, int w, const ConvSpec& sp, int nh, int nw,
                T* dst) {
    const int ck = c * sp.k * sp.k;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int oh = 0; oh < nh; ++oh) {
        for (int ow = 0; ow < nw; ++ow) {
            const T* row = rows + static_cast<std::size_t>(oh * nw + ow) * ck;
            for (int ci = 0; ci < c; ++ci) {
                T* chan = dst + ci * plane;
                for (int kh = 0; kh < sp.k; ++kh) {
                    const int iy = oh * sp.s - sp.pad + kh;
                    for (int kw = 0; kw < sp.k; ++kw) {
                        const int ix = ow * sp.s - sp.pad + kw;
                        if (sp.pad_mode == PadMode::kReplicate) {
                            const int cy = std::clamp(iy, 0, h - 1);
                            const int cx = std::clamp(ix, 0, w - 1);
                            chan[static_cast<std::size_t>(cy) * w + cx] +=
                                row[(ci * sp.k + kh) * sp.k + kw];
                        } else if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                            chan[static_cast<std::size_t>(iy) * w + ix] +=
                                row[(ci * sp.k + kh) * sp.k + kw];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolutions

// Standard 2-D convolution. Weights are (c_out, c_in, k, k); no bias
// term, see add_channel_bias. Differentiable w.r.t. both x and w.
template <typename T>
Var<T> conv2d(Graph<T>& g, Var<T> x, Var<T> w, const ConvSpec& spec) {
    spec.validate();
    const Tensor4<T>& xv = x->value;
    const Tensor4<T>& wv = w->value;
    if (xv.c != spec.c_in)
        throw ConfigError("conv2d: input has " + std::to_string(xv.c) + " channels, spec wants " +
                          std::to_string(spec.c_in));
    if (wv.n != spec.c_out || wv.c != spec.c_in || wv.h != spec.k || wv.w != spec.k)
        throw ConfigError("conv2d: weight dims " + wv.dims_str() + " do not match spec");
    require_finite(xv, "conv2d input");
    require_finite(wv, "conv2d weights");
    const int nh = spec.out_dim(xv.h);
    const int nw = spec.out_dim(xv.w);
    if (nh < 1 || nw < 1)
        throw ConfigError("conv2d: kernel " + std::to_string(spec.k) + " too large for input " +
                          xv.dims_str());
    const int ck = spec.c_in * spec.k * spec.k;
    const int npix = nh * nw;

    Tensor4<T> y = Tensor4<T>::uninit(xv.n, spec.c_out, nh, nw);
    parallel_for(0, xv.n, [&](int i) {
        uvector<T> cols(static_cast<std::size_t>(ck) * npix);
        detail::im2col(xv.item(i), xv.c, xv.h, xv.w, spec, nh, nw, cols.data());
        blas::gemm(false, false, spec.c_out, npix, ck, T(1), wv.data.data(), ck, cols.data(),
                   npix, T(0), y.item(i), npix);
    });

    const ConvSpec sp = spec;
    return g.make(std::move(y), {x, w}, "conv2d", [x, w, sp, nh, nw](Node<T>& out) {
        const Tensor4<T>& xv = x->value;
        const int ck = sp.c_in * sp.k * sp.k;
        const int npix = nh * nw;
        if (x->requires_grad) x->ensure_grad();
        if (w->requires_grad) w->ensure_grad();
        if (x->requires_grad) {
            parallel_for(0, xv.n, [&](int i) {
                uvector<T> dcols(static_cast<std::size_t>(ck) * npix);
                blas::gemm(true, false, ck, npix, sp.c_out, T(1), w->value.data.data(), ck,
                           out.grad.item(i), npix, T(0), dcols.data(), npix);
                detail::col2im_add(dcols.data(), xv.c, xv.h, xv.w, sp, nh, nw, x->grad.item(i));
            });
        }
        if (w->requires_grad) {
            // per-item partials keep the reduction order fixed while the
            // heavy GEMMs run in parallel
            const std::size_t wcount = w->value.numel();
            std::vector<uvector<T>> partial(xv.n);
            parallel_for(0, xv.n, [&](int i) {
                uvector<T> cols(static_cast<std::size_t>(ck) * npix);
                detail::im2col(xv.item(i), xv.c, xv.h, xv.w, sp, nh, nw, cols.data());
                partial[i].resize(wcount);
                blas::gemm(false, true, sp.c_out, ck, npix, T(1), out.grad.item(i), npix,
                           cols.data(), npix, T(0), partial[i].data(), ck);
            });
            for (int i = 0; i < xv.n; ++i)
                for (std::size_t j = 0; j < wcount; ++j)
                    w->grad.data[j] += partial[i][j];
        }
    });
}

// Transposed convolution. Weights are (c_in, c_out, k, k); spec.c_in is
// the input channel count and the output spatial size follows
// (in - 1) * s - 2 * pad + k. Forward equals the data-backward of a
// conv2d with the channel-swapped kernel. Zero padding only.
template <typename T>
Var<T> conv2d_transpose(Graph<T>& g, Var<T> x, Var<T> w, const ConvSpec& spec) {
    spec.validate();
    if (spec.pad_mode != PadMode::kZero)
        throw ConfigError("conv2d_transpose: zero padding only");
    const Tensor4<T>& xv = x->value;
    const Tensor4<T>& wv = w->value;
    if (xv.c != spec.c_in)
        throw ConfigError("conv2d_transpose: input has " + std::to_string(xv.c) +
                          " channels, spec wants " + std::to_string(spec.c_in));
    if (wv.n != spec.c_in || wv.c != spec.c_out || wv.h != spec.k || wv.w != spec.k)
        throw ConfigError("conv2d_transpose: weight dims " + wv.dims_str() +
                          " do not match spec");
    require_finite(xv, "conv2d_transpose input");
    require_finite(wv, "conv2d_transpose weights");
    const int ho = (xv.h - 1) * spec.s - 2 * spec.pad + spec.k;
    const int wo = (xv.w - 1) * spec.s - 2 * spec.pad + spec.k;
    if (ho < 1 || wo < 1) throw ConfigError("conv2d_transpose: empty output");
    const int cko = spec.c_out * spec.k * spec.k;
    const int npix = xv.h * xv.w;

    // The scatter grid treats the *input* as the window lattice.
    ConvSpec scatter = spec;
    scatter.c_in = spec.c_out;  // only geometry fields are used below

    Tensor4<T> y(xv.n, spec.c_out, ho, wo);  // zeroed: the scatter accumulates
    parallel_for(0, xv.n, [&](int i) {
        uvector<T> cols(static_cast<std::size_t>(cko) * npix);
        blas::gemm(true, false, cko, npix, spec.c_in, T(1), wv.data.data(), cko, xv.item(i),
                   npix, T(0), cols.data(), npix);
        detail::col2im_add(cols.data(), spec.c_out, ho, wo, scatter, xv.h, xv.w, y.item(i));
    });

    const ConvSpec sp = spec;
    return g.make(std::move(y), {x, w}, "conv2d_transpose", [x, w, sp, ho, wo](Node<T>& out) {
        const Tensor4<T>& xv = x->value;
        const int cko = sp.c_out * sp.k * sp.k;
        const int npix = xv.h * xv.w;
        ConvSpec gather = sp;
        gather.c_in = sp.c_out;
        if (x->requires_grad) x->ensure_grad();
        if (w->requires_grad) w->ensure_grad();
        if (x->requires_grad) {
            parallel_for(0, xv.n, [&](int i) {
                uvector<T> cols(static_cast<std::size_t>(cko) * npix);
                detail::im2col(out.grad.item(i), sp.c_out, ho, wo, gather, xv.h, xv.w,
                               cols.data());
                blas::gemm(false, false, sp.c_in, npix, cko, T(1), w->value.data.data(), cko,
                           cols.data(), npix, T(1), x->grad.item(i), npix);
            });
        }
        if (w->requires_grad) {
            const std::size_t wcount = w->value.numel();
            std::vector<uvector<T>> partial(xv.n);
            parallel_for(0, xv.n, [&](int i) {
                uvector<T> cols(static_cast<std::size_t>(cko) * npix);
                detail::im2col(out.grad.item(i), sp.c_out, ho, wo, gather, xv.h, xv.w,
                               cols.data());
                partial[i].resize(wcount);
                blas::gemm(false, true, sp.c_in, cko, npix, T(1), xv.item(i), npix, cols.data(),
                           npix, T(0), partial[i].data(), cko);
            });
            for (int i = 0; i < xv.n; ++i)
                for (std::size_t j = 0; j < wcount; ++j)
                    w->grad.data[j] += partial[i][j];
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

namespace detail {
template <typename T>
void check_same_dims(const Var<T> a, const Var<T> b, const char* op) {
    if (!a->value.same_dims(b->value))
        throw ConfigError(std::string(op) + ": dims " + a->value.dims_str() + " vs " +
                          b->value.dims_str());
}
}  // namespace detail

template <typename T>
Var<T> add(Graph<T>& g, Var<T> a, Var<T> b) {
    detail::check_same_dims(a, b, "add");
    Tensor4<T> y = Tensor4<T>::uninit(a->value.n, a->value.c, a->value.h, a->value.w);
    const T* pa = a->value.data.data();
    const T* pb = b->value.data.data();
    parallel_chunks(y.numel(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) y.data[i] = pa[i] + pb[i];
    });
    return g.make(std::move(y), {a, b}, "add", [a, b](Node<T>& out) {
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        parallel_chunks(out.grad.numel(), [&](std::size_t lo, std::size_t hi) {
            if (a->requires_grad)
                for (std::size_t i = lo; i < hi; ++i) a->grad.data[i] += out.grad.data[i];
            if (b->requires_grad)
                for (std::size_t i = lo; i < hi; ++i) b->grad.data[i] += out.grad.data[i];
        });
    });
}

template <typename T>
Var<T> sub(Graph<T>& g, Var<T> a, Var<T> b) {
    detail::check_same_dims(a, b, "sub");
    Tensor4<T> y = Tensor4<T>::uninit(a->value.n, a->value.c, a->value.h, a->value.w);
    const T* pa = a->value.data.data();
    const T* pb = b->value.data.data();
    parallel_chunks(y.numel(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) y.data[i] = pa[i] - pb[i];
    });
    return g.make(std::move(y), {a, b}, "sub", [a, b](Node<T>& out) {
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        parallel_chunks(out.grad.numel(), [&](std::size_t lo, std::size_t hi) {
            if (a->requires_grad)
                for (std::size_t i = lo; i < hi; ++i) a->grad.data[i] += out.grad.data[i];
            if (b->requires_grad)
                for (std::size_t i = lo; i < hi; ++i) b->grad.data[i] -= out.grad.data[i];
        });
    });
}

template <typename T>
Var<T> mul(Graph<T>& g, Var<T> a, Var<T> b) {
    detail::check_same_dims(a, b, "mul");
    Tensor4<T> y = Tensor4<T>::uninit(a->value.n, a->value.c, a->value.h, a->value.w);
    const T* pa = a->value.data.data();
    const T* pb = b->value.data.data();
    parallel_chunks(y.numel(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) y.data[i] = pa[i] * pb[i];
    });
    return g.make(std::move(y), {a, b}, "mul", [a, b](Node<T>& out) {
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        parallel_chunks(out.grad.numel(), [&](std::size_t lo, std::size_t hi) {
            if (a->requires_grad)
                for (std::size_t i = lo; i < hi; ++i)
                    a->grad.data[i] += out.grad.data[i] * b->value.data[i];
            if (b->requires_grad)
                for (std::size_t i = lo; i < hi; ++i)
                    b->grad.data[i] += out.grad.data[i] * a->value.data[i];
        });
    });
}

template <typename T>
Var<T> scale(Graph<T>& g, Var<T> x, double factor) {
    Tensor4<T> y = Tensor4<T>::uninit(x->value.n, x->value.c, x->value.h, x->value.w);
    const T f = static_cast<T>(factor);
    const T* px = x->value.data.data();
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = f * px[i];
    return g.make(std::move(y), {x}, "scale", [x, f](Node<T>& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < out.grad.numel(); ++i)
            x->grad.data[i] += f * out.grad.data[i];
    });
}

// b has dims (1, c, 1, 1) and is broadcast over batch and space.
template <typename T>
Var<T> add_channel_bias(Graph<T>& g, Var<T> x, Var<T> b) {
    const Tensor4<T>& xv = x->value;
    const Tensor4<T>& bv = b->value;
    if (bv.n != 1 || bv.c != xv.c || bv.h != 1 || bv.w != 1)
        throw ConfigError("add_channel_bias: bias dims " + bv.dims_str() + " for input " +
                          xv.dims_str());
    Tensor4<T> y = Tensor4<T>::uninit(xv.n, xv.c, xv.h, xv.w);
    const int plane = xv.plane();
    for (int i = 0; i < xv.n; ++i)
        for (int ci = 0; ci < xv.c; ++ci) {
            const T* src = xv.item(i) + static_cast<std::size_t>(ci) * plane;
            T* p = y.item(i) + static_cast<std::size_t>(ci) * plane;
            const T bias = bv.data[ci];
            for (int j = 0; j < plane; ++j) p[j] = src[j] + bias;
        }
    return g.make(std::move(y), {x, b}, "add_channel_bias", [x, b](Node<T>& out) {
        const int plane = x->value.plane();
        if (x->requires_grad) {
            x->ensure_grad();
            parallel_chunks(out.grad.numel(), [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) x->grad.data[i] += out.grad.data[i];
            });
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int i = 0; i < x->value.n; ++i)
                for (int ci = 0; ci < x->value.c; ++ci) {
                    const T* p = out.grad.item(i) + static_cast<std::size_t>(ci) * plane;
                    T acc = T(0);
                    for (int j = 0; j < plane; ++j) acc += p[j];
                    b->grad.data[ci] += acc;
                }
        }
    });
}

// s has dims (1, c, 1, 1); per-channel learned scale.
template <typename T>
Var<T> channel_scale(Graph<T>& g, Var<T> x, Var<T> s) {
    const Tensor4<T>& xv = x->value;
    const Tensor4<T>& sv = s->value;
    if (sv.n != 1 || sv.c != xv.c || sv.h != 1 || sv.w != 1)
        throw ConfigError("channel_scale: scale dims " + sv.dims_str() + " for input " +
                          xv.dims_str());
    Tensor4<T> y = Tensor4<T>::uninit(xv.n, xv.c, xv.h, xv.w);
    const int plane = xv.plane();
    for (int i = 0; i < xv.n; ++i)
        for (int ci = 0; ci < xv.c; ++ci) {
            const T* src = xv.item(i) + static_cast<std::size_t>(ci) * plane;
            T* p = y.item(i) + static_cast<std::size_t>(ci) * plane;
            const T f = sv.data[ci];
            for (int j = 0; j < plane; ++j) p[j] = src[j] * f;
        }
    return g.make(std::move(y), {x, s}, "channel_scale", [x, s](Node<T>& out) {
        const int plane = x->value.plane();
        if (x->requires_grad) {
            x->ensure_grad();
            for (int i = 0; i < x->value.n; ++i)
                for (int ci = 0; ci < x->value.c; ++ci) {
                    const std::size_t off =
                        (static_cast<std::size_t>(i) * x->value.c + ci) * plane;
                    const T f = s->value.data[ci];
                    for (int j = 0; j < plane; ++j)
                        x->grad.data[off + j] += f * out.grad.data[off + j];
                }
        }
        if (s->requires_grad) {
            s->ensure_grad();
            for (int i = 0; i < x->value.n; ++i)
                for (int ci = 0; ci < x->value.c; ++ci) {
                    const std::size_t off =
                        (static_cast<std::size_t>(i) * x->value.c + ci) * plane;
                    T acc = T(0);
                    for (int j = 0; j < plane; ++j)
                        acc += x->value.data[off + j] * out.grad.data[off + j];
                    s->grad.data[ci] += acc;
                }
        }
    });
}

// ---------------------------------------------------------------------------
// Activations

enum class Activation { kRelu, kLeakyRelu, kSigmoid };

inline constexpr double kLeakySlope = 0.2;

template <typename T>
Var<T> activation(Graph<T>& g, Var<T> x, Activation kind) {
    Tensor4<T> y = Tensor4<T>::uninit(x->value.n, x->value.c, x->value.h, x->value.w);
    const T* px = x->value.data.data();
    parallel_chunks(y.numel(), [&](std::size_t lo, std::size_t hi) {
        switch (kind) {
            case Activation::kRelu:
                for (std::size_t i = lo; i < hi; ++i)
                    y.data[i] = px[i] > T(0) ? px[i] : T(0);
                break;
            case Activation::kLeakyRelu:
                for (std::size_t i = lo; i < hi; ++i)
                    y.data[i] = px[i] > T(0) ? px[i] : static_cast<T>(kLeakySlope) * px[i];
                break;
            case Activation::kSigmoid:
                for (std::size_t i = lo; i < hi; ++i)
                    y.data[i] = T(1) / (T(1) + std::exp(-px[i]));
                break;
        }
    });
    return g.make(std::move(y), {x}, "activation", [x, kind](Node<T>& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        parallel_chunks(out.grad.numel(), [&](std::size_t lo, std::size_t hi) {
            switch (kind) {
                case Activation::kRelu:
                    for (std::size_t i = lo; i < hi; ++i)
                        if (x->value.data[i] > T(0)) x->grad.data[i] += out.grad.data[i];
                    break;
                case Activation::kLeakyRelu:
                    for (std::size_t i = lo; i < hi; ++i)
                        x->grad.data[i] +=
                            out.grad.data[i] *
                            (x->value.data[i] > T(0) ? T(1) : static_cast<T>(kLeakySlope));
                    break;
                case Activation::kSigmoid:
                    for (std::size_t i = lo; i < hi; ++i) {
                        const T s = out.value.data[i];
                        x->grad.data[i] += out.grad.data[i] * s * (T(1) - s);
                    }
                    break;
            }
        });
    });
}

template <typename T>
Var<T> relu(Graph<T>& g, Var<T> x) {
    return activation(g, x, Activation::kRelu);
}

template <typename T>
Var<T> leaky_relu(Graph<T>& g, Var<T> x) {
    return activation(g, x, Activation::kLeakyRelu);
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename T>
Var<T> concat_channels(Graph<T>& g, Var<T> a, Var<T> b) {
    const Tensor4<T>& av = a->value;
    const Tensor4<T>& bv = b->value;
    if (av.n != bv.n || av.h != bv.h || av.w != bv.w)
        throw ConfigError("concat_channels: dims " + av.dims_str() + " vs " + bv.dims_str());
    Tensor4<T> y = Tensor4<T>::uninit(av.n, av.c + bv.c, av.h, av.w);
    const std::size_t pa = static_cast<std::size_t>(av.c) * av.plane();
    const std::size_t pb = static_cast<std::size_t>(bv.c) * bv.plane();
    parallel_for(0, av.n, [&](int i) {
        std::memcpy(y.item(i), av.item(i), pa * sizeof(T));
        std::memcpy(y.item(i) + pa, bv.item(i), pb * sizeof(T));
    });
    return g.make(std::move(y), {a, b}, "concat_channels", [a, b, pa, pb](Node<T>& out) {
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        parallel_for(0, a->value.n, [&](int i) {
            const T* src = out.grad.item(i);
            if (a->requires_grad) {
                T* dst = a->grad.item(i);
                for (std::size_t j = 0; j < pa; ++j) dst[j] += src[j];
            }
            if (b->requires_grad) {
                T* dst = b->grad.item(i);
                for (std::size_t j = 0; j < pb; ++j) dst[j] += src[pa + j];
            }
        });
    });
}

template <typename T>
Var<T> upsample_nearest2x(Graph<T>& g, Var<T> x) {
    const Tensor4<T>& xv = x->value;
    Tensor4<T> y = Tensor4<T>::uninit(xv.n, xv.c, xv.h * 2, xv.w * 2);
    for (int i = 0; i < xv.n; ++i)
        for (int ci = 0; ci < xv.c; ++ci)
            for (int yy = 0; yy < xv.h; ++yy)
                for (int xx = 0; xx < xv.w; ++xx) {
                    const T v = xv.at(i, ci, yy, xx);
                    y.at(i, ci, 2 * yy, 2 * xx) = v;
                    y.at(i, ci, 2 * yy, 2 * xx + 1) = v;
                    y.at(i, ci, 2 * yy + 1, 2 * xx) = v;
                    y.at(i, ci, 2 * yy + 1, 2 * xx + 1) = v;
                }
    return g.make(std::move(y), {x}, "upsample_nearest2x", [x](Node<T>& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const Tensor4<T>& xv = x->value;
        for (int i = 0; i < xv.n; ++i)
            for (int ci = 0; ci < xv.c; ++ci)
                for (int yy = 0; yy < xv.h; ++yy)
                    for (int xx = 0; xx < xv.w; ++xx)
                        x->grad.at(i, ci, yy, xx) +=
                            out.grad.at(i, ci, 2 * yy, 2 * xx) +
                            out.grad.at(i, ci, 2 * yy, 2 * xx + 1) +
                            out.grad.at(i, ci, 2 * yy + 1, 2 * xx) +
                            out.grad.at(i, ci, 2 * yy + 1, 2 * xx + 1);
    });
}

template <typename T>
Var<T> avg_pool2x2(Graph<T>& g, Var<T> x) {
    const Tensor4<T>& xv = x->value;
    if (xv.h % 2 != 0 || xv.w % 2 != 0)
        throw ConfigError("avg_pool2x2: spatial dims must be even, got " + xv.dims_str());
    Tensor4<T> y = Tensor4<T>::uninit(xv.n, xv.c, xv.h / 2, xv.w / 2);
    for (int i = 0; i < xv.n; ++i)
        for (int ci = 0; ci < xv.c; ++ci)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx)
                    y.at(i, ci, yy, xx) =
                        (xv.at(i, ci, 2 * yy, 2 * xx) + xv.at(i, ci, 2 * yy, 2 * xx + 1) +
                         xv.at(i, ci, 2 * yy + 1, 2 * xx) +
                         xv.at(i, ci, 2 * yy + 1, 2 * xx + 1)) *
                        T(0.25);
    return g.make(std::move(y), {x}, "avg_pool2x2", [x](Node<T>& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int i = 0; i < out.value.n; ++i)
            for (int ci = 0; ci < out.value.c; ++ci)
                for (int yy = 0; yy < out.value.h; ++yy)
                    for (int xx = 0; xx < out.value.w; ++xx) {
                        const T gv = out.grad.at(i, ci, yy, xx) * T(0.25);
                        x->grad.at(i, ci, 2 * yy, 2 * xx) += gv;
                        x->grad.at(i, ci, 2 * yy, 2 * xx + 1) += gv;
                        x->grad.at(i, ci, 2 * yy + 1, 2 * xx) += gv;
                        x->grad.at(i, ci, 2 * yy + 1, 2 * xx + 1) += gv;
                    }
    });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum_all(Graph<T>& g, Var<T> x) {
    T acc = T(0);
    for (const T v : x->value.data) acc += v;
    return g.make(Tensor4<T>::scalar(acc), {x}, "sum_all", [x](Node<T>& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const T gv = out.grad.data[0];
        for (auto& v : x->grad.data) v += gv;
    });
}

template <typename T>
Var<T> mean_all(Graph<T>& g, Var<T> x) {
    T acc = T(0);
    for (const T v : x->value.data) acc += v;
    const T inv = T(1) / static_cast<T>(x->value.numel());
    return g.make(Tensor4<T>::scalar(acc * inv), {x}, "mean_all", [x, inv](Node<T>& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const T gv = out.grad.data[0] * inv;
        for (auto& v : x->grad.data) v += gv;
    });
}

// Sum of absolute values; the subgradient at 0 is 0.
template <typename T>
Var<T> abs_sum(Graph<T>& g, Var<T> x) {
    T acc = T(0);
    for (const T v : x->value.data) acc += v < T(0) ? -v : v;
    return g.make(Tensor4<T>::scalar(acc), {x}, "abs_sum", [x](Node<T>& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const T gv = out.grad.data[0];
        for (std::size_t i = 0; i < x->value.numel(); ++i) {
            const T v = x->value.data[i];
            if (v > T(0))
                x->grad.data[i] += gv;
            else if (v < T(0))
                x->grad.data[i] -= gv;
        }
    });
}

// Channel auto-correlation: flattens each item to (c, h*w) and returns
// F * F^T per item as a (n, 1, c, c) tensor.
template <typename T>
Var<T> gram(Graph<T>& g, Var<T> x) {
    const Tensor4<T>& xv = x->value;
    const int c = xv.c;
    const int hw = xv.plane();
    Tensor4<T> y = Tensor4<T>::uninit(xv.n, 1, c, c);
    for (int i = 0; i < xv.n; ++i)
        blas::gemm(false, true, c, c, hw, T(1), xv.item(i), hw, xv.item(i), hw, T(0), y.item(i),
                   c);
    return g.make(std::move(y), {x}, "gram", [x, c, hw](Node<T>& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        uvector<T> sym(static_cast<std::size_t>(c) * c);
        for (int i = 0; i < x->value.n; ++i) {
            const T* dg = out.grad.item(i);
            for (int r = 0; r < c; ++r)
                for (int q = 0; q < c; ++q)
                    sym[static_cast<std::size_t>(r) * c + q] =
                        dg[static_cast<std::size_t>(r) * c + q] +
                        dg[static_cast<std::size_t>(q) * c + r];
            blas::gemm(false, false, c, hw, c, T(1), sym.data(), c, x->value.item(i), hw, T(1),
                       x->grad.item(i), hw);
        }
    });
}

// Total-variation style penalty restricted to a region: sums |x[i][j+1]
// - x[i][j]| and |x[i+1][j] - x[i][j]| over all channels for pixel
// pairs whose BOTH endpoints lie inside the region. `region` is one
// byte per (item, pixel), nonzero meaning inside.
template <typename T>
Var<T> region_pair_abs_sum(Graph<T>& g, Var<T> x, std::vector<std::uint8_t> region) {
    const Tensor4<T>& xv = x->value;
    if (region.size() != static_cast<std::size_t>(xv.n) * xv.h * xv.w)
        throw ConfigError("region_pair_abs_sum: region size mismatch");
    T acc = T(0);
    const auto inside = [&](int i, int y, int xq) {
        return region[(static_cast<std::size_t>(i) * xv.h + y) * xv.w + xq] != 0;
    };
    for (int i = 0; i < xv.n; ++i)
        for (int ci = 0; ci < xv.c; ++ci)
            for (int y = 0; y < xv.h; ++y)
                for (int xx = 0; xx < xv.w; ++xx) {
                    if (!inside(i, y, xx)) continue;
                    if (xx + 1 < xv.w && inside(i, y, xx + 1)) {
                        const T d = xv.at(i, ci, y, xx + 1) - xv.at(i, ci, y, xx);
                        acc += d < T(0) ? -d : d;
                    }
                    if (y + 1 < xv.h && inside(i, y + 1, xx)) {
                        const T d = xv.at(i, ci, y + 1, xx) - xv.at(i, ci, y, xx);
                        acc += d < T(0) ? -d : d;
                    }
                }
    return g.make(Tensor4<T>::scalar(acc), {x}, "region_pair_abs_sum",
                  [x, region = std::move(region)](Node<T>& out) {
                      if (!x->requires_grad) return;
                      x->ensure_grad();
                      const Tensor4<T>& xv = x->value;
                      const T gv = out.grad.data[0];
                      const auto inside = [&](int i, int y, int xq) {
                          return region[(static_cast<std::size_t>(i) * xv.h + y) * xv.w + xq] !=
                                 0;
                      };
                      for (int i = 0; i < xv.n; ++i)
                          for (int ci = 0; ci < xv.c; ++ci)
                              for (int y = 0; y < xv.h; ++y)
                                  for (int xx = 0; xx < xv.w; ++xx) {
                                      if (!inside(i, y, xx)) continue;
                                      if (xx + 1 < xv.w && inside(i, y, xx + 1)) {
                                          const T d = xv.at(i, ci, y, xx + 1) -
                                                      xv.at(i, ci, y, xx);
                                          const T s = d > T(0) ? gv : (d < T(0) ? -gv : T(0));
                                          x->grad.at(i, ci, y, xx + 1) += s;
                                          x->grad.at(i, ci, y, xx) -= s;
                                      }
                                      if (y + 1 < xv.h && inside(i, y + 1, xx)) {
                                          const T d = xv.at(i, ci, y + 1, xx) -
                                                      xv.at(i, ci, y, xx);
                                          const T s = d > T(0) ? gv : (d < T(0) ? -gv : T(0));
                                          x->grad.at(i, ci, y + 1, xx) += s;
                                          x->grad.at(i, ci, y, xx) -= s;
                                      }
                                  }
                  });
}

}  // namespace madf
