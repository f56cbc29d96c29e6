#pragma once

#include <vector>

#include "madf/ops.hpp"

namespace madf {

// ---------------------------------------------------------------------------
// Mask-aware dynamic filtering

// Per-window kernel tensor generated from mask features. Window (i, j)
// of the paired dynamic convolution is filtered by the d values at that
// window, laid out as (c_in, k, k, c_out). Stored window-major as a
// (n, 1, nh*nw, d) tensor so each window's kernel is contiguous.
template <typename T>
struct KernelField {
    Var<T> theta = nullptr;
    int nh = 0, nw = 0, d = 0;
    ConvSpec spec;

    T kernel_at(int item, int win_y, int win_x, int ci, int kh, int kw, int co) const {
        const std::size_t p = static_cast<std::size_t>(win_y) * nw + win_x;
        const std::size_t idx = ((static_cast<std::size_t>(ci) * spec.k + kh) * spec.k + kw) *
                                    spec.c_out +
                                co;
        return theta->value.item(item)[p * d + idx];
    }
};

template <typename T>
struct MadfLayerParams {
    Var<T> mask_conv_w = nullptr;   // (c_m_out, c_m_in, k, k), no bias
    Var<T> kernel_gen_w = nullptr;  // (d, c_m_out, 1, 1)
    Var<T> kernel_gen_b = nullptr;  // (1, d, 1, 1)
};

// 1x1 map from mask features to the kernel tensor; raw linear output.
template <typename T>
Var<T> kernel_gen(Graph<T>& g, Var<T> m, Var<T> w, Var<T> b) {
    const Tensor4<T>& mv = m->value;
    const Tensor4<T>& wv = w->value;
    if (wv.c != mv.c || wv.h != 1 || wv.w != 1)
        throw ConfigError("kernel_gen: weight dims " + wv.dims_str() + " for mask features " +
                          mv.dims_str());
    const int d = wv.n;
    if (b->value.n != 1 || b->value.c != d || b->value.h != 1 || b->value.w != 1)
        throw ConfigError("kernel_gen: bias dims " + b->value.dims_str());
    const int npix = mv.plane();

    Tensor4<T> theta = Tensor4<T>::uninit(mv.n, 1, npix, d);
    const T* bias = b->value.data.data();
    parallel_for(0, mv.n, [&](int i) {
        blas::gemm(true, true, npix, d, mv.c, T(1), mv.item(i), npix, wv.data.data(), mv.c,
                   T(0), theta.item(i), d);
        T* ti = theta.item(i);
        for (int p = 0; p < npix; ++p) {
            T* row = ti + static_cast<std::size_t>(p) * d;
            for (int dd = 0; dd < d; ++dd) row[dd] += bias[dd];
        }
    });

    return g.make(std::move(theta), {m, w, b}, "kernel_gen", [m, w, b, d, npix](Node<T>& out) {
        const Tensor4<T>& mv = m->value;
        if (m->requires_grad) {
            m->ensure_grad();
            parallel_for(0, mv.n, [&](int i) {
                blas::gemm(true, true, mv.c, npix, d, T(1), w->value.data.data(), mv.c,
                           out.grad.item(i), d, T(1), m->grad.item(i), npix);
            });
        }
        if (w->requires_grad || b->requires_grad) {
            if (w->requires_grad) w->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            const std::size_t wcount = w->value.numel();
            std::vector<uvector<T>> wpart(mv.n);
            std::vector<uvector<T>> bpart(mv.n);
            parallel_for(0, mv.n, [&](int i) {
                if (w->requires_grad) {
                    wpart[i].resize(wcount);
                    blas::gemm(true, true, d, mv.c, npix, T(1), out.grad.item(i), d,
                               mv.item(i), npix, T(0), wpart[i].data(), mv.c);
                }
                if (b->requires_grad) {
                    bpart[i].assign(d, T(0));
                    const T* gi = out.grad.item(i);
                    for (int p = 0; p < npix; ++p) {
                        const T* row = gi + static_cast<std::size_t>(p) * d;
                        for (int dd = 0; dd < d; ++dd) bpart[i][dd] += row[dd];
                    }
                }
            });
            for (int i = 0; i < mv.n; ++i) {
                if (w->requires_grad)
                    for (std::size_t j = 0; j < wcount; ++j) w->grad.data[j] += wpart[i][j];
                if (b->requires_grad)
                    for (int dd = 0; dd < d; ++dd) b->grad.data[dd] += bpart[i][dd];
            }
        }
    });
}

// Mask branch of one encoder level: strided conv + ReLU advances the
// mask features, then a 1x1 conv emits one kernel per window of the
// paired dynamic convolution. Mask features are replicate-padded so a
// spatially constant mask yields a spatially constant kernel field.
template <typename T>
struct MaskBranchOut {
    Var<T> m_next = nullptr;
    KernelField<T> theta;
};

template <typename T>
MaskBranchOut<T> mask_branch_step(Graph<T>& g, Var<T> m_prev, const MadfLayerParams<T>& params,
                                  const ConvSpec& image_spec) {
    const Tensor4<T>& wk = params.kernel_gen_w->value;
    const int d_expect = image_spec.c_in * image_spec.k * image_spec.k * image_spec.c_out;
    if (wk.n != d_expect)
        throw ConfigError("mask_branch_step: kernel_gen emits " + std::to_string(wk.n) +
                          " values per window, image spec needs " + std::to_string(d_expect));
    ConvSpec mask_spec = image_spec;
    mask_spec.c_in = m_prev->value.c;
    mask_spec.c_out = params.mask_conv_w->value.n;
    mask_spec.pad_mode = PadMode::kReplicate;

    Var<T> m_next = relu(g, conv2d(g, m_prev, params.mask_conv_w, mask_spec));
    Var<T> theta = kernel_gen(g, m_next, params.kernel_gen_w, params.kernel_gen_b);

    MaskBranchOut<T> out;
    out.m_next = m_next;
    out.theta = KernelField<T>{theta, m_next->value.h, m_next->value.w, d_expect, image_spec};
    return out;
}

// Dynamic convolution: window (i, j) of the input is filtered by the
// kernel at point (i, j) of the field. No bias. Gradients flow into
// both the image features and the kernel field.
template <typename T>
Var<T> madf_conv(Graph<T>& g, Var<T> e, const KernelField<T>& field) {
    const ConvSpec spec = field.spec;
    spec.validate();
    const Tensor4<T>& ev = e->value;
    if (ev.c != spec.c_in)
        throw ConfigError("madf_conv: input has " + std::to_string(ev.c) +
                          " channels, field expects " + std::to_string(spec.c_in));
    const int nh = spec.out_dim(ev.h);
    const int nw = spec.out_dim(ev.w);
    const Tensor4<T>& tv = field.theta->value;
    const int ck = spec.c_in * spec.k * spec.k;
    const int d = ck * spec.c_out;
    if (nh != field.nh || nw != field.nw || d != field.d || tv.h != nh * nw || tv.w != d ||
        tv.n != ev.n)
        throw ConfigError("madf_conv: kernel field " + tv.dims_str() +
                          " does not match input " + ev.dims_str());
    require_finite(ev, "madf_conv input");
    const int npix = nh * nw;
    const int c_out = spec.c_out;

    Var<T> theta = field.theta;
    Tensor4<T> y = Tensor4<T>::uninit(ev.n, c_out, nh, nw);
    parallel_for(0, ev.n, [&](int i) {
        uvector<T> rows(static_cast<std::size_t>(npix) * ck);
        detail::im2row(ev.item(i), ev.c, ev.h, ev.w, spec, nh, nw, rows.data());
        const T* th = theta->value.item(i);
        T* yi = y.item(i);
        uvector<T> acc(c_out);
        for (int p = 0; p < npix; ++p) {
            const T* patch = rows.data() + static_cast<std::size_t>(p) * ck;
            const T* kp = th + static_cast<std::size_t>(p) * d;
            std::fill(acc.begin(), acc.end(), T(0));
            for (int q = 0; q < ck; ++q) {
                const T v = patch[q];
                const T* krow = kp + static_cast<std::size_t>(q) * c_out;
                for (int co = 0; co < c_out; ++co) acc[co] += v * krow[co];
            }
            for (int co = 0; co < c_out; ++co) yi[static_cast<std::size_t>(co) * npix + p] =
                acc[co];
        }
    });

    return g.make(std::move(y), {e, theta}, "madf_conv",
                  [e, theta, spec, nh, nw, ck, d, c_out, npix](Node<T>& out) {
                      const Tensor4<T>& ev = e->value;
                      const bool need_e = e->requires_grad;
                      const bool need_t = theta->requires_grad;
                      if (need_e) e->ensure_grad();
                      if (need_t) theta->ensure_grad();
                      parallel_for(0, ev.n, [&](int i) {
                          uvector<T> rows(static_cast<std::size_t>(npix) * ck);
                          detail::im2row(ev.item(i), ev.c, ev.h, ev.w, spec, nh, nw,
                                         rows.data());
                          uvector<T> drows;
                          if (need_e) drows.resize(static_cast<std::size_t>(npix) * ck);
                          const T* th = theta->value.item(i);
                          T* dth = need_t ? theta->grad.item(i) : nullptr;
                          const T* go = out.grad.item(i);
                          uvector<T> dyv(c_out);
                          for (int p = 0; p < npix; ++p) {
                              for (int co = 0; co < c_out; ++co)
                                  dyv[co] = go[static_cast<std::size_t>(co) * npix + p];
                              const T* patch = rows.data() + static_cast<std::size_t>(p) * ck;
                              const T* kp = th + static_cast<std::size_t>(p) * d;
                              if (need_t) {
                                  T* dkp = dth + static_cast<std::size_t>(p) * d;
                                  for (int q = 0; q < ck; ++q) {
                                      const T v = patch[q];
                                      T* drow = dkp + static_cast<std::size_t>(q) * c_out;
                                      for (int co = 0; co < c_out; ++co)
                                          drow[co] += v * dyv[co];
                                  }
                              }
                              if (need_e) {
                                  T* dpatch = drows.data() + static_cast<std::size_t>(p) * ck;
                                  for (int q = 0; q < ck; ++q) {
                                      const T* krow = kp + static_cast<std::size_t>(q) * c_out;
                                      T accq = T(0);
                                      for (int co = 0; co < c_out; ++co)
                                          accq += krow[co] * dyv[co];
                                      dpatch[q] = accq;
                                  }
                              }
                          }
                          if (need_e)
                              detail::row2im_add(drows.data(), ev.c, ev.h, ev.w, spec, nh, nw,
                                                 e->grad.item(i));
                      });
                  });
}

// 1x1 channel expansion with ReLU, the map from e^l to u^l.
template <typename T>
Var<T> channel_lift(Graph<T>& g, Var<T> e, Var<T> w, Var<T> b) {
    ConvSpec spec{1, 1, 0, e->value.c, w->value.n};
    return relu(g, add_channel_bias(g, conv2d(g, e, w, spec), b));
}

// ---------------------------------------------------------------------------
// Normalization

// Running statistics for one batch-norm site. Normalization itself is
// affine-free; learned or guide-driven affines are layered on top.
template <typename T>
struct BnState {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T momentum = static_cast<T>(0.1);
    T eps = static_cast<T>(1e-5);

    explicit BnState(int channels = 0)
        : running_mean(channels, T(0)), running_var(channels, T(1)) {}

    int channels() const { return static_cast<int>(running_mean.size()); }
};

template <typename T>
Var<T> batch_norm(Graph<T>& g, Var<T> x, BnState<T>& state, bool training) {
    const Tensor4<T>& xv = x->value;
    if (state.channels() != xv.c)
        throw ConfigError("batch_norm: state has " + std::to_string(state.channels()) +
                          " channels, input " + xv.dims_str());
    const int plane = xv.plane();
    const std::size_t m = static_cast<std::size_t>(xv.n) * plane;
    if (training && m < 2)
        throw ConfigError("batch_norm: training mode needs n*h*w >= 2");

    std::vector<T> mean(xv.c), inv_std(xv.c);
    if (training) {
        parallel_for(0, xv.c, [&](int ci) {
            T acc = T(0);
            for (int i = 0; i < xv.n; ++i) {
                const T* p = xv.item(i) + static_cast<std::size_t>(ci) * plane;
                for (int j = 0; j < plane; ++j) acc += p[j];
            }
            const T mu = acc / static_cast<T>(m);
            T var = T(0);
            for (int i = 0; i < xv.n; ++i) {
                const T* p = xv.item(i) + static_cast<std::size_t>(ci) * plane;
                for (int j = 0; j < plane; ++j) {
                    const T dlt = p[j] - mu;
                    var += dlt * dlt;
                }
            }
            var /= static_cast<T>(m);
            mean[ci] = mu;
            inv_std[ci] = T(1) / std::sqrt(var + state.eps);
            state.running_mean[ci] =
                (T(1) - state.momentum) * state.running_mean[ci] + state.momentum * mu;
            state.running_var[ci] =
                (T(1) - state.momentum) * state.running_var[ci] + state.momentum * var;
        });
    } else {
        for (int ci = 0; ci < xv.c; ++ci) {
            mean[ci] = state.running_mean[ci];
            inv_std[ci] = T(1) / std::sqrt(state.running_var[ci] + state.eps);
        }
    }

    Tensor4<T> y = Tensor4<T>::uninit(xv.n, xv.c, xv.h, xv.w);
    parallel_for(0, xv.n * xv.c, [&](int t) {
        const int i = t / xv.c, ci = t % xv.c;
        const T* p = xv.item(i) + static_cast<std::size_t>(ci) * plane;
        T* q = y.item(i) + static_cast<std::size_t>(ci) * plane;
        const T mu = mean[ci], inv = inv_std[ci];
        for (int j = 0; j < plane; ++j) q[j] = (p[j] - mu) * inv;
    });

    return g.make(std::move(y), {x}, "batch_norm",
                  [x, mean = std::move(mean), inv_std = std::move(inv_std), training,
                   m](Node<T>& out) {
                      if (!x->requires_grad) return;
                      x->ensure_grad();
                      const Tensor4<T>& xv = x->value;
                      const int plane = xv.plane();
                      if (!training) {
                          for (int i = 0; i < xv.n; ++i)
                              for (int ci = 0; ci < xv.c; ++ci) {
                                  const std::size_t off =
                                      (static_cast<std::size_t>(i) * xv.c + ci) * plane;
                                  for (int j = 0; j < plane; ++j)
                                      x->grad.data[off + j] +=
                                          out.grad.data[off + j] * inv_std[ci];
                              }
                          return;
                      }
                      // dx = inv * (dy - mean(dy) - xhat * mean(dy * xhat))
                      parallel_for(0, xv.c, [&](int ci) {
                          const T mu = mean[ci], inv = inv_std[ci];
                          T sum_dy = T(0), sum_dy_xhat = T(0);
                          for (int i = 0; i < xv.n; ++i) {
                              const std::size_t off =
                                  (static_cast<std::size_t>(i) * xv.c + ci) * plane;
                              for (int j = 0; j < plane; ++j) {
                                  const T dy = out.grad.data[off + j];
                                  sum_dy += dy;
                                  sum_dy_xhat += dy * (xv.data[off + j] - mu) * inv;
                              }
                          }
                          const T mean_dy = sum_dy / static_cast<T>(m);
                          const T mean_dy_xhat = sum_dy_xhat / static_cast<T>(m);
                          for (int i = 0; i < xv.n; ++i) {
                              const std::size_t off =
                                  (static_cast<std::size_t>(i) * xv.c + ci) * plane;
                              for (int j = 0; j < plane; ++j) {
                                  const T xhat = (xv.data[off + j] - mu) * inv;
                                  x->grad.data[off + j] +=
                                      inv * (out.grad.data[off + j] - mean_dy -
                                             xhat * mean_dy_xhat);
                              }
                          }
                      });
                  });
}

// Guide-conditioned affine for point-wise normalization: the guide is
// projected to a latent space, then 3x3 heads emit per-point scale and
// bias tensors matching the normalized activation.
template <typename T>
struct PnParams {
    Var<T> proj_w = nullptr;   // (latent, c_guide, 3, 3)
    Var<T> proj_b = nullptr;   // (1, latent, 1, 1)
    Var<T> scale_w = nullptr;  // (c, latent, 3, 3)
    Var<T> scale_b = nullptr;  // (1, c, 1, 1)
    Var<T> bias_w = nullptr;   // (c, latent, 3, 3)
    Var<T> bias_b = nullptr;   // (1, c, 1, 1)
};

template <typename T>
Var<T> point_norm(Graph<T>& g, Var<T> x, Var<T> guide, const PnParams<T>& pn, BnState<T>& bn,
                  bool training) {
    if (guide->value.h != x->value.h || guide->value.w != x->value.w ||
        guide->value.n != x->value.n)
        throw ConfigError("point_norm: guide " + guide->value.dims_str() +
                          " does not match input " + x->value.dims_str());
    Var<T> normed = batch_norm(g, x, bn, training);
    Var<T> latent = relu(
        g, add_channel_bias(
               g, conv2d(g, guide, pn.proj_w, same_conv3(guide->value.c, pn.proj_w->value.n)),
               pn.proj_b));
    Var<T> alpha = add_channel_bias(
        g, conv2d(g, latent, pn.scale_w, same_conv3(latent->value.c, pn.scale_w->value.n)),
        pn.scale_b);
    Var<T> beta = add_channel_bias(
        g, conv2d(g, latent, pn.bias_w, same_conv3(latent->value.c, pn.bias_w->value.n)),
        pn.bias_b);
    return add(g, mul(g, alpha, normed), beta);
}

}  // namespace madf
