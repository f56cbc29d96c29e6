#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

#include "madf/common.hpp"

namespace madf {

// Allocator whose default construction is a no-op for trivial types,
// so vector::resize does not memset buffers that are about to be fully
// overwritten.
template <typename T>
struct DefaultInitAllocator : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = DefaultInitAllocator<U>;
    };
    template <typename U>
    void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(p)) U;
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

// Scratch buffer type for op internals.
template <typename T>
using uvector = std::vector<T, DefaultInitAllocator<T>>;

// Dense rank-4 array in (n, c, h, w) row-major order, the carrier for
// images, masks, feature maps and kernel fields alike.
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    uvector<T> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw ConfigError("Tensor4: negative dimension");
        data.assign(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0));
    }

    // Storage whose every element the caller promises to overwrite.
    static Tensor4 uninit(int n, int c, int h, int w) {
        Tensor4 t;
        t.n = n;
        t.c = c;
        t.h = h;
        t.w = w;
        t.data.resize(static_cast<std::size_t>(n) * c * h * w);
        return t;
    }

    static Tensor4 zeros(int n, int c, int h, int w) { return Tensor4(n, c, h, w); }

    static Tensor4 zeros_like(const Tensor4& other) {
        return Tensor4(other.n, other.c, other.h, other.w);
    }

    static Tensor4 full(int n, int c, int h, int w, T v) {
        Tensor4 t(n, c, h, w);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor4 scalar(T v) {
        Tensor4 t(1, 1, 1, 1);
        t.data[0] = v;
        return t;
    }

    std::size_t numel() const { return data.size(); }
    int plane() const { return h * w; }

    T& at(int ni, int ci, int y, int x) {
        return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
    }
    T at(int ni, int ci, int y, int x) const {
        return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
    }

    T* item(int ni) { return data.data() + static_cast<std::size_t>(ni) * c * h * w; }
    const T* item(int ni) const { return data.data() + static_cast<std::size_t>(ni) * c * h * w; }

    bool same_dims(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string dims_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
               "," + std::to_string(w) + ")";
    }

    void fill_normal(Rng& rng, T stddev) {
        for (auto& v : data) v = static_cast<T>(rng.normal()) * stddev;
    }

    void fill_uniform(Rng& rng, T lo, T hi) {
        for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
    }

    bool all_finite() const {
        for (const T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <typename T>
void require_finite(const Tensor4<T>& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite values");
}

template <typename T, typename U>
Tensor4<T> cast_tensor(const Tensor4<U>& src) {
    Tensor4<T> out(src.n, src.c, src.h, src.w);
    for (std::size_t i = 0; i < src.data.size(); ++i) out.data[i] = static_cast<T>(src.data[i]);
    return out;
}

}  // namespace madf
