#pragma once

#include <cmath>
#include <cstdint>

#include "errors.hpp"
#include "tensor.hpp"

namespace ltew {

// Fixed-topology layer kernels with hand-written reverse passes. Backward
// functions write dx fresh and accumulate into dw/db (initializing them to
// zeros when empty) so batches can sum parameter gradients in place.

namespace detail {
template <typename T>
void check_conv_shapes(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.ndim() != 3) throw std::invalid_argument("conv3x3: input must be (C,H,W), got " + shape_string(x.shape()));
    if (w.ndim() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
        throw std::invalid_argument("conv3x3: weights must be (Cout,Cin,3,3), got " + shape_string(w.shape()));
    if (w.dim(1) != x.dim(0))
        throw std::invalid_argument("conv3x3: Cin mismatch, weights " + shape_string(w.shape()) +
                                    " vs input " + shape_string(x.shape()));
    if (b.ndim() != 1 || b.dim(0) != w.dim(0))
        throw std::invalid_argument("conv3x3: bias must be (Cout)");
}

template <typename T>
void ensure_grad(Tensor<T>& g, const Tensor<T>& like) {
    if (g.empty())
        g = Tensor<T>::zeros_like(like);
    else if (!g.same_shape(like))
        throw std::invalid_argument("gradient accumulator shape mismatch");
}
}  // namespace detail

// 3x3 cross-correlation, stride 1, zero padding 1: spatial size preserved.
// x: (Cin,H,W), w: (Cout,Cin,3,3), b: (Cout) -> (Cout,H,W).
template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    detail::check_conv_shapes(x, w, b);
    const int ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2), co_n = w.dim(0);
    Tensor<T> y({co_n, h, wd});
    for (int co = 0; co < co_n; ++co) {
        T* yrow0 = y.data() + static_cast<size_t>(co) * h * wd;
        const T bias = b[static_cast<size_t>(co)];
        for (size_t i = 0; i < static_cast<size_t>(h) * wd; ++i) yrow0[i] = bias;
        for (int ci = 0; ci < ci_n; ++ci) {
            const T* xp = x.data() + static_cast<size_t>(ci) * h * wd;
            const T* wp = w.data() + (static_cast<size_t>(co) * ci_n + static_cast<size_t>(ci)) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const T wk = wp[ky * 3 + kx];
                    if (wk == T{}) continue;
                    const int oy_lo = ky == 0 ? 1 : 0, oy_hi = ky == 2 ? h - 1 : h;
                    const int ox_lo = kx == 0 ? 1 : 0, ox_hi = kx == 2 ? wd - 1 : wd;
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const T* src = xp + static_cast<size_t>(oy + ky - 1) * wd + (kx - 1);
                        T* dst = yrow0 + static_cast<size_t>(oy) * wd;
                        for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] += wk * src[ox];
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
void conv3x3_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& up, Tensor<T>& dx,
                      Tensor<T>& dw, Tensor<T>& db) {
    const int ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2), co_n = w.dim(0);
    if (up.ndim() != 3 || up.dim(0) != co_n || up.dim(1) != h || up.dim(2) != wd)
        throw std::invalid_argument("conv3x3 backward: upstream shape mismatch");
    dx = Tensor<T>({ci_n, h, wd});
    detail::ensure_grad(dw, w);
    detail::ensure_grad(db, Tensor<T>({co_n}));
    for (int co = 0; co < co_n; ++co) {
        const T* u = up.data() + static_cast<size_t>(co) * h * wd;
        T acc = T{};
        for (size_t i = 0; i < static_cast<size_t>(h) * wd; ++i) acc += u[i];
        db[static_cast<size_t>(co)] += acc;
        for (int ci = 0; ci < ci_n; ++ci) {
            const T* xp = x.data() + static_cast<size_t>(ci) * h * wd;
            T* dxp = dx.data() + static_cast<size_t>(ci) * h * wd;
            const T* wp = w.data() + (static_cast<size_t>(co) * ci_n + static_cast<size_t>(ci)) * 9;
            T* dwp = dw.data() + (static_cast<size_t>(co) * ci_n + static_cast<size_t>(ci)) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const int oy_lo = ky == 0 ? 1 : 0, oy_hi = ky == 2 ? h - 1 : h;
                    const int ox_lo = kx == 0 ? 1 : 0, ox_hi = kx == 2 ? wd - 1 : wd;
                    const T wk = wp[ky * 3 + kx];
                    T wsum = T{};
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const T* src = xp + static_cast<size_t>(oy + ky - 1) * wd + (kx - 1);
                        T* dsrc = dxp + static_cast<size_t>(oy + ky - 1) * wd + (kx - 1);
                        const T* urow = u + static_cast<size_t>(oy) * wd;
                        for (int ox = ox_lo; ox < ox_hi; ++ox) {
                            wsum += urow[ox] * src[ox];
                            dsrc[ox] += wk * urow[ox];
                        }
                    }
                    dwp[ky * 3 + kx] += wsum;
                }
            }
        }
    }
}

// x: (rows, in), w: (out, in), b: (out) -> (rows, out).
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1)
        throw std::invalid_argument("linear: expected x(rows,in), w(out,in), b(out)");
    if (x.dim(1) != w.dim(1) || b.dim(0) != w.dim(0))
        throw std::invalid_argument("linear: shape mismatch x" + shape_string(x.shape()) + " w" +
                                    shape_string(w.shape()));
    const int rows = x.dim(0), in = x.dim(1), out = w.dim(0);
    Tensor<T> y({rows, out});
    for (int r = 0; r < rows; ++r) {
        const T* xr = x.data() + static_cast<size_t>(r) * in;
        T* yr = y.data() + static_cast<size_t>(r) * out;
        for (int o = 0; o < out; ++o) {
            const T* wr = w.data() + static_cast<size_t>(o) * in;
            T acc = b[static_cast<size_t>(o)];
            for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }
    return y;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& up, Tensor<T>& dx,
                     Tensor<T>& dw, Tensor<T>& db) {
    const int rows = x.dim(0), in = x.dim(1), out = w.dim(0);
    if (up.ndim() != 2 || up.dim(0) != rows || up.dim(1) != out)
        throw std::invalid_argument("linear backward: upstream shape mismatch");
    dx = Tensor<T>({rows, in});
    detail::ensure_grad(dw, w);
    detail::ensure_grad(db, Tensor<T>({out}));
    for (int r = 0; r < rows; ++r) {
        const T* xr = x.data() + static_cast<size_t>(r) * in;
        const T* ur = up.data() + static_cast<size_t>(r) * out;
        T* dxr = dx.data() + static_cast<size_t>(r) * in;
        for (int o = 0; o < out; ++o) {
            const T u = ur[o];
            if (u == T{}) continue;
            const T* wr = w.data() + static_cast<size_t>(o) * in;
            T* dwr = dw.data() + static_cast<size_t>(o) * in;
            db[static_cast<size_t>(o)] += u;
            for (int i = 0; i < in; ++i) {
                dxr[i] += u * wr[i];
                dwr[i] += u * xr[i];
            }
        }
    }
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (size_t i = 0; i < y.size(); ++i)
        if (y[i] < T{}) y[i] = T{};
    return y;
}

// relu'(0) = 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& up) {
    if (!x.same_shape(up)) throw std::invalid_argument("relu backward: shape mismatch");
    Tensor<T> dx = Tensor<T>::zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{} ? up[i] : T{};
    return dx;
}

inline constexpr double kPiD = 3.14159265358979323846;

template <typename T>
Tensor<T> sinpi_forward(const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) y[i] = static_cast<T>(std::sin(static_cast<T>(kPiD) * x[i]));
    return y;
}

template <typename T>
Tensor<T> cospi_forward(const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) y[i] = static_cast<T>(std::cos(static_cast<T>(kPiD) * x[i]));
    return y;
}

// d/dx sin(pi x) = pi cos(pi x); d/dx cos(pi x) = -pi sin(pi x).
template <typename T>
Tensor<T> sinpi_backward(const Tensor<T>& x, const Tensor<T>& up) {
    if (!x.same_shape(up)) throw std::invalid_argument("sinpi backward: shape mismatch");
    Tensor<T> dx = Tensor<T>::zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i)
        dx[i] = up[i] * static_cast<T>(kPiD) * static_cast<T>(std::cos(static_cast<T>(kPiD) * x[i]));
    return dx;
}

template <typename T>
Tensor<T> cospi_backward(const Tensor<T>& x, const Tensor<T>& up) {
    if (!x.same_shape(up)) throw std::invalid_argument("cospi backward: shape mismatch");
    Tensor<T> dx = Tensor<T>::zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i)
        dx[i] = -up[i] * static_cast<T>(kPiD) * static_cast<T>(std::sin(static_cast<T>(kPiD) * x[i]));
    return dx;
}

// Bias-corrected Adam. State tensors are lazily shaped on first use.
template <typename T>
struct AdamState {
    Tensor<T> m, v;
    int64_t step = 0;
};

template <typename T>
void adam_update(Tensor<T>& p, const Tensor<T>& g, AdamState<T>& st, double lr,
                 const std::string& name, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8) {
    if (!p.same_shape(g))
        throw std::invalid_argument("adam: gradient shape mismatch for '" + name + "'");
    if (st.m.empty()) st.m = Tensor<T>::zeros_like(p);
    if (st.v.empty()) st.v = Tensor<T>::zeros_like(p);
    if (!st.m.same_shape(p)) throw std::invalid_argument("adam: state shape mismatch for '" + name + "'");
    for (size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(static_cast<double>(g[i])))
            throw NumericError("adam: non-finite gradient in tensor '" + name + "'");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    for (size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = beta1 * static_cast<double>(st.m[i]) + (1.0 - beta1) * gi;
        const double vi = beta2 * static_cast<double>(st.v[i]) + (1.0 - beta2) * gi * gi;
        st.m[i] = static_cast<T>(mi);
        st.v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + eps));
    }
}

}  // namespace ltew
