#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <type_traits>
#include <vector>

#include "errors.hpp"

namespace crfbp::series {

using cplx = std::complex<double>;

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};

// one variable, d coordinates, N coefficients each; storage c[k*N + n]
template <class T>
struct Taylor1 {
    int dim = 0;
    int N = 0;
    std::vector<T> c;

    Taylor1() = default;
    Taylor1(int d, int n) : dim(d), N(n), c(static_cast<size_t>(d) * n, T(0)) {}

    T& operator()(int k, int n) { return c[static_cast<size_t>(k) * N + n]; }
    const T& operator()(int k, int n) const { return c[static_cast<size_t>(k) * N + n]; }
    T* coord(int k) { return c.data() + static_cast<size_t>(k) * N; }
    const T* coord(int k) const { return c.data() + static_cast<size_t>(k) * N; }

    T eval(int k, T s) const {
        const T* a = coord(k);
        T acc(0);
        for (int n = N - 1; n >= 0; --n) acc = acc * s + a[n];
        return acc;
    }
    std::vector<T> eval(T s) const {
        std::vector<T> out(dim);
        for (int k = 0; k < dim; ++k) out[k] = eval(k, s);
        return out;
    }
    T eval_ds(int k, T s) const {
        const T* a = coord(k);
        T acc(0);
        for (int n = N - 1; n >= 1; --n) acc = acc * s + T(double(n)) * a[n];
        return acc;
    }
    std::vector<T> eval_ds(T s) const {
        std::vector<T> out(dim);
        for (int k = 0; k < dim; ++k) out[k] = eval_ds(k, s);
        return out;
    }
};

// two variables on a dense M x N grid; first index m pairs with the first
// argument of eval. storage c[(k*M + m)*N + n]
template <class T>
struct Taylor2 {
    int dim = 0;
    int M = 0;
    int N = 0;
    bool conj_symmetric = false;
    std::vector<T> c;

    Taylor2() = default;
    Taylor2(int d, int m, int n) : dim(d), M(m), N(n), c(static_cast<size_t>(d) * m * n, T(0)) {}

    size_t block() const { return static_cast<size_t>(M) * N; }
    T& operator()(int k, int m, int n) { return c[(static_cast<size_t>(k) * M + m) * N + n]; }
    const T& operator()(int k, int m, int n) const {
        return c[(static_cast<size_t>(k) * M + m) * N + n];
    }
    T* coord(int k) { return c.data() + k * block(); }
    const T* coord(int k) const { return c.data() + k * block(); }

    T eval(int k, T u, T v) const {
        const T* a = coord(k);
        T acc(0);
        for (int m = M - 1; m >= 0; --m) {
            T row(0);
            for (int n = N - 1; n >= 0; --n) row = row * v + a[m * N + n];
            acc = acc * u + row;
        }
        return acc;
    }
    std::vector<T> eval(T u, T v) const {
        std::vector<T> out(dim);
        for (int k = 0; k < dim; ++k) out[k] = eval(k, u, v);
        return out;
    }
    T eval_du(int k, T u, T v) const {
        const T* a = coord(k);
        T acc(0);
        for (int m = M - 1; m >= 1; --m) {
            T row(0);
            for (int n = N - 1; n >= 0; --n) row = row * v + a[m * N + n];
            acc = acc * u + T(double(m)) * row;
        }
        return acc;
    }
    T eval_dv(int k, T u, T v) const {
        const T* a = coord(k);
        T acc(0);
        for (int m = M - 1; m >= 0; --m) {
            T row(0);
            for (int n = N - 1; n >= 1; --n) row = row * v + T(double(n)) * a[m * N + n];
            acc = acc * u + row;
        }
        return acc;
    }
};

template <class T>
double abs_val(const T& x) {
    return std::abs(x);
}

template <class T>
bool all_finite(const std::vector<T>& v) {
    for (const auto& x : v) {
        if constexpr (is_complex<T>::value) {
            if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
        } else {
            if (!std::isfinite(x)) return false;
        }
    }
    return true;
}

// ---- raw grid kernels shared with the composition engines ----

// (a*b)_{m,n} over grids of identical shape (rows x cols)
template <class T>
inline T conv_at(const T* a, const T* b, int cols, int m, int n) {
    T s(0);
    for (int i = 0; i <= m; ++i) {
        const T* ar = a + i * cols;
        const T* br = b + (m - i) * cols + n;
        for (int j = 0; j <= n; ++j) s += ar[j] * br[-j];
    }
    return s;
}

// q = p^alpha at index (m,n); needs q at every lower index and p up to (m,n)
template <class T>
inline T power_at(const T* p, const T* q, int cols, int m, int n, double alpha) {
    if (m == 0 && n == 0) return std::pow(p[0], alpha);
    T s(0);
    for (int i = 0; i <= m; ++i) {
        for (int j = 0; j <= n; ++j) {
            if ((i == 0 && j == 0) || (i == m && j == n)) continue;
            const int r = (m - i) * cols + (n - j);
            const int l = i * cols + j;
            s += double(i + j) * (alpha * q[r] * p[l] - p[r] * q[l]);
        }
    }
    const T p0 = p[0];
    const T lead = alpha * (q[0] / p0) * p[m * cols + n];
    return lead + s / (double(m + n) * p0);
}

// ---- algebra ----

template <class T>
Taylor2<T> cauchy_product(const Taylor2<T>& P, const Taylor2<T>& Q) {
    const bool bcast = P.dim == 1 || Q.dim == 1;
    if (!bcast && P.dim != Q.dim) throw DimensionError("cauchy_product: incompatible dimensions");
    const int d = std::max(P.dim, Q.dim);
    const int M = std::max(P.M, Q.M), N = std::max(P.N, Q.N);
    Taylor2<T> out(d, M, N);
    // pad to the ambient grid, then convolve
    auto padded = [&](const Taylor2<T>& A, int k) {
        std::vector<T> g(static_cast<size_t>(M) * N, T(0));
        for (int m = 0; m < A.M; ++m)
            for (int n = 0; n < A.N; ++n) g[m * N + n] = A(k, m, n);
        return g;
    };
    for (int k = 0; k < d; ++k) {
        auto a = padded(P, P.dim == 1 ? 0 : k);
        auto b = padded(Q, Q.dim == 1 ? 0 : k);
        T* o = out.coord(k);
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < N; ++n) o[m * N + n] = conv_at(a.data(), b.data(), N, m, n);
    }
    return out;
}

template <class T>
Taylor1<T> cauchy_product(const Taylor1<T>& P, const Taylor1<T>& Q) {
    const bool bcast = P.dim == 1 || Q.dim == 1;
    if (!bcast && P.dim != Q.dim) throw DimensionError("cauchy_product: incompatible dimensions");
    const int d = std::max(P.dim, Q.dim), N = std::max(P.N, Q.N);
    Taylor1<T> out(d, N);
    for (int k = 0; k < d; ++k) {
        const int kp = P.dim == 1 ? 0 : k, kq = Q.dim == 1 ? 0 : k;
        for (int n = 0; n < N; ++n) {
            T s(0);
            for (int j = 0; j <= n; ++j)
                if (j < P.N && n - j < Q.N) s += P(kp, j) * Q(kq, n - j);
            out(k, n) = s;
        }
    }
    return out;
}

inline constexpr double kLeadingThreshold = 1e-12;

template <class T>
Taylor2<T> fractional_power(const Taylor2<T>& P, double alpha,
                            double threshold = kLeadingThreshold) {
    Taylor2<T> Q(P.dim, P.M, P.N);
    for (int k = 0; k < P.dim; ++k) {
        const T* p = P.coord(k);
        if (std::abs(p[0]) < threshold)
            throw SingularLeadingCoefficient("fractional_power: constant term too close to zero");
        T* q = Q.coord(k);
        // total-order sweep keeps every dependency available
        for (int ord = 0; ord <= P.M + P.N - 2; ++ord)
            for (int m = std::max(0, ord - P.N + 1); m <= std::min(ord, P.M - 1); ++m)
                q[m * P.N + (ord - m)] = power_at(p, q, P.N, m, ord - m, alpha);
    }
    return Q;
}

template <class T>
Taylor2<T> radial_gradient(const Taylor2<T>& P) {
    Taylor2<T> Q = P;
    for (int k = 0; k < P.dim; ++k)
        for (int m = 0; m < P.M; ++m)
            for (int n = 0; n < P.N; ++n) Q(k, m, n) *= double(m + n);
    return Q;
}

template <class T>
double ell1_norm(const Taylor1<T>& a) {
    double best = 0;
    for (int k = 0; k < a.dim; ++k) {
        double s = 0;
        for (int n = 0; n < a.N; ++n) s += std::abs(a(k, n));
        best = std::max(best, s);
    }
    return best;
}

template <class T>
double ell1_norm(const Taylor2<T>& a) {
    double best = 0;
    for (int k = 0; k < a.dim; ++k) {
        double s = 0;
        const T* p = a.coord(k);
        for (size_t i = 0; i < a.block(); ++i) s += std::abs(p[i]);
        best = std::max(best, s);
    }
    return best;
}

template <class T>
double tail_ratio(const Taylor1<T>& a, int cutoff) {
    if (cutoff < 1 || cutoff > a.N) throw DomainError("tail_ratio: cutoff outside [1, N]");
    // per-coordinate sums, combined by max as the l1^d norm
    double total = 0, tail = 0;
    for (int k = 0; k < a.dim; ++k) {
        double s = 0, t = 0;
        for (int n = 0; n < a.N; ++n) {
            const double v = std::abs(a(k, n));
            s += v;
            if (n >= cutoff) t += v;
        }
        total = std::max(total, s);
        tail = std::max(tail, t);
    }
    if (!(total > 0)) throw UndefinedRatio("tail_ratio: zero series");
    return tail / total;
}

// gamma_hat(s) = gamma(center + delta s)
template <class T>
Taylor1<T> recenter_rescale(const Taylor1<T>& g, double center, double delta) {
    if (!(delta > 0) || center - delta < -1 - 1e-15 || center + delta > 1 + 1e-15)
        throw DomainError("recenter_rescale: subinterval escapes [-1,1]");
    Taylor1<T> out = g;
    for (int k = 0; k < g.dim; ++k) {
        T* a = out.coord(k);
        // Taylor shift by repeated synthetic division
        for (int i = 0; i < g.N - 1; ++i)
            for (int j = g.N - 2; j >= i; --j) a[j] += center * a[j + 1];
        double f = 1;
        for (int n = 0; n < g.N; ++n, f *= delta) a[n] *= f;
    }
    return out;
}

template <class T>
Taylor2<T> add(const Taylor2<T>& a, const Taylor2<T>& b) {
    if (a.dim != b.dim || a.M != b.M || a.N != b.N) throw DimensionError("add: shape mismatch");
    Taylor2<T> out = a;
    for (size_t i = 0; i < out.c.size(); ++i) out.c[i] += b.c[i];
    return out;
}

template <class T>
Taylor2<T> scale(const Taylor2<T>& a, T s) {
    Taylor2<T> out = a;
    for (auto& x : out.c) x *= s;
    return out;
}

template <class T>
Taylor1<T> add(const Taylor1<T>& a, const Taylor1<T>& b) {
    if (a.dim != b.dim || a.N != b.N) throw DimensionError("add: shape mismatch");
    Taylor1<T> out = a;
    for (size_t i = 0; i < out.c.size(); ++i) out.c[i] += b.c[i];
    return out;
}

template <class T>
Taylor1<T> scale(const Taylor1<T>& a, T s) {
    Taylor1<T> out = a;
    for (auto& x : out.c) x *= s;
    return out;
}

template <class T>
std::vector<T> eval(const Taylor2<T>& P, T u, T v) {
    return P.eval(u, v);
}

template <class T>
std::vector<T> eval(const Taylor1<T>& P, T s) {
    return P.eval(s);
}

// max_k |a_{m,n} - conj(a_{n,m})|; square grids only
inline double conjugate_asymmetry(const Taylor2<cplx>& P) {
    double worst = 0;
    const int K = std::min(P.M, P.N);
    for (int k = 0; k < P.dim; ++k)
        for (int m = 0; m < K; ++m)
            for (int n = 0; n < K; ++n)
                worst = std::max(worst, std::abs(P(k, m, n) - std::conj(P(k, n, m))));
    return worst;
}

}  // namespace crfbp::series
