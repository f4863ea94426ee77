#pragma once

#include <array>
#include <vector>

#include "model.hpp"
#include "series.hpp"

namespace crfbp {

using series::Taylor2;
using series::Taylor1;

// Order-by-order evaluation of f∘Γ (and optionally the Hessian entries of
// the potential along Γ). Coefficient (m,n) of the output only depends on
// coefficients of Γ at indices <= (m,n), so callers may fill Γ and query the
// field in any order compatible with that partial order.
template <class T>
class FieldComposer {
public:
    FieldComposer(const PrimaryConfig& cfg, int M, int N, bool hessian = false)
        : cfg_(cfg), M_(M), N_(N), hess_(hessian), f(4, M, N) {
        const size_t sz = static_cast<size_t>(M) * N;
        for (int j = 0; j < 3; ++j) {
            dx_[j].assign(sz, T(0));
            dy_[j].assign(sz, T(0));
            xx_[j].assign(sz, T(0));
            yy_[j].assign(sz, T(0));
            u_[j].assign(sz, T(0));
            w_[j].assign(sz, T(0));
            gx_[j].assign(sz, T(0));
            gy_[j].assign(sz, T(0));
            if (hess_) {
                xy_[j].assign(sz, T(0));
                v_[j].assign(sz, T(0));
                axx_[j].assign(sz, T(0));
                axy_[j].assign(sz, T(0));
                ayy_[j].assign(sz, T(0));
            }
        }
        if (hess_) {
            for (auto& h : h_) h.assign(sz, T(0));
        }
    }

    int rows() const { return M_; }
    int cols() const { return N_; }

    void compute_at(const Taylor2<T>& g, int m, int n) {
        const int N = N_;
        const int i = m * N + n;
        const bool origin = (m == 0 && n == 0);
        const T* x = g.coord(0);
        const T* xd = g.coord(1);
        const T* y = g.coord(2);
        const T* yd = g.coord(3);
        T sx(0), sy(0);
        for (int j = 0; j < 3; ++j) {
            dx_[j][i] = origin ? x[0] - cfg_.px[j] : x[i];
            dy_[j][i] = origin ? y[0] - cfg_.py[j] : y[i];
            xx_[j][i] = series::conv_at(dx_[j].data(), dx_[j].data(), N, m, n);
            yy_[j][i] = series::conv_at(dy_[j].data(), dy_[j].data(), N, m, n);
            u_[j][i] = xx_[j][i] + yy_[j][i];
            if (origin && std::abs(u_[j][0]) < cfg_.r_min * cfg_.r_min)
                throw SingularityError("series constant term within r_min of a primary");
            w_[j][i] = series::power_at(u_[j].data(), w_[j].data(), N, m, n, -1.5);
            gx_[j][i] = series::conv_at(dx_[j].data(), w_[j].data(), N, m, n);
            gy_[j][i] = series::conv_at(dy_[j].data(), w_[j].data(), N, m, n);
            sx += cfg_.m[j] * gx_[j][i];
            sy += cfg_.m[j] * gy_[j][i];
        }
        f(0, m, n) = xd[i];
        f(1, m, n) = 2.0 * yd[i] + x[i] - sx;
        f(2, m, n) = yd[i];
        f(3, m, n) = -2.0 * xd[i] + y[i] - sy;

        if (!hess_) return;
        T hxx = origin ? T(1) : T(0), hyy = hxx, hxy(0);
        for (int j = 0; j < 3; ++j) {
            xy_[j][i] = series::conv_at(dx_[j].data(), dy_[j].data(), N, m, n);
            v_[j][i] = series::power_at(u_[j].data(), v_[j].data(), N, m, n, -2.5);
            axx_[j][i] = series::conv_at(xx_[j].data(), v_[j].data(), N, m, n);
            axy_[j][i] = series::conv_at(xy_[j].data(), v_[j].data(), N, m, n);
            ayy_[j][i] = series::conv_at(yy_[j].data(), v_[j].data(), N, m, n);
            hxx -= cfg_.m[j] * (w_[j][i] - 3.0 * axx_[j][i]);
            hyy -= cfg_.m[j] * (w_[j][i] - 3.0 * ayy_[j][i]);
            hxy += 3.0 * cfg_.m[j] * axy_[j][i];
        }
        h_[0][i] = hxx;
        h_[1][i] = hxy;
        h_[2][i] = hyy;
    }

    // all indices with m + n <= max_order, by increasing total order
    void compute_all(const Taylor2<T>& g, int max_order = -1) {
        if (max_order < 0) max_order = M_ + N_ - 2;
        for (int ord = 0; ord <= max_order; ++ord)
            for (int m = std::max(0, ord - N_ + 1); m <= std::min(ord, M_ - 1); ++m)
                compute_at(g, m, ord - m);
    }

    // Hessian entries (Omega_xx, Omega_xy, Omega_yy) as grids
    const std::vector<T>& hessian(int e) const { return h_[e]; }

    Taylor2<T> jacobian_series() const {
        Taylor2<T> J(16, M_, N_);
        auto put = [&](int r, int c, const std::vector<T>& src) {
            std::copy(src.begin(), src.end(), J.coord(4 * r + c));
        };
        auto put_const = [&](int r, int c, T val) { J.coord(4 * r + c)[0] = val; };
        put_const(0, 1, T(1));
        put(1, 0, h_[0]);
        put(1, 2, h_[1]);
        put_const(1, 3, T(2));
        put_const(2, 3, T(1));
        put(3, 0, h_[1]);
        put_const(3, 1, T(-2));
        put(3, 2, h_[2]);
        return J;
    }

private:
    PrimaryConfig cfg_;
    int M_, N_;
    bool hess_;
    std::array<std::vector<T>, 3> dx_, dy_, xx_, yy_, u_, w_, gx_, gy_;
    std::array<std::vector<T>, 3> xy_, v_, axx_, axy_, ayy_;
    std::array<std::vector<T>, 3> h_;

public:
    Taylor2<T> f;
};

template <class T>
Taylor2<T> vector_field_series(const Taylor2<T>& g, const PrimaryConfig& cfg) {
    if (g.dim != 4) throw DimensionError("vector_field_series: state series must have dimension 4");
    FieldComposer<T> fc(cfg, g.M, g.N);
    fc.compute_all(g);
    return fc.f;
}

// 16 coordinates: row-major entries of Df along g
template <class T>
Taylor2<T> jacobian_series(const Taylor2<T>& g, const PrimaryConfig& cfg) {
    if (g.dim != 4) throw DimensionError("jacobian_series: state series must have dimension 4");
    FieldComposer<T> fc(cfg, g.M, g.N, true);
    fc.compute_all(g);
    return fc.jacobian_series();
}

}  // namespace crfbp
