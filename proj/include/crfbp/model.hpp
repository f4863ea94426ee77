#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "errors.hpp"

namespace crfbp {

using State = std::array<double, 4>;  // (x, xdot, y, ydot)
using Mat4 = Eigen::Matrix4d;

inline constexpr double kRMin = 1e-8;

struct MassParameters {
    double m1 = 1.0 / 3, m2 = 1.0 / 3, m3 = 1.0 / 3;

    static MassParameters equal() { return {1.0 / 3, 1.0 / 3, 1.0 / 3}; }

    // m2 is implied by normalization
    static MassParameters from_m1_m3(double m1, double m3) { return {m1, 1.0 - m1 - m3, m3}; }

    void validate() const {
        if (std::abs(m1 + m2 + m3 - 1.0) > 1e-15 * 4)
            throw ConfigurationError("masses must sum to 1");
        if (!(m3 > 0 && m3 <= m2 + 1e-15 && m2 <= m1 + 1e-15 && m1 < 1))
            throw ConfigurationError("masses must satisfy 0 < m3 <= m2 <= m1 < 1");
    }

    bool is_equal(double tol = 1e-14) const {
        return std::abs(m1 - m2) < tol && std::abs(m2 - m3) < tol;
    }

    std::string str() const {
        std::ostringstream os;
        os.precision(17);
        os << m1 << "," << m2 << "," << m3;
        return os.str();
    }
};

struct PrimaryConfig {
    MassParameters masses;
    std::array<double, 3> m{};
    std::array<double, 3> px{};
    std::array<double, 3> py{};
    double r_min = kRMin;
};

inline PrimaryConfig primary_positions(const MassParameters& mp) {
    mp.validate();
    const double m1 = mp.m1, m2 = mp.m2, m3 = mp.m3;
    const double K = m2 * (m3 - m2) + m1 * (m2 + 2 * m3);
    if (K == 0) throw DegenerateConfiguration("primary_positions: K = 0");
    const double s = std::sqrt(m2 * m2 + m2 * m3 + m3 * m3);
    const double aK = std::abs(K);
    const double root = std::sqrt(m2 * m2 * m2 / (s * s));
    PrimaryConfig cfg;
    cfg.masses = mp;
    cfg.m = {m1, m2, m3};
    cfg.px = {-aK * s / K, aK * ((m2 - m3) * m3 + m1 * (2 * m2 + m3)) / (2 * K * s), aK / (2 * s)};
    cfg.py = {0.0, -std::sqrt(3.0) * m3 / (2 * std::pow(m2, 1.5)) * root,
              std::sqrt(3.0) / (2 * std::sqrt(m2)) * root};
    return cfg;
}

inline double primary_distance(const PrimaryConfig& cfg, int j, double x, double y) {
    return std::hypot(x - cfg.px[j], y - cfg.py[j]);
}

inline void check_distance(const PrimaryConfig& cfg, double x, double y) {
    for (int j = 0; j < 3; ++j)
        if (primary_distance(cfg, j, x, y) < cfg.r_min)
            throw SingularityError("state within r_min of a primary");
}

inline double potential(double x, double y, const PrimaryConfig& cfg) {
    double om = 0.5 * (x * x + y * y);
    for (int j = 0; j < 3; ++j) om += cfg.m[j] / primary_distance(cfg, j, x, y);
    return om;
}

// (Omega_x, Omega_y)
inline std::array<double, 2> potential_gradient(double x, double y, const PrimaryConfig& cfg) {
    double gx = x, gy = y;
    for (int j = 0; j < 3; ++j) {
        const double dx = x - cfg.px[j], dy = y - cfg.py[j];
        const double r2 = dx * dx + dy * dy;
        const double w = cfg.m[j] / (r2 * std::sqrt(r2));
        gx -= w * dx;
        gy -= w * dy;
    }
    return {gx, gy};
}

// (Omega_xx, Omega_xy, Omega_yy)
inline std::array<double, 3> potential_hessian(double x, double y, const PrimaryConfig& cfg) {
    double hxx = 1, hxy = 0, hyy = 1;
    for (int j = 0; j < 3; ++j) {
        const double dx = x - cfg.px[j], dy = y - cfg.py[j];
        const double r2 = dx * dx + dy * dy;
        const double r3 = r2 * std::sqrt(r2);
        const double r5 = r3 * r2;
        hxx -= cfg.m[j] * (1 / r3 - 3 * dx * dx / r5);
        hyy -= cfg.m[j] * (1 / r3 - 3 * dy * dy / r5);
        hxy += 3 * cfg.m[j] * dx * dy / r5;
    }
    return {hxx, hxy, hyy};
}

inline State vector_field(const State& s, const PrimaryConfig& cfg) {
    check_distance(cfg, s[0], s[2]);
    const auto g = potential_gradient(s[0], s[2], cfg);
    return {s[1], 2 * s[3] + g[0], s[3], -2 * s[1] + g[1]};
}

inline Mat4 jacobian(const State& s, const PrimaryConfig& cfg) {
    check_distance(cfg, s[0], s[2]);
    const auto h = potential_hessian(s[0], s[2], cfg);
    Mat4 J;
    J << 0, 1, 0, 0,
         h[0], 0, h[1], 2,
         0, 0, 0, 1,
         h[1], -2, h[2], 0;
    return J;
}

inline double jacobi_integral(const State& s, const PrimaryConfig& cfg) {
    check_distance(cfg, s[0], s[2]);
    return -(s[1] * s[1] + s[3] * s[3]) + 2 * potential(s[0], s[2], cfg);
}

// rotation by 2pi/3 acting on (x,y) and (xdot,ydot) simultaneously;
// for equal masses it maps P1 -> P2 -> P3 -> P1
inline Mat4 symmetry_rotation(int power = 1) {
    const double th = 2 * std::numbers::pi / 3 * power;
    const double c = std::cos(th), s = std::sin(th);
    Mat4 R;
    R << c, 0, -s, 0,
         0, c, 0, -s,
         s, 0, c, 0,
         0, s, 0, c;
    return R;
}

inline State apply_matrix(const Mat4& A, const State& s) {
    Eigen::Vector4d v(s[0], s[1], s[2], s[3]);
    Eigen::Vector4d w = A * v;
    return {w[0], w[1], w[2], w[3]};
}

inline double speed(const State& s) { return std::hypot(s[1], s[3]); }

}  // namespace crfbp
