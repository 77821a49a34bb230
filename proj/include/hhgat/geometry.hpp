#pragma once

// Poincare-ball operations with curvature -c and their reverse-mode gradients.
//
// Every kernel comes in two flavors: a forward function on raw spans, and a
// `*_vjp` function that, given the upstream gradient of the output, accumulates
// the gradients with respect to every input (including c). The autodiff tape
// calls the VJPs directly; the BallPoint/TangentVector API on top is the typed
// surface for library users.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace hhgat::geometry {

/// Points are kept within (1 - kBallEps) / sqrt(c) of the origin.
inline constexpr double kBallEps = 1e-5;
/// Vectors shorter than this are treated as the origin by exp/log.
inline constexpr double kNormEps = 1e-15;
/// Upper clamp on the artanh argument.
inline constexpr double kArtanhClamp = 1.0 - 1e-15;

// ---------------------------------------------------------------------------
// Curvature

inline double softplus(double theta) {
    return theta > 30.0 ? theta : std::log1p(std::exp(theta));
}

inline double inverse_softplus(double c) {
    return c > 30.0 ? c : std::log(std::expm1(c));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Curvature -c of the ball. Learnable curvatures store theta with c = softplus(theta);
/// fixed curvatures store c directly.
class Curvature {
public:
    static Curvature learnable(double theta) { return Curvature(false, theta, softplus(theta)); }
    static Curvature learnable_from_value(double c) { return learnable(inverse_softplus(check(c))); }
    static Curvature fixed(double c) { return Curvature(true, 0.0, check(c)); }

    double value() const noexcept { return c_; }
    double theta() const noexcept { return theta_; }
    bool is_fixed() const noexcept { return fixed_; }
    /// dc/dtheta; zero in fixed mode.
    double dvalue_dtheta() const noexcept { return fixed_ ? 0.0 : sigmoid(theta_); }

private:
    Curvature(bool fixed, double theta, double c) : fixed_(fixed), theta_(theta), c_(c) {}

    static double check(double c) {
        if (!(c > 0.0) || !std::isfinite(c))
            throw StructuralError("curvature must be positive and finite, got " + std::to_string(c));
        return c;
    }

    bool fixed_;
    double theta_;
    double c_;
};

// ---------------------------------------------------------------------------
// Radial scalings. Both maps have the form out = s(u) * x with u = sqrt(c) * |x|.
// `ds_over_u` is s'(u) / u, which stays finite at u = 0.

struct Radial {
    double s;
    double ds_over_u;
};

inline Radial radial_tanh(double u) {
    if (u < 1e-3) {
        const double u2 = u * u;
        return {1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 15.0,
                -2.0 / 3.0 + 8.0 * u2 / 15.0 - 68.0 * u2 * u2 / 315.0};
    }
    const double t = std::tanh(u);
    const double sech2 = 1.0 - t * t;
    return {t / u, (sech2 * u - t) / (u * u * u)};
}

inline Radial radial_artanh(double u) {
    u = std::min(u, kArtanhClamp);
    if (u < 1e-3) {
        const double u2 = u * u;
        return {1.0 + u2 / 3.0 + u2 * u2 / 5.0, 2.0 / 3.0 + 4.0 * u2 / 5.0 + 6.0 * u2 * u2 / 7.0};
    }
    const double a = std::atanh(u);
    return {a / u, (u / (1.0 - u * u) - a) / (u * u * u)};
}

namespace detail {

template <class RadialFn>
Vec radial_apply(std::span<const double> x, double c, RadialFn fn) {
    const double n = norm(x);
    Vec out(x.size(), 0.0);
    if (n < kNormEps) return out;
    const Radial r = fn(std::sqrt(c) * n);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = r.s * x[i];
    return out;
}

template <class RadialFn>
void radial_vjp(std::span<const double> x, double c, std::span<const double> g, std::span<double> gx,
                double& gc, RadialFn fn) {
    const double n2 = sq_norm(x);
    const double n = std::sqrt(n2);
    if (n < kNormEps) {
        // s(0) = 1, and the radial terms vanish with x.
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i];
        return;
    }
    const Radial r = fn(std::sqrt(c) * n);
    const double xg = dot(x, g);
    const double k = c * r.ds_over_u * xg;
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += r.s * g[i] + k * x[i];
    gc += xg * r.ds_over_u * n2 * 0.5;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Raw kernels

/// Rescales onto the radius (1 - kBallEps)/sqrt(c) when x lies on or beyond it.
inline Vec project(std::span<const double> x, double c) {
    Vec out(x.begin(), x.end());
    const double limit = 1.0 - kBallEps;
    const double n = norm(x);
    if (std::sqrt(c) * n >= limit) {
        const double scale = limit / (std::sqrt(c) * n);
        for (double& v : out) v *= scale;
    }
    return out;
}

inline void project_vjp(std::span<const double> x, double c, std::span<const double> g,
                        std::span<double> gx, double& gc) {
    const double limit = 1.0 - kBallEps;
    const double n = norm(x);
    const double sc = std::sqrt(c);
    if (sc * n < limit) {
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i];
        return;
    }
    // out = R x / n with R = limit / sqrt(c)
    const double radius = limit / sc;
    const double xg = dot(x, g);
    const double k = radius / n;
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += k * (g[i] - xg * x[i] / (n * n));
    gc += (xg / n) * (-radius / (2.0 * c));
}

/// exp map at the origin without the final projection.
inline Vec expmap0_raw(std::span<const double> v, double c) {
    return detail::radial_apply(v, c, radial_tanh);
}

inline void expmap0_raw_vjp(std::span<const double> v, double c, std::span<const double> g,
                            std::span<double> gv, double& gc) {
    detail::radial_vjp(v, c, g, gv, gc, radial_tanh);
}

/// exp map at the origin, projected into the ball.
inline Vec expmap0(std::span<const double> v, double c) { return project(expmap0_raw(v, c), c); }

inline void expmap0_vjp(std::span<const double> v, double c, std::span<const double> g,
                        std::span<double> gv, double& gc) {
    const Vec raw = expmap0_raw(v, c);
    Vec graw(raw.size(), 0.0);
    project_vjp(raw, c, g, graw, gc);
    expmap0_raw_vjp(v, c, graw, gv, gc);
}

/// log map at the origin; inverse of expmap0 on the open ball.
inline Vec logmap0(std::span<const double> y, double c) {
    return detail::radial_apply(y, c, radial_artanh);
}

inline void logmap0_vjp(std::span<const double> y, double c, std::span<const double> g,
                        std::span<double> gy, double& gc) {
    detail::radial_vjp(y, c, g, gy, gc, radial_artanh);
}

inline Vec mobius_add_raw(std::span<const double> x, std::span<const double> y, double c) {
    if (x.size() != y.size()) throw StructuralError("mobius_add: dimension mismatch");
    const double xy = dot(x, y);
    const double x2 = sq_norm(x);
    const double y2 = sq_norm(y);
    const double a = 1.0 + 2.0 * c * xy + c * y2;
    const double b = 1.0 - c * x2;
    const double d = std::max(1.0 + 2.0 * c * xy + c * c * x2 * y2, 1e-15);
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (a * x[i] + b * y[i]) / d;
    return out;
}

inline void mobius_add_raw_vjp(std::span<const double> x, std::span<const double> y, double c,
                               std::span<const double> g, std::span<double> gx,
                               std::span<double> gy, double& gc) {
    const double xy = dot(x, y);
    const double x2 = sq_norm(x);
    const double y2 = sq_norm(y);
    const double a = 1.0 + 2.0 * c * xy + c * y2;
    const double b = 1.0 - c * x2;
    const double d = std::max(1.0 + 2.0 * c * xy + c * c * x2 * y2, 1e-15);

    // out = N / d with N = a x + b y
    double gxn = 0.0, gyn = 0.0, gout = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        gxn += g[i] * x[i];
        gyn += g[i] * y[i];
        gout += g[i] * (a * x[i] + b * y[i]);
    }
    const double ga = gxn / d;
    const double gb = gyn / d;
    const double gd = -gout / (d * d);

    const double g_xy = 2.0 * c * ga + 2.0 * c * gd;
    const double g_x2 = -c * gb + c * c * y2 * gd;
    const double g_y2 = c * ga + c * c * x2 * gd;
    for (std::size_t i = 0; i < x.size(); ++i) {
        gx[i] += a * g[i] / d + g_xy * y[i] + 2.0 * g_x2 * x[i];
        gy[i] += b * g[i] / d + g_xy * x[i] + 2.0 * g_y2 * y[i];
    }
    gc += ga * (2.0 * xy + y2) - gb * x2 + gd * (2.0 * xy + 2.0 * c * x2 * y2);
}

inline Vec mobius_add(std::span<const double> x, std::span<const double> y, double c) {
    return project(mobius_add_raw(x, y, c), c);
}

inline void mobius_add_vjp(std::span<const double> x, std::span<const double> y, double c,
                           std::span<const double> g, std::span<double> gx, std::span<double> gy,
                           double& gc) {
    const Vec raw = mobius_add_raw(x, y, c);
    Vec graw(raw.size(), 0.0);
    project_vjp(raw, c, g, graw, gc);
    mobius_add_raw_vjp(x, y, c, graw, gx, gy, gc);
}

/// M (x) x = exp0(M log0(x)). The origin is returned when M log0(x) vanishes.
inline Vec hyp_matvec(const Matrix& m, std::span<const double> x, double c) {
    return expmap0(matvec(m, logmap0(x, c)), c);
}

inline void hyp_matvec_vjp(const Matrix& m, std::span<const double> x, double c,
                           std::span<const double> g, std::span<double> gm, std::span<double> gx,
                           double& gc) {
    const Vec t = logmap0(x, c);
    const Vec w = matvec(m, t);
    Vec gw(w.size(), 0.0);
    expmap0_vjp(w, c, g, gw, gc);
    outer_accum(gw, t, gm);
    Vec gt(t.size(), 0.0);
    matvec_transpose_accum(m.data, m.rows, m.cols, gw, gt);
    logmap0_vjp(x, c, gt, gx, gc);
}

/// Elementwise Euclidean activation with a known derivative.
struct Activation {
    enum class Kind { Identity, Relu, LeakyRelu, Tanh };
    Kind kind = Kind::Relu;
    double slope = 0.2;

    static Activation identity() { return {Kind::Identity, 0.0}; }
    static Activation relu() { return {Kind::Relu, 0.0}; }
    static Activation leaky_relu(double slope = 0.2) { return {Kind::LeakyRelu, slope}; }
    static Activation tanh() { return {Kind::Tanh, 0.0}; }

    double operator()(double x) const {
        switch (kind) {
            case Kind::Identity: return x;
            case Kind::Relu: return x > 0.0 ? x : 0.0;
            case Kind::LeakyRelu: return x > 0.0 ? x : slope * x;
            case Kind::Tanh: return std::tanh(x);
        }
        return x;
    }

    double derivative(double x) const {
        switch (kind) {
            case Kind::Identity: return 1.0;
            case Kind::Relu: return x > 0.0 ? 1.0 : 0.0;
            case Kind::LeakyRelu: return x > 0.0 ? 1.0 : slope;
            case Kind::Tanh: {
                const double t = std::tanh(x);
                return 1.0 - t * t;
            }
        }
        return 1.0;
    }
};

/// sigma (x)_c x = exp0(sigma(log0(x)))
inline Vec hyp_activation(std::span<const double> x, double c, const Activation& act) {
    Vec t = logmap0(x, c);
    for (double& v : t) v = act(v);
    return expmap0(t, c);
}

inline void hyp_activation_vjp(std::span<const double> x, double c, const Activation& act,
                               std::span<const double> g, std::span<double> gx, double& gc) {
    const Vec t = logmap0(x, c);
    Vec s(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) s[i] = act(t[i]);
    Vec gs(t.size(), 0.0);
    expmap0_vjp(s, c, g, gs, gc);
    for (std::size_t i = 0; i < t.size(); ++i) gs[i] *= act.derivative(t[i]);
    logmap0_vjp(x, c, gs, gx, gc);
}

// ---------------------------------------------------------------------------
// Typed surface

class TangentVector {
public:
    TangentVector() = default;
    explicit TangentVector(Vec coords) : coords_(std::move(coords)) {}

    std::span<const double> coords() const noexcept { return coords_; }
    std::size_t dim() const noexcept { return coords_.size(); }

private:
    Vec coords_;
};

/// A point of the open ball; construction always projects, so c |x|^2 < 1 holds.
class BallPoint {
public:
    static BallPoint origin(std::size_t dim, double c) { return BallPoint(Vec(dim, 0.0), c); }
    static BallPoint from_raw(std::span<const double> x, double c) { return BallPoint(project(x, c), c); }

    std::span<const double> coords() const noexcept { return coords_; }
    double curvature() const noexcept { return c_; }
    std::size_t dim() const noexcept { return coords_.size(); }

private:
    BallPoint(Vec coords, double c) : coords_(std::move(coords)), c_(c) {}

    Vec coords_;
    double c_;
};

inline bool in_ball(std::span<const double> x, double c) { return c * sq_norm(x) < 1.0; }

inline BallPoint project_to_ball(std::span<const double> x, double c) {
    return BallPoint::from_raw(x, c);
}

/// lambda_x^c = 2 / (1 - c |x|^2)
inline double conformal_factor(const BallPoint& x) {
    return 2.0 / (1.0 - x.curvature() * sq_norm(x.coords()));
}

inline BallPoint mobius_add(const BallPoint& x, const BallPoint& y) {
    if (x.curvature() != y.curvature())
        throw StructuralError("mobius_add: operands live in balls of different curvature");
    return BallPoint::from_raw(mobius_add_raw(x.coords(), y.coords(), x.curvature()), x.curvature());
}

inline BallPoint exp_map_origin(const TangentVector& v, double c) {
    return BallPoint::from_raw(expmap0_raw(v.coords(), c), c);
}

inline TangentVector log_map_origin(const BallPoint& y) {
    return TangentVector(logmap0(y.coords(), y.curvature()));
}

inline BallPoint hyp_matvec(const Matrix& m, const BallPoint& x) {
    if (m.cols != x.dim())
        throw StructuralError("hyp_matvec: matrix has " + std::to_string(m.cols) +
                              " columns, point has dimension " + std::to_string(x.dim()));
    return BallPoint::from_raw(hyp_matvec(m, x.coords(), x.curvature()), x.curvature());
}

inline BallPoint hyp_activation(const BallPoint& x, const Activation& act) {
    return BallPoint::from_raw(hyp_activation(x.coords(), x.curvature(), act), x.curvature());
}

/// Forward-only variant for arbitrary elementwise functions.
inline BallPoint hyp_activation(const BallPoint& x, const std::function<double(double)>& sigma) {
    Vec t = logmap0(x.coords(), x.curvature());
    for (double& v : t) v = sigma(v);
    return exp_map_origin(TangentVector(std::move(t)), x.curvature());
}

inline BallPoint negate(const BallPoint& x) {
    Vec v(x.coords().begin(), x.coords().end());
    for (double& e : v) e = -e;
    return BallPoint::from_raw(v, x.curvature());
}

}  // namespace hhgat::geometry
