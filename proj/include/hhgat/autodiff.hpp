#pragma once

// Reverse-mode differentiation over the small set of vector operations the
// model needs, Adam with L2 weight decay, and a central-difference checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "linalg.hpp"

namespace hhgat::ad {

/// A trainable tensor stored in Euclidean coordinates. Vectors have cols == 1.
struct Parameter {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec value;
    Vec grad;
    /// Whether the optimizer applies weight decay to this tensor.
    bool decay = true;

    Parameter() = default;
    Parameter(std::string n, std::size_t r, std::size_t c, bool wd = true)
        : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0), grad(r * c, 0.0), decay(wd) {}

    std::size_t size() const noexcept { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
class Var {
public:
    Var() = default;

    std::span<const double> value() const;
    double scalar() const;
    std::size_t size() const;
    std::uint32_t id() const noexcept { return id_; }
    Tape* tape() const noexcept { return tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::uint32_t id) : tape_(t), id_(id) {}

    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

class Tape {
public:
    /// Propagates the node's gradient into its parents via Tape::grad_of.
    using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Vec value) { return push(std::move(value), {}, nullptr, nullptr); }
    Var constant(double value) { return constant(Vec{value}); }

    /// Leaf bound to `p`. Repeated calls with the same parameter return the same node.
    Var param(Parameter& p) {
        if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
        Var v = push(p.value, {}, nullptr, &p);
        param_nodes_.emplace(&p, v.id());
        return v;
    }

    /// Appends an interior node. Parents must already be on this tape.
    Var record(Vec value, std::initializer_list<Var> parents, BackwardFn fn) {
        std::vector<std::uint32_t> ids;
        ids.reserve(parents.size());
        for (const Var& p : parents) ids.push_back(checked(p));
        return push(std::move(value), std::move(ids), std::move(fn), nullptr);
    }

    Var record(Vec value, const std::vector<Var>& parents, BackwardFn fn) {
        std::vector<std::uint32_t> ids;
        ids.reserve(parents.size());
        for (const Var& p : parents) ids.push_back(checked(p));
        return push(std::move(value), std::move(ids), std::move(fn), nullptr);
    }

    std::span<const double> value_of(std::uint32_t id) const { return nodes_[id].value; }
    std::span<double> grad_of(std::uint32_t id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
        return n.grad;
    }
    std::span<const double> grad(Var v) const {
        const Node& n = nodes_[checked_const(v)];
        return n.grad;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Seeds d loss / d loss = 1 and walks the tape in reverse. Parameter gradients
    /// are added to Parameter::grad, so repeated calls accumulate.
    void backward(Var loss) {
        const std::uint32_t root = checked(loss);
        if (nodes_[root].value.size() != 1) throw StructuralError("backward: loss must be a scalar");
        for (Node& n : nodes_) n.grad.clear();
        grad_of(root)[0] = 1.0;
        for (std::uint32_t id = root + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (n.grad.empty()) continue;
            for (std::uint32_t p : n.parents)
                if (p >= id) throw StructuralError("backward: cycle through node " + std::to_string(id));
            if (n.backward) n.backward(*this, id);
        }
        for (auto& [param, id] : param_nodes_) {
            const Node& n = nodes_[id];
            if (n.grad.empty()) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) param->grad[i] += n.grad[i];
        }
    }

private:
    struct Node {
        Vec value;
        Vec grad;
        std::vector<std::uint32_t> parents;
        BackwardFn backward;
    };

    Var push(Vec value, std::vector<std::uint32_t> parents, BackwardFn fn, Parameter*) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        for (std::uint32_t p : parents)
            if (p >= id) throw StructuralError("record: parent " + std::to_string(p) + " would form a cycle");
        nodes_.push_back(Node{std::move(value), {}, std::move(parents), std::move(fn)});
        return Var(this, id);
    }

    std::uint32_t checked(const Var& v) const { return checked_const(v); }
    std::uint32_t checked_const(const Var& v) const {
        if (v.tape_ != this) throw StructuralError("variable belongs to a different tape");
        if (v.id_ >= nodes_.size()) throw StructuralError("variable id out of range");
        return v.id_;
    }

    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, std::uint32_t> param_nodes_;
};

inline std::span<const double> Var::value() const { return tape_->value_of(id_); }
inline std::size_t Var::size() const { return tape_->value_of(id_).size(); }
inline double Var::scalar() const {
    auto v = value();
    if (v.size() != 1) throw StructuralError("scalar(): node has " + std::to_string(v.size()) + " entries");
    return v[0];
}

// ---------------------------------------------------------------------------
// Operations

namespace detail {
inline void require_same(const Var& a, const Var& b, const char* op) {
    if (a.size() != b.size())
        throw StructuralError(std::string(op) + ": length mismatch " + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()));
}
}  // namespace detail

inline Var add(Var a, Var b) {
    detail::require_same(a, b, "add");
    Vec out(a.value().begin(), a.value().end());
    axpy(1.0, b.value(), out);
    const auto ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::uint32_t self) {
        auto g = t.grad_of(self);
        axpy(1.0, g, t.grad_of(ia));
        axpy(1.0, g, t.grad_of(ib));
    });
}

/// Sum of scalar nodes.
inline Var sum(const std::vector<Var>& xs) {
    if (xs.empty()) throw StructuralError("sum: empty input");
    double s = 0.0;
    for (const Var& x : xs) s += x.scalar();
    std::vector<std::uint32_t> ids;
    for (const Var& x : xs) ids.push_back(x.id());
    return xs[0].tape()->record(Vec{s}, xs, [ids](Tape& t, std::uint32_t self) {
        const double g = t.grad_of(self)[0];
        for (auto id : ids) t.grad_of(id)[0] += g;
    });
}

/// Packs scalar nodes into one vector node.
inline Var stack(const std::vector<Var>& xs) {
    if (xs.empty()) throw StructuralError("stack: empty input");
    Vec out;
    std::vector<std::uint32_t> ids;
    for (const Var& x : xs) {
        out.push_back(x.scalar());
        ids.push_back(x.id());
    }
    return xs[0].tape()->record(std::move(out), xs, [ids](Tape& t, std::uint32_t self) {
        auto g = t.grad_of(self);
        for (std::size_t i = 0; i < ids.size(); ++i) t.grad_of(ids[i])[0] += g[i];
    });
}

inline Var scale(Var a, double k) {
    Vec out(a.value().begin(), a.value().end());
    for (double& v : out) v *= k;
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia, k](Tape& t, std::uint32_t self) {
        axpy(k, t.grad_of(self), t.grad_of(ia));
    });
}

/// Elementwise product with a constant mask.
inline Var mul_const(Var a, Vec mask) {
    if (mask.size() != a.size()) throw StructuralError("mul_const: length mismatch");
    Vec out(a.value().begin(), a.value().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia, mask = std::move(mask)](Tape& t, std::uint32_t self) {
        auto g = t.grad_of(self);
        auto ga = t.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    });
}

/// W x with W an (rows x cols) node.
inline Var matvec(Var w, std::size_t rows, std::size_t cols, Var x) {
    Vec out = hhgat::matvec(w.value(), rows, cols, x.value());
    const auto iw = w.id(), ix = x.id();
    return w.tape()->record(std::move(out), {w, x}, [iw, ix, rows, cols](Tape& t, std::uint32_t self) {
        auto g = t.grad_of(self);
        Vec gcopy(g.begin(), g.end());
        outer_accum(gcopy, t.value_of(ix), t.grad_of(iw));
        matvec_transpose_accum(t.value_of(iw), rows, cols, gcopy, t.grad_of(ix));
    });
}

inline Var matvec(Var w, const Parameter& shape, Var x) { return matvec(w, shape.rows, shape.cols, x); }

inline Var dot(Var a, Var b) {
    detail::require_same(a, b, "dot");
    const double s = hhgat::dot(a.value(), b.value());
    const auto ia = a.id(), ib = b.id();
    return a.tape()->record(Vec{s}, {a, b}, [ia, ib](Tape& t, std::uint32_t self) {
        const double g = t.grad_of(self)[0];
        axpy(g, t.value_of(ib), t.grad_of(ia));
        axpy(g, t.value_of(ia), t.grad_of(ib));
    });
}

inline Var activation(Var a, geometry::Activation act) {
    Vec out(a.value().begin(), a.value().end());
    for (double& v : out) v = act(v);
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia, act](Tape& t, std::uint32_t self) {
        auto g = t.grad_of(self);
        auto x = t.value_of(ia);
        auto ga = t.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * act.derivative(x[i]);
    });
}

inline Var relu(Var a) { return activation(a, geometry::Activation::relu()); }
inline Var tanh(Var a) { return activation(a, geometry::Activation::tanh()); }

inline Vec softmax_values(std::span<const double> x) {
    const double mx = *std::max_element(x.begin(), x.end());
    Vec out(x.size());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += (out[i] = std::exp(x[i] - mx));
    for (double& v : out) v /= z;
    return out;
}

inline Var softmax(Var a) {
    if (a.size() == 0) throw StructuralError("softmax: empty input");
    Vec out = softmax_values(a.value());
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::uint32_t self) {
        auto g = t.grad_of(self);
        auto y = t.value_of(self);
        const double gy = hhgat::dot(g, y);
        auto ga = t.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - gy);
    });
}

/// a * mask / sum(a * mask) for nonnegative weights; an all-zero mask leaves a untouched.
inline Var masked_renormalize(Var a, Vec mask) {
    double kept = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) kept += a.value()[i] * mask[i];
    if (std::all_of(mask.begin(), mask.end(), [](double m) { return m == 0.0; }) || kept <= 0.0)
        return a;
    Vec out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * mask[i] / kept;
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {a}, [ia, mask = std::move(mask), kept](Tape& t, std::uint32_t self) {
        auto g = t.grad_of(self);
        auto y = t.value_of(self);
        const double gy = hhgat::dot(g, y);
        auto ga = t.grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += mask[i] * (g[i] - gy) / kept;
    });
}

/// sum_i w[i] * xs[i]
inline Var weighted_sum(const std::vector<Var>& xs, Var w) {
    if (xs.empty() || xs.size() != w.size()) throw StructuralError("weighted_sum: weight count mismatch");
    const std::size_t n = xs[0].size();
    Vec out(n, 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != n) throw StructuralError("weighted_sum: ragged inputs");
        axpy(w.value()[i], xs[i].value(), out);
    }
    std::vector<std::uint32_t> ids;
    for (const Var& x : xs) ids.push_back(x.id());
    std::vector<Var> parents = xs;
    parents.push_back(w);
    const auto iw = w.id();
    return w.tape()->record(std::move(out), parents, [ids, iw](Tape& t, std::uint32_t self) {
        auto g = t.grad_of(self);
        Vec gcopy(g.begin(), g.end());
        auto wv = t.value_of(iw);
        Vec wcopy(wv.begin(), wv.end());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            t.grad_of(iw)[i] += hhgat::dot(gcopy, t.value_of(ids[i]));
            axpy(wcopy[i], gcopy, t.grad_of(ids[i]));
        }
    });
}

/// Arithmetic mean of equally sized vectors.
inline Var mean(const std::vector<Var>& xs) {
    if (xs.size() == 1) return xs[0];
    Tape& t = *xs[0].tape();
    return weighted_sum(xs, t.constant(Vec(xs.size(), 1.0 / static_cast<double>(xs.size()))));
}

/// -log(max(p[index], floor))
inline Var neg_log_pick(Var p, std::size_t index, double floor = 1e-12) {
    if (index >= p.size()) throw StructuralError("neg_log_pick: index out of range");
    const double raw = p.value()[index];
    const double v = std::max(raw, floor);
    const auto ip = p.id();
    return p.tape()->record(Vec{-std::log(v)}, {p}, [ip, index, raw, floor](Tape& t, std::uint32_t self) {
        if (raw < floor) return;
        t.grad_of(ip)[index] += -t.grad_of(self)[0] / raw;
    });
}

inline Var sq_norm(Var a) { return dot(a, a); }

inline Var softplus(Var theta) {
    const double x = theta.scalar();
    const auto it = theta.id();
    return theta.tape()->record(Vec{geometry::softplus(x)}, {theta}, [it, x](Tape& t, std::uint32_t self) {
        t.grad_of(it)[0] += t.grad_of(self)[0] * geometry::sigmoid(x);
    });
}

// Geometry ops; `c` is a scalar node.

inline Var expmap0(Var v, Var c) {
    const double cv = c.scalar();
    const auto iv = v.id(), ic = c.id();
    return v.tape()->record(geometry::expmap0(v.value(), cv), {v, c}, [iv, ic, cv](Tape& t, std::uint32_t self) {
        Vec g(t.grad_of(self).begin(), t.grad_of(self).end());
        Vec vin(t.value_of(iv).begin(), t.value_of(iv).end());
        double gc = 0.0;
        geometry::expmap0_vjp(vin, cv, g, t.grad_of(iv), gc);
        t.grad_of(ic)[0] += gc;
    });
}

inline Var logmap0(Var y, Var c) {
    const double cv = c.scalar();
    const auto iy = y.id(), ic = c.id();
    return y.tape()->record(geometry::logmap0(y.value(), cv), {y, c}, [iy, ic, cv](Tape& t, std::uint32_t self) {
        Vec g(t.grad_of(self).begin(), t.grad_of(self).end());
        Vec yin(t.value_of(iy).begin(), t.value_of(iy).end());
        double gc = 0.0;
        geometry::logmap0_vjp(yin, cv, g, t.grad_of(iy), gc);
        t.grad_of(ic)[0] += gc;
    });
}

inline Var mobius_add(Var x, Var y, Var c) {
    detail::require_same(x, y, "mobius_add");
    const double cv = c.scalar();
    const auto ix = x.id(), iy = y.id(), ic = c.id();
    return x.tape()->record(geometry::mobius_add(x.value(), y.value(), cv), {x, y, c},
                            [ix, iy, ic, cv](Tape& t, std::uint32_t self) {
                                Vec g(t.grad_of(self).begin(), t.grad_of(self).end());
                                Vec xv(t.value_of(ix).begin(), t.value_of(ix).end());
                                Vec yv(t.value_of(iy).begin(), t.value_of(iy).end());
                                Vec gx(xv.size(), 0.0), gy(yv.size(), 0.0);
                                double gc = 0.0;
                                geometry::mobius_add_vjp(xv, yv, cv, g, gx, gy, gc);
                                axpy(1.0, gx, t.grad_of(ix));
                                axpy(1.0, gy, t.grad_of(iy));
                                t.grad_of(ic)[0] += gc;
                            });
}

inline Var project(Var x, Var c) {
    const double cv = c.scalar();
    const auto ix = x.id(), ic = c.id();
    return x.tape()->record(geometry::project(x.value(), cv), {x, c}, [ix, ic, cv](Tape& t, std::uint32_t self) {
        Vec g(t.grad_of(self).begin(), t.grad_of(self).end());
        Vec xv(t.value_of(ix).begin(), t.value_of(ix).end());
        double gc = 0.0;
        geometry::project_vjp(xv, cv, g, t.grad_of(ix), gc);
        t.grad_of(ic)[0] += gc;
    });
}

/// W (x)_c x, composed from the recorded log / matvec / exp nodes.
inline Var hyp_matvec(Var w, std::size_t rows, std::size_t cols, Var x, Var c) {
    return expmap0(matvec(w, rows, cols, logmap0(x, c)), c);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
};

struct AdamState {
    AdamConfig config;
    std::size_t step = 0;
    std::vector<Vec> m;
    std::vector<Vec> v;

    explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

/// One bias-corrected Adam update. Weight decay enters as g + wd * theta on every
/// parameter whose `decay` flag is set.
inline void adam_step(std::span<Parameter* const> params, AdamState& state) {
    if (state.m.empty()) {
        for (const Parameter* p : params) {
            state.m.emplace_back(p->size(), 0.0);
            state.v.emplace_back(p->size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw StructuralError("adam_step: parameter list changed size");
    const AdamConfig& cfg = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        Vec& m = state.m[k];
        Vec& v = state.v[k];
        if (m.size() != p.size() || p.grad.size() != p.size())
            throw StructuralError("adam_step: shape mismatch for " + p.name);
        const double wd = p.decay ? cfg.weight_decay : 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = p.grad[i] + wd * p.value[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Evaluates f at x. When `grad` is non-empty it must receive the analytic gradient.
using ScalarFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct GradCheckOptions {
    double h = 1e-5;
    /// Relative error above which a coordinate is inspected for a kink.
    double tolerance = 1e-4;
    /// Retries after a detected kink.
    int max_retries = 5;
    /// Magnitude of the random nudge applied on retry.
    double nudge = 1e-3;
    std::uint64_t seed = 0x5eed;
    /// Smallest denominator of the relative error.
    double floor = 1e-12;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::vector<double> rel_errors;
    Vec point;  // point at which the reported errors were measured
    int retries = 0;
    bool kink_detected = false;
};

/// |analytic - fd| / max(|analytic|, |fd|, 1e-12)
inline double relative_error(double analytic, double fd, double floor = 1e-12) {
    return std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), floor});
}

/// Compares f's analytic gradient with central differences. When a coordinate
/// fails and its one-sided differences disagree (a kink such as ReLU at 0), the
/// whole point is nudged and the check repeated.
inline GradCheckResult grad_check(const ScalarFn& f, Vec point, const GradCheckOptions& opt = {}) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    GradCheckResult result;
    for (int attempt = 0;; ++attempt) {
        Vec analytic(point.size(), 0.0);
        const double f0 = f(point, analytic);
        result.rel_errors.assign(point.size(), 0.0);
        result.max_rel_error = 0.0;
        bool kink = false;
        Vec x = point;
        for (std::size_t i = 0; i < point.size(); ++i) {
            const double orig = x[i];
            x[i] = orig + opt.h;
            const double fp = f(x, {});
            x[i] = orig - opt.h;
            const double fm = f(x, {});
            x[i] = orig;
            const double fd = (fp - fm) / (2.0 * opt.h);
            const double err = relative_error(analytic[i], fd, opt.floor);
            result.rel_errors[i] = err;
            result.max_rel_error = std::max(result.max_rel_error, err);
            if (err > opt.tolerance) {
                const double fwd = (fp - f0) / opt.h;
                const double bwd = (f0 - fm) / opt.h;
                if (std::abs(fwd - bwd) > 1e-2 * std::max({1.0, std::abs(fwd), std::abs(bwd)})) kink = true;
            }
        }
        result.point = point;
        if (!kink) return result;
        result.kink_detected = true;
        if (attempt >= opt.max_retries) return result;
        ++result.retries;
        for (double& v : point) v += opt.nudge * unit(rng);
    }
}

}  // namespace hhgat::ad
