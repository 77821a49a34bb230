#pragma once

// Hyperbolic heterogeneous graph attention: instance features are lifted onto
// the Poincare ball, transformed per metapath, weighted by intra-metapath
// attention, aggregated, and fused across metapaths by a second attention
// before a softmax classifier head.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "geometry.hpp"
#include "hetgraph.hpp"
#include "sampler.hpp"

namespace hhgat {

enum class CurvatureMode { Learnable, Fixed };
enum class Mode { Train, Eval };

struct ModelConfig {
    std::size_t input_dim = 0;
    /// Metapath-specific embedding dimension.
    std::size_t hidden_dim = 64;
    /// Fused embedding dimension. Must equal hidden_dim when fuse_projection is off.
    std::size_t embed_dim = 64;
    std::size_t num_classes = 0;
    std::size_t max_length = 3;
    double dropout = 0.5;
    geometry::Activation attention = geometry::Activation::relu();
    CurvatureMode curvature_mode = CurvatureMode::Learnable;
    /// Initial value in learnable mode; the constant in fixed mode.
    double curvature = 1.0;
    std::size_t heads = 1;
    /// Reuse the inter-attention projection M inside the fusion sum.
    bool fuse_projection = true;

    void check() const {
        if (input_dim == 0 || hidden_dim == 0 || embed_dim == 0 || num_classes == 0 || max_length == 0 || heads == 0)
            throw StructuralError("ModelConfig: all dimensions must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw StructuralError("ModelConfig: dropout must lie in [0, 1)");
        if (!(curvature > 0.0)) throw StructuralError("ModelConfig: curvature must be positive");
        if (!fuse_projection && embed_dim != hidden_dim)
            throw StructuralError("ModelConfig: embed_dim must equal hidden_dim without fusion projection");
    }
};

/// Per-metapath transform (W, b) and intra-attention vector a.
struct MetapathHead {
    ad::Parameter W;
    ad::Parameter b;
    ad::Parameter a;
};

struct InterAttention {
    ad::Parameter M;
    ad::Parameter q;
    ad::Parameter b;
};

struct ModelParams {
    std::vector<Metapath> metapaths;
    /// heads[metapath][head]
    std::vector<std::vector<MetapathHead>> heads;
    InterAttention inter;
    ad::Parameter Wc;
    /// Unconstrained curvature parameter (learnable mode only).
    ad::Parameter theta;
    CurvatureMode curvature_mode = CurvatureMode::Learnable;
    double fixed_c = 1.0;

    geometry::Curvature curvature() const {
        return curvature_mode == CurvatureMode::Fixed ? geometry::Curvature::fixed(fixed_c)
                                                      : geometry::Curvature::learnable(theta.value.at(0));
    }

    std::vector<ad::Parameter*> all() {
        std::vector<ad::Parameter*> out;
        for (auto& per_path : heads)
            for (auto& h : per_path) {
                out.push_back(&h.W);
                out.push_back(&h.b);
                out.push_back(&h.a);
            }
        out.push_back(&inter.M);
        out.push_back(&inter.q);
        out.push_back(&inter.b);
        out.push_back(&Wc);
        if (curvature_mode == CurvatureMode::Learnable) out.push_back(&theta);
        return out;
    }

    std::vector<const ad::Parameter*> all() const {
        std::vector<const ad::Parameter*> out;
        for (auto* p : const_cast<ModelParams*>(this)->all()) out.push_back(p);
        return out;
    }

    void zero_grad() {
        for (auto* p : all()) p->zero_grad();
    }
};

/// Xavier-uniform matrices and attention vectors, zero biases.
inline ModelParams init_params(const ModelConfig& cfg, const std::vector<Metapath>& metapaths, std::uint64_t seed) {
    cfg.check();
    std::mt19937_64 rng(seed);
    auto xavier = [&rng](ad::Parameter& p) {
        const double s = std::sqrt(6.0 / static_cast<double>(p.rows + p.cols));
        std::uniform_real_distribution<double> dist(-s, s);
        for (double& v : p.value) v = dist(rng);
    };
    ModelParams mp;
    mp.metapaths = metapaths;
    mp.heads.resize(metapaths.size());
    for (std::size_t k = 0; k < metapaths.size(); ++k) {
        const std::size_t in = metapaths[k].length() * cfg.input_dim;
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const std::string base = "head." + std::to_string(k) + "." + std::to_string(h) + ".";
            MetapathHead head{ad::Parameter(base + "W", cfg.hidden_dim, in),
                              ad::Parameter(base + "b", cfg.hidden_dim, 1),
                              ad::Parameter(base + "a", cfg.hidden_dim, 1)};
            xavier(head.W);
            xavier(head.a);
            mp.heads[k].push_back(std::move(head));
        }
    }
    mp.inter.M = ad::Parameter("inter.M", cfg.embed_dim, cfg.hidden_dim);
    mp.inter.q = ad::Parameter("inter.q", cfg.embed_dim, 1);
    mp.inter.b = ad::Parameter("inter.b", cfg.embed_dim, 1);
    xavier(mp.inter.M);
    xavier(mp.inter.q);
    mp.Wc = ad::Parameter("output.Wc", cfg.num_classes, cfg.embed_dim);
    xavier(mp.Wc);
    mp.curvature_mode = cfg.curvature_mode;
    mp.theta = ad::Parameter("curvature.theta", 1, 1, /*decay=*/false);
    if (cfg.curvature_mode == CurvatureMode::Learnable) {
        mp.theta.value[0] = geometry::inverse_softplus(cfg.curvature);
    } else {
        mp.fixed_c = cfg.curvature;
    }
    return mp;
}

/// Redraws every bias uniformly from [-scale, scale]. With all biases at zero the
/// forward pass does not depend on c, so curvature gradients vanish identically.
inline void randomize_biases(ModelParams& params, std::uint64_t seed, double scale = 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& per_path : params.heads)
        for (auto& h : per_path)
            for (double& v : h.b.value) v = dist(rng);
    for (double& v : params.inter.b.value) v = dist(rng);
}

// ---------------------------------------------------------------------------
// Building blocks

/// Features of the path's nodes, concatenated in path order.
inline Vec concat_features(const InstancePath& path, const HeteroGraph& g) {
    Vec out;
    out.reserve(path.size() * g.feature_dim);
    for (NodeId id : path) {
        if (!g.has_node(id)) throw StructuralError("concat_features: unknown node " + std::to_string(id));
        const Vec& row = g.features(id);
        if (row.size() != g.feature_dim)
            throw StructuralError("concat_features: node " + std::to_string(id) + " has no feature row");
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

/// exp0 of the (optionally dropout-masked) Euclidean instance feature.
inline ad::Var lift_to_hyperbolic(ad::Tape& tape, Vec x, ad::Var c, const Vec* dropout_mask = nullptr) {
    ad::Var v = tape.constant(std::move(x));
    if (dropout_mask) v = ad::mul_const(v, *dropout_mask);
    return ad::expmap0(v, c);
}

struct HeadVars {
    ad::Var W;
    std::size_t rows = 0;
    std::size_t cols = 0;
    ad::Var b_ball;  // exp0(b)
    ad::Var a;
};

inline HeadVars bind_head(ad::Tape& tape, MetapathHead& head, ad::Var c) {
    return {tape.param(head.W), head.W.rows, head.W.cols, ad::expmap0(tape.param(head.b), c), tape.param(head.a)};
}

/// (W (x)_c x) (+)_c exp0(b)
inline ad::Var metapath_linear(const HeadVars& head, ad::Var x, ad::Var c) {
    if (x.size() != head.cols)
        throw StructuralError("metapath_linear: instance has dimension " + std::to_string(x.size()) +
                              ", head expects " + std::to_string(head.cols));
    return ad::mobius_add(ad::hyp_matvec(head.W, head.rows, head.cols, x, c), head.b_ball, c);
}

struct IntraAttention {
    ad::Var alpha;
    /// log0(h_p) for every instance, reused by aggregation.
    std::vector<ad::Var> tangents;
};

/// alpha = softmax_p(act(<a, log0(h_p)>))
inline IntraAttention intra_attention(const std::vector<ad::Var>& instances, ad::Var a, ad::Var c,
                                      const geometry::Activation& act) {
    if (instances.empty()) throw StructuralError("intra_attention: no instances");
    IntraAttention out;
    std::vector<ad::Var> logits;
    for (const ad::Var& h : instances) {
        ad::Var t = ad::logmap0(h, c);
        out.tangents.push_back(t);
        logits.push_back(ad::activation(ad::dot(a, t), act));
    }
    out.alpha = ad::softmax(ad::stack(logits));
    return out;
}

/// ReLU(sum_p alpha_p log0(h_p)), the tangent-space part of aggregation.
inline ad::Var aggregate_tangent(const std::vector<ad::Var>& tangents, ad::Var alpha) {
    return ad::relu(ad::weighted_sum(tangents, alpha));
}

/// z_v^phi = exp0(ReLU(sum_p alpha_p log0(h_p)))
inline ad::Var aggregate_instances(const std::vector<ad::Var>& tangents, ad::Var alpha, ad::Var c) {
    return ad::expmap0(aggregate_tangent(tangents, alpha), c);
}

struct InterVars {
    ad::Var M;
    std::size_t rows = 0;
    std::size_t cols = 0;
    ad::Var q;
    ad::Var b;
};

inline InterVars bind_inter(ad::Tape& tape, InterAttention& inter) {
    return {tape.param(inter.M), inter.M.rows, inter.M.cols, tape.param(inter.q), tape.param(inter.b)};
}

struct InterAttentionResult {
    ad::Var beta;
    std::vector<ad::Var> tangents;   // log0(z^phi)
    std::vector<ad::Var> projected;  // M log0(z^phi)
};

/// beta = softmax_phi(<q, tanh(M log0(z^phi) + b)>)
inline InterAttentionResult inter_attention(const std::vector<ad::Var>& z_set, const InterVars& inter, ad::Var c) {
    if (z_set.empty()) throw StructuralError("inter_attention: no metapath embeddings");
    InterAttentionResult out;
    std::vector<ad::Var> logits;
    for (const ad::Var& z : z_set) {
        ad::Var t = ad::logmap0(z, c);
        ad::Var m = ad::matvec(inter.M, inter.rows, inter.cols, t);
        out.tangents.push_back(t);
        out.projected.push_back(m);
        logits.push_back(ad::dot(inter.q, ad::tanh(ad::add(m, inter.b))));
    }
    out.beta = ad::softmax(ad::stack(logits));
    return out;
}

/// z_v = ReLU(sum_phi beta_phi M log0(z^phi)), or without M when projection is off.
inline ad::Var fuse_metapaths(const InterAttentionResult& r, bool use_projection) {
    return ad::relu(ad::weighted_sum(use_projection ? r.projected : r.tangents, r.beta));
}

/// softmax(W_c z)
inline ad::Var output_head(ad::Var z, ad::Var Wc, std::size_t rows, std::size_t cols) {
    return ad::softmax(ad::matvec(Wc, rows, cols, z));
}

// ---------------------------------------------------------------------------
// Forward pass

struct MetapathTrace {
    std::size_t metapath = 0;
    /// Attention over instances, one vector per head.
    std::vector<Vec> alpha;
    Vec z;  // z_v^phi on the ball
    double beta = 0.0;
};

struct NodeTrace {
    NodeId node = 0;
    std::vector<MetapathTrace> metapaths;
    Vec embedding;
    Vec probs;
};

/// Counts of invariant checks made during one forward pass.
struct InvariantReport {
    std::size_t ball_points = 0;
    std::size_t ball_violations = 0;
    std::size_t alpha_sums = 0;
    std::size_t beta_sums = 0;
    double max_alpha_error = 0.0;
    double max_beta_error = 0.0;
    double max_prob_error = 0.0;

    bool clean(double tol = 1e-9) const {
        return ball_violations == 0 && max_alpha_error <= tol && max_beta_error <= tol && max_prob_error <= tol;
    }
};

struct ForwardTrace {
    double curvature = 0.0;
    std::vector<NodeTrace> nodes;
    InvariantReport invariants;
};

struct ForwardOptions {
    Mode mode = Mode::Eval;
    std::uint64_t dropout_seed = 0;
};

/// Tape handles produced by a forward pass, aligned with trace.nodes.
struct ForwardResult {
    ForwardTrace trace;
    std::vector<ad::Var> probs;
    std::vector<ad::Var> embeddings;
    ad::Var curvature;
};

namespace detail {

inline Vec dropout_mask(std::size_t n, double rate, std::mt19937_64& rng) {
    std::bernoulli_distribution keep(1.0 - rate);
    Vec mask(n);
    const double scale = 1.0 / (1.0 - rate);
    for (double& m : mask) m = keep(rng) ? scale : 0.0;
    return mask;
}

inline void check_ball(InvariantReport& rep, ad::Var x, double c) {
    ++rep.ball_points;
    if (!geometry::in_ball(x.value(), c)) ++rep.ball_violations;
}

inline double sum_error(std::span<const double> w) {
    double s = 0.0;
    for (double v : w) s += v;
    return std::abs(s - 1.0);
}

}  // namespace detail

/// Runs the model for `nodes` (each must appear in `instances`), recording on `tape`.
inline ForwardResult forward(ad::Tape& tape, const HeteroGraph& g, const InstanceSet& instances, ModelParams& params,
                             const ModelConfig& cfg, const std::vector<NodeId>& nodes, const ForwardOptions& opt = {}) {
    const bool train = opt.mode == Mode::Train && cfg.dropout > 0.0;
    std::mt19937_64 rng(opt.dropout_seed);
    if (params.heads.size() != instances.metapaths.size())
        throw StructuralError("forward: parameters cover " + std::to_string(params.heads.size()) +
                              " metapaths, instance set has " + std::to_string(instances.metapaths.size()));

    ForwardResult out;
    out.curvature = params.curvature_mode == CurvatureMode::Fixed ? tape.constant(params.fixed_c)
                                                                  : ad::softplus(tape.param(params.theta));
    const ad::Var c = out.curvature;
    const double cv = c.scalar();
    out.trace.curvature = cv;
    InvariantReport& rep = out.trace.invariants;

    std::map<std::pair<std::size_t, std::size_t>, HeadVars> bound;
    auto head_vars = [&](std::size_t k, std::size_t h) -> const HeadVars& {
        auto key = std::make_pair(k, h);
        auto it = bound.find(key);
        if (it == bound.end()) {
            it = bound.emplace(key, bind_head(tape, params.heads[k][h], c)).first;
            detail::check_ball(rep, it->second.b_ball, cv);
        }
        return it->second;
    };
    const InterVars inter = bind_inter(tape, params.inter);
    const ad::Var Wc = tape.param(params.Wc);

    for (NodeId v : nodes) {
        const NodeInstances* ni = instances.find(v);
        if (!ni) throw StructuralError("forward: node " + std::to_string(v) + " has no sampled instances");
        NodeTrace nt;
        nt.node = v;
        std::vector<ad::Var> z_set;
        for (const MetapathInstances& mi : ni->per_metapath) {
            if (mi.paths.empty()) continue;
            if (mi.metapath >= params.heads.size()) throw StructuralError("forward: metapath index out of range");
            MetapathTrace mt;
            mt.metapath = mi.metapath;
            std::vector<ad::Var> head_outputs;
            for (std::size_t h = 0; h < params.heads[mi.metapath].size(); ++h) {
                const HeadVars& hv = head_vars(mi.metapath, h);
                std::vector<ad::Var> hs;
                hs.reserve(mi.paths.size());
                for (const InstancePath& p : mi.paths) {
                    Vec x = concat_features(p, g);
                    Vec mask;
                    if (train) mask = detail::dropout_mask(x.size(), cfg.dropout, rng);
                    ad::Var xh = lift_to_hyperbolic(tape, std::move(x), c, train ? &mask : nullptr);
                    ad::Var hp = metapath_linear(hv, xh, c);
                    detail::check_ball(rep, xh, cv);
                    detail::check_ball(rep, hp, cv);
                    hs.push_back(hp);
                }
                IntraAttention ia = intra_attention(hs, hv.a, c, cfg.attention);
                ad::Var alpha = ia.alpha;
                if (train) alpha = ad::masked_renormalize(alpha, detail::dropout_mask(alpha.size(), cfg.dropout, rng));
                ++rep.alpha_sums;
                rep.max_alpha_error = std::max(rep.max_alpha_error, detail::sum_error(alpha.value()));
                mt.alpha.emplace_back(alpha.value().begin(), alpha.value().end());
                head_outputs.push_back(aggregate_tangent(ia.tangents, alpha));
            }
            ad::Var z = ad::expmap0(ad::mean(head_outputs), c);
            detail::check_ball(rep, z, cv);
            mt.z.assign(z.value().begin(), z.value().end());
            z_set.push_back(z);
            nt.metapaths.push_back(std::move(mt));
        }
        if (z_set.empty()) throw StructuralError("forward: node " + std::to_string(v) + " has no instances at all");
        InterAttentionResult ir = inter_attention(z_set, inter, c);
        ++rep.beta_sums;
        rep.max_beta_error = std::max(rep.max_beta_error, detail::sum_error(ir.beta.value()));
        for (std::size_t i = 0; i < nt.metapaths.size(); ++i) nt.metapaths[i].beta = ir.beta.value()[i];
        ad::Var emb = fuse_metapaths(ir, cfg.fuse_projection);
        ad::Var probs = output_head(emb, Wc, params.Wc.rows, params.Wc.cols);
        rep.max_prob_error = std::max(rep.max_prob_error, detail::sum_error(probs.value()));
        nt.embedding.assign(emb.value().begin(), emb.value().end());
        nt.probs.assign(probs.value().begin(), probs.value().end());
        out.trace.nodes.push_back(std::move(nt));
        out.probs.push_back(probs);
        out.embeddings.push_back(emb);
    }
    return out;
}

}  // namespace hhgat
