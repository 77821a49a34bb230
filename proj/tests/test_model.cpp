#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hhgat/engine.hpp"
#include "hhgat/model.hpp"

using namespace hhgat;

namespace {

Vec values(const ad::Var& v) { return {v.value().begin(), v.value().end()}; }

ModelConfig toy_config(std::size_t d = 5) {
    ModelConfig cfg;
    cfg.input_dim = d;
    cfg.hidden_dim = 4;
    cfg.embed_dim = 4;
    cfg.num_classes = 2;
    cfg.max_length = 2;
    cfg.dropout = 0.5;
    return cfg;
}

struct Toy {
    HeteroGraph g = make_toy_graph(5);
    std::vector<Metapath> metapaths;
    InstanceSet instances;
    ModelConfig cfg = toy_config();

    explicit Toy(std::size_t l = 2) {
        cfg.max_length = l;
        metapaths = enumerate_metapaths(g.schema(), g.target_type, l);
        instances = sample_instances(g, metapaths, {kUncapped, 1, 1});
    }
};

// Plain Euclidean network with every geometry op at its c -> 0 limit.
struct EuclideanOut {
    std::vector<Vec> embeddings;
    std::vector<Vec> probs;
};

Vec softmax_plain(const Vec& x) {
    double mx = *std::max_element(x.begin(), x.end());
    Vec e(x.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (e[i] = std::exp(x[i] - mx));
    for (double& v : e) v /= s;
    return e;
}

Vec mat_vec(const ad::Parameter& m, const Vec& x) {
    Vec out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) out[r] += m.value[r * m.cols + c] * x[c];
    return out;
}

EuclideanOut euclidean_forward(const HeteroGraph& g, const InstanceSet& set, const ModelParams& p,
                               const ModelConfig& cfg, const std::vector<NodeId>& nodes) {
    EuclideanOut out;
    for (NodeId v : nodes) {
        const NodeInstances* ni = set.find(v);
        std::vector<Vec> projected;
        std::vector<double> logits;
        for (const MetapathInstances& mi : ni->per_metapath) {
            if (mi.paths.empty()) continue;
            Vec z(cfg.hidden_dim, 0.0);
            for (const MetapathHead& head : p.heads[mi.metapath]) {
                std::vector<Vec> hs;
                Vec scores;
                for (const InstancePath& path : mi.paths) {
                    Vec x;
                    for (NodeId id : path) x.insert(x.end(), g.features(id).begin(), g.features(id).end());
                    Vec h = mat_vec(head.W, x);
                    for (std::size_t i = 0; i < h.size(); ++i) h[i] += head.b.value[i];
                    double s = 0.0;
                    for (std::size_t i = 0; i < h.size(); ++i) s += head.a.value[i] * h[i];
                    scores.push_back(std::max(s, 0.0));
                    hs.push_back(h);
                }
                const Vec alpha = softmax_plain(scores);
                for (std::size_t i = 0; i < cfg.hidden_dim; ++i) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < hs.size(); ++k) acc += alpha[k] * hs[k][i];
                    z[i] += std::max(acc, 0.0) / static_cast<double>(p.heads[mi.metapath].size());
                }
            }
            Vec m = mat_vec(p.inter.M, z);
            double w = 0.0;
            for (std::size_t i = 0; i < m.size(); ++i) w += p.inter.q.value[i] * std::tanh(m[i] + p.inter.b.value[i]);
            logits.push_back(w);
            projected.push_back(m);
        }
        const Vec beta = softmax_plain(logits);
        Vec emb(cfg.embed_dim, 0.0);
        for (std::size_t i = 0; i < emb.size(); ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < projected.size(); ++k) acc += beta[k] * projected[k][i];
            emb[i] = std::max(acc, 0.0);
        }
        out.embeddings.push_back(emb);
        out.probs.push_back(softmax_plain(mat_vec(p.Wc, emb)));
    }
    return out;
}

double rel_diff(const Vec& a, const Vec& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace

TEST(ConcatFeatures, OrderAndContent) {
    HeteroGraph g;
    g.node_type_names = {"P", "A"};
    g.feature_dim = 2;
    g.add_node(1, 0);
    g.add_node(2, 1);
    g.add_node(3, 0);
    g.set_features(1, {1.0, 0.0});
    g.set_features(2, {0.0, 2.0});
    g.set_features(3, {5.0, 6.0});
    EXPECT_EQ(concat_features({1}, g), (Vec{1.0, 0.0}));
    EXPECT_EQ(concat_features({1, 2}, g), (Vec{1.0, 0.0, 0.0, 2.0}));
    EXPECT_NE(concat_features({1, 2, 3}, g), concat_features({3, 2, 1}, g));
    EXPECT_THROW(concat_features({1, 9}, g), StructuralError);
}

TEST(Lift, OriginAndExactness) {
    ad::Tape t;
    const ad::Var c = t.constant(0.7);
    EXPECT_EQ(values(lift_to_hyperbolic(t, Vec{0.0, 0.0}, c)), (Vec{0.0, 0.0}));
    const Vec x{0.3, -1.2, 0.5};
    EXPECT_EQ(values(lift_to_hyperbolic(t, x, c)), geometry::expmap0(x, 0.7));
}

TEST(MetapathLinear, Examples) {
    ad::Tape t;
    const ad::Var c = t.constant(1.0);
    ad::Parameter W("W", 2, 2), b("b", 2, 1), a("a", 2, 1);
    W.value = {1, 0, 0, 1};
    MetapathHead head{W, b, a};
    const HeadVars hv = bind_head(t, head, c);
    const Vec x{0.2, -0.3};
    const Vec y = values(metapath_linear(hv, t.constant(x), c));
    EXPECT_NEAR(y[0], x[0], 1e-14);
    EXPECT_NEAR(y[1], x[1], 1e-14);
    EXPECT_EQ(values(metapath_linear(hv, t.constant(Vec{0.0, 0.0}), c)), (Vec{0.0, 0.0}));
    EXPECT_THROW(metapath_linear(hv, t.constant(Vec{0.1}), c), StructuralError);

    ad::Parameter W1("W", 1, 1), b1("b", 1, 1), a1("a", 1, 1);
    W1.value = {2.0};
    b1.value = {0.1};
    MetapathHead h1{W1, b1, a1};
    const HeadVars hv1 = bind_head(t, h1, c);
    const double out = metapath_linear(hv1, t.constant(std::tanh(0.3)), c).scalar();
    const double u = std::tanh(0.6), w = std::tanh(0.1);
    EXPECT_NEAR(out, (u + w) / (1 + u * w), 1e-14);
    EXPECT_NEAR(out, std::tanh(0.7), 1e-14);
}

TEST(IntraAttention, Examples) {
    ad::Tape t;
    const ad::Var c = t.constant(1.0);
    const ad::Var a = t.constant(Vec{1.0, 0.0});
    const auto relu = geometry::Activation::relu();
    const ad::Var h = t.constant(Vec{0.3, 0.1});
    EXPECT_EQ(values(intra_attention({h}, a, c, relu).alpha), Vec{1.0});
    const auto same = values(intra_attention({h, h, h}, a, c, relu).alpha);
    for (double v : same) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    const ad::Var h0 = t.constant(Vec{0.0, 0.0});
    const ad::Var h1 = t.constant(Vec{std::tanh(1.0), 0.0});
    const auto alpha = values(intra_attention({h0, h1}, a, c, relu).alpha);
    const double e = std::exp(1.0);
    EXPECT_NEAR(alpha[0], 1.0 / (1.0 + e), 1e-12);
    EXPECT_NEAR(alpha[1], e / (1.0 + e), 1e-12);
    EXPECT_NEAR(alpha[0], 0.2689, 1e-4);
    EXPECT_THROW(intra_attention({}, a, c, relu), StructuralError);
}

TEST(IntraAttention, LeakyVariantKeepsNegativeLogits) {
    ad::Tape t;
    const ad::Var c = t.constant(1.0);
    const ad::Var a = t.constant(Vec{1.0});
    const ad::Var h0 = t.constant(Vec{std::tanh(-1.0)}), h1 = t.constant(Vec{0.0});
    const auto relu = values(intra_attention({h0, h1}, a, c, geometry::Activation::relu()).alpha);
    EXPECT_NEAR(relu[0], 0.5, 1e-15);
    const auto leaky = values(intra_attention({h0, h1}, a, c, geometry::Activation::leaky_relu(0.2)).alpha);
    EXPECT_NEAR(leaky[0], std::exp(-0.2) / (std::exp(-0.2) + 1.0), 1e-12);
}

TEST(Aggregate, Examples) {
    ad::Tape t;
    const ad::Var c = t.constant(1.0);
    const ad::Var p1 = t.constant(Vec{std::tanh(0.2)}), p2 = t.constant(Vec{std::tanh(0.6)});
    const std::vector<ad::Var> tangents{ad::logmap0(p1, c), ad::logmap0(p2, c)};
    EXPECT_NEAR(aggregate_instances(tangents, t.constant(Vec{0.5, 0.5}), c).scalar(), std::tanh(0.4), 1e-14);
    const ad::Var q = t.constant(Vec{0.2, 0.1});
    EXPECT_NEAR(values(aggregate_instances({ad::logmap0(q, c)}, t.constant(Vec{1.0}), c))[0], 0.2, 1e-14);
    const ad::Var neg = t.constant(Vec{-0.2, -0.1});
    EXPECT_EQ(values(aggregate_instances({ad::logmap0(neg, c)}, t.constant(Vec{1.0}), c)), (Vec{0.0, 0.0}));
}

TEST(InterAttention, Examples) {
    ad::Tape t;
    const ad::Var c = t.constant(1.0);
    ad::Parameter M("M", 1, 1), q("q", 1, 1), b("b", 1, 1);
    M.value = {1.0};
    q.value = {4.0};
    InterAttention ia{M, q, b};
    const InterVars iv = bind_inter(t, ia);
    const ad::Var z1 = t.constant(Vec{std::tanh(std::atanh(0.25))});
    const ad::Var z2 = t.constant(Vec{std::tanh(std::atanh(0.75))});
    EXPECT_EQ(values(inter_attention({z1}, iv, c).beta), Vec{1.0});
    const auto beta = values(inter_attention({z1, z2}, iv, c).beta);
    EXPECT_NEAR(beta[0], 1.0 / (1.0 + std::exp(2.0)), 1e-12);
    EXPECT_NEAR(beta[1], 0.8808, 1e-4);

    ad::Parameter q0("q", 1, 1);
    InterAttention flat{M, q0, b};
    const auto uniform = values(inter_attention({z1, z2, z1}, bind_inter(t, flat), c).beta);
    for (double v : uniform) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Fuse, Examples) {
    ad::Tape t;
    const ad::Var c = t.constant(1.0);
    ad::Parameter M("M", 2, 2), q("q", 2, 1), b("b", 2, 1);
    M.value = {1.0, 2.0, 3.0, -1.0};
    InterAttention ia{M, q, b};
    const InterVars iv = bind_inter(t, ia);
    const Vec tangent{0.3, -0.2};
    const ad::Var z = t.constant(geometry::expmap0(tangent, 1.0));
    const auto r = inter_attention({z}, iv, c);
    const Vec fused = values(fuse_metapaths(r, true));
    EXPECT_NEAR(fused[0], 0.0, 1e-15);  // 0.3 - 0.4 < 0
    EXPECT_NEAR(fused[1], 1.1, 1e-12);  // 0.9 + 0.2
    const auto at_origin = inter_attention({t.constant(Vec{0.0, 0.0}), t.constant(Vec{0.0, 0.0})}, iv, c);
    EXPECT_EQ(values(fuse_metapaths(at_origin, true)), (Vec{0.0, 0.0}));
    const Vec no_proj = values(fuse_metapaths(r, false));
    EXPECT_NEAR(no_proj[0], 0.3, 1e-12);
    EXPECT_EQ(no_proj[1], 0.0);
}

TEST(OutputHead, Examples) {
    ad::Tape t;
    const ad::Var z = t.constant(Vec{0.4, -1.0});
    const auto uniform = values(output_head(z, t.constant(Vec(6, 0.0)), 3, 2));
    for (double v : uniform) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    const ad::Var one = t.constant(Vec{1.0});
    const auto p = values(output_head(one, t.constant(Vec{0.0, 0.0, std::log(9.0)}), 3, 1));
    EXPECT_NEAR(p[0], 1.0 / 11.0, 1e-15);
    EXPECT_NEAR(p[2], 9.0 / 11.0, 1e-15);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
}

TEST(Softmax, ShiftInvariance) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-20, 20);
    for (int i = 0; i < 200; ++i) {
        Vec x(1 + i % 7);
        for (double& v : x) v = d(rng);
        Vec shifted = x;
        const double k = d(rng);
        for (double& v : shifted) v += k;
        const Vec a = ad::softmax_values(x), b = ad::softmax_values(shifted);
        for (std::size_t j = 0; j < a.size(); ++j) ASSERT_NEAR(a[j], b[j], 1e-9);
    }
}

TEST(Forward, ToyTraceInvariants) {
    Toy toy(3);
    ModelParams p = init_params(toy.cfg, toy.metapaths, 11);
    ad::Tape t;
    const ForwardResult fr = forward(t, toy.g, toy.instances, p, toy.cfg, toy.g.labeled_nodes());
    EXPECT_TRUE(fr.trace.invariants.clean());
    EXPECT_GT(fr.trace.invariants.ball_points, 0u);
    EXPECT_EQ(fr.trace.invariants.beta_sums, 3u);
    ASSERT_EQ(fr.trace.nodes.size(), 3u);
    for (const NodeTrace& nt : fr.trace.nodes) {
        double bs = 0.0;
        for (const MetapathTrace& mt : nt.metapaths) {
            bs += mt.beta;
            double as = 0.0;
            for (double a : mt.alpha.at(0)) as += a;
            EXPECT_NEAR(as, 1.0, 1e-9);
            EXPECT_TRUE(geometry::in_ball(mt.z, fr.trace.curvature));
        }
        EXPECT_NEAR(bs, 1.0, 1e-9);
        EXPECT_EQ(nt.embedding.size(), 4u);
    }
}

TEST(Forward, DeterministicInBothModes) {
    Toy toy(3);
    ModelParams p = init_params(toy.cfg, toy.metapaths, 11);
    auto run = [&](Mode m, std::uint64_t s) {
        ad::Tape t;
        return forward(t, toy.g, toy.instances, p, toy.cfg, toy.g.labeled_nodes(), {m, s}).trace;
    };
    auto probs = [](const ForwardTrace& tr) {
        std::vector<Vec> out;
        for (const auto& n : tr.nodes) out.push_back(n.probs);
        return out;
    };
    EXPECT_EQ(probs(run(Mode::Eval, 1)), probs(run(Mode::Eval, 2)));
    EXPECT_EQ(probs(run(Mode::Train, 5)), probs(run(Mode::Train, 5)));
    EXPECT_NE(probs(run(Mode::Train, 5)), probs(run(Mode::Eval, 5)));
}

TEST(Forward, TrivialOnlyNodeDependsOnOwnFeature) {
    Toy toy(1);
    ModelParams p = init_params(toy.cfg, toy.metapaths, 4);
    ad::Tape t1;
    const auto before = forward(t1, toy.g, toy.instances, p, toy.cfg, {0}).trace.nodes[0].probs;
    HeteroGraph other = toy.g;
    for (NodeId id : {1, 2, 3, 4}) other.set_features(id, Vec(5, 0.9));
    ad::Tape t2;
    EXPECT_EQ(forward(t2, other, toy.instances, p, toy.cfg, {0}).trace.nodes[0].probs, before);
    other.set_features(0, Vec(5, 0.1));
    ad::Tape t3;
    EXPECT_NE(forward(t3, other, toy.instances, p, toy.cfg, {0}).trace.nodes[0].probs, before);
}

TEST(Forward, RejectsMismatchedParameters) {
    Toy toy(3);
    ModelParams p = init_params(toy.cfg, {toy.metapaths[0]}, 1);
    ad::Tape t;
    EXPECT_THROW(forward(t, toy.g, toy.instances, p, toy.cfg, {0}), StructuralError);
}

TEST(ModelProperties, InstancePermutationEquivariance) {
    const HeteroGraph g = make_synthetic({.per_class = 10, .feature_dim = 6});
    ModelConfig cfg;
    cfg.input_dim = 6;
    cfg.hidden_dim = 5;
    cfg.embed_dim = 5;
    cfg.num_classes = 3;
    const auto mps = enumerate_metapaths(g.schema(), g.target_type, 3);
    const InstanceSet base = sample_instances(g, mps, {kUncapped, 1, 1});
    InstanceSet shuffled = base;
    std::mt19937_64 rng(8);
    for (auto& ni : shuffled.nodes)
        for (auto& mi : ni.per_metapath) std::shuffle(mi.paths.begin(), mi.paths.end(), rng);
    ModelParams p = init_params(cfg, mps, 21);
    ad::Tape t1, t2;
    const auto a = forward(t1, g, base, p, cfg, g.labeled_nodes()).trace;
    const auto b = forward(t2, g, shuffled, p, cfg, g.labeled_nodes()).trace;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        for (std::size_t k = 0; k < a.nodes[i].metapaths.size(); ++k) {
            const Vec& za = a.nodes[i].metapaths[k].z;
            const Vec& zb = b.nodes[i].metapaths[k].z;
            for (std::size_t j = 0; j < za.size(); ++j) ASSERT_NEAR(za[j], zb[j], 1e-9);
        }
    }
}

TEST(ModelProperties, CurvatureContinuityToEuclidean) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Toy toy(3);
        toy.cfg.curvature_mode = CurvatureMode::Fixed;
        toy.cfg.curvature = 1e-6;
        ModelParams p = init_params(toy.cfg, toy.metapaths, seed);
        // nonzero biases so the Mobius bias term is exercised
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> d(-0.3, 0.3);
        for (auto& per : p.heads)
            for (auto& h : per)
                for (double& v : h.b.value) v = d(rng);
        for (double& v : p.inter.b.value) v = d(rng);
        const auto nodes = toy.g.labeled_nodes();
        ad::Tape t;
        const auto hyp = forward(t, toy.g, toy.instances, p, toy.cfg, nodes).trace;
        const EuclideanOut euc = euclidean_forward(toy.g, toy.instances, p, toy.cfg, nodes);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            EXPECT_LT(rel_diff(hyp.nodes[i].probs, euc.probs[i]), 1e-3);
            if (std::any_of(euc.embeddings[i].begin(), euc.embeddings[i].end(), [](double v) { return v > 0; })) {
                EXPECT_LT(rel_diff(hyp.nodes[i].embedding, euc.embeddings[i]), 1e-3);
            }
        }
    }
}

TEST(ModelProperties, MultiHeadKeepsInvariants) {
    Toy toy(3);
    toy.cfg.heads = 3;
    ModelParams p = init_params(toy.cfg, toy.metapaths, 2);
    EXPECT_EQ(p.heads.at(0).size(), 3u);
    ad::Tape t;
    const auto tr = forward(t, toy.g, toy.instances, p, toy.cfg, toy.g.labeled_nodes(), {Mode::Train, 9}).trace;
    EXPECT_TRUE(tr.invariants.clean());
    EXPECT_EQ(tr.nodes[0].metapaths[0].alpha.size(), 3u);
}

TEST(ModelProperties, ToyGradientCheck) {
    Toy toy(2);
    ASSERT_EQ(toy.metapaths.size(), 2u);
    for (CurvatureMode mode : {CurvatureMode::Learnable, CurvatureMode::Fixed}) {
        toy.cfg.curvature_mode = mode;
        ModelParams p = init_params(toy.cfg, toy.metapaths, 1);
        randomize_biases(p, 2);
        const auto r = model_grad_check(toy.g, toy.instances, p, toy.cfg, toy.g.labeled_nodes(), 1);
        for (const auto& e : r.per_param) EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
        EXPECT_EQ(r.per_param.size(), mode == CurvatureMode::Learnable ? 11u : 10u);
    }
}

TEST(ModelProperties, ZeroBiasesMakeOutputCurvatureFree) {
    Toy toy(3);
    toy.cfg.curvature_mode = CurvatureMode::Fixed;
    auto probs_at = [&](double c, bool biases) {
        toy.cfg.curvature = c;
        ModelParams p = init_params(toy.cfg, toy.metapaths, 6);
        if (biases) randomize_biases(p, 1);
        ad::Tape t;
        return forward(t, toy.g, toy.instances, p, toy.cfg, {1}).trace.nodes[0].probs;
    };
    const Vec a = probs_at(0.3, false), b = probs_at(1.7, false);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
    EXPECT_GT(rel_diff(probs_at(0.3, true), probs_at(1.7, true)), 1e-6);
}

TEST(InitParams, ShapesAndRanges) {
    Toy toy(3);
    ModelParams p = init_params(toy.cfg, toy.metapaths, 5);
    ASSERT_EQ(p.heads.size(), 3u);
    EXPECT_EQ(p.heads[2][0].W.cols, 3u * 5u);
    EXPECT_EQ(p.heads[2][0].W.rows, 4u);
    const double s = std::sqrt(6.0 / (4.0 + 15.0));
    for (double v : p.heads[2][0].W.value) EXPECT_LE(std::abs(v), s);
    for (double v : p.heads[2][0].b.value) EXPECT_EQ(v, 0.0);
    EXPECT_NEAR(p.curvature().value(), 1.0, 1e-15);
    EXPECT_FALSE(p.theta.decay);
}
