#pragma once

// Full-batch training with early stopping on validation loss, evaluation with
// the classifier head and k-means on embeddings, the fixed-curvature sweep and
// a whole-model gradient check.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "autodiff.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace hhgat {

/// Independent sub-seed for a named consumer of randomness.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : name) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
    return detail::splitmix64(seed ^ h);
}

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t patience = 20;
    double lr = 1e-4;
    double weight_decay = 1e-3;
    std::uint64_t seed = 0;

    void check() const {
        if (patience > epochs) throw ConfigError("patience must not exceed epochs");
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double curvature = 0.0;
};

struct EvalReport {
    double macro_f1 = 0.0;
    double micro_f1 = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
    double valid_macro_f1 = 0.0;
    double valid_micro_f1 = 0.0;
    double valid_loss = 0.0;
    double curvature = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::size_t test_nodes = 0;
    std::vector<EpochRecord> curve;
};

/// -sum_v log f(z_v)[y_v] over the traced nodes, probabilities floored at 1e-12.
inline double cross_entropy(const ForwardTrace& trace, const std::map<NodeId, int>& labels) {
    double loss = 0.0;
    for (const NodeTrace& nt : trace.nodes) {
        const int y = labels.at(nt.node);
        loss -= std::log(std::max(nt.probs.at(static_cast<std::size_t>(y)), 1e-12));
    }
    return loss;
}

/// Recorded counterpart of cross_entropy, for backpropagation.
inline ad::Var cross_entropy(const ForwardResult& fr, const std::map<NodeId, int>& labels) {
    std::vector<ad::Var> terms;
    for (std::size_t i = 0; i < fr.probs.size(); ++i)
        terms.push_back(ad::neg_log_pick(fr.probs[i], static_cast<std::size_t>(labels.at(fr.trace.nodes[i].node))));
    return ad::sum(terms);
}

inline int argmax(const Vec& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Evaluation-mode outputs for every labeled node plus the resulting metrics.
struct Evaluation {
    EvalReport report;
    std::vector<NodeId> nodes;
    std::vector<Vec> embeddings;
    ForwardTrace trace;
};

inline Evaluation evaluate(const HeteroGraph& g, const InstanceSet& instances, ModelParams& params,
                           const ModelConfig& cfg, std::uint64_t seed) {
    Evaluation ev;
    ev.nodes = g.labeled_nodes();
    ad::Tape tape;
    ForwardResult fr = forward(tape, g, instances, params, cfg, ev.nodes, {Mode::Eval, 0});
    ev.trace = fr.trace;
    std::map<NodeId, std::size_t> pos;
    for (std::size_t i = 0; i < ev.nodes.size(); ++i) {
        pos[ev.nodes[i]] = i;
        ev.embeddings.push_back(fr.trace.nodes[i].embedding);
    }
    auto score = [&](const std::vector<NodeId>& part, F1Scores& f1, double* loss) {
        if (part.empty()) return;
        std::vector<int> pred, truth;
        double l = 0.0;
        for (NodeId v : part) {
            const Vec& p = fr.trace.nodes[pos.at(v)].probs;
            pred.push_back(argmax(p));
            truth.push_back(g.labels.at(v));
            l -= std::log(std::max(p[static_cast<std::size_t>(truth.back())], 1e-12));
        }
        f1 = f1_scores(pred, truth, cfg.num_classes);
        if (loss) *loss = l;
    };
    F1Scores test{}, valid{};
    score(g.split.test, test, nullptr);
    score(g.split.valid, valid, &ev.report.valid_loss);
    ev.report.macro_f1 = test.macro;
    ev.report.micro_f1 = test.micro;
    ev.report.valid_macro_f1 = valid.macro;
    ev.report.valid_micro_f1 = valid.micro;
    ev.report.test_nodes = g.split.test.size();
    ev.report.curvature = fr.trace.curvature;
    if (!g.split.test.empty() && g.split.test.size() >= cfg.num_classes) {
        std::vector<Vec> pts;
        std::vector<int> truth;
        for (NodeId v : g.split.test) {
            pts.push_back(ev.embeddings[pos.at(v)]);
            truth.push_back(g.labels.at(v));
        }
        const KMeansResult km = kmeans(pts, cfg.num_classes, derive_seed(seed, "kmeans"));
        ev.report.nmi = nmi(km.assignment, truth);
        ev.report.ari = ari(km.assignment, truth);
    }
    return ev;
}

/// Called with every forward trace produced during training (train and validation passes).
using TraceObserver = std::function<void(const ForwardTrace&, Mode)>;
/// Called after every epoch.
using EpochObserver = std::function<void(const EpochRecord&)>;

struct TrainResult {
    ModelParams params;
    EvalReport report;
    Evaluation evaluation;
};

inline TrainResult train(const HeteroGraph& g, const InstanceSet& instances, const ModelConfig& cfg,
                         const TrainConfig& tc, const TraceObserver& on_trace = {},
                         const EpochObserver& on_epoch = {}) {
    cfg.check();
    tc.check();
    if (g.split.valid.empty()) throw ConfigError("training requires a nonempty validation split");
    if (g.split.train.empty()) throw ConfigError("training requires a nonempty training split");

    ModelParams params = init_params(cfg, instances.metapaths, derive_seed(tc.seed, "init"));
    ad::AdamState adam({tc.lr, 0.9, 0.999, 1e-8, tc.weight_decay});
    const std::uint64_t dropout_seed = derive_seed(tc.seed, "dropout");

    std::optional<ModelParams> best;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0, bad_epochs = 0;
    std::vector<EpochRecord> curve;

    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        {
            params.zero_grad();
            ad::Tape tape;
            ForwardResult fr = forward(tape, g, instances, params, cfg, g.split.train,
                                       {Mode::Train, detail::splitmix64(dropout_seed + epoch)});
            if (on_trace) on_trace(fr.trace, Mode::Train);
            ad::Var loss = cross_entropy(fr, g.labels);
            rec.train_loss = loss.scalar();
            if (!std::isfinite(rec.train_loss))
                throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
            tape.backward(loss);
            auto plist = params.all();
            ad::adam_step(plist, adam);
        }
        rec.curvature = params.curvature().value();
        if (!(rec.curvature > 0.0))
            throw DivergenceError("curvature left the positive range at epoch " + std::to_string(epoch));
        {
            ad::Tape tape;
            ForwardResult fr = forward(tape, g, instances, params, cfg, g.split.valid, {Mode::Eval, 0});
            if (on_trace) on_trace(fr.trace, Mode::Eval);
            rec.valid_loss = cross_entropy(fr.trace, g.labels);
            if (!std::isfinite(rec.valid_loss))
                throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        curve.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (rec.valid_loss < best_loss) {
            best_loss = rec.valid_loss;
            best = params;
            best_epoch = epoch;
            bad_epochs = 0;
        } else if (++bad_epochs >= tc.patience) {
            break;
        }
    }

    TrainResult out{best ? std::move(*best) : std::move(params), {}, {}};
    out.evaluation = evaluate(g, instances, out.params, cfg, tc.seed);
    out.report = out.evaluation.report;
    out.report.best_epoch = best_epoch;
    out.report.epochs_run = curve.size();
    out.report.curve = std::move(curve);
    return out;
}

// ---------------------------------------------------------------------------
// Curvature sweep

struct SweepRow {
    double curvature = 0.0;
    double macro_f1 = 0.0;
    double micro_f1 = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
    std::size_t best_epoch = 0;
    bool ok = true;
    std::string error;
};

/// Parses `start:stop:step`, start inclusive and stop exclusive.
inline std::vector<double> parse_grid(const std::string& spec) {
    const auto a = spec.find(':');
    const auto b = a == std::string::npos ? std::string::npos : spec.find(':', a + 1);
    if (b == std::string::npos) throw ConfigError("grid must look like start:stop:step, got '" + spec + "'");
    double start, stop, step;
    try {
        start = std::stod(spec.substr(0, a));
        stop = std::stod(spec.substr(a + 1, b - a - 1));
        step = std::stod(spec.substr(b + 1));
    } catch (const std::exception&) {
        throw ConfigError("grid values are not numbers: '" + spec + "'");
    }
    if (!(step > 0.0)) throw ConfigError("grid step must be positive");
    std::vector<double> out;
    // index arithmetic avoids accumulating rounding error
    for (std::size_t i = 0;; ++i) {
        const double v = start + static_cast<double>(i) * step;
        if (v >= stop - 1e-9 * step) break;
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("grid '" + spec + "' is empty");
    for (double c : out)
        if (!(c > 0.0)) throw ConfigError("grid values must be positive curvatures");
    return out;
}

/// One fixed-curvature training run per grid value; cell i uses seed + i.
/// A diverging cell is recorded and the sweep continues.
inline std::vector<SweepRow> sweep_curvature(const std::vector<double>& grid, const HeteroGraph& g,
                                             const InstanceSet& instances, ModelConfig cfg, const TrainConfig& tc,
                                             std::size_t threads = 1) {
    if (grid.empty()) throw ConfigError("sweep_curvature: empty grid");
    std::vector<SweepRow> rows(grid.size());
    auto cell = [&](std::size_t i) {
        SweepRow& row = rows[i];
        row.curvature = grid[i];
        ModelConfig mc = cfg;
        mc.curvature_mode = CurvatureMode::Fixed;
        mc.curvature = grid[i];
        TrainConfig t = tc;
        t.seed = tc.seed + i;
        try {
            TrainResult r = train(g, instances, mc, t);
            row.macro_f1 = r.report.macro_f1;
            row.micro_f1 = r.report.micro_f1;
            row.nmi = r.report.nmi;
            row.ari = r.report.ari;
            row.best_epoch = r.report.best_epoch;
        } catch (const DivergenceError& e) {
            row.ok = false;
            row.error = e.what();
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, grid.size()));
    if (threads == 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) cell(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < grid.size();) cell(i);
            });
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Whole-model gradient check

struct ParamGradError {
    std::string name;
    double max_rel_error = 0.0;
};

struct ModelGradCheck {
    std::vector<ParamGradError> per_param;
    double max_rel_error = 0.0;
    bool kink_detected = false;
    int retries = 0;
};

/// Checks d loss / d parameter for every parameter against central differences.
/// The loss is the training-mode cross-entropy over `nodes` with a fixed dropout seed.
inline ModelGradCheck model_grad_check(const HeteroGraph& g, const InstanceSet& instances, ModelParams& params,
                                       const ModelConfig& cfg, const std::vector<NodeId>& nodes,
                                       std::uint64_t dropout_seed = 1, const ad::GradCheckOptions& opt = {}) {
    auto plist = params.all();
    Vec flat;
    for (auto* p : plist) flat.insert(flat.end(), p->value.begin(), p->value.end());
    const Vec original = flat;

    auto load = [&](std::span<const double> x) {
        std::size_t off = 0;
        for (auto* p : plist) {
            std::copy(x.begin() + static_cast<std::ptrdiff_t>(off),
                      x.begin() + static_cast<std::ptrdiff_t>(off + p->size()), p->value.begin());
            off += p->size();
        }
    };
    ad::ScalarFn f = [&](std::span<const double> x, std::span<double> grad) {
        load(x);
        params.zero_grad();
        ad::Tape tape;
        ForwardResult fr = forward(tape, g, instances, params, cfg, nodes, {Mode::Train, dropout_seed});
        ad::Var loss = cross_entropy(fr, g.labels);
        if (!grad.empty()) {
            tape.backward(loss);
            std::size_t off = 0;
            for (auto* p : plist) {
                std::copy(p->grad.begin(), p->grad.end(), grad.begin() + static_cast<std::ptrdiff_t>(off));
                off += p->size();
            }
        }
        return loss.scalar();
    };
    const ad::GradCheckResult r = ad::grad_check(f, flat, opt);
    load(original);

    ModelGradCheck out;
    out.max_rel_error = r.max_rel_error;
    out.kink_detected = r.kink_detected;
    out.retries = r.retries;
    std::size_t off = 0;
    for (auto* p : plist) {
        double m = 0.0;
        for (std::size_t i = 0; i < p->size(); ++i) m = std::max(m, r.rel_errors[off + i]);
        out.per_param.push_back({p->name, m});
        off += p->size();
    }
    return out;
}

}  // namespace hhgat
