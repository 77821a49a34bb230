#pragma once

// Classification and clustering quality measures, plus k-means for clustering
// learned embeddings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace hhgat {

struct F1Scores {
    double macro = 0.0;
    double micro = 0.0;
};

/// Macro-F1 averages per-class F1 over all `num_classes` classes (a class that is
/// neither predicted nor present scores 0). Micro-F1 equals accuracy here.
inline F1Scores f1_scores(const std::vector<int>& pred, const std::vector<int>& truth, std::size_t num_classes) {
    if (pred.size() != truth.size() || pred.empty())
        throw StructuralError("f1_scores: prediction and truth must be non-empty and of equal length");
    std::vector<double> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto p = static_cast<std::size_t>(pred[i]);
        const auto t = static_cast<std::size_t>(truth[i]);
        if (p >= num_classes || t >= num_classes) throw StructuralError("f1_scores: class id out of range");
        if (p == t) {
            ++tp[p];
            ++correct;
        } else {
            ++fp[p];
            ++fn[t];
        }
    }
    double macro = 0.0;
    for (std::size_t k = 0; k < num_classes; ++k) {
        const double denom = 2 * tp[k] + fp[k] + fn[k];
        macro += denom > 0 ? 2 * tp[k] / denom : 0.0;
    }
    return {macro / static_cast<double>(num_classes),
            static_cast<double>(correct) / static_cast<double>(pred.size())};
}

namespace detail {

struct Contingency {
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> rows;
    std::map<int, double> cols;
    double n = 0;
};

inline Contingency contingency(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw StructuralError("partition lengths differ");
    Contingency t;
    for (std::size_t i = 0; i < a.size(); ++i) {
        t.joint[{a[i], b[i]}] += 1;
        t.rows[a[i]] += 1;
        t.cols[b[i]] += 1;
    }
    t.n = static_cast<double>(a.size());
    return t;
}

inline double entropy(const std::map<int, double>& counts, double n) {
    double h = 0.0;
    for (const auto& [_, c] : counts) h -= (c / n) * std::log(c / n);
    return h;
}

}  // namespace detail

/// Mutual information over the arithmetic mean of the two entropies.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
    const auto t = detail::contingency(a, b);
    if (t.n == 0) return 1.0;
    const double ha = detail::entropy(t.rows, t.n);
    const double hb = detail::entropy(t.cols, t.n);
    if (ha == 0.0 || hb == 0.0) return (ha == 0.0 && hb == 0.0) ? 1.0 : 0.0;
    double mi = 0.0;
    for (const auto& [key, nij] : t.joint) {
        const double pij = nij / t.n;
        mi += pij * std::log(nij * t.n / (t.rows.at(key.first) * t.cols.at(key.second)));
    }
    return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

/// Adjusted Rand index from pair counts.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
    const auto t = detail::contingency(a, b);
    auto pairs = [](double x) { return x * (x - 1) / 2; };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (const auto& [_, c] : t.joint) sum_ij += pairs(c);
    for (const auto& [_, c] : t.rows) sum_a += pairs(c);
    for (const auto& [_, c] : t.cols) sum_b += pairs(c);
    const double total = pairs(t.n);
    if (total == 0) return 1.0;
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

struct KMeansResult {
    std::vector<int> assignment;
    std::vector<Vec> centers;
    double inertia = 0.0;
};

namespace detail {

inline double sq_dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

inline KMeansResult lloyd(const std::vector<Vec>& pts, std::size_t k, std::mt19937_64& rng, int max_iter) {
    const std::size_t n = pts.size();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // k-means++ seeding
    std::vector<Vec> centers;
    centers.push_back(pts[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(pts[i], centers.back()));
            total += d2[i];
        }
        std::size_t pick = n - 1;
        if (total > 0.0) {
            double r = unit(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        centers.push_back(pts[pick]);
    }
    KMeansResult res;
    res.assignment.assign(n, -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = sq_dist(pts[i], centers[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = sq_dist(pts[i], centers[c]);
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(c);
                }
            }
            if (res.assignment[i] != best) {
                res.assignment[i] = best;
                changed = true;
            }
        }
        std::vector<Vec> sums(k, Vec(pts[0].size(), 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            axpy(1.0, pts[i], sums[res.assignment[i]]);
            ++counts[res.assignment[i]];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
            else
                sums[c] = centers[c];
        centers = std::move(sums);
        if (!changed) break;
    }
    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) res.inertia += sq_dist(pts[i], centers[res.assignment[i]]);
    res.centers = std::move(centers);
    return res;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia.
inline KMeansResult kmeans(const std::vector<Vec>& points, std::size_t k, std::uint64_t seed, int restarts = 10,
                           int max_iter = 300) {
    if (k == 0 || k > points.size())
        throw StructuralError("kmeans: k = " + std::to_string(k) + " but there are " +
                              std::to_string(points.size()) + " points");
    std::mt19937_64 rng(seed);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, restarts); ++r) {
        KMeansResult res = detail::lloyd(points, k, rng, max_iter);
        if (res.inertia < best.inertia) best = std::move(res);
    }
    return best;
}

}  // namespace hhgat
