#pragma once

// Metapath enumeration over the schema and breadth-first extraction of the
// metapath instances that start at each labeled target node.
//
// An instance may revisit nodes, but never steps straight back along the link
// it just used (node_seq[i + 1] != node_seq[i - 1]).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hetgraph.hpp"

namespace hhgat {

struct Metapath {
    std::vector<NodeTypeId> types;

    std::size_t length() const noexcept { return types.size(); }
    friend bool operator==(const Metapath&, const Metapath&) = default;
    friend auto operator<=>(const Metapath&, const Metapath&) = default;
};

inline std::string metapath_name(const Metapath& mp, const std::vector<std::string>& type_names) {
    std::string out;
    for (std::size_t i = 0; i < mp.types.size(); ++i) {
        if (i) out += '-';
        out += mp.types[i] < type_names.size() ? type_names[mp.types[i]] : std::to_string(mp.types[i]);
    }
    return out;
}

/// All schema walks of 1..max_len types starting at `target`, ordered by length
/// and then lexicographically by type id.
inline std::vector<Metapath> enumerate_metapaths(const SchemaGraph& schema, NodeTypeId target, std::size_t max_len,
                                                 bool include_trivial = true) {
    if (max_len < 1) throw StructuralError("enumerate_metapaths: max length must be at least 1");
    std::vector<Metapath> out;
    std::vector<Metapath> layer{{{target}}};
    for (std::size_t len = 1; len <= max_len && !layer.empty(); ++len) {
        for (const Metapath& mp : layer)
            if (len > 1 || include_trivial) out.push_back(mp);
        if (len == max_len) break;
        std::vector<Metapath> next;
        for (const Metapath& mp : layer) {
            for (NodeTypeId t : schema.neighbors(mp.types.back())) {
                Metapath ext = mp;
                ext.types.push_back(t);
                next.push_back(std::move(ext));
            }
        }
        std::sort(next.begin(), next.end());
        layer = std::move(next);
    }
    return out;
}

using InstancePath = std::vector<NodeId>;

/// Instances of one metapath for one node. `total` is the size of the full set
/// before capping; `paths` is the full set or a uniform subsample of it.
struct MetapathInstances {
    std::size_t metapath = 0;
    std::uint64_t total = 0;
    std::vector<InstancePath> paths;
    friend bool operator==(const MetapathInstances&, const MetapathInstances&) = default;
};

struct NodeInstances {
    NodeId node = 0;
    /// One entry per metapath index, in metapath order (including empty ones).
    std::vector<MetapathInstances> per_metapath;
    friend bool operator==(const NodeInstances&, const NodeInstances&) = default;
};

struct InstanceSet {
    std::vector<Metapath> metapaths;
    /// Sorted by node id.
    std::vector<NodeInstances> nodes;

    const NodeInstances* find(NodeId v) const {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), v,
                                   [](const NodeInstances& n, NodeId id) { return n.node < id; });
        return (it != nodes.end() && it->node == v) ? &*it : nullptr;
    }

    friend bool operator==(const InstanceSet&, const InstanceSet&) = default;
};

struct SamplerOptions {
    /// Maximum instances kept per (node, metapath).
    std::size_t cap = 128;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

inline constexpr std::size_t kUncapped = std::numeric_limits<std::size_t>::max();

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
    return a > std::numeric_limits<std::uint64_t>::max() - b ? std::numeric_limits<std::uint64_t>::max() : a + b;
}

/// Counts and unranks the non-backtracking walks that follow one metapath from
/// one start node. Walk order is lexicographic in node id, which is also the
/// order breadth-first expansion produces.
class WalkCounter {
public:
    WalkCounter(const HeteroGraph& g, const Metapath& mp) : g_(g), mp_(mp) {}

    std::uint64_t count(NodeId prev, NodeId cur, std::size_t depth) {
        if (depth + 1 == mp_.length()) return 1;
        const Key key{prev, cur, depth};
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        std::uint64_t total = 0;
        for (NodeId n : g_.neighbors(cur)) {
            if (!admissible(prev, n, depth)) continue;
            total = sat_add(total, count(cur, n, depth + 1));
        }
        memo_.emplace(key, total);
        return total;
    }

    InstancePath unrank(NodeId start, std::uint64_t index) {
        InstancePath path{start};
        NodeId prev = -1;
        NodeId cur = start;
        for (std::size_t depth = 0; depth + 1 < mp_.length(); ++depth) {
            for (NodeId n : g_.neighbors(cur)) {
                if (!admissible(prev, n, depth)) continue;
                const std::uint64_t c = count(cur, n, depth + 1);
                if (index < c) {
                    path.push_back(n);
                    prev = cur;
                    cur = n;
                    break;
                }
                index -= c;
            }
        }
        return path;
    }

private:
    bool admissible(NodeId prev, NodeId next, std::size_t depth) const {
        return next != prev && g_.type_of(next) == mp_.types[depth + 1];
    }

    struct Key {
        NodeId prev;
        NodeId cur;
        std::size_t depth;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            return splitmix64(static_cast<std::uint64_t>(k.prev) * 0x100000001b3ULL ^
                              static_cast<std::uint64_t>(k.cur) * 31 ^ k.depth);
        }
    };

    const HeteroGraph& g_;
    const Metapath& mp_;
    std::unordered_map<Key, std::uint64_t, KeyHash> memo_;
};

/// Layer-by-layer expansion of every walk following `mp` from `start`.
inline std::vector<InstancePath> bfs_instances(const HeteroGraph& g, const Metapath& mp, NodeId start) {
    std::vector<InstancePath> frontier{{start}};
    for (std::size_t depth = 0; depth + 1 < mp.length() && !frontier.empty(); ++depth) {
        std::vector<InstancePath> next;
        for (const InstancePath& p : frontier) {
            const NodeId prev = p.size() >= 2 ? p[p.size() - 2] : -1;
            for (NodeId n : g.neighbors(p.back())) {
                if (n == prev || g.type_of(n) != mp.types[depth + 1]) continue;
                InstancePath ext = p;
                ext.push_back(n);
                next.push_back(std::move(ext));
            }
        }
        frontier = std::move(next);
    }
    return frontier;
}

inline std::uint64_t metapath_seed(std::uint64_t seed, NodeId v, const Metapath& mp) {
    std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(v)));
    for (NodeTypeId t : mp.types) h = splitmix64(h ^ (t + 1));
    return h;
}

inline MetapathInstances sample_one(const HeteroGraph& g, const Metapath& mp, std::size_t index, NodeId v,
                                    const SamplerOptions& opt) {
    MetapathInstances out;
    out.metapath = index;
    if (mp.types.empty() || g.type_of(v) != mp.types[0]) return out;
    WalkCounter counter(g, mp);
    out.total = counter.count(-1, v, 0);
    if (out.total <= opt.cap) {
        out.paths = bfs_instances(g, mp, v);
        return out;
    }
    // Floyd's algorithm: `cap` distinct ranks drawn uniformly from [0, total).
    std::mt19937_64 rng(metapath_seed(opt.seed, v, mp));
    std::unordered_set<std::uint64_t> picked;
    std::vector<std::uint64_t> ranks;
    for (std::uint64_t j = out.total - opt.cap; j < out.total; ++j) {
        std::uniform_int_distribution<std::uint64_t> dist(0, j);
        std::uint64_t r = dist(rng);
        if (!picked.insert(r).second) {
            r = j;
            picked.insert(r);
        }
        ranks.push_back(r);
    }
    std::sort(ranks.begin(), ranks.end());
    for (std::uint64_t r : ranks) out.paths.push_back(counter.unrank(v, r));
    return out;
}

}  // namespace detail

/// Instances for every labeled target node and every metapath. Deterministic in
/// (graph, metapaths, cap, seed); the thread count does not change the result.
inline InstanceSet sample_instances(const HeteroGraph& g, const std::vector<Metapath>& metapaths,
                                    const SamplerOptions& opt = {}) {
    if (!g.finalized()) throw StructuralError("sample_instances: graph is not finalized");
    InstanceSet set;
    set.metapaths = metapaths;
    const std::vector<NodeId> targets = g.labeled_nodes();
    set.nodes.resize(targets.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            NodeInstances& ni = set.nodes[i];
            ni.node = targets[i];
            ni.per_metapath.reserve(metapaths.size());
            for (std::size_t k = 0; k < metapaths.size(); ++k)
                ni.per_metapath.push_back(detail::sample_one(g, metapaths[k], k, targets[i], opt));
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(opt.threads, targets.size()));
    if (threads == 1) {
        work(0, targets.size());
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (targets.size() + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk, e = std::min(targets.size(), b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Distribution statistics

struct MetapathStats {
    std::size_t metapath = 0;
    std::string name;
    /// instance count -> number of target nodes with that count (uncapped counts)
    std::map<std::uint64_t, std::size_t> frequency;
    std::size_t nodes = 0;
    double mean = 0.0;
    std::uint64_t max = 0;
    /// Log-log slope of the binned count distribution; absent for point masses.
    std::optional<double> slope;
};

struct InstanceStats {
    std::vector<MetapathStats> per_metapath;
    /// Distribution of per-node instance counts summed over metapaths of length >= 2.
    std::map<std::uint64_t, std::size_t> pooled_frequency;
    std::optional<double> pooled_slope;
};

/// Least-squares slope of log(density) against log(count) over logarithmic bins
/// [2^k, 2^(k+1)). Zero counts are ignored. Absent when fewer than two bins are occupied.
inline std::optional<double> loglog_slope(const std::map<std::uint64_t, std::size_t>& frequency) {
    std::map<int, double> bins;  // bin exponent -> number of nodes
    for (const auto& [count, freq] : frequency) {
        if (count == 0 || freq == 0) continue;
        int k = 0;
        while ((std::uint64_t{2} << k) <= count && k < 62) ++k;
        bins[k] += static_cast<double>(freq);
    }
    if (bins.size() < 2) return std::nullopt;
    std::vector<double> xs, ys;
    for (const auto& [k, n] : bins) {
        const double lo = std::ldexp(1.0, k);
        const double width = lo;  // [2^k, 2^(k+1))
        xs.push_back(std::log(lo * std::sqrt(2.0)));
        ys.push_back(std::log(n / width));
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) return std::nullopt;
    return (n * sxy - sx * sy) / denom;
}

inline InstanceStats instance_stats(const InstanceSet& set, const std::vector<std::string>& type_names = {}) {
    InstanceStats out;
    for (std::size_t k = 0; k < set.metapaths.size(); ++k) {
        MetapathStats ms;
        ms.metapath = k;
        ms.name = metapath_name(set.metapaths[k], type_names);
        double sum = 0.0;
        for (const NodeInstances& ni : set.nodes) {
            const std::uint64_t c = ni.per_metapath.at(k).total;
            ++ms.frequency[c];
            sum += static_cast<double>(c);
            ms.max = std::max(ms.max, c);
        }
        ms.nodes = set.nodes.size();
        ms.mean = ms.nodes ? sum / static_cast<double>(ms.nodes) : 0.0;
        ms.slope = loglog_slope(ms.frequency);
        out.per_metapath.push_back(std::move(ms));
    }
    for (const NodeInstances& ni : set.nodes) {
        std::uint64_t c = 0;
        for (const MetapathInstances& mi : ni.per_metapath)
            if (set.metapaths[mi.metapath].length() >= 2) c = detail::sat_add(c, mi.total);
        ++out.pooled_frequency[c];
    }
    out.pooled_slope = loglog_slope(out.pooled_frequency);
    return out;
}

}  // namespace hhgat
