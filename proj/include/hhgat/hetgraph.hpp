#pragma once

// Heterogeneous graph model, the on-disk dataset directory format, and
// synthetic generators used for desk-scale experiments.
//
// Dataset directory layout:
//   meta.json     {"node_types": [...], "link_types": [[src, dst], ...],
//                  "target_type": name, "feature_dim": d, "num_classes": C}
//   nodes.tsv     node_id <TAB> type_name
//   links.tsv     src_id <TAB> dst_id <TAB> link_type_index
//   features.tsv  node_id <TAB> v1 ... vd
//   labels.tsv    node_id <TAB> class_index
//   split.json    {"train": [...], "valid": [...], "test": [...]}

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "linalg.hpp"

namespace hhgat {

using NodeId = std::int64_t;
using NodeTypeId = std::uint32_t;
using LinkTypeId = std::uint32_t;

struct LinkType {
    NodeTypeId src = 0;
    NodeTypeId dst = 0;
    friend bool operator==(const LinkType&, const LinkType&) = default;
};

struct Link {
    NodeId src = 0;
    NodeId dst = 0;
    LinkTypeId type = 0;
    friend bool operator==(const Link&, const Link&) = default;
};

struct Split {
    std::vector<NodeId> train;
    std::vector<NodeId> valid;
    std::vector<NodeId> test;
    friend bool operator==(const Split&, const Split&) = default;
};

/// Type-level adjacency induced by the link types (undirected).
class SchemaGraph {
public:
    SchemaGraph() = default;
    SchemaGraph(std::size_t num_types, const std::vector<LinkType>& links) : adj_(num_types) {
        for (const LinkType& lt : links) {
            if (lt.src >= num_types || lt.dst >= num_types) continue;
            adj_[lt.src].insert(lt.dst);
            adj_[lt.dst].insert(lt.src);
        }
    }

    std::size_t num_types() const noexcept { return adj_.size(); }
    const std::set<NodeTypeId>& neighbors(NodeTypeId t) const { return adj_.at(t); }
    bool adjacent(NodeTypeId a, NodeTypeId b) const { return adj_.at(a).contains(b); }

private:
    std::vector<std::set<NodeTypeId>> adj_;
};

/// Typed nodes, undirected typed links, dense feature rows, labels and split.
///
/// The add_* methods only record data; `validate` reports semantic problems and
/// `finalize` builds the neighbor index used by traversal.
class HeteroGraph {
public:
    std::vector<std::string> node_type_names;
    std::vector<LinkType> link_types;
    NodeTypeId target_type = 0;
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::map<NodeId, int> labels;
    Split split;

    void add_node(NodeId id, NodeTypeId type) {
        if (index_.contains(id)) throw StructuralError("duplicate node id " + std::to_string(id));
        index_.emplace(id, ids_.size());
        ids_.push_back(id);
        types_.push_back(type);
        features_.emplace_back();
        finalized_ = false;
    }

    void add_link(NodeId src, NodeId dst, LinkTypeId type) {
        links_.push_back({src, dst, type});
        finalized_ = false;
    }

    void set_features(NodeId id, Vec row) { features_.at(index_of(id)) = std::move(row); }

    std::size_t num_nodes() const noexcept { return ids_.size(); }
    const std::vector<NodeId>& node_ids() const noexcept { return ids_; }
    const std::vector<Link>& links() const noexcept { return links_; }
    bool has_node(NodeId id) const { return index_.contains(id); }

    std::size_t index_of(NodeId id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw StructuralError("unknown node id " + std::to_string(id));
        return it->second;
    }
    NodeTypeId type_of(NodeId id) const { return types_[index_of(id)]; }
    const Vec& features(NodeId id) const { return features_[index_of(id)]; }

    SchemaGraph schema() const { return SchemaGraph(node_type_names.size(), link_types); }

    std::size_t count_nodes_of_type(NodeTypeId t) const {
        return static_cast<std::size_t>(std::count(types_.begin(), types_.end(), t));
    }

    std::size_t count_links_of_type(LinkTypeId t) const {
        return static_cast<std::size_t>(std::count_if(links_.begin(), links_.end(),
                                                      [t](const Link& l) { return l.type == t; }));
    }

    /// Labeled nodes of the target type, ascending by id.
    std::vector<NodeId> labeled_nodes() const {
        std::vector<NodeId> out;
        for (const auto& [id, _] : labels) out.push_back(id);
        return out;
    }

    /// Builds sorted, duplicate-free neighbor lists over both link directions.
    void finalize() {
        neighbors_.assign(ids_.size(), {});
        for (const Link& l : links_) {
            auto a = index_.find(l.src);
            auto b = index_.find(l.dst);
            if (a == index_.end() || b == index_.end()) continue;
            neighbors_[a->second].push_back(l.dst);
            if (l.src != l.dst) neighbors_[b->second].push_back(l.src);
        }
        for (auto& n : neighbors_) {
            std::sort(n.begin(), n.end());
            n.erase(std::unique(n.begin(), n.end()), n.end());
        }
        finalized_ = true;
    }

    bool finalized() const noexcept { return finalized_; }

    const std::vector<NodeId>& neighbors(NodeId id) const {
        if (!finalized_) throw StructuralError("HeteroGraph::neighbors called before finalize()");
        return neighbors_[index_of(id)];
    }

private:
    std::vector<NodeId> ids_;
    std::vector<NodeTypeId> types_;
    std::vector<Vec> features_;
    std::vector<Link> links_;
    std::unordered_map<NodeId, std::size_t> index_;
    std::vector<std::vector<NodeId>> neighbors_;
    bool finalized_ = false;
};

/// Lists every broken invariant; empty when the graph is well formed.
inline std::vector<std::string> validate(const HeteroGraph& g) {
    std::vector<std::string> out;
    const std::size_t ntypes = g.node_type_names.size();
    if (g.target_type >= ntypes)
        out.push_back("target type " + std::to_string(g.target_type) + " is not a declared node type");
    for (std::size_t i = 0; i < g.link_types.size(); ++i) {
        const LinkType& lt = g.link_types[i];
        if (lt.src >= ntypes || lt.dst >= ntypes)
            out.push_back("link type " + std::to_string(i) + " references an undeclared node type");
    }
    for (NodeId id : g.node_ids()) {
        if (g.type_of(id) >= ntypes)
            out.push_back("node " + std::to_string(id) + " has undeclared type " + std::to_string(g.type_of(id)));
        if (g.features(id).size() != g.feature_dim)
            out.push_back("node " + std::to_string(id) + " has a feature row of length " +
                          std::to_string(g.features(id).size()) + ", expected " + std::to_string(g.feature_dim));
    }
    for (std::size_t i = 0; i < g.links().size(); ++i) {
        const Link& l = g.links()[i];
        const std::string tag = "link " + std::to_string(i) + " (" + std::to_string(l.src) + "-" +
                                std::to_string(l.dst) + ")";
        if (!g.has_node(l.src) || !g.has_node(l.dst)) {
            out.push_back(tag + " references an unknown node");
            continue;
        }
        if (l.type >= g.link_types.size()) {
            out.push_back(tag + " has undeclared link type " + std::to_string(l.type));
            continue;
        }
        const LinkType& lt = g.link_types[l.type];
        const NodeTypeId a = g.type_of(l.src), b = g.type_of(l.dst);
        if (!((a == lt.src && b == lt.dst) || (a == lt.dst && b == lt.src)))
            out.push_back(tag + " endpoint types do not match link type " + std::to_string(l.type));
    }
    for (const auto& [id, cls] : g.labels) {
        if (!g.has_node(id)) {
            out.push_back("labeled node " + std::to_string(id) + " does not exist");
            continue;
        }
        if (g.type_of(id) != g.target_type)
            out.push_back("labeled node " + std::to_string(id) + " is not of the target type");
        if (cls < 0 || static_cast<std::size_t>(cls) >= g.num_classes)
            out.push_back("labeled node " + std::to_string(id) + " has class " + std::to_string(cls) +
                          " outside [0, " + std::to_string(g.num_classes) + ")");
    }
    const std::pair<const char*, const std::vector<NodeId>*> parts[] = {
        {"train", &g.split.train}, {"valid", &g.split.valid}, {"test", &g.split.test}};
    std::map<NodeId, std::string> seen;
    for (const auto& [name, ids] : parts) {
        for (NodeId id : *ids) {
            if (!g.labels.contains(id))
                out.push_back(std::string(name) + " node " + std::to_string(id) + " is not labeled");
            auto [it, fresh] = seen.emplace(id, name);
            if (!fresh)
                out.push_back("node " + std::to_string(id) + " appears in both " + it->second + " and " + name);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset directory I/O

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
T parse_number(std::string_view s, const std::string& file, std::size_t line, const char* what) {
    T value{};
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc() || ptr != end || s.empty())
        throw DataError(file, line, std::string("malformed ") + what + " '" + std::string(s) + "'");
    return value;
}

/// Calls fn(fields, line_number) for each non-empty line.
template <class Fn>
void for_each_row(const std::filesystem::path& path, Fn fn) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string(), 0, "cannot open file");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        fn(split_tabs(line), lineno);
    }
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string(), 0, "cannot open file");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string(), 0, std::string("invalid JSON: ") + e.what());
    }
}

inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Reads and validates a dataset directory. Errors name the file and line.
inline HeteroGraph load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    for (const char* name : {"meta.json", "nodes.tsv", "links.tsv", "features.tsv", "labels.tsv", "split.json"})
        if (!fs::exists(dir / name)) throw DataError((dir / name).string(), 0, "missing dataset file");

    HeteroGraph g;
    const std::string meta_path = (dir / "meta.json").string();
    std::map<std::string, NodeTypeId> type_ids;
    try {
        const nlohmann::json meta = detail::read_json(dir / "meta.json");
        for (const auto& name : meta.at("node_types")) {
            const auto s = name.get<std::string>();
            if (type_ids.contains(s)) throw DataError(meta_path, 0, "duplicate node type '" + s + "'");
            type_ids.emplace(s, static_cast<NodeTypeId>(g.node_type_names.size()));
            g.node_type_names.push_back(s);
        }
        for (const auto& pair : meta.at("link_types")) {
            const auto a = pair.at(0).get<std::string>();
            const auto b = pair.at(1).get<std::string>();
            if (!type_ids.contains(a) || !type_ids.contains(b))
                throw DataError(meta_path, 0, "link type [" + a + ", " + b + "] uses an undeclared node type");
            g.link_types.push_back({type_ids.at(a), type_ids.at(b)});
        }
        const auto target = meta.at("target_type").get<std::string>();
        if (!type_ids.contains(target)) throw DataError(meta_path, 0, "unknown target_type '" + target + "'");
        g.target_type = type_ids.at(target);
        g.feature_dim = meta.at("feature_dim").get<std::size_t>();
        g.num_classes = meta.at("num_classes").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(meta_path, 0, std::string("bad meta.json: ") + e.what());
    }

    const std::string nodes_path = (dir / "nodes.tsv").string();
    detail::for_each_row(dir / "nodes.tsv", [&](const auto& f, std::size_t line) {
        if (f.size() != 2) throw DataError(nodes_path, line, "expected 2 fields, got " + std::to_string(f.size()));
        const auto id = detail::parse_number<NodeId>(f[0], nodes_path, line, "node id");
        if (id < 0) throw DataError(nodes_path, line, "node ids must be nonnegative");
        auto t = type_ids.find(std::string(f[1]));
        if (t == type_ids.end()) throw DataError(nodes_path, line, "unknown node type '" + std::string(f[1]) + "'");
        if (g.has_node(id)) throw DataError(nodes_path, line, "duplicate node id " + std::to_string(id));
        g.add_node(id, t->second);
    });

    const std::string links_path = (dir / "links.tsv").string();
    detail::for_each_row(dir / "links.tsv", [&](const auto& f, std::size_t line) {
        if (f.size() != 3) throw DataError(links_path, line, "expected 3 fields, got " + std::to_string(f.size()));
        const auto src = detail::parse_number<NodeId>(f[0], links_path, line, "source id");
        const auto dst = detail::parse_number<NodeId>(f[1], links_path, line, "target id");
        const auto lt = detail::parse_number<LinkTypeId>(f[2], links_path, line, "link type");
        if (!g.has_node(src)) throw DataError(links_path, line, "unknown node id " + std::to_string(src));
        if (!g.has_node(dst)) throw DataError(links_path, line, "unknown node id " + std::to_string(dst));
        if (lt >= g.link_types.size())
            throw DataError(links_path, line, "link type index " + std::to_string(lt) + " out of range");
        const LinkType& spec = g.link_types[lt];
        const NodeTypeId a = g.type_of(src), b = g.type_of(dst);
        if (!((a == spec.src && b == spec.dst) || (a == spec.dst && b == spec.src)))
            throw DataError(links_path, line, "endpoint types do not match link type " + std::to_string(lt));
        g.add_link(src, dst, lt);
    });

    const std::string feat_path = (dir / "features.tsv").string();
    std::set<NodeId> with_features;
    detail::for_each_row(dir / "features.tsv", [&](const auto& f, std::size_t line) {
        if (f.size() != g.feature_dim + 1)
            throw DataError(feat_path, line, "expected " + std::to_string(g.feature_dim + 1) + " fields, got " +
                                                 std::to_string(f.size()));
        const auto id = detail::parse_number<NodeId>(f[0], feat_path, line, "node id");
        if (!g.has_node(id)) throw DataError(feat_path, line, "unknown node id " + std::to_string(id));
        if (!with_features.insert(id).second)
            throw DataError(feat_path, line, "second feature row for node " + std::to_string(id));
        Vec row(g.feature_dim);
        for (std::size_t i = 0; i < g.feature_dim; ++i)
            row[i] = detail::parse_number<double>(f[i + 1], feat_path, line, "feature value");
        g.set_features(id, std::move(row));
    });
    if (with_features.size() != g.num_nodes()) {
        for (NodeId id : g.node_ids())
            if (!with_features.contains(id))
                throw DataError(feat_path, 0, "node " + std::to_string(id) + " has no feature row");
    }

    const std::string labels_path = (dir / "labels.tsv").string();
    detail::for_each_row(dir / "labels.tsv", [&](const auto& f, std::size_t line) {
        if (f.size() != 2) throw DataError(labels_path, line, "expected 2 fields, got " + std::to_string(f.size()));
        const auto id = detail::parse_number<NodeId>(f[0], labels_path, line, "node id");
        const auto cls = detail::parse_number<int>(f[1], labels_path, line, "class index");
        if (!g.has_node(id)) throw DataError(labels_path, line, "unknown node id " + std::to_string(id));
        if (g.type_of(id) != g.target_type)
            throw DataError(labels_path, line, "node " + std::to_string(id) + " is not of the target type");
        if (cls < 0 || static_cast<std::size_t>(cls) >= g.num_classes)
            throw DataError(labels_path, line, "class index " + std::to_string(cls) + " out of range");
        if (!g.labels.emplace(id, cls).second)
            throw DataError(labels_path, line, "duplicate label for node " + std::to_string(id));
    });

    const std::string split_path = (dir / "split.json").string();
    try {
        const nlohmann::json sj = detail::read_json(dir / "split.json");
        g.split.train = sj.at("train").get<std::vector<NodeId>>();
        g.split.valid = sj.at("valid").get<std::vector<NodeId>>();
        g.split.test = sj.at("test").get<std::vector<NodeId>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(split_path, 0, std::string("bad split.json: ") + e.what());
    }
    std::sort(g.split.train.begin(), g.split.train.end());
    std::sort(g.split.valid.begin(), g.split.valid.end());
    std::sort(g.split.test.begin(), g.split.test.end());

    if (auto problems = validate(g); !problems.empty()) throw DataError(split_path, 0, problems.front());
    g.finalize();
    return g;
}

/// Replaces only split.json-equivalent data on an already loaded graph.
inline void load_split(HeteroGraph& g, const std::filesystem::path& split_json) {
    const nlohmann::json sj = detail::read_json(split_json);
    try {
        g.split.train = sj.at("train").get<std::vector<NodeId>>();
        g.split.valid = sj.at("valid").get<std::vector<NodeId>>();
        g.split.test = sj.at("test").get<std::vector<NodeId>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(split_json.string(), 0, std::string("bad split.json: ") + e.what());
    }
    std::sort(g.split.train.begin(), g.split.train.end());
    std::sort(g.split.valid.begin(), g.split.valid.end());
    std::sort(g.split.test.begin(), g.split.test.end());
    if (auto problems = validate(g); !problems.empty()) throw DataError(split_json.string(), 0, problems.front());
}

inline void write_dataset(const HeteroGraph& g, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json meta;
    meta["node_types"] = g.node_type_names;
    meta["link_types"] = nlohmann::json::array();
    for (const LinkType& lt : g.link_types)
        meta["link_types"].push_back({g.node_type_names.at(lt.src), g.node_type_names.at(lt.dst)});
    meta["target_type"] = g.node_type_names.at(g.target_type);
    meta["feature_dim"] = g.feature_dim;
    meta["num_classes"] = g.num_classes;
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';

    std::ofstream nodes(dir / "nodes.tsv");
    std::ofstream feats(dir / "features.tsv");
    for (NodeId id : g.node_ids()) {
        nodes << id << '\t' << g.node_type_names.at(g.type_of(id)) << '\n';
        feats << id;
        for (double v : g.features(id)) feats << '\t' << detail::format_double(v);
        feats << '\n';
    }
    std::ofstream links(dir / "links.tsv");
    for (const Link& l : g.links()) links << l.src << '\t' << l.dst << '\t' << l.type << '\n';
    std::ofstream labels(dir / "labels.tsv");
    for (const auto& [id, cls] : g.labels) labels << id << '\t' << cls << '\n';
    nlohmann::json sj;
    sj["train"] = g.split.train;
    sj["valid"] = g.split.valid;
    sj["test"] = g.split.test;
    std::ofstream(dir / "split.json") << sj.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic graphs

struct SyntheticSpec {
    std::uint64_t seed = 7;
    std::size_t classes = 3;
    std::size_t per_class = 100;
    std::size_t aux_types = 2;
    std::size_t feature_dim = 16;
    double noise = 0.1;
    /// Auxiliary nodes of each type reserved for each class.
    std::size_t aux_per_class = 20;
    /// Links from each target node into each auxiliary type.
    std::size_t links_per_type = 3;
};

/// Planted-community graph. Target nodes (type "T", ids first) link mostly to
/// auxiliary nodes reserved for their own class; with probability `noise` a link
/// goes to a uniformly random auxiliary node instead. Features are the class mean
/// plus `noise`-scaled Gaussian noise. Split is 40/20/40 per class.
inline HeteroGraph make_synthetic(const SyntheticSpec& spec) {
    if (spec.classes == 0 || spec.per_class == 0 || spec.feature_dim == 0 || spec.aux_per_class == 0)
        throw StructuralError("make_synthetic: sizes must be positive");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    HeteroGraph g;
    g.node_type_names.push_back("T");
    for (std::size_t t = 0; t < spec.aux_types; ++t) {
        g.node_type_names.push_back("A" + std::to_string(t));
        g.link_types.push_back({0, static_cast<NodeTypeId>(t + 1)});
    }
    g.target_type = 0;
    g.feature_dim = spec.feature_dim;
    g.num_classes = spec.classes;

    // Class means on a sphere of radius 0.5 so concatenated instances stay well inside the ball.
    std::vector<Vec> means(spec.classes, Vec(spec.feature_dim));
    for (auto& m : means) {
        for (double& v : m) v = gauss(rng);
        const double n = norm(m);
        for (double& v : m) v *= 0.5 / n;
    }
    auto feature = [&](std::size_t cls) {
        Vec row = means[cls];
        if (spec.noise > 0.0)
            for (double& v : row) v += spec.noise * gauss(rng) / std::sqrt(static_cast<double>(spec.feature_dim));
        return row;
    };

    NodeId next = 0;
    std::vector<std::vector<NodeId>> by_class(spec.classes);
    for (std::size_t cls = 0; cls < spec.classes; ++cls) {
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            g.add_node(next, 0);
            g.set_features(next, feature(cls));
            g.labels.emplace(next, static_cast<int>(cls));
            by_class[cls].push_back(next);
            ++next;
        }
    }
    // aux[t][cls] = ids of type-t auxiliary nodes reserved for class cls
    std::vector<std::vector<std::vector<NodeId>>> aux(spec.aux_types, std::vector<std::vector<NodeId>>(spec.classes));
    for (std::size_t t = 0; t < spec.aux_types; ++t) {
        for (std::size_t cls = 0; cls < spec.classes; ++cls) {
            for (std::size_t i = 0; i < spec.aux_per_class; ++i) {
                g.add_node(next, static_cast<NodeTypeId>(t + 1));
                g.set_features(next, feature(cls));
                aux[t][cls].push_back(next);
                ++next;
            }
        }
    }
    const std::size_t total_aux = spec.classes * spec.aux_per_class;
    for (std::size_t cls = 0; cls < spec.classes; ++cls) {
        for (NodeId v : by_class[cls]) {
            for (std::size_t t = 0; t < spec.aux_types; ++t) {
                std::set<NodeId> chosen;
                while (chosen.size() < std::min(spec.links_per_type, total_aux)) {
                    NodeId a;
                    if (unit(rng) < spec.noise) {
                        const std::size_t k = static_cast<std::size_t>(unit(rng) * static_cast<double>(total_aux)) % total_aux;
                        a = aux[t][k / spec.aux_per_class][k % spec.aux_per_class];
                    } else {
                        const std::size_t k = static_cast<std::size_t>(unit(rng) * static_cast<double>(spec.aux_per_class)) % spec.aux_per_class;
                        a = aux[t][cls][k];
                    }
                    chosen.insert(a);
                }
                for (NodeId a : chosen) g.add_link(v, a, static_cast<LinkTypeId>(t));
            }
        }
    }
    for (std::size_t cls = 0; cls < spec.classes; ++cls) {
        std::vector<NodeId> ids = by_class[cls];
        std::shuffle(ids.begin(), ids.end(), rng);
        const std::size_t n_train = ids.size() * 2 / 5;
        const std::size_t n_valid = ids.size() / 5;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            auto& part = i < n_train ? g.split.train : (i < n_train + n_valid ? g.split.valid : g.split.test);
            part.push_back(ids[i]);
        }
    }
    std::sort(g.split.train.begin(), g.split.train.end());
    std::sort(g.split.valid.begin(), g.split.valid.end());
    std::sort(g.split.test.begin(), g.split.test.end());
    g.finalize();
    return g;
}

struct PowerLawSpec {
    std::uint64_t seed = 11;
    std::size_t targets = 600;
    std::size_t aux = 150;
    std::size_t links_per_target = 2;
    std::size_t feature_dim = 4;
    std::size_t classes = 2;
};

/// Bipartite preferential attachment: each target node links to auxiliary nodes
/// chosen with probability proportional to (degree + 1), so auxiliary degrees and
/// per-target T-A-T instance counts are heavy tailed.
inline HeteroGraph make_powerlaw(const PowerLawSpec& spec) {
    if (spec.targets == 0 || spec.aux == 0 || spec.classes == 0) throw StructuralError("make_powerlaw: sizes must be positive");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 0.1);
    HeteroGraph g;
    g.node_type_names = {"T", "A"};
    g.link_types = {{0, 1}};
    g.target_type = 0;
    g.feature_dim = spec.feature_dim;
    g.num_classes = spec.classes;
    auto row = [&] {
        Vec r(spec.feature_dim);
        for (double& v : r) v = gauss(rng);
        return r;
    };
    const NodeId aux0 = static_cast<NodeId>(spec.targets);
    for (std::size_t a = 0; a < spec.aux; ++a) {
        g.add_node(aux0 + static_cast<NodeId>(a), 1);
        g.set_features(aux0 + static_cast<NodeId>(a), row());
    }
    // urn holds one ticket per aux node plus one per incident link
    std::vector<NodeId> urn;
    for (std::size_t a = 0; a < spec.aux; ++a) urn.push_back(aux0 + static_cast<NodeId>(a));
    for (std::size_t t = 0; t < spec.targets; ++t) {
        const NodeId v = static_cast<NodeId>(t);
        g.add_node(v, 0);
        g.set_features(v, row());
        g.labels.emplace(v, static_cast<int>(t % spec.classes));
        std::set<NodeId> chosen;
        while (chosen.size() < std::min(spec.links_per_target, spec.aux)) {
            std::uniform_int_distribution<std::size_t> pick(0, urn.size() - 1);
            chosen.insert(urn[pick(rng)]);
        }
        for (NodeId a : chosen) {
            g.add_link(v, a, 0);
            urn.push_back(a);
        }
        (t % 5 < 3 ? g.split.train : (t % 5 == 3 ? g.split.valid : g.split.test)).push_back(v);
    }
    g.finalize();
    return g;
}

/// Three target nodes ("P", ids 0-2) and two auxiliary nodes ("A", ids 3-4):
/// P0-A3, P1-A3, P1-A4, P2-A4. Features are drawn uniformly from [-0.5, 0.5].
inline HeteroGraph make_toy_graph(std::size_t feature_dim = 5, std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    HeteroGraph g;
    g.node_type_names = {"P", "A"};
    g.link_types = {{0, 1}};
    g.target_type = 0;
    g.feature_dim = feature_dim;
    g.num_classes = 2;
    for (NodeId id = 0; id < 5; ++id) {
        g.add_node(id, id < 3 ? 0 : 1);
        Vec row(feature_dim);
        for (double& v : row) v = dist(rng);
        g.set_features(id, std::move(row));
    }
    g.add_link(0, 3, 0);
    g.add_link(1, 3, 0);
    g.add_link(1, 4, 0);
    g.add_link(2, 4, 0);
    g.labels = {{0, 0}, {1, 1}, {2, 0}};
    g.split = {{0, 1}, {2}, {}};
    g.finalize();
    return g;
}

}  // namespace hhgat
