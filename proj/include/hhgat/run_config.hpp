#pragma once

// JSON run configuration shared by the CLI subcommands.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "engine.hpp"
#include "hetgraph.hpp"
#include "model.hpp"
#include "sampler.hpp"

namespace hhgat {

struct SyntheticConfig {
    std::string kind = "planted";  // "planted" | "powerlaw"
    SyntheticSpec planted;
    PowerLawSpec powerlaw;
};

struct RunConfig {
    std::optional<std::string> dataset;
    std::optional<SyntheticConfig> synthetic;
    std::size_t max_metapath_length = 3;
    std::size_t hidden_dim = 64;
    std::size_t embed_dim = 64;
    double dropout = 0.5;
    double lr = 1e-4;
    double weight_decay = 1e-3;
    std::size_t epochs = 100;
    std::size_t patience = 20;
    std::uint64_t seed = 0;
    CurvatureMode curvature_mode = CurvatureMode::Learnable;
    double curvature = 1.0;
    std::size_t instance_cap = 128;
    bool include_trivial_path = true;
    std::string attention_activation = "relu";  // "relu" | "leaky_relu"
    std::size_t heads = 1;
    bool fuse_projection = true;

    TrainConfig train_config() const { return {epochs, patience, lr, weight_decay, seed}; }

    ModelConfig model_config(const HeteroGraph& g) const {
        ModelConfig mc;
        mc.input_dim = g.feature_dim;
        mc.hidden_dim = hidden_dim;
        mc.embed_dim = embed_dim;
        mc.num_classes = g.num_classes;
        mc.max_length = max_metapath_length;
        mc.dropout = dropout;
        mc.attention = attention_activation == "leaky_relu" ? geometry::Activation::leaky_relu(0.2)
                                                             : geometry::Activation::relu();
        mc.curvature_mode = curvature_mode;
        mc.curvature = curvature;
        mc.heads = heads;
        mc.fuse_projection = fuse_projection;
        return mc;
    }

    SamplerOptions sampler_options(std::size_t threads = 1) const {
        return {instance_cap == 0 ? kUncapped : instance_cap, derive_seed(seed, "sampler"), threads};
    }
};

namespace detail {

template <class T>
T get_key(const nlohmann::json& j, const std::string& key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + where + key + "' has the wrong type");
    }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config '" + where + "' must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
}

}  // namespace detail

inline SyntheticConfig parse_synthetic(const nlohmann::json& j) {
    detail::reject_unknown(j,
                           {"kind", "seed", "classes", "per_class", "aux_types", "feature_dim", "noise", "aux_per_class",
                            "links_per_type", "targets", "aux", "links_per_target"},
                           "synthetic.");
    SyntheticConfig s;
    if (j.contains("kind")) s.kind = detail::get_key<std::string>(j, "kind", "synthetic.");
    if (s.kind != "planted" && s.kind != "powerlaw")
        throw ConfigError("config key 'synthetic.kind' must be \"planted\" or \"powerlaw\"");
    auto num = [&](const char* key, auto& field) {
        if (j.contains(key)) field = detail::get_key<std::remove_reference_t<decltype(field)>>(j, key, "synthetic.");
    };
    num("seed", s.planted.seed);
    num("seed", s.powerlaw.seed);
    num("classes", s.planted.classes);
    num("classes", s.powerlaw.classes);
    num("per_class", s.planted.per_class);
    num("aux_types", s.planted.aux_types);
    num("feature_dim", s.planted.feature_dim);
    num("feature_dim", s.powerlaw.feature_dim);
    num("noise", s.planted.noise);
    num("aux_per_class", s.planted.aux_per_class);
    num("links_per_type", s.planted.links_per_type);
    num("targets", s.powerlaw.targets);
    num("aux", s.powerlaw.aux);
    num("links_per_target", s.powerlaw.links_per_target);
    if (s.planted.noise < 0.0) throw ConfigError("config key 'synthetic.noise' must be nonnegative");
    return s;
}

/// Parses the CLI form `key=value,key=value` into a synthetic config.
inline SyntheticConfig parse_synthetic_spec(const std::string& spec) {
    nlohmann::json j = nlohmann::json::object();
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("synthetic spec item '" + item + "' is not key=value");
        const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
        if (key == "kind") {
            j[key] = value;
            continue;
        }
        try {
            std::size_t used = 0;
            if (value.find_first_of(".eE") != std::string::npos) {
                j[key] = std::stod(value, &used);
            } else {
                j[key] = std::stoull(value, &used);
            }
            if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
            throw ConfigError("synthetic spec value for '" + key + "' is not a number: '" + value + "'");
        }
    }
    return parse_synthetic(j);
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
    detail::reject_unknown(j,
                           {"dataset", "synthetic", "max_metapath_length", "hidden_dim", "embed_dim", "dropout", "lr",
                            "weight_decay", "epochs", "patience", "seed", "curvature", "instance_cap",
                            "include_trivial_path", "attention_activation", "heads", "fuse_projection"},
                           "");
    RunConfig c;
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) field = detail::get_key<std::remove_reference_t<decltype(field)>>(j, key, "");
    };
    if (j.contains("dataset")) c.dataset = detail::get_key<std::string>(j, "dataset", "");
    if (j.contains("synthetic")) c.synthetic = parse_synthetic(j.at("synthetic"));
    opt("max_metapath_length", c.max_metapath_length);
    opt("hidden_dim", c.hidden_dim);
    opt("embed_dim", c.embed_dim);
    opt("dropout", c.dropout);
    opt("lr", c.lr);
    opt("weight_decay", c.weight_decay);
    opt("epochs", c.epochs);
    opt("patience", c.patience);
    opt("seed", c.seed);
    opt("instance_cap", c.instance_cap);
    opt("include_trivial_path", c.include_trivial_path);
    opt("attention_activation", c.attention_activation);
    opt("heads", c.heads);
    opt("fuse_projection", c.fuse_projection);
    if (j.contains("curvature")) {
        const auto& cj = j.at("curvature");
        detail::reject_unknown(cj, {"mode", "value"}, "curvature.");
        if (cj.contains("mode")) {
            const auto mode = detail::get_key<std::string>(cj, "mode", "curvature.");
            if (mode == "learnable") c.curvature_mode = CurvatureMode::Learnable;
            else if (mode == "fixed") c.curvature_mode = CurvatureMode::Fixed;
            else throw ConfigError("config key 'curvature.mode' must be \"learnable\" or \"fixed\"");
        }
        if (cj.contains("value")) c.curvature = detail::get_key<double>(cj, "value", "curvature.");
    }

    if (c.max_metapath_length < 1) throw ConfigError("config key 'max_metapath_length' must be at least 1");
    if (c.hidden_dim == 0) throw ConfigError("config key 'hidden_dim' must be positive");
    if (c.embed_dim == 0) throw ConfigError("config key 'embed_dim' must be positive");
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("config key 'dropout' must lie in [0, 1)");
    if (!(c.lr > 0.0)) throw ConfigError("config key 'lr' must be positive");
    if (c.weight_decay < 0.0) throw ConfigError("config key 'weight_decay' must be nonnegative");
    if (c.patience > c.epochs) throw ConfigError("config key 'patience' must not exceed 'epochs'");
    if (!(c.curvature > 0.0)) throw ConfigError("config key 'curvature.value' must be positive");
    if (c.attention_activation != "relu" && c.attention_activation != "leaky_relu")
        throw ConfigError("config key 'attention_activation' must be \"relu\" or \"leaky_relu\"");
    if (c.heads == 0) throw ConfigError("config key 'heads' must be positive");
    if (!c.fuse_projection && c.embed_dim != c.hidden_dim)
        throw ConfigError("config key 'fuse_projection' = false requires embed_dim == hidden_dim");
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

inline nlohmann::json to_json(const SyntheticConfig& s) {
    nlohmann::json j;
    j["kind"] = s.kind;
    if (s.kind == "powerlaw") {
        j["seed"] = s.powerlaw.seed;
        j["classes"] = s.powerlaw.classes;
        j["feature_dim"] = s.powerlaw.feature_dim;
        j["targets"] = s.powerlaw.targets;
        j["aux"] = s.powerlaw.aux;
        j["links_per_target"] = s.powerlaw.links_per_target;
    } else {
        j["seed"] = s.planted.seed;
        j["classes"] = s.planted.classes;
        j["per_class"] = s.planted.per_class;
        j["aux_types"] = s.planted.aux_types;
        j["feature_dim"] = s.planted.feature_dim;
        j["noise"] = s.planted.noise;
        j["aux_per_class"] = s.planted.aux_per_class;
        j["links_per_type"] = s.planted.links_per_type;
    }
    return j;
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    if (c.dataset) j["dataset"] = *c.dataset;
    if (c.synthetic) j["synthetic"] = to_json(*c.synthetic);
    j["max_metapath_length"] = c.max_metapath_length;
    j["hidden_dim"] = c.hidden_dim;
    j["embed_dim"] = c.embed_dim;
    j["dropout"] = c.dropout;
    j["lr"] = c.lr;
    j["weight_decay"] = c.weight_decay;
    j["epochs"] = c.epochs;
    j["patience"] = c.patience;
    j["seed"] = c.seed;
    j["curvature"] = {{"mode", c.curvature_mode == CurvatureMode::Fixed ? "fixed" : "learnable"},
                      {"value", c.curvature}};
    j["instance_cap"] = c.instance_cap;
    j["include_trivial_path"] = c.include_trivial_path;
    j["attention_activation"] = c.attention_activation;
    j["heads"] = c.heads;
    j["fuse_projection"] = c.fuse_projection;
    return j;
}

/// Loads or generates the graph a config points at.
inline HeteroGraph materialize_graph(const RunConfig& c) {
    if (c.dataset) return load_dataset(*c.dataset);
    if (c.synthetic) {
        return c.synthetic->kind == "powerlaw" ? make_powerlaw(c.synthetic->powerlaw)
                                               : make_synthetic(c.synthetic->planted);
    }
    throw ConfigError("config names neither 'dataset' nor 'synthetic'");
}

/// Metapaths and instances for a graph under a config.
inline InstanceSet sample_for(const HeteroGraph& g, const RunConfig& c, std::size_t threads = 1) {
    const auto paths = enumerate_metapaths(g.schema(), g.target_type, c.max_metapath_length, c.include_trivial_path);
    if (paths.empty()) throw ConfigError("no metapaths: enable include_trivial_path or raise max_metapath_length");
    return sample_instances(g, paths, c.sampler_options(threads));
}

}  // namespace hhgat
