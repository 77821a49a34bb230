#pragma once

// Run-directory artifacts.
//
// params.bin layout (all integers little-endian):
//   magic    8 bytes  "HHGATPRM"
//   version  u32      (currently 1)
//   count    u32      number of tensors
//   per tensor: u32 name length, name bytes (UTF-8), u32 rows, u32 cols,
//               rows*cols IEEE-754 f64 values
//   checksum u64      FNV-1a over every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "engine.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "sampler.hpp"

namespace hhgat::io {

inline constexpr char kParamsMagic[8] = {'H', 'H', 'G', 'A', 'T', 'P', 'R', 'M'};
inline constexpr std::uint32_t kParamsVersion = 1;

struct NamedTensor {
    std::string name;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    Vec data;
    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

namespace detail {

inline std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) h = (h ^ b) * 0x100000001b3ULL;
    return h;
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
public:
    Reader(std::span<const unsigned char> bytes, std::string file) : bytes_(bytes), file_(std::move(file)) {}

    std::uint64_t u(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(width);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError(file_, 0, "params file is truncated");
    }
    std::span<const unsigned char> bytes_;
    std::string file_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_params(const std::vector<NamedTensor>& tensors) {
    std::vector<unsigned char> out(std::begin(kParamsMagic), std::end(kParamsMagic));
    detail::put_u32(out, kParamsVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        if (t.data.size() != static_cast<std::size_t>(t.rows) * t.cols)
            throw StructuralError("tensor " + t.name + " has inconsistent shape");
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        detail::put_u32(out, t.rows);
        detail::put_u32(out, t.cols);
        for (double v : t.data) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    detail::put_u64(out, detail::fnv1a(out));
    return out;
}

inline std::vector<NamedTensor> decode_params(std::span<const unsigned char> bytes, const std::string& file = "params.bin") {
    if (bytes.size() < sizeof kParamsMagic + 16) throw DataError(file, 0, "params file is truncated");
    const std::size_t body = bytes.size() - 8;
    detail::Reader tail(bytes.subspan(body), file);
    if (tail.u(8) != detail::fnv1a(bytes.first(body))) throw DataError(file, 0, "params checksum mismatch");
    if (std::memcmp(bytes.data(), kParamsMagic, sizeof kParamsMagic) != 0)
        throw DataError(file, 0, "not a params file (bad magic)");
    detail::Reader r(bytes.subspan(sizeof kParamsMagic, body - sizeof kParamsMagic), file);
    const auto version = static_cast<std::uint32_t>(r.u(4));
    if (version != kParamsVersion) throw DataError(file, 0, "unsupported params version " + std::to_string(version));
    const auto count = static_cast<std::uint32_t>(r.u(4));
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str(static_cast<std::size_t>(r.u(4)));
        t.rows = static_cast<std::uint32_t>(r.u(4));
        t.cols = static_cast<std::uint32_t>(r.u(4));
        t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
        for (double& v : t.data) v = std::bit_cast<double>(r.u(8));
        out.push_back(std::move(t));
    }
    if (r.remaining() != 0) throw DataError(file, 0, "trailing bytes in params file");
    return out;
}

inline std::vector<NamedTensor> to_tensors(const ModelParams& params) {
    std::vector<NamedTensor> out;
    for (const ad::Parameter* p : params.all())
        out.push_back({p->name, static_cast<std::uint32_t>(p->rows), static_cast<std::uint32_t>(p->cols), p->value});
    if (params.curvature_mode == CurvatureMode::Fixed) out.push_back({"curvature.c", 1, 1, {params.fixed_c}});
    return out;
}

/// Copies tensors into an already shaped parameter set; every parameter must be present.
inline void apply_tensors(const std::vector<NamedTensor>& tensors, ModelParams& params, const std::string& file = "params.bin") {
    std::map<std::string, const NamedTensor*> by_name;
    for (const NamedTensor& t : tensors) by_name[t.name] = &t;
    for (ad::Parameter* p : params.all()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw DataError(file, 0, "missing tensor " + p->name);
        const NamedTensor& t = *it->second;
        if (t.rows != p->rows || t.cols != p->cols)
            throw DataError(file, 0, "tensor " + p->name + " has shape " + std::to_string(t.rows) + "x" +
                                         std::to_string(t.cols) + ", expected " + std::to_string(p->rows) + "x" +
                                         std::to_string(p->cols));
        p->value = t.data;
    }
    if (params.curvature_mode == CurvatureMode::Fixed) {
        auto it = by_name.find("curvature.c");
        if (it == by_name.end()) throw DataError(file, 0, "missing tensor curvature.c");
        params.fixed_c = it->second->data.at(0);
    }
}

inline void write_params(const ModelParams& params, const std::filesystem::path& path) {
    const auto bytes = encode_params(to_tensors(params));
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(path.string(), 0, "write failed");
}

inline std::vector<NamedTensor> read_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string(), 0, "cannot open params file");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_params(bytes, path.string());
}

// ---------------------------------------------------------------------------
// Text artifacts

inline nlohmann::json metrics_json(const EvalReport& r) {
    nlohmann::json j;
    j["macro_f1"] = r.macro_f1;
    j["micro_f1"] = r.micro_f1;
    j["nmi"] = r.nmi;
    j["ari"] = r.ari;
    j["valid_macro_f1"] = r.valid_macro_f1;
    j["valid_micro_f1"] = r.valid_micro_f1;
    j["valid_loss"] = r.valid_loss;
    j["curvature"] = r.curvature;
    j["best_epoch"] = r.best_epoch;
    j["epochs_run"] = r.epochs_run;
    j["test_nodes"] = r.test_nodes;
    return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw DataError(path.string(), 0, "write failed");
}

inline std::string fmt(double v) { return hhgat::detail::format_double(v); }

inline std::string loss_curve_tsv(const std::vector<EpochRecord>& curve) {
    std::string s = "epoch\ttrain_loss\tvalid_loss\tcurvature\n";
    for (const EpochRecord& e : curve)
        s += std::to_string(e.epoch) + '\t' + fmt(e.train_loss) + '\t' + fmt(e.valid_loss) + '\t' + fmt(e.curvature) + '\n';
    return s;
}

/// node_id <TAB> e1 ... e_d, one row per node.
inline std::string embeddings_tsv(const std::vector<NodeId>& nodes, const std::vector<Vec>& embeddings) {
    std::string s;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        s += std::to_string(nodes[i]);
        for (double v : embeddings[i]) s += '\t' + fmt(v);
        s += '\n';
    }
    return s;
}

inline std::string sweep_tsv(const std::vector<SweepRow>& rows) {
    std::string s = "curvature\tmacro_f1\tmicro_f1\tnmi\tari\tbest_epoch\tstatus\n";
    for (const SweepRow& r : rows)
        s += fmt(r.curvature) + '\t' + fmt(r.macro_f1) + '\t' + fmt(r.micro_f1) + '\t' + fmt(r.nmi) + '\t' + fmt(r.ari) +
             '\t' + std::to_string(r.best_epoch) + '\t' + (r.ok ? "ok" : "diverged") + '\n';
    return s;
}

inline nlohmann::json sweep_json(const std::vector<SweepRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const SweepRow& r : rows) {
        nlohmann::json row{{"curvature", r.curvature}, {"macro_f1", r.macro_f1}, {"micro_f1", r.micro_f1},
                           {"nmi", r.nmi},             {"ari", r.ari},           {"best_epoch", r.best_epoch},
                           {"ok", r.ok}};
        if (!r.ok) row["error"] = r.error;
        j.push_back(std::move(row));
    }
    return j;
}

/// metapath <TAB> count <TAB> frequency
inline std::string stats_tsv(const InstanceStats& st) {
    std::string s = "metapath\tcount\tfrequency\n";
    for (const MetapathStats& ms : st.per_metapath)
        for (const auto& [count, freq] : ms.frequency)
            s += ms.name + '\t' + std::to_string(count) + '\t' + std::to_string(freq) + '\n';
    return s;
}

inline nlohmann::json stats_json(const InstanceStats& st) {
    nlohmann::json j;
    j["metapaths"] = nlohmann::json::array();
    for (const MetapathStats& ms : st.per_metapath) {
        j["metapaths"].push_back({{"metapath", ms.name},
                                  {"nodes", ms.nodes},
                                  {"mean", ms.mean},
                                  {"max", ms.max},
                                  {"slope", ms.slope ? nlohmann::json(*ms.slope) : nlohmann::json(nullptr)}});
    }
    j["slope"] = st.pooled_slope ? nlohmann::json(*st.pooled_slope) : nlohmann::json(nullptr);
    return j;
}

}  // namespace hhgat::io
