#pragma once
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqlab/config.hpp"
#include "seqlab/errors.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

// All trainable tensors of one model, addressable by structured name.
// Enumeration order is fixed by construction and doubles as the
// initialization draw order.
class ParamSet {
  public:
    struct Entry {
        std::string name;
        Tensor tensor;
        bool is_bias = false;  // zero-initialized
        bool is_gain = false;  // one-initialized
    };

    static ParamSet build(const ModelConfig& cfg) {
        cfg.validate();
        ParamSet ps;
        ps.add("emb.tok", {cfg.u, cfg.d});
        ps.add("emb.pos", {cfg.l, cfg.d});
        for (int64_t i = 1; i <= cfg.m; ++i) {
            const std::string lp = "layer" + std::to_string(i) + ".";
            ps.add(lp + "ln1.g", {1, cfg.d}, false, true);
            ps.add(lp + "ln1.b", {1, cfg.d}, true);
            switch (cfg.sublayer_kind) {
                case SublayerKind::attention: {
                    const int64_t h = cfg.head_dim();
                    for (int64_t j = 1; j <= cfg.n; ++j) {
                        const std::string hp = lp + "att.head" + std::to_string(j) + ".";
                        ps.add(hp + "wq", {cfg.d, h});
                        ps.add(hp + "wk", {cfg.d, h});
                        ps.add(hp + "wv", {cfg.d, h});
                    }
                    ps.add(lp + "att.w_out", {cfg.d, cfg.d});
                    break;
                }
                case SublayerKind::she:
                    for (int64_t k = 1; k <= cfg.l; ++k)
                        ps.add(lp + "she.w_ext" + std::to_string(k), {cfg.d, cfg.d});
                    ps.add(lp + "she.w_adj", {cfg.d, cfg.d});
                    ps.add(lp + "she.w_out", {cfg.d, cfg.d});
                    break;
                case SublayerKind::he:
                    ps.add(lp + "he.w_in_ext", {cfg.d, cfg.d});
                    for (int64_t k = 1; k <= cfg.l; ++k)
                        ps.add(lp + "he.w_ext" + std::to_string(k), {1, cfg.d});
                    ps.add(lp + "he.w_adj", {cfg.d, cfg.d});
                    ps.add(lp + "he.w_out", {cfg.d, cfg.d});
                    break;
                case SublayerKind::we:
                    for (int64_t k = 1; k <= cfg.l; ++k)
                        ps.add(lp + "we.w_ext" + std::to_string(k), {1, cfg.d});
                    ps.add(lp + "we.w_adj", {cfg.d, cfg.d});
                    ps.add(lp + "we.w_out", {cfg.d, cfg.d});
                    break;
                case SublayerKind::me:
                    for (int64_t k = 1; k <= cfg.l; ++k)
                        ps.add(lp + "me.w_ext" + std::to_string(k), {1, 1});
                    break;
            }
            ps.add(lp + "ln2.g", {1, cfg.d}, false, true);
            ps.add(lp + "ln2.b", {1, cfg.d}, true);
            ps.add(lp + "ffn.w1", {cfg.d, cfg.c});
            ps.add(lp + "ffn.b1", {1, cfg.c}, true);
            ps.add(lp + "ffn.w2", {cfg.c, cfg.d});
            ps.add(lp + "ffn.b2", {1, cfg.d}, true);
        }
        ps.add("final_ln.g", {1, cfg.d}, false, true);
        ps.add("final_ln.b", {1, cfg.d}, true);
        ps.add("head.w", {cfg.d, cfg.u});
        ps.add("head.b", {1, cfg.u}, true);
        return ps;
    }

    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
        return entries_[it->second].tensor;
    }
    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
        return entries_[it->second].tensor;
    }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.tensor.numel();
        return n;
    }

    // Verifies every tensor has the exact shape build(cfg) would give it.
    void shape_audit(const ModelConfig& cfg) const {
        ParamSet expect = build(cfg);
        if (expect.size() != size()) throw DimensionError("shape audit: parameter count mismatch");
        for (size_t i = 0; i < entries_.size(); ++i) {
            const auto& got = entries_[i];
            const auto& want = expect.entries_[i];
            if (got.name != want.name || got.tensor.shape() != want.tensor.shape())
                throw DimensionError("shape audit: parameter '" + got.name + "' has shape " +
                                     Tensor::shape_str(got.tensor.shape()) + ", expected '" +
                                     want.name + "' " + Tensor::shape_str(want.tensor.shape()));
        }
    }

    void zero_grads() {
        for (auto& e : entries_) e.tensor.clear_grad();
    }

  private:
    void add(std::string name, std::vector<int64_t> shape, bool is_bias = false, bool is_gain = false) {
        Tensor t = is_gain ? Tensor::full(shape, 1.0) : Tensor::zeros(shape);
        t.set_requires_grad(true);
        index_.emplace(name, entries_.size());
        entries_.push_back(Entry{std::move(name), std::move(t), is_bias, is_gain});
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// ---- checkpoint container ---------------------------------------------------
// Binary, versioned, bitwise round-trip: magic, config block, then one record
// per parameter (name, shape, raw little-endian f64 payload).

namespace detail {
constexpr char kCheckpointMagic[8] = {'S', 'L', 'C', 'K', 'P', 'T', '0', '1'};

inline void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}
inline uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw DataError("checkpoint: truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}
inline void write_f64(std::ostream& os, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    write_u64(os, v);
}
inline double read_f64(std::istream& is) {
    const uint64_t v = read_u64(is);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}
inline void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& is) {
    const uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw DataError("checkpoint: truncated");
    return s;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamSet& params) {
    namespace fs = std::filesystem;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot write checkpoint '" + path + "'");
        os.write(detail::kCheckpointMagic, 8);
        detail::write_u64(os, static_cast<uint64_t>(cfg.u));
        detail::write_u64(os, static_cast<uint64_t>(cfg.l));
        detail::write_u64(os, static_cast<uint64_t>(cfg.d));
        detail::write_u64(os, static_cast<uint64_t>(cfg.c));
        detail::write_u64(os, static_cast<uint64_t>(cfg.m));
        detail::write_u64(os, static_cast<uint64_t>(cfg.n));
        detail::write_f64(os, cfg.p);
        detail::write_str(os, to_string(cfg.sublayer_kind));
        detail::write_f64(os, cfg.layernorm_eps);
        detail::write_u64(os, params.size());
        for (const auto& e : params.entries()) {
            detail::write_str(os, e.name);
            detail::write_u64(os, e.tensor.shape().size());
            for (int64_t ext : e.tensor.shape()) detail::write_u64(os, static_cast<uint64_t>(ext));
            for (int64_t i = 0; i < e.tensor.numel(); ++i) detail::write_f64(os, e.tensor.data()[i]);
        }
        if (!os) throw DataError("checkpoint write failed for '" + path + "'");
    }
    fs::rename(tmp, path);
}

inline std::pair<ModelConfig, ParamSet> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
        throw DataError("'" + path + "' is not a checkpoint file");
    ModelConfig cfg;
    cfg.u = static_cast<int64_t>(detail::read_u64(is));
    cfg.l = static_cast<int64_t>(detail::read_u64(is));
    cfg.d = static_cast<int64_t>(detail::read_u64(is));
    cfg.c = static_cast<int64_t>(detail::read_u64(is));
    cfg.m = static_cast<int64_t>(detail::read_u64(is));
    cfg.n = static_cast<int64_t>(detail::read_u64(is));
    cfg.p = detail::read_f64(is);
    cfg.sublayer_kind = sublayer_kind_from(detail::read_str(is));
    cfg.layernorm_eps = detail::read_f64(is);
    ParamSet params = ParamSet::build(cfg);
    const uint64_t count = detail::read_u64(is);
    if (count != params.size()) throw DataError("checkpoint: parameter count mismatch");
    for (auto& e : params.entries()) {
        const std::string name = detail::read_str(is);
        if (name != e.name) throw DataError("checkpoint: unexpected parameter '" + name + "'");
        const uint64_t nd = detail::read_u64(is);
        std::vector<int64_t> shape(nd);
        for (auto& ext : shape) ext = static_cast<int64_t>(detail::read_u64(is));
        if (shape != e.tensor.shape()) throw DataError("checkpoint: shape mismatch for '" + name + "'");
        for (int64_t i = 0; i < e.tensor.numel(); ++i) e.tensor.data()[i] = detail::read_f64(is);
    }
    return {cfg, std::move(params)};
}

}  // namespace seqlab
