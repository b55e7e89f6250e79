#pragma once
#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "seqlab/config.hpp"
#include "seqlab/errors.hpp"
#include "seqlab/training.hpp"

namespace seqlab {

inline constexpr const char* kCodeVersion = "seqlab-0.1.0";

// Key-value run description: `key = value` lines, '#' comments. Values are
// kept verbatim, so parse -> serialize is idempotent. Unknown keys are
// rejected.
class RunFile {
  public:
    static constexpr std::array<const char*, 24> kKnownKeys = {
        "sublayer",     "u",        "l",          "d",          "c",
        "m",            "n",        "p",          "layernorm_eps",
        "batch_size",   "num_batches", "learning_rate", "beta1", "beta2",
        "weight_decay", "adam_eps", "seed",       "corpus",     "vocab",
        "tokens",       "log_path", "checkpoint", "corpus_hash", "code_version"};

    static bool known(std::string_view key) {
        for (const char* k : kKnownKeys)
            if (key == k) return true;
        return false;
    }

    static RunFile parse_text(const std::string& text) {
        RunFile rf;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            std::string_view v(line);
            const size_t hash = v.find('#');
            if (hash != std::string_view::npos) v = v.substr(0, hash);
            v = trim(v);
            if (v.empty()) continue;
            const size_t eq = v.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError("run file line " + std::to_string(lineno) + ": expected key = value");
            const std::string key{trim(v.substr(0, eq))};
            const std::string value{trim(v.substr(eq + 1))};
            if (!known(key))
                throw ConfigError("run file line " + std::to_string(lineno) + ": unknown key '" + key + "'");
            rf.values_[key] = value;
        }
        return rf;
    }

    static RunFile load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw DataError("cannot open run file '" + path + "'");
        std::ostringstream buf;
        buf << is.rdbuf();
        return parse_text(buf.str());
    }

    std::string serialize() const {
        std::string out;
        for (const char* k : kKnownKeys) {
            auto it = values_.find(k);
            if (it != values_.end()) out += std::string(k) + " = " + it->second + "\n";
        }
        return out;
    }

    void save(const std::string& path) const {
        const std::string tmp = path + ".tmp";
        {
            std::ofstream os(tmp, std::ios::binary);
            if (!os) throw DataError("cannot write run file '" + path + "'");
            os << serialize();
            if (!os) throw DataError("run file write failed for '" + path + "'");
        }
        std::filesystem::rename(tmp, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("run file is missing required key '" + key + "'");
        return it->second;
    }

    int64_t get_int(const std::string& key) const {
        const std::string s = get_string(key);
        int64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw ConfigError("run file key '" + key + "' is not an integer: '" + s + "'");
        return v;
    }

    uint64_t get_u64(const std::string& key) const {
        const std::string s = get_string(key);
        uint64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw ConfigError("run file key '" + key + "' is not an unsigned integer: '" + s + "'");
        return v;
    }

    double get_double(const std::string& key) const {
        const std::string s = get_string(key);
        try {
            size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("run file key '" + key + "' is not a number: '" + s + "'");
        }
    }

    void set(const std::string& key, const std::string& value) {
        if (!known(key)) throw ConfigError("unknown run file key '" + key + "'");
        values_[key] = value;
    }
    void set_int(const std::string& key, int64_t v) { set(key, std::to_string(v)); }
    void set_u64(const std::string& key, uint64_t v) { set(key, std::to_string(v)); }
    void set_double(const std::string& key, double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        set(key, buf);
    }

    TrainConfig to_train_config() const {
        TrainConfig tc;
        tc.model.sublayer_kind = sublayer_kind_from(get_string("sublayer"));
        tc.model.u = get_int("u");
        tc.model.l = get_int("l");
        tc.model.d = get_int("d");
        tc.model.c = get_int("c");
        tc.model.m = get_int("m");
        tc.model.n = has("n") ? get_int("n") : 1;
        tc.model.p = has("p") ? get_double("p") : 0.0;
        if (has("layernorm_eps")) tc.model.layernorm_eps = get_double("layernorm_eps");
        tc.batch_size = get_int("batch_size");
        tc.num_batches = get_int("num_batches");
        if (has("learning_rate")) tc.learning_rate = get_double("learning_rate");
        if (has("beta1")) tc.beta1 = get_double("beta1");
        if (has("beta2")) tc.beta2 = get_double("beta2");
        if (has("weight_decay")) tc.weight_decay = get_double("weight_decay");
        if (has("adam_eps")) tc.adam_eps = get_double("adam_eps");
        tc.seed = has("seed") ? get_u64("seed") : 0;
        tc.log_path = get_string("log_path");
        tc.validate();
        return tc;
    }

    static RunFile from_train_config(const TrainConfig& tc) {
        RunFile rf;
        rf.set("sublayer", to_string(tc.model.sublayer_kind));
        rf.set_int("u", tc.model.u);
        rf.set_int("l", tc.model.l);
        rf.set_int("d", tc.model.d);
        rf.set_int("c", tc.model.c);
        rf.set_int("m", tc.model.m);
        rf.set_int("n", tc.model.n);
        rf.set_double("p", tc.model.p);
        rf.set_double("layernorm_eps", tc.model.layernorm_eps);
        rf.set_int("batch_size", tc.batch_size);
        rf.set_int("num_batches", tc.num_batches);
        rf.set_double("learning_rate", tc.learning_rate);
        rf.set_double("beta1", tc.beta1);
        rf.set_double("beta2", tc.beta2);
        rf.set_double("weight_decay", tc.weight_decay);
        rf.set_double("adam_eps", tc.adam_eps);
        rf.set_u64("seed", tc.seed);
        rf.set("log_path", tc.log_path);
        return rf;
    }

  private:
    static std::string_view trim(std::string_view s) {
        size_t b = 0, e = s.size();
        while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
        while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
        return s.substr(b, e - b);
    }

    std::map<std::string, std::string> values_;
};

// ---- cost log / batch hash files -----------------------------------------------

inline void write_cost_log(const std::string& path, const CostLog& log) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot write cost log '" + path + "'");
        os << "batch,cost\n";
        char buf[64];
        for (const auto& [batch, cost] : log.entries) {
            std::snprintf(buf, sizeof buf, "%.17g", cost);
            os << batch << "," << buf << "\n";
        }
        if (!os) throw DataError("cost log write failed for '" + path + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline void write_batch_hashes(const std::string& path, const std::vector<uint64_t>& hashes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot write batch hash log '" + path + "'");
        os << "batch,window_hash\n";
        char buf[32];
        for (size_t i = 0; i < hashes.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hashes[i]));
            os << (i + 1) << "," << buf << "\n";
        }
        if (!os) throw DataError("batch hash log write failed for '" + path + "'");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace seqlab
