#pragma once
#include <cstdint>
#include <string>

#include "seqlab/errors.hpp"

namespace seqlab {

enum class SublayerKind { attention, she, he, we, me };

inline const char* to_string(SublayerKind k) {
    switch (k) {
        case SublayerKind::attention: return "attention";
        case SublayerKind::she: return "she";
        case SublayerKind::he: return "he";
        case SublayerKind::we: return "we";
        case SublayerKind::me: return "me";
    }
    return "?";
}

inline SublayerKind sublayer_kind_from(const std::string& s) {
    if (s == "attention") return SublayerKind::attention;
    if (s == "she") return SublayerKind::she;
    if (s == "he") return SublayerKind::he;
    if (s == "we") return SublayerKind::we;
    if (s == "me") return SublayerKind::me;
    throw ConfigError("unknown sublayer kind '" + s + "'");
}

struct ModelConfig {
    int64_t u = 0;  // vocabulary size
    int64_t l = 0;  // context window length
    int64_t d = 0;  // model dimension
    int64_t c = 0;  // FFN hidden width
    int64_t m = 0;  // layer count
    int64_t n = 1;  // head count (attention only)
    double p = 0.0; // dropout probability
    SublayerKind sublayer_kind = SublayerKind::attention;
    double layernorm_eps = 1e-5;

    int64_t head_dim() const { return d / n; }

    void validate() const {
        if (u < 2) throw ConfigError("u must be >= 2");
        if (l < 1) throw ConfigError("l must be >= 1");
        if (d < 1) throw ConfigError("d must be >= 1");
        if (c < 1) throw ConfigError("c must be >= 1");
        if (m < 1) throw ConfigError("m must be >= 1");
        if (p < 0.0 || p >= 1.0) throw ConfigError("p must be in [0, 1)");
        if (layernorm_eps <= 0.0) throw ConfigError("layernorm_eps must be positive");
        if (sublayer_kind == SublayerKind::attention) {
            if (n < 1) throw ConfigError("n must be >= 1");
            if (d % n != 0)
                throw ConfigError("head count " + std::to_string(n) + " does not divide d = " +
                                  std::to_string(d));
        }
    }
};

}  // namespace seqlab
