#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "seqlab/config.hpp"
#include "seqlab/nn.hpp"
#include "seqlab/params.hpp"
#include "seqlab/rng.hpp"
#include "seqlab/tokenizer.hpp"

namespace seqlab {

enum class SamplerKind { top_p, top_k, greedy };

struct SamplerSpec {
    SamplerKind kind = SamplerKind::top_p;
    double p = 0.6;     // top_p only
    int64_t k = 1;      // top_k only
    uint64_t seed = 0;

    static SamplerSpec nucleus(double p, uint64_t seed) { return {SamplerKind::top_p, p, 1, seed}; }
    static SamplerSpec top_k_of(int64_t k, uint64_t seed) { return {SamplerKind::top_k, 0.0, k, seed}; }
    static SamplerSpec greedy_pick() { return {SamplerKind::greedy, 0.0, 1, 0}; }
};

namespace detail {

inline void check_distribution(std::span<const double> probs) {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw ContractError("sampler input has a negative or NaN probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ContractError("sampler input sums to " + std::to_string(sum) + ", not 1");
}

// ids sorted by descending probability, ties to the smaller id
inline std::vector<int64_t> order_desc(std::span<const double> probs) {
    std::vector<int64_t> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
        return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
    });
    return idx;
}

inline int64_t sample_prefix(std::span<const double> probs, const std::vector<int64_t>& order,
                             size_t prefix, PrngState& rng) {
    double mass = 0.0;
    for (size_t i = 0; i < prefix; ++i) mass += probs[static_cast<size_t>(order[i])];
    const double draw = rng.next_uniform() * mass;
    double cum = 0.0;
    for (size_t i = 0; i < prefix; ++i) {
        cum += probs[static_cast<size_t>(order[i])];
        if (draw < cum) return order[i];
    }
    return order[prefix - 1];
}

}  // namespace detail

// Smallest descending-probability prefix with cumulative mass >= p,
// renormalized, then sampled from the sampling stream.
inline int64_t top_p_sample(std::span<const double> probs, double p, PrngState& rng,
                            int64_t* nucleus_size = nullptr) {
    if (p <= 0.0 || p > 1.0) throw ConfigError("top-p requires p in (0, 1]");
    detail::check_distribution(probs);
    const auto order = detail::order_desc(probs);
    size_t prefix = 0;
    double cum = 0.0;
    while (prefix < order.size()) {
        cum += probs[static_cast<size_t>(order[prefix])];
        ++prefix;
        if (cum >= p - 1e-12) break;
    }
    if (nucleus_size) *nucleus_size = static_cast<int64_t>(prefix);
    return detail::sample_prefix(probs, order, prefix, rng);
}

// The k highest-probability tokens (ties to the smaller id), renormalized.
inline int64_t top_k_sample(std::span<const double> probs, int64_t k, PrngState& rng) {
    if (k < 1 || k > static_cast<int64_t>(probs.size()))
        throw ConfigError("top-k requires 1 <= k <= vocabulary size");
    detail::check_distribution(probs);
    const auto order = detail::order_desc(probs);
    return detail::sample_prefix(probs, order, static_cast<size_t>(k), rng);
}

inline int64_t greedy_sample(std::span<const double> probs) {
    detail::check_distribution(probs);
    int64_t best = 0;
    for (size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int64_t>(i);
    return best;
}

inline int64_t sample(const SamplerSpec& spec, std::span<const double> probs, PrngState& rng,
                      int64_t* set_size = nullptr) {
    switch (spec.kind) {
        case SamplerKind::top_p: return top_p_sample(probs, spec.p, rng, set_size);
        case SamplerKind::top_k:
            if (set_size) *set_size = spec.k;
            return top_k_sample(probs, spec.k, rng);
        case SamplerKind::greedy:
            if (set_size) *set_size = 1;
            return greedy_sample(probs);
    }
    throw ConfigError("unknown sampler kind");
}

struct GenerationStep {
    int64_t step;
    int64_t token_id;
    int64_t set_size;  // nucleus / top-k set size; 1 for greedy
};

// Autoregressive generation. Decoding is incremental while the sequence fits
// the context window; past that the window slides (most recent l tokens) and
// each step re-runs the full forward, since learned absolute positions do not
// shift.
inline std::string generate(const ModelConfig& cfg, const ParamSet& params, const Vocab& vocab,
                            const std::string& prompt, int64_t n_tokens, const SamplerSpec& sampler,
                            std::vector<GenerationStep>* transcript = nullptr) {
    if (n_tokens < 0) throw ConfigError("n_tokens must be >= 0");
    if (vocab.u() != cfg.u)
        throw ConfigError("vocabulary size " + std::to_string(vocab.u()) +
                          " does not match model u = " + std::to_string(cfg.u));
    std::vector<int32_t> ids = encode(prompt, vocab);
    if (ids.empty()) ids.push_back(Vocab::kDocId);
    for (int32_t id : ids)
        if (id >= cfg.u) throw VocabError("prompt token " + std::to_string(id) + " outside model vocabulary");

    PrngState rng(sampler.seed, Stream::sampling);
    IncrementalModel inc(cfg, params);
    std::vector<double> probs;
    if (static_cast<int64_t>(ids.size()) <= cfg.l)
        for (int32_t id : ids) probs = inc.step(id);

    for (int64_t step = 1; step <= n_tokens; ++step) {
        if (static_cast<int64_t>(ids.size()) > cfg.l) {
            // sliding window: full re-forward over the most recent l tokens
            std::vector<int64_t> window(ids.end() - cfg.l, ids.end());
            Tensor y = forward(nullptr, window, cfg, params);
            probs = std::vector<double>(y.data() + (cfg.l - 1) * cfg.u, y.data() + cfg.l * cfg.u);
        }
        int64_t set_size = 0;
        const int64_t next = sample(sampler, probs, rng, &set_size);
        ids.push_back(static_cast<int32_t>(next));
        if (transcript) transcript->push_back({step, next, set_size});
        if (static_cast<int64_t>(ids.size()) <= cfg.l) probs = inc.step(next);
    }
    return decode(ids, vocab);
}

}  // namespace seqlab
