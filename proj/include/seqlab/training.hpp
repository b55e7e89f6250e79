#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "seqlab/config.hpp"
#include "seqlab/nn.hpp"
#include "seqlab/params.hpp"
#include "seqlab/rng.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

struct TrainConfig {
    ModelConfig model;
    int64_t batch_size = 64;
    int64_t num_batches = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    std::string log_path;

    void validate() const {
        model.validate();
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (num_batches < 0) throw ConfigError("num_batches must be >= 0");
        if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
        if (beta1 <= 0.0 || beta1 >= 1.0) throw ConfigError("beta1 must be in (0, 1)");
        if (beta2 <= 0.0 || beta2 >= 1.0) throw ConfigError("beta2 must be in (0, 1)");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
        if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
    }
};

// Mean per-token negative log-likelihood of one sequence (the training cost
// of a batch is the mean of these over its sequences).
inline Tensor sequence_loss(Tape* tape, const Tensor& yhat, const std::vector<int64_t>& targets) {
    return nll_loss(tape, yhat, targets);
}

// Weights ~ N(0, 0.01^2) from the init stream in enumeration order; biases
// zero, layernorm gains one.
inline ParamSet init_params(const ModelConfig& cfg, PrngState& init_rng) {
    ParamSet ps = ParamSet::build(cfg);
    for (auto& e : ps.entries()) {
        if (e.is_bias || e.is_gain) continue;  // already 0 / 1
        for (int64_t i = 0; i < e.tensor.numel(); ++i)
            e.tensor.data()[i] = 0.01 * init_rng.next_normal();
    }
    return ps;
}

struct AdamWState {
    explicit AdamWState(const ParamSet& ps) {
        m.reserve(ps.size());
        v.reserve(ps.size());
        for (const auto& e : ps.entries()) {
            m.emplace_back(static_cast<size_t>(e.tensor.numel()), 0.0);
            v.emplace_back(static_cast<size_t>(e.tensor.numel()), 0.0);
        }
    }
    std::vector<std::vector<double>> m, v;
    int64_t step = 0;
};

// Decoupled-weight-decay Adam with bias correction:
//   theta <- theta - lr * ( mhat / (sqrt(vhat) + eps) + weight_decay * theta )
inline void adamw_step(ParamSet& ps, AdamWState& state, const TrainConfig& cfg) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t pi = 0; pi < ps.size(); ++pi) {
        auto& e = ps.entries()[pi];
        const std::vector<double> g = e.tensor.grad_or_zeros();
        double* theta = e.tensor.data();
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw NumericError("non-finite gradient in parameter '" + e.name + "'");
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -=
                cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * theta[i]);
        }
    }
}

struct CostLog {
    std::vector<std::pair<int64_t, double>> entries;  // (batch index, training cost)
};

// One median per complete non-overlapping window; a trailing partial window
// is dropped.
inline std::vector<double> median_window(const CostLog& log, int64_t window) {
    if (window < 1) throw ConfigError("median window must be >= 1");
    std::vector<double> out;
    const auto n = static_cast<int64_t>(log.entries.size());
    for (int64_t start = 0; start + window <= n; start += window) {
        std::vector<double> chunk;
        chunk.reserve(static_cast<size_t>(window));
        for (int64_t i = start; i < start + window; ++i)
            chunk.push_back(log.entries[static_cast<size_t>(i)].second);
        std::sort(chunk.begin(), chunk.end());
        const size_t mid = chunk.size() / 2;
        out.push_back(chunk.size() % 2 == 1 ? chunk[mid] : 0.5 * (chunk[mid - 1] + chunk[mid]));
    }
    return out;
}

inline uint64_t fnv1a64(const void* bytes, size_t len, uint64_t h = 14695981039346656037ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

// Stride-1 training windows: every start offset of a length-(l+1) slice, in a
// freshly drawn batch_order permutation.
inline std::vector<int64_t> build_windows(int64_t stream_len, int64_t l, PrngState& batch_rng) {
    if (stream_len < l + 1)
        throw DataError("token stream of " + std::to_string(stream_len) +
                        " tokens is shorter than one window of " + std::to_string(l + 1));
    return batch_rng.permutation(stream_len - l);
}

struct TrainResult {
    ParamSet params;
    CostLog cost_log;
    std::vector<uint64_t> batch_hashes;  // FNV-1a over each batch's window offsets
};

// Runs the sec. protocol: batch composition and order depend only on
// (seed, batch_order stream), so swapping the sublayer kind cannot change
// what any batch contains.
inline TrainResult train(const TrainConfig& cfg, const std::vector<int32_t>& stream,
                         const std::function<void(int64_t, double)>& on_batch = nullptr) {
    cfg.validate();
    const int64_t l = cfg.model.l;
    if (cfg.num_batches > 0 && static_cast<int64_t>(stream.size()) < l + 1)
        throw DataError("token stream too short for one training window");

    PrngState init_rng(cfg.seed, Stream::init);
    PrngState dropout_rng(cfg.seed, Stream::dropout);
    PrngState batch_rng(cfg.seed, Stream::batch_order);

    TrainResult result{init_params(cfg.model, init_rng), {}, {}};
    AdamWState opt(result.params);

    std::vector<int64_t> perm;
    size_t perm_pos = 0;
    std::vector<int64_t> inputs(static_cast<size_t>(l)), targets(static_cast<size_t>(l));

    for (int64_t b = 1; b <= cfg.num_batches; ++b) {
        std::vector<int64_t> offsets(static_cast<size_t>(cfg.batch_size));
        for (auto& o : offsets) {
            if (perm_pos == perm.size()) {
                perm = build_windows(static_cast<int64_t>(stream.size()), l, batch_rng);
                perm_pos = 0;
            }
            o = perm[perm_pos++];
        }
        Tape tape;
        Tensor total;
        for (int64_t s = 0; s < cfg.batch_size; ++s) {
            const int64_t o = offsets[static_cast<size_t>(s)];
            for (int64_t i = 0; i < l; ++i) {
                inputs[static_cast<size_t>(i)] = stream[static_cast<size_t>(o + i)];
                targets[static_cast<size_t>(i)] = stream[static_cast<size_t>(o + i + 1)];
            }
            Tensor yhat = forward(&tape, inputs, cfg.model, result.params, true, &dropout_rng);
            Tensor loss = sequence_loss(&tape, yhat, targets);
            total = s == 0 ? loss : add(&tape, total, loss);
        }
        Tensor cost = scale(&tape, total, 1.0 / static_cast<double>(cfg.batch_size));
        const double cost_value = cost.item();
        if (!std::isfinite(cost_value))
            throw NumericError("non-finite training cost at batch " + std::to_string(b));
        result.params.zero_grads();
        tape.backward(cost);
        adamw_step(result.params, opt, cfg);
        result.cost_log.entries.emplace_back(b, cost_value);
        result.batch_hashes.push_back(
            fnv1a64(offsets.data(), offsets.size() * sizeof(int64_t)));
        if (on_batch) on_batch(b, cost_value);
    }
    return result;
}

}  // namespace seqlab
