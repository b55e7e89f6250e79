#pragma once
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "seqlab/config.hpp"
#include "seqlab/params.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

// View onto one layer's attention weights inside a ParamSet. No biases: the
// sublayer's trainable budget is exactly 4*d^2.
struct AttentionParams {
    std::vector<Tensor> wq, wk, wv;  // n matrices of d x h
    Tensor w_out;                    // d x d
    int64_t n = 1;
    int64_t d = 0;
    int64_t head_dim() const { return d / n; }
};

inline AttentionParams attention_params(const ParamSet& ps, const ModelConfig& cfg, int64_t layer) {
    if (cfg.d % cfg.n != 0) throw ConfigError("head count does not divide d");
    AttentionParams ap;
    ap.n = cfg.n;
    ap.d = cfg.d;
    const std::string lp = "layer" + std::to_string(layer) + ".att.";
    for (int64_t j = 1; j <= cfg.n; ++j) {
        const std::string hp = lp + "head" + std::to_string(j) + ".";
        ap.wq.push_back(ps.at(hp + "wq"));
        ap.wk.push_back(ps.at(hp + "wk"));
        ap.wv.push_back(ps.at(hp + "wv"));
    }
    ap.w_out = ps.at(lp + "w_out");
    return ap;
}

inline int64_t attention_param_count(const AttentionParams& ap) {
    int64_t n = ap.w_out.numel();
    for (const auto& t : ap.wq) n += t.numel();
    for (const auto& t : ap.wk) n += t.numel();
    for (const auto& t : ap.wv) n += t.numel();
    return n;
}

// Multi-head causal self-attention over a t x d input. Scores are computed
// densely and prefix-masked by the softmax.
inline Tensor mhsa_forward(Tape* tape, const Tensor& x, const AttentionParams& ap) {
    if (x.cols() != ap.d)
        throw DimensionError("mhsa_forward: input width " + std::to_string(x.cols()) +
                             " != model dim " + std::to_string(ap.d));
    const int64_t t = x.rows();
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(ap.head_dim()));
    std::vector<int64_t> causal(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i) causal[static_cast<size_t>(i)] = i + 1;
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(ap.n));
    for (int64_t j = 0; j < ap.n; ++j) {
        Tensor q = matmul(tape, x, ap.wq[static_cast<size_t>(j)]);
        Tensor k = matmul(tape, x, ap.wk[static_cast<size_t>(j)]);
        Tensor v = matmul(tape, x, ap.wv[static_cast<size_t>(j)]);
        Tensor z = scale(tape, matmul_nt(tape, q, k), inv_sqrt_h);
        Tensor a = softmax_rows(tape, z, &causal);
        heads.push_back(matmul(tape, a, v));
    }
    return matmul(tape, concat_cols(tape, heads), ap.w_out);
}

// Per-head key/value rows accumulated so far during incremental decoding.
struct KvCache {
    KvCache(int64_t max_len, int64_t n, int64_t head_dim)
        : max_len(max_len), n(n), head_dim(head_dim),
          k(static_cast<size_t>(max_len * n * head_dim)),
          v(static_cast<size_t>(max_len * n * head_dim)) {}

    int64_t max_len;
    int64_t n;
    int64_t head_dim;
    int64_t len = 0;
    std::vector<double> k, v;  // [head][pos][head_dim]

    double* k_row(int64_t head, int64_t pos) { return k.data() + (head * max_len + pos) * head_dim; }
    double* v_row(int64_t head, int64_t pos) { return v.data() + (head * max_len + pos) * head_dim; }
};

namespace detail {
// out[j] (+)= x (1 x q) * W (q x r); accumulation over q ascending.
inline void rowvec_matmul(const double* x, const Tensor& w, double* out, bool accumulate = false) {
    const int64_t q = w.rows(), r = w.cols();
    if (!accumulate)
        for (int64_t j = 0; j < r; ++j) out[j] = 0.0;
    const double* pw = w.data();
    for (int64_t k = 0; k < q; ++k) {
        const double s = x[k];
        const double* wrow = pw + k * r;
        for (int64_t j = 0; j < r; ++j) out[j] += s * wrow[j];
    }
}
}  // namespace detail

// Appends the new position's keys/values and computes just the new output
// row; matches row t of mhsa_forward on the full prefix.
inline Tensor mhsa_step(const Tensor& x_row, KvCache& cache, const AttentionParams& ap) {
    if (x_row.rows() != 1 || x_row.cols() != ap.d)
        throw DimensionError("mhsa_step: expected a 1 x d row");
    if (cache.len >= cache.max_len)
        throw ContextOverflowError("mhsa_step: cache already holds " + std::to_string(cache.len) +
                                   " of " + std::to_string(cache.max_len) + " positions");
    const int64_t h = ap.head_dim();
    const int64_t pos = cache.len;
    const int64_t t = pos + 1;
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(h));
    std::vector<double> concat(static_cast<size_t>(ap.d));
    std::vector<double> q(static_cast<size_t>(h)), scores(static_cast<size_t>(t));
    for (int64_t j = 0; j < ap.n; ++j) {
        detail::rowvec_matmul(x_row.data(), ap.wq[static_cast<size_t>(j)], q.data());
        detail::rowvec_matmul(x_row.data(), ap.wk[static_cast<size_t>(j)], cache.k_row(j, pos));
        detail::rowvec_matmul(x_row.data(), ap.wv[static_cast<size_t>(j)], cache.v_row(j, pos));
        for (int64_t f = 0; f < t; ++f) {
            const double* kf = cache.k_row(j, f);
            double acc = 0.0;
            for (int64_t e = 0; e < h; ++e) acc += q[static_cast<size_t>(e)] * kf[e];
            scores[static_cast<size_t>(f)] = acc * inv_sqrt_h;
        }
        double mx = scores[0];
        for (int64_t f = 1; f < t; ++f) mx = std::max(mx, scores[static_cast<size_t>(f)]);
        double denom = 0.0;
        for (int64_t f = 0; f < t; ++f) {
            scores[static_cast<size_t>(f)] = std::exp(scores[static_cast<size_t>(f)] - mx);
            denom += scores[static_cast<size_t>(f)];
        }
        double* out_head = concat.data() + j * h;
        for (int64_t e = 0; e < h; ++e) out_head[e] = 0.0;
        for (int64_t f = 0; f < t; ++f) {
            const double a = scores[static_cast<size_t>(f)] / denom;
            const double* vf = cache.v_row(j, f);
            for (int64_t e = 0; e < h; ++e) out_head[e] += a * vf[e];
        }
    }
    cache.len = t;
    Tensor out = Tensor::zeros({1, ap.d});
    detail::rowvec_matmul(concat.data(), ap.w_out, out.data());
    return out;
}

}  // namespace seqlab
