#pragma once
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "seqlab/attention.hpp"
#include "seqlab/config.hpp"
#include "seqlab/params.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

// The four token-mixing sublayers that replace self-attention. All of them
// share one structural idea: the weight applied to input row j when producing
// output row i depends only on the lag i-j+1, i.e. weights are assigned in
// reverse order of the input sequence.

struct SheParams {
    std::vector<Tensor> w_ext;  // l matrices of d x d, index = lag - 1
    Tensor w_adj, w_out;        // d x d each
};
struct WeParams {
    std::vector<Tensor> w_ext;  // l row vectors 1 x d
    Tensor w_adj, w_out;
};
struct HeParams {
    Tensor w_in_ext;            // d x d shared transform
    std::vector<Tensor> w_ext;  // l row vectors 1 x d
    Tensor w_adj, w_out;
};
struct MeParams {
    std::vector<Tensor> w_ext;  // l scalars (1 x 1)
};

inline SheParams she_params(const ParamSet& ps, const ModelConfig& cfg, int64_t layer) {
    SheParams p;
    const std::string lp = "layer" + std::to_string(layer) + ".she.";
    for (int64_t k = 1; k <= cfg.l; ++k) p.w_ext.push_back(ps.at(lp + "w_ext" + std::to_string(k)));
    p.w_adj = ps.at(lp + "w_adj");
    p.w_out = ps.at(lp + "w_out");
    return p;
}
inline WeParams we_params(const ParamSet& ps, const ModelConfig& cfg, int64_t layer) {
    WeParams p;
    const std::string lp = "layer" + std::to_string(layer) + ".we.";
    for (int64_t k = 1; k <= cfg.l; ++k) p.w_ext.push_back(ps.at(lp + "w_ext" + std::to_string(k)));
    p.w_adj = ps.at(lp + "w_adj");
    p.w_out = ps.at(lp + "w_out");
    return p;
}
inline HeParams he_params(const ParamSet& ps, const ModelConfig& cfg, int64_t layer) {
    HeParams p;
    const std::string lp = "layer" + std::to_string(layer) + ".he.";
    p.w_in_ext = ps.at(lp + "w_in_ext");
    for (int64_t k = 1; k <= cfg.l; ++k) p.w_ext.push_back(ps.at(lp + "w_ext" + std::to_string(k)));
    p.w_adj = ps.at(lp + "w_adj");
    p.w_out = ps.at(lp + "w_out");
    return p;
}
inline MeParams me_params(const ParamSet& ps, const ModelConfig& cfg, int64_t layer) {
    MeParams p;
    const std::string lp = "layer" + std::to_string(layer) + ".me.";
    for (int64_t k = 1; k <= cfg.l; ++k) p.w_ext.push_back(ps.at(lp + "w_ext" + std::to_string(k)));
    return p;
}

template <class P>
int64_t extractor_param_count(const P& p) {
    int64_t n = 0;
    for (const auto& t : p.w_ext) n += t.numel();
    if constexpr (requires { p.w_adj; }) n += p.w_adj.numel() + p.w_out.numel();
    if constexpr (requires { p.w_in_ext; }) n += p.w_in_ext.numel();
    return n;
}

namespace detail {
inline void check_context(int64_t t, size_t lags, const char* who) {
    if (t > static_cast<int64_t>(lags))
        throw ContextOverflowError(std::string(who) + ": sequence length " + std::to_string(t) +
                                   " exceeds the " + std::to_string(lags) + " lag weights");
}
}  // namespace detail

// ext_i = sum_{j<=i} x_j W_{i-j+1}: lag k contributes rows 1..t-k+1 of X,
// transformed by W_k, to output rows k..t.
inline Tensor she_forward(Tape* tape, const Tensor& x, const SheParams& p) {
    const int64_t t = x.rows();
    detail::check_context(t, p.w_ext.size(), "she_forward");
    Tensor ext;
    for (int64_t k = 1; k <= t; ++k) {
        Tensor part = matmul(tape, slice_rows(tape, x, 0, t - k + 1), p.w_ext[static_cast<size_t>(k - 1)]);
        Tensor placed = pad_rows(tape, part, t, k - 1);
        ext = (k == 1) ? placed : add(tape, ext, placed);
    }
    Tensor adj = mul(tape, matmul(tape, x, p.w_adj), ext);
    return matmul(tape, adj, p.w_out);
}

inline Tensor we_forward(Tape* tape, const Tensor& x, const WeParams& p) {
    const int64_t t = x.rows();
    detail::check_context(t, p.w_ext.size(), "we_forward");
    Tensor ext;
    for (int64_t k = 1; k <= t; ++k) {
        Tensor part = mul(tape, slice_rows(tape, x, 0, t - k + 1), p.w_ext[static_cast<size_t>(k - 1)]);
        Tensor placed = pad_rows(tape, part, t, k - 1);
        ext = (k == 1) ? placed : add(tape, ext, placed);
    }
    Tensor adj = mul(tape, matmul(tape, x, p.w_adj), ext);
    return matmul(tape, adj, p.w_out);
}

// WE extraction on a shared linear transform of the input; the adjustment
// gate still reads the original input rows.
inline Tensor he_forward(Tape* tape, const Tensor& x, const HeParams& p) {
    const int64_t t = x.rows();
    detail::check_context(t, p.w_ext.size(), "he_forward");
    Tensor x_ext = matmul(tape, x, p.w_in_ext);
    Tensor ext;
    for (int64_t k = 1; k <= t; ++k) {
        Tensor part =
            mul(tape, slice_rows(tape, x_ext, 0, t - k + 1), p.w_ext[static_cast<size_t>(k - 1)]);
        Tensor placed = pad_rows(tape, part, t, k - 1);
        ext = (k == 1) ? placed : add(tape, ext, placed);
    }
    Tensor adj = mul(tape, matmul(tape, x, p.w_adj), ext);
    return matmul(tape, adj, p.w_out);
}

// Extraction only, with scalar lag weights; no adjustment, no output
// projection.
inline Tensor me_forward(Tape* tape, const Tensor& x, const MeParams& p) {
    const int64_t t = x.rows();
    detail::check_context(t, p.w_ext.size(), "me_forward");
    Tensor out;
    for (int64_t k = 1; k <= t; ++k) {
        Tensor part =
            mul_scalar(tape, slice_rows(tape, x, 0, t - k + 1), p.w_ext[static_cast<size_t>(k - 1)]);
        Tensor placed = pad_rows(tape, part, t, k - 1);
        out = (k == 1) ? placed : add(tape, out, placed);
    }
    return out;
}

// Rows remembered during incremental decoding: raw inputs for SHE/WE/ME,
// shared-transform outputs for HE.
struct ExtractorCache {
    ExtractorCache(int64_t max_len, int64_t d)
        : max_len(max_len), d(d), rows(static_cast<size_t>(max_len * d)) {}
    int64_t max_len;
    int64_t d;
    int64_t len = 0;
    std::vector<double> rows;

    const double* row(int64_t i) const { return rows.data() + i * d; }
    void append(const double* src) {
        if (len >= max_len)
            throw ContextOverflowError("extractor cache already holds " + std::to_string(len) +
                                       " of " + std::to_string(max_len) + " positions");
        std::memcpy(rows.data() + len * d, src, static_cast<size_t>(d) * sizeof(double));
        ++len;
    }
};

inline Tensor she_step(const Tensor& x_row, ExtractorCache& cache, const SheParams& p) {
    cache.append(x_row.data());
    const int64_t t = cache.len, d = cache.d;
    detail::check_context(t, p.w_ext.size(), "she_step");
    std::vector<double> ext(static_cast<size_t>(d), 0.0);
    for (int64_t j = 1; j <= t; ++j)
        detail::rowvec_matmul(cache.row(j - 1), p.w_ext[static_cast<size_t>(t - j)], ext.data(), true);
    std::vector<double> gate(static_cast<size_t>(d));
    detail::rowvec_matmul(x_row.data(), p.w_adj, gate.data());
    for (int64_t e = 0; e < d; ++e) gate[static_cast<size_t>(e)] *= ext[static_cast<size_t>(e)];
    Tensor out = Tensor::zeros({1, d});
    detail::rowvec_matmul(gate.data(), p.w_out, out.data());
    return out;
}

inline Tensor we_step(const Tensor& x_row, ExtractorCache& cache, const WeParams& p) {
    cache.append(x_row.data());
    const int64_t t = cache.len, d = cache.d;
    detail::check_context(t, p.w_ext.size(), "we_step");
    std::vector<double> ext(static_cast<size_t>(d), 0.0);
    for (int64_t j = 1; j <= t; ++j) {
        const double* xr = cache.row(j - 1);
        const double* w = p.w_ext[static_cast<size_t>(t - j)].data();
        for (int64_t e = 0; e < d; ++e) ext[static_cast<size_t>(e)] += xr[e] * w[e];
    }
    std::vector<double> gate(static_cast<size_t>(d));
    detail::rowvec_matmul(x_row.data(), p.w_adj, gate.data());
    for (int64_t e = 0; e < d; ++e) gate[static_cast<size_t>(e)] *= ext[static_cast<size_t>(e)];
    Tensor out = Tensor::zeros({1, d});
    detail::rowvec_matmul(gate.data(), p.w_out, out.data());
    return out;
}

inline Tensor he_step(const Tensor& x_row, ExtractorCache& cache, const HeParams& p) {
    const int64_t d = cache.d;
    std::vector<double> transformed(static_cast<size_t>(d));
    detail::rowvec_matmul(x_row.data(), p.w_in_ext, transformed.data());
    cache.append(transformed.data());
    const int64_t t = cache.len;
    detail::check_context(t, p.w_ext.size(), "he_step");
    std::vector<double> ext(static_cast<size_t>(d), 0.0);
    for (int64_t j = 1; j <= t; ++j) {
        const double* xr = cache.row(j - 1);
        const double* w = p.w_ext[static_cast<size_t>(t - j)].data();
        for (int64_t e = 0; e < d; ++e) ext[static_cast<size_t>(e)] += xr[e] * w[e];
    }
    std::vector<double> gate(static_cast<size_t>(d));
    detail::rowvec_matmul(x_row.data(), p.w_adj, gate.data());
    for (int64_t e = 0; e < d; ++e) gate[static_cast<size_t>(e)] *= ext[static_cast<size_t>(e)];
    Tensor out = Tensor::zeros({1, d});
    detail::rowvec_matmul(gate.data(), p.w_out, out.data());
    return out;
}

inline Tensor me_step(const Tensor& x_row, ExtractorCache& cache, const MeParams& p) {
    cache.append(x_row.data());
    const int64_t t = cache.len, d = cache.d;
    detail::check_context(t, p.w_ext.size(), "me_step");
    Tensor out = Tensor::zeros({1, d});
    double* po = out.data();
    for (int64_t j = 1; j <= t; ++j) {
        const double* xr = cache.row(j - 1);
        const double w = p.w_ext[static_cast<size_t>(t - j)].data()[0];
        for (int64_t e = 0; e < d; ++e) po[e] += xr[e] * w;
    }
    return out;
}

}  // namespace seqlab
