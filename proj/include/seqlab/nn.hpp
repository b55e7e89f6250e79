#pragma once
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "seqlab/attention.hpp"
#include "seqlab/config.hpp"
#include "seqlab/extractors.hpp"
#include "seqlab/params.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

using SublayerParams = std::variant<AttentionParams, SheParams, HeParams, WeParams, MeParams>;

inline SublayerParams sublayer_params(const ParamSet& ps, const ModelConfig& cfg, int64_t layer) {
    switch (cfg.sublayer_kind) {
        case SublayerKind::attention: return attention_params(ps, cfg, layer);
        case SublayerKind::she: return she_params(ps, cfg, layer);
        case SublayerKind::he: return he_params(ps, cfg, layer);
        case SublayerKind::we: return we_params(ps, cfg, layer);
        case SublayerKind::me: return me_params(ps, cfg, layer);
    }
    throw ConfigError("unknown sublayer kind");
}

inline Tensor sublayer_forward(Tape* tape, const Tensor& x, const SublayerParams& sp) {
    return std::visit(
        [&](const auto& p) -> Tensor {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, AttentionParams>) return mhsa_forward(tape, x, p);
            else if constexpr (std::is_same_v<P, SheParams>) return she_forward(tape, x, p);
            else if constexpr (std::is_same_v<P, HeParams>) return he_forward(tape, x, p);
            else if constexpr (std::is_same_v<P, WeParams>) return we_forward(tape, x, p);
            else return me_forward(tape, x, p);
        },
        sp);
}

inline int64_t sublayer_param_count(const SublayerParams& sp) {
    return std::visit(
        [](const auto& p) -> int64_t {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, AttentionParams>) return attention_param_count(p);
            else return extractor_param_count(p);
        },
        sp);
}

// Token + learned positional embeddings, both scaled by sqrt(d), summed, then
// dropout in training mode.
inline Tensor embed(Tape* tape, const std::vector<int64_t>& tokens, const ModelConfig& cfg,
                    const ParamSet& ps, bool training = false, PrngState* dropout_rng = nullptr) {
    const auto t = static_cast<int64_t>(tokens.size());
    if (t < 1) throw ContractError("embed: empty token sequence");
    if (t > cfg.l)
        throw ContextOverflowError("embed: sequence length " + std::to_string(t) +
                                   " exceeds context window " + std::to_string(cfg.l));
    Tensor tok = embedding_rows(tape, ps.at("emb.tok"), tokens);
    std::vector<int64_t> positions(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i) positions[static_cast<size_t>(i)] = i;
    Tensor pos = embedding_rows(tape, ps.at("emb.pos"), positions);
    Tensor summed = scale(tape, add(tape, tok, pos), std::sqrt(static_cast<double>(cfg.d)));
    return dropout(tape, summed, cfg.p, dropout_rng, training);
}

// ReLU(x W1 + b1) W2 + b2 with row-broadcast biases.
inline Tensor ffn(Tape* tape, const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                  const Tensor& b2) {
    Tensor hidden = relu(tape, add(tape, matmul(tape, x, w1), b1));
    return add(tape, matmul(tape, hidden, w2), b2);
}

// Per-layer values captured during forward, for wiring checks.
struct ForwardTrace {
    struct Layer {
        std::vector<double> x_in, sublayer_out, ffn_out, x_out;
    };
    std::vector<Layer> layers;
};

// The full pre-layer-norm stack. Per layer:
//   S1 = sublayer(layernorm(X));            D1 = dropout(S1)
//   X2 = layernorm(D1 + X);                 S2 = ffn(X2)
//   X  <- dropout(S2) + D1 + X              (three-term residual)
// then Yhat = softmax(layernorm(X) W_soft + b_soft), one probability row per
// position.
inline Tensor forward(Tape* tape, const std::vector<int64_t>& tokens, const ModelConfig& cfg,
                      const ParamSet& ps, bool training = false, PrngState* dropout_rng = nullptr,
                      ForwardTrace* trace = nullptr) {
    Tensor x = embed(tape, tokens, cfg, ps, training, dropout_rng);
    for (int64_t i = 1; i <= cfg.m; ++i) {
        const std::string lp = "layer" + std::to_string(i) + ".";
        Tensor normed1 = layernorm_rows(tape, x, ps.at(lp + "ln1.g"), ps.at(lp + "ln1.b"), cfg.layernorm_eps);
        Tensor s1 = sublayer_forward(tape, normed1, sublayer_params(ps, cfg, i));
        Tensor d1 = dropout(tape, s1, cfg.p, dropout_rng, training);
        Tensor x2 = layernorm_rows(tape, add(tape, d1, x), ps.at(lp + "ln2.g"), ps.at(lp + "ln2.b"),
                                   cfg.layernorm_eps);
        Tensor s2 = ffn(tape, x2, ps.at(lp + "ffn.w1"), ps.at(lp + "ffn.b1"), ps.at(lp + "ffn.w2"),
                        ps.at(lp + "ffn.b2"));
        Tensor d2 = dropout(tape, s2, cfg.p, dropout_rng, training);
        Tensor x_out = add(tape, add(tape, d2, d1), x);
        if (trace) {
            ForwardTrace::Layer tl;
            tl.x_in = x.vec();
            tl.sublayer_out = s1.vec();
            tl.ffn_out = s2.vec();
            tl.x_out = x_out.vec();
            trace->layers.push_back(std::move(tl));
        }
        x = x_out;
    }
    Tensor normed = layernorm_rows(tape, x, ps.at("final_ln.g"), ps.at("final_ln.b"), cfg.layernorm_eps);
    Tensor logits = add(tape, matmul(tape, normed, ps.at("head.w")), ps.at("head.b"));
    return softmax_rows(tape, logits);
}

// ---- incremental decoding ----------------------------------------------------
// Streams one token at a time through the stack in eval mode, reusing per-layer
// sublayer caches. Everything outside the token mixer is row-wise, so only the
// mixer needs history.

using SublayerCache = std::variant<KvCache, ExtractorCache>;

class IncrementalModel {
  public:
    IncrementalModel(const ModelConfig& cfg, const ParamSet& ps) : cfg_(cfg), ps_(&ps) {
        cfg_.validate();
        for (int64_t i = 1; i <= cfg.m; ++i) {
            sublayers_.push_back(sublayer_params(ps, cfg, i));
            if (cfg.sublayer_kind == SublayerKind::attention)
                caches_.emplace_back(KvCache(cfg.l, cfg.n, cfg.head_dim()));
            else
                caches_.emplace_back(ExtractorCache(cfg.l, cfg.d));
        }
    }

    int64_t length() const { return t_; }

    // Feeds one token; returns the next-token probability row (length u).
    std::vector<double> step(int64_t token) {
        if (t_ >= cfg_.l)
            throw ContextOverflowError("incremental decode past context window " +
                                       std::to_string(cfg_.l));
        if (token < 0 || token >= cfg_.u)
            throw VocabError("token id " + std::to_string(token) + " outside vocabulary");
        const double sqrt_d = std::sqrt(static_cast<double>(cfg_.d));
        Tensor row = Tensor::zeros({1, cfg_.d});
        {
            const Tensor& tok = ps_->at("emb.tok");
            const Tensor& pos = ps_->at("emb.pos");
            for (int64_t j = 0; j < cfg_.d; ++j)
                row.data()[j] = sqrt_d * (tok.at(token, j) + pos.at(t_, j));
        }
        for (int64_t i = 1; i <= cfg_.m; ++i) {
            const std::string lp = "layer" + std::to_string(i) + ".";
            Tensor normed1 = layernorm_rows(nullptr, row, ps_->at(lp + "ln1.g"), ps_->at(lp + "ln1.b"),
                                            cfg_.layernorm_eps);
            Tensor s1 = step_sublayer(i - 1, normed1);
            Tensor x2 = layernorm_rows(nullptr, add(nullptr, s1, row), ps_->at(lp + "ln2.g"),
                                       ps_->at(lp + "ln2.b"), cfg_.layernorm_eps);
            Tensor s2 = ffn(nullptr, x2, ps_->at(lp + "ffn.w1"), ps_->at(lp + "ffn.b1"),
                            ps_->at(lp + "ffn.w2"), ps_->at(lp + "ffn.b2"));
            row = add(nullptr, add(nullptr, s2, s1), row);
        }
        Tensor normed = layernorm_rows(nullptr, row, ps_->at("final_ln.g"), ps_->at("final_ln.b"),
                                       cfg_.layernorm_eps);
        Tensor logits = add(nullptr, matmul(nullptr, normed, ps_->at("head.w")), ps_->at("head.b"));
        Tensor probs = softmax_rows(nullptr, logits);
        ++t_;
        return probs.vec();
    }

  private:
    Tensor step_sublayer(size_t layer, const Tensor& x_row) {
        const SublayerParams& sp = sublayers_[layer];
        SublayerCache& cache = caches_[layer];
        if (auto* ap = std::get_if<AttentionParams>(&sp)) return mhsa_step(x_row, std::get<KvCache>(cache), *ap);
        auto& ec = std::get<ExtractorCache>(cache);
        if (auto* p = std::get_if<SheParams>(&sp)) return she_step(x_row, ec, *p);
        if (auto* p = std::get_if<HeParams>(&sp)) return he_step(x_row, ec, *p);
        if (auto* p = std::get_if<WeParams>(&sp)) return we_step(x_row, ec, *p);
        return me_step(x_row, ec, std::get<MeParams>(sp));
    }

    ModelConfig cfg_;
    const ParamSet* ps_;
    std::vector<SublayerParams> sublayers_;
    std::vector<SublayerCache> caches_;
    int64_t t_ = 0;
};

}  // namespace seqlab
