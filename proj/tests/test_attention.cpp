#include <catch2/catch_amalgamated.hpp>

#include "seqlab/attention.hpp"
#include "seqlab/gradcheck.hpp"
#include "seqlab/params.hpp"
#include "seqlab/training.hpp"

#include "oracles.hpp"

using namespace seqlab;

namespace {

AttentionParams random_attention(int64_t d, int64_t n, PrngState& rng) {
    AttentionParams ap;
    ap.d = d;
    ap.n = n;
    const int64_t h = d / n;
    for (int64_t j = 0; j < n; ++j) {
        ap.wq.push_back(oracle::random_tensor({d, h}, rng));
        ap.wk.push_back(oracle::random_tensor({d, h}, rng));
        ap.wv.push_back(oracle::random_tensor({d, h}, rng));
    }
    ap.w_out = oracle::random_tensor({d, d}, rng);
    return ap;
}

}  // namespace

TEST_CASE("single position attends to itself", "[attention]") {
    PrngState rng(3, Stream::init);
    const int64_t d = 4, n = 2, h = 2;
    AttentionParams ap = random_attention(d, n, rng);
    Tensor x = oracle::random_tensor({1, d}, rng);
    Tensor got = mhsa_forward(nullptr, x, ap);
    // A = [1] per head, so the output is just (x Wv | per head) W_out
    Tensor concat = Tensor::zeros({1, d});
    for (int64_t j = 0; j < n; ++j) {
        Tensor v = oracle::matmul(x, ap.wv[static_cast<size_t>(j)]);
        for (int64_t e = 0; e < h; ++e) concat.at(0, j * h + e) = v.at(0, e);
    }
    Tensor want = oracle::matmul(concat, ap.w_out);
    CHECK(oracle::max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("zero value projections give zero output", "[attention]") {
    PrngState rng(5, Stream::init);
    AttentionParams ap = random_attention(4, 2, rng);
    for (auto& v : ap.wv) v = Tensor::zeros({4, 2});
    Tensor x = oracle::random_tensor({3, 4}, rng);
    Tensor out = mhsa_forward(nullptr, x, ap);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0);
}

TEST_CASE("mhsa matches the per-position loop oracle", "[attention]") {
    PrngState rng(7, Stream::init);
    AttentionParams ap = random_attention(4, 2, rng);
    Tensor x = oracle::random_tensor({3, 4}, rng);
    CHECK(oracle::max_abs_diff(mhsa_forward(nullptr, x, ap), oracle::mhsa(x, ap)) < 1e-12);
}

TEST_CASE("mhsa matches the oracle over the whole small grid", "[attention]") {
    PrngState rng(11, Stream::init);
    for (int64_t d : {2, 4, 8}) {
        for (int64_t n = 1; n <= d; ++n) {
            if (d % n != 0) continue;
            for (int64_t t = 1; t <= 4; ++t) {
                AttentionParams ap = random_attention(d, n, rng);
                Tensor x = oracle::random_tensor({t, d}, rng);
                INFO("d=" << d << " n=" << n << " t=" << t);
                REQUIRE(oracle::max_abs_diff(mhsa_forward(nullptr, x, ap), oracle::mhsa(x, ap)) < 1e-12);
            }
        }
    }
}

TEST_CASE("attention parameter count is 4d^2 on a grid", "[attention]") {
    for (int64_t d : {2, 4, 8, 16}) {
        for (int64_t n = 1; n <= d; n *= 2) {
            ModelConfig cfg;
            cfg.u = 5;
            cfg.l = 3;
            cfg.d = d;
            cfg.c = 4;
            cfg.m = 1;
            cfg.n = n;
            cfg.sublayer_kind = SublayerKind::attention;
            ParamSet ps = ParamSet::build(cfg);
            CHECK(attention_param_count(attention_params(ps, cfg, 1)) == 4 * d * d);
        }
    }
}

TEST_CASE("attention gradients match finite differences", "[attention][grad]") {
    PrngState rng(13, Stream::init);
    AttentionParams ap = random_attention(4, 2, rng);
    Tensor x = oracle::random_tensor({3, 4}, rng).set_requires_grad();
    std::vector<Tensor> leaves{x, ap.w_out};
    for (auto& t : ap.wq) leaves.push_back(t.set_requires_grad());
    for (auto& t : ap.wk) leaves.push_back(t.set_requires_grad());
    for (auto& t : ap.wv) leaves.push_back(t.set_requires_grad());
    ap.w_out.set_requires_grad();
    Tensor w = oracle::random_tensor({3, 4}, rng);
    auto build = [&](Tape* tape) { return sum_all(tape, mul(tape, mhsa_forward(tape, x, ap), w)); };
    CHECK(finite_diff_check_many(build, leaves, 1e-5) < 1e-6);
}

TEST_CASE("kv-cache stepping reproduces the full forward", "[attention]") {
    PrngState rng(17, Stream::init);

    SECTION("first step equals forward on a single row") {
        AttentionParams ap = random_attention(4, 2, rng);
        Tensor x = oracle::random_tensor({1, 4}, rng);
        KvCache cache(6, 2, 2);
        Tensor stepped = mhsa_step(x, cache, ap);
        CHECK(oracle::max_abs_diff(stepped, mhsa_forward(nullptr, x, ap)) < 1e-12);
        CHECK(cache.len == 1);
    }

    SECTION("five steps match row five, across random models") {
        for (int model = 0; model < 10; ++model) {
            AttentionParams ap = random_attention(6, 3, rng);
            Tensor x = oracle::random_tensor({5, 6}, rng);
            KvCache cache(5, 3, 2);
            Tensor last;
            for (int64_t i = 0; i < 5; ++i) last = mhsa_step(slice_rows(nullptr, x, i, 1), cache, ap);
            Tensor full = mhsa_forward(nullptr, x, ap);
            for (int64_t j = 0; j < 6; ++j) REQUIRE(std::abs(last.at(0, j) - full.at(4, j)) < 1e-10);
        }
    }

    SECTION("stepping past the window overflows") {
        AttentionParams ap = random_attention(4, 1, rng);
        KvCache cache(2, 1, 4);
        Tensor x = oracle::random_tensor({1, 4}, rng);
        mhsa_step(x, cache, ap);
        mhsa_step(x, cache, ap);
        CHECK_THROWS_AS(mhsa_step(x, cache, ap), ContextOverflowError);
    }
}
