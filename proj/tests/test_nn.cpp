#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>

#include "seqlab/gradcheck.hpp"
#include "seqlab/nn.hpp"
#include "seqlab/params.hpp"
#include "seqlab/training.hpp"

#include "oracles.hpp"

using namespace seqlab;

namespace {

ModelConfig tiny_config(SublayerKind kind) {
    ModelConfig cfg;
    cfg.u = 7;
    cfg.l = 5;
    cfg.d = 4;
    cfg.c = 8;
    cfg.m = 2;
    cfg.n = 2;
    cfg.p = 0.0;
    cfg.sublayer_kind = kind;
    return cfg;
}

const SublayerKind kAllKinds[] = {SublayerKind::attention, SublayerKind::she, SublayerKind::he,
                                  SublayerKind::we, SublayerKind::me};

}  // namespace

TEST_CASE("embed applies sqrt(d) scaling to both tables", "[nn]") {
    ModelConfig cfg = tiny_config(SublayerKind::me);
    cfg.d = 4;
    ParamSet ps = ParamSet::build(cfg);
    PrngState rng(2, Stream::init);
    ps.at("emb.tok") = oracle::random_tensor({cfg.u, cfg.d}, rng).set_requires_grad();
    ps.at("emb.pos") = oracle::random_tensor({cfg.l, cfg.d}, rng).set_requires_grad();
    Tensor out = embed(nullptr, {0}, cfg, ps);
    for (int64_t j = 0; j < cfg.d; ++j)
        CHECK(out.at(0, j) == 2.0 * (ps.at("emb.tok").at(0, j) + ps.at("emb.pos").at(0, j)));
}

TEST_CASE("row lookup equals the one-hot matmul formulation", "[nn]") {
    ModelConfig cfg = tiny_config(SublayerKind::me);
    PrngState rng(41, Stream::init);
    ParamSet ps = ParamSet::build(cfg);
    ps.at("emb.tok") = oracle::random_tensor({cfg.u, cfg.d}, rng).set_requires_grad();
    ps.at("emb.pos") = oracle::random_tensor({cfg.l, cfg.d}, rng).set_requires_grad();
    const std::vector<int64_t> tokens{4, 0, 6, 4};
    const auto t = static_cast<int64_t>(tokens.size());

    Tensor tok_onehot = Tensor::zeros({t, cfg.u});
    Tensor pos_onehot = Tensor::zeros({t, cfg.l});
    for (int64_t i = 0; i < t; ++i) {
        tok_onehot.at(i, tokens[static_cast<size_t>(i)]) = 1.0;
        pos_onehot.at(i, i) = 1.0;
    }
    Tensor want = scale(nullptr,
                        add(nullptr, matmul(nullptr, tok_onehot, ps.at("emb.tok")),
                            matmul(nullptr, pos_onehot, ps.at("emb.pos"))),
                        std::sqrt(static_cast<double>(cfg.d)));
    Tensor got = embed(nullptr, tokens, cfg, ps);
    for (int64_t i = 0; i < got.numel(); ++i) REQUIRE(got.data()[i] == want.data()[i]);
}

TEST_CASE("embed of all-zero tables is the zero matrix", "[nn]") {
    ModelConfig cfg = tiny_config(SublayerKind::me);
    ParamSet ps = ParamSet::build(cfg);
    Tensor out = embed(nullptr, {1, 2, 3}, cfg, ps);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0);
}

TEST_CASE("embed dropout rescales survivors by 1/(1-p)", "[nn]") {
    ModelConfig cfg = tiny_config(SublayerKind::me);
    cfg.p = 0.1;
    PrngState init(3, Stream::init);
    ParamSet ps = init_params(cfg, init);
    Tensor evaled = embed(nullptr, {0, 1, 2}, cfg, ps, false, nullptr);
    PrngState drop(3, Stream::dropout);
    Tensor trained = embed(nullptr, {0, 1, 2}, cfg, ps, true, &drop);
    int survivors = 0;
    for (int64_t i = 0; i < trained.numel(); ++i) {
        if (trained.data()[i] != 0.0) {
            CHECK(trained.data()[i] == Catch::Approx(evaled.data()[i] / 0.9));
            ++survivors;
        }
    }
    CHECK(survivors > 0);
}

TEST_CASE("embed rejects bad ids and overlong sequences", "[nn]") {
    ModelConfig cfg = tiny_config(SublayerKind::me);
    ParamSet ps = ParamSet::build(cfg);
    CHECK_THROWS_AS(embed(nullptr, {7}, cfg, ps), VocabError);
    CHECK_THROWS_AS(embed(nullptr, {0, 1, 2, 3, 4, 5}, cfg, ps), ContextOverflowError);
}

TEST_CASE("layernorm examples", "[nn]") {
    Tensor g2 = Tensor::full({1, 2}, 1.0), b2 = Tensor::zeros({1, 2});
    Tensor t = layernorm_rows(nullptr, Tensor::from_rows({{1, -1}}), g2, b2, 1e-12);
    CHECK(t.at(0, 0) == Catch::Approx(1.0).margin(1e-9));
    CHECK(t.at(0, 1) == Catch::Approx(-1.0).margin(1e-9));

    Tensor g3 = Tensor::full({1, 3}, 1.0), b3 = Tensor::zeros({1, 3});
    Tensor c = layernorm_rows(nullptr, Tensor::from_rows({{5, 5, 5}}), g3, b3, 1e-5);
    for (int64_t j = 0; j < 3; ++j) CHECK(c.at(0, j) == 0.0);

    PrngState rng(17, Stream::init);
    Tensor x = oracle::random_tensor({1, 9}, rng);
    Tensor g9 = oracle::random_tensor({1, 9}, rng);
    Tensor b9 = oracle::random_tensor({1, 9}, rng);
    Tensor got = layernorm_rows(nullptr, x, g9, b9, 1e-5);
    std::vector<double> want = oracle::layernorm_row(x.vec(), g9.vec(), b9.vec(), 1e-5);
    for (int64_t j = 0; j < 9; ++j) CHECK(std::abs(got.at(0, j) - want[static_cast<size_t>(j)]) < 1e-12);

    CHECK_THROWS_AS(layernorm_rows(nullptr, Tensor::zeros({2, 1}), Tensor::zeros({1, 1}),
                                   Tensor::zeros({1, 1}), 1e-5),
                    DimensionError);
}

TEST_CASE("ffn degenerate and oracle cases", "[nn]") {
    PrngState rng(19, Stream::init);
    const int64_t t = 3, d = 4, c = 6;
    Tensor x = oracle::random_tensor({t, d}, rng);
    Tensor b2 = oracle::random_tensor({1, d}, rng);

    // zero first stage: output is the row-broadcast second bias
    Tensor z1 = ffn(nullptr, x, Tensor::zeros({d, c}), Tensor::zeros({1, c}),
                    oracle::random_tensor({c, d}, rng), b2);
    for (int64_t i = 0; i < t; ++i)
        for (int64_t j = 0; j < d; ++j) CHECK(z1.at(i, j) == b2.at(0, j));

    // all-negative pre-activations: ReLU kills everything
    Tensor w1 = oracle::random_tensor({d, c}, rng);
    Tensor big_neg = Tensor::full({1, c}, -100.0);
    Tensor z2 = ffn(nullptr, x, w1, big_neg, oracle::random_tensor({c, d}, rng), b2);
    for (int64_t i = 0; i < t; ++i)
        for (int64_t j = 0; j < d; ++j) CHECK(z2.at(i, j) == b2.at(0, j));

    // random instance vs loop oracle
    Tensor b1 = oracle::random_tensor({1, c}, rng);
    Tensor w2 = oracle::random_tensor({c, d}, rng);
    Tensor got = ffn(nullptr, x, w1, b1, w2, b2);
    Tensor want = oracle::ffn(x, w1, b1, w2, b2);
    CHECK(oracle::max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("forward with zero weights predicts the uniform distribution", "[nn]") {
    for (SublayerKind kind : kAllKinds) {
        ModelConfig cfg = tiny_config(kind);
        cfg.m = 1;
        ParamSet ps = ParamSet::build(cfg);  // weights zero, gains one, biases zero
        Tensor y = forward(nullptr, {0, 1, 2}, cfg, ps);
        for (int64_t i = 0; i < y.rows(); ++i)
            for (int64_t j = 0; j < cfg.u; ++j)
                CHECK(y.at(i, j) == Catch::Approx(1.0 / static_cast<double>(cfg.u)).margin(1e-12));
    }
}

TEST_CASE("forward rows are probability vectors", "[nn]") {
    for (SublayerKind kind : kAllKinds) {
        ModelConfig cfg = tiny_config(kind);
        PrngState init(11, Stream::init);
        ParamSet ps = init_params(cfg, init);
        Tensor y = forward(nullptr, {2, 4, 6, 1}, cfg, ps);
        for (int64_t i = 0; i < y.rows(); ++i) {
            double sum = 0.0;
            for (int64_t j = 0; j < cfg.u; ++j) {
                CHECK(y.at(i, j) >= 0.0);
                sum += y.at(i, j);
            }
            CHECK(std::abs(sum - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("causality: later tokens never change earlier rows", "[nn]") {
    for (SublayerKind kind : kAllKinds) {
        ModelConfig cfg = tiny_config(kind);
        PrngState init(13, Stream::init);
        ParamSet ps = init_params(cfg, init);
        PrngState pick(29, Stream::sampling);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<int64_t> tokens(5);
            for (auto& tk : tokens) tk = static_cast<int64_t>(pick.next_index(7));
            Tensor base = forward(nullptr, tokens, cfg, ps);
            const auto j = static_cast<size_t>(1 + pick.next_index(4));  // perturbed position
            std::vector<int64_t> bumped = tokens;
            bumped[j] = static_cast<int64_t>((bumped[j] + 1 + pick.next_index(6)) % 7);
            Tensor moved = forward(nullptr, bumped, cfg, ps);
            for (size_t i = 0; i < j; ++i)
                for (int64_t col = 0; col < cfg.u; ++col)
                    REQUIRE(base.at(static_cast<int64_t>(i), col) ==
                            moved.at(static_cast<int64_t>(i), col));
        }
    }
}

TEST_CASE("forward in eval mode is bitwise deterministic", "[nn]") {
    for (SublayerKind kind : kAllKinds) {
        ModelConfig cfg = tiny_config(kind);
        cfg.p = 0.1;  // eval mode must ignore dropout entirely
        PrngState init(5, Stream::init);
        ParamSet ps = init_params(cfg, init);
        Tensor a = forward(nullptr, {1, 2, 3, 4, 5}, cfg, ps);
        Tensor b = forward(nullptr, {1, 2, 3, 4, 5}, cfg, ps);
        CHECK(oracle::bitwise_equal(a, b));
    }
}

TEST_CASE("three-term residual wiring", "[nn]") {
    for (SublayerKind kind : kAllKinds) {
        ModelConfig cfg = tiny_config(kind);
        PrngState init(7, Stream::init);
        ParamSet ps = init_params(cfg, init);
        ForwardTrace trace;
        forward(nullptr, {0, 3, 5, 2}, cfg, ps, false, nullptr, &trace);
        REQUIRE(trace.layers.size() == 2);
        for (const auto& layer : trace.layers) {
            for (size_t i = 0; i < layer.x_out.size(); ++i) {
                const double expect = (layer.ffn_out[i] + layer.sublayer_out[i]) + layer.x_in[i];
                REQUIRE(layer.x_out[i] == expect);
            }
        }
    }
}

TEST_CASE("full-model gradients match finite differences for every kind", "[nn][grad]") {
    for (SublayerKind kind : kAllKinds) {
        ModelConfig cfg = tiny_config(kind);
        PrngState init(37, Stream::init);
        ParamSet ps = init_params(cfg, init);
        const std::vector<int64_t> tokens{3, 1, 4, 1, 5};
        const std::vector<int64_t> targets{1, 4, 1, 5, 2};
        std::vector<Tensor> leaves;
        for (auto& e : ps.entries()) leaves.push_back(e.tensor);
        auto build = [&](Tape* tape) {
            return sequence_loss(tape, forward(tape, tokens, cfg, ps), targets);
        };
        const double err = finite_diff_check_many(build, leaves, 1e-5);
        INFO("kind = " << to_string(kind));
        CHECK(err < 1e-5);
    }
}

TEST_CASE("checkpoints round-trip bitwise", "[nn]") {
    ModelConfig cfg = tiny_config(SublayerKind::he);
    PrngState init(21, Stream::init);
    ParamSet ps = init_params(cfg, init);
    const std::string path = (std::filesystem::temp_directory_path() / "seqlab_ckpt_test.bin").string();
    save_checkpoint(path, cfg, ps);
    auto [cfg2, ps2] = load_checkpoint(path);
    CHECK(cfg2.u == cfg.u);
    CHECK(cfg2.sublayer_kind == cfg.sublayer_kind);
    REQUIRE(ps2.size() == ps.size());
    for (size_t i = 0; i < ps.size(); ++i) {
        CHECK(ps2.entries()[i].name == ps.entries()[i].name);
        REQUIRE(oracle::bitwise_equal(ps2.entries()[i].tensor, ps.entries()[i].tensor));
    }
    std::filesystem::remove(path);
}

TEST_CASE("parameter shape audit accepts built sets and rejects tampering", "[nn]") {
    ModelConfig cfg = tiny_config(SublayerKind::she);
    ParamSet ps = ParamSet::build(cfg);
    ps.shape_audit(cfg);
    ps.at("head.w") = Tensor::zeros({cfg.d, cfg.u + 1});
    CHECK_THROWS_AS(ps.shape_audit(cfg), DimensionError);
}

TEST_CASE("model config validation", "[nn]") {
    ModelConfig cfg = tiny_config(SublayerKind::attention);
    cfg.n = 3;  // does not divide d = 4
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config(SublayerKind::me);
    cfg.u = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config(SublayerKind::me);
    cfg.p = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
