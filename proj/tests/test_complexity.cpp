#include <catch2/catch_amalgamated.hpp>

#include "seqlab/complexity.hpp"

using namespace seqlab;

namespace {

const SublayerKind kAllKinds[] = {SublayerKind::attention, SublayerKind::she, SublayerKind::he,
                                  SublayerKind::we, SublayerKind::me};

}  // namespace

TEST_CASE("d=128 l=128 training table reference values", "[complexity]") {
    const auto cols = table7_columns();
    REQUIRE(cols.size() == 6);

    const uint64_t mults[6] = {10502144, 10502144, 139476992, 7364608, 5267456, 1056768};
    const uint64_t adds[6] = {10420096, 10416128, 139411456, 7282688, 5201920, 1040384};
    const uint64_t divs[6] = {16512, 528384, 0, 0, 0, 0};
    const uint64_t exps[6] = {8256, 264192, 0, 0, 0, 0};
    const uint64_t params[6] = {65536, 65536, 2129920, 65536, 49152, 128};
    const uint64_t totals[6] = {20947008, 21710848, 278888448, 14647296, 10469376, 2097152};

    for (size_t i = 0; i < 6; ++i) {
        INFO("column " << cols[i].label);
        CHECK(cols[i].counts.multiplications == mults[i]);
        CHECK(cols[i].counts.additions == adds[i]);
        CHECK(cols[i].counts.divisions == divs[i]);
        CHECK(cols[i].counts.exponentiations == exps[i]);
        CHECK(cols[i].counts.parameters == params[i]);
        CHECK(cols[i].counts.total_arithmetic() == totals[i]);
    }

    const std::string report = table7_report();
    for (const char* needle :
         {"139,476,992", "21,710,848", "2,129,920", "128", "10,502,144", "49,152", "65,536"})
        CHECK(report.find(needle) != std::string::npos);
}

TEST_CASE("analytic equals measured across the whole small grid", "[complexity]") {
    for (SublayerKind kind : kAllKinds) {
        for (Phase phase : {Phase::training, Phase::inference}) {
            for (int64_t d : {2, 4, 8}) {
                for (int64_t l : {1, 2, 4, 8}) {
                    std::vector<int64_t> head_counts{1};
                    if (kind == SublayerKind::attention) {
                        head_counts.clear();
                        for (int64_t n = 1; n <= d; ++n)
                            if (d % n == 0) head_counts.push_back(n);
                    }
                    for (int64_t n : head_counts) {
                        const OpCountReport a = analytic_counts(kind, phase, d, l, n);
                        const OpCountReport m = measured_counts(kind, phase, d, l, n);
                        INFO(to_string(kind) << " " << to_string(phase) << " d=" << d << " l=" << l
                                             << " n=" << n);
                        REQUIRE(a.multiplications == m.multiplications);
                        REQUIRE(a.additions == m.additions);
                        REQUIRE(a.divisions == m.divisions);
                        REQUIRE(a.exponentiations == m.exponentiations);
                        REQUIRE(a.parameters == m.parameters);
                    }
                }
            }
        }
    }
}

TEST_CASE("training counts equal the sum of per-step inference counts", "[complexity]") {
    for (SublayerKind kind : kAllKinds) {
        for (int64_t d : {2, 4, 8}) {
            for (int64_t l : {1, 2, 4, 8}) {
                const int64_t n = kind == SublayerKind::attention ? (d >= 4 ? 2 : 1) : 1;
                const OpCountReport tr = analytic_counts(kind, Phase::training, d, l, n);
                uint64_t mults = 0, adds = 0, divs = 0, exps = 0;
                for (int64_t t = 1; t <= l; ++t) {
                    const OpCountReport inc = analytic_counts(kind, Phase::inference, d, t, n);
                    mults += inc.multiplications;
                    adds += inc.additions;
                    divs += inc.divisions;
                    exps += inc.exponentiations;
                }
                INFO(to_string(kind) << " d=" << d << " l=" << l << " n=" << n);
                REQUIRE(tr.multiplications == mults);
                REQUIRE(tr.additions == adds);
                REQUIRE(tr.divisions == divs);
                REQUIRE(tr.exponentiations == exps);
            }
        }
    }
}

TEST_CASE("closed-form spot checks", "[complexity]") {
    // sum over t of d*t at d=3, l=2: 3 + 6
    CHECK(measured_counts(SublayerKind::me, Phase::training, 3, 2).multiplications == 9);
    // d^2*t + d^2 + d + d^2 at d=2, t=1: 4 + 4 + 2 + 4
    CHECK(measured_counts(SublayerKind::she, Phase::training, 2, 1).multiplications == 14);

    // attention training closed forms: l^2 d + 4 l d^2 + l d and friends
    for (int64_t d : {4, 8}) {
        for (int64_t l : {2, 4, 8}) {
            for (int64_t n : {1, 2}) {
                const auto r = analytic_counts(SublayerKind::attention, Phase::training, d, l, n);
                CHECK(r.multiplications ==
                      static_cast<uint64_t>(l * l * d + 4 * l * d * d + l * d));
                CHECK(r.additions ==
                      static_cast<uint64_t>(l * l * d + 4 * l * d * d - 4 * l * d - l * n));
                CHECK(r.divisions == static_cast<uint64_t>(n * l * l + n * l));
                CHECK(r.exponentiations == static_cast<uint64_t>(n * (l * l + l) / 2));
            }
        }
    }

    // extractor training closed forms (all integers at even l)
    for (int64_t d : {2, 4, 8}) {
        for (int64_t l : {2, 4, 8}) {
            CHECK(analytic_counts(SublayerKind::she, Phase::training, d, l).multiplications ==
                  static_cast<uint64_t>(l * l * d * d / 2 + 5 * l * d * d / 2 + l * d));
            CHECK(analytic_counts(SublayerKind::he, Phase::training, d, l).multiplications ==
                  static_cast<uint64_t>(l * l * d / 2 + 3 * l * d / 2 + 3 * l * d * d));
            CHECK(analytic_counts(SublayerKind::we, Phase::training, d, l).multiplications ==
                  static_cast<uint64_t>(l * l * d / 2 + 3 * l * d / 2 + 2 * l * d * d));
            CHECK(analytic_counts(SublayerKind::me, Phase::training, d, l).multiplications ==
                  static_cast<uint64_t>(l * l * d / 2 + l * d / 2));
            CHECK(analytic_counts(SublayerKind::me, Phase::training, d, l).additions ==
                  static_cast<uint64_t>(l * l * d / 2 - l * d / 2));
        }
    }
}

TEST_CASE("incremental inference closed forms", "[complexity]") {
    for (int64_t d : {4, 8}) {
        for (int64_t t : {1, 3, 7}) {
            CHECK(analytic_counts(SublayerKind::attention, Phase::inference, d, t, 1).multiplications ==
                  static_cast<uint64_t>(2 * t * d + 4 * d * d));
            CHECK(analytic_counts(SublayerKind::she, Phase::inference, d, t).multiplications ==
                  static_cast<uint64_t>(t * d * d + 2 * d * d + d));
            CHECK(analytic_counts(SublayerKind::she, Phase::inference, d, t).additions ==
                  static_cast<uint64_t>(t * d * d + 2 * d * d - 3 * d));
            CHECK(analytic_counts(SublayerKind::he, Phase::inference, d, t).multiplications ==
                  static_cast<uint64_t>(t * d + 3 * d * d + d));
            CHECK(analytic_counts(SublayerKind::he, Phase::inference, d, t).additions ==
                  static_cast<uint64_t>(t * d + 3 * d * d - 4 * d));
            CHECK(analytic_counts(SublayerKind::we, Phase::inference, d, t).multiplications ==
                  static_cast<uint64_t>(t * d + 2 * d * d + d));
            CHECK(analytic_counts(SublayerKind::me, Phase::inference, d, t).multiplications ==
                  static_cast<uint64_t>(t * d));
            CHECK(analytic_counts(SublayerKind::me, Phase::inference, d, t).additions ==
                  static_cast<uint64_t>(t * d - d));
        }
    }
}

TEST_CASE("attention incremental additions: simplified closed form holds only at n=1", "[complexity]") {
    // The summation form gives 2td + 4d^2 - 5d - n; the simplified closed form
    // 2td - tn + t + 4d^2 - 5d - 1 agrees with it exactly when n = 1 and
    // diverges otherwise. The summation form is what the training tables, the
    // training = sum-over-steps identity, and the measured counter all obey.
    for (int64_t d : {4, 8}) {
        for (int64_t t : {1, 3, 7}) {
            const auto one_head = analytic_counts(SublayerKind::attention, Phase::inference, d, t, 1);
            CHECK(one_head.additions ==
                  static_cast<uint64_t>(2 * t * d - t * 1 + t + 4 * d * d - 5 * d - 1));
            for (int64_t n : {2, 4}) {
                const auto multi = analytic_counts(SublayerKind::attention, Phase::inference, d, t, n);
                CHECK(multi.additions == static_cast<uint64_t>(2 * t * d + 4 * d * d - 5 * d - n));
                CHECK(multi.additions ==
                      measured_counts(SublayerKind::attention, Phase::inference, d, t, n).additions);
            }
        }
    }
}

TEST_CASE("parameter count formulas across the grid", "[complexity]") {
    for (int64_t d : {2, 4, 8}) {
        for (int64_t l : {1, 2, 4, 8}) {
            CHECK(analytic_counts(SublayerKind::attention, Phase::training, d, l, 1).parameters ==
                  static_cast<uint64_t>(4 * d * d));
            CHECK(analytic_counts(SublayerKind::she, Phase::training, d, l).parameters ==
                  static_cast<uint64_t>(l * d * d + 2 * d * d));
            CHECK(analytic_counts(SublayerKind::he, Phase::training, d, l).parameters ==
                  static_cast<uint64_t>(l * d + 3 * d * d));
            CHECK(analytic_counts(SublayerKind::we, Phase::training, d, l).parameters ==
                  static_cast<uint64_t>(l * d + 2 * d * d));
            CHECK(analytic_counts(SublayerKind::me, Phase::training, d, l).parameters ==
                  static_cast<uint64_t>(l));
        }
    }
}

TEST_CASE("counts reject bad configurations", "[complexity]") {
    CHECK_THROWS_AS(analytic_counts(SublayerKind::attention, Phase::training, 6, 4, 4), ConfigError);
    CHECK_THROWS_AS(analytic_counts(SublayerKind::me, Phase::training, 0, 4), ConfigError);
    CHECK_THROWS_AS(measured_counts(SublayerKind::attention, Phase::inference, 6, 4, 4), ConfigError);
}

TEST_CASE("critical paths", "[complexity]") {
    using S = StageKind;
    const std::vector<S> attention_path{S::multiplication, S::cumulation, S::multiplication,
                                        S::cumulation,     S::division,   S::exponentiation,
                                        S::cumulation,     S::division,   S::multiplication,
                                        S::cumulation,     S::multiplication, S::cumulation};
    const std::vector<S> she_path{S::multiplication, S::cumulation, S::multiplication,
                                  S::multiplication, S::cumulation};
    const std::vector<S> me_path{S::multiplication, S::cumulation};

    const CriticalPath att = critical_path(SublayerKind::attention);
    CHECK(att.stages.size() == 12);
    CHECK(att.stages == attention_path);
    CHECK_FALSE(att.derived);

    const CriticalPath she = critical_path(SublayerKind::she);
    CHECK(she.stages.size() == 5);
    CHECK(she.stages == she_path);
    CHECK_FALSE(she.derived);

    const CriticalPath me = critical_path(SublayerKind::me);
    CHECK(me.stages.size() == 2);
    CHECK(me.stages == me_path);
    CHECK_FALSE(me.derived);

    const CriticalPath we = critical_path(SublayerKind::we);
    CHECK(we.derived);
    CHECK(we.stages == she_path);  // same stage structure as SHE

    const CriticalPath he = critical_path(SublayerKind::he);
    CHECK(he.derived);
    CHECK(he.stages.size() == 7);
    CHECK(he.stages == std::vector<S>{S::multiplication, S::cumulation, S::multiplication, S::cumulation,
                                      S::multiplication, S::multiplication, S::cumulation});
}

TEST_CASE("csv rows carry all count fields", "[complexity]") {
    const auto r = analytic_counts(SublayerKind::we, Phase::inference, 4, 3);
    CHECK(counts_csv_header() == "kind,phase,d,l,n,mults,adds,divs,exps,params");
    // mults = td + 2d^2 + d = 48, adds = (t-1)d + 2(d-1)d = 32, params = ld + 2d^2 = 44
    CHECK(counts_csv_row(r) == "we,inference,4,3,1,48,32,0,0,44");
}

TEST_CASE("thousands separators", "[complexity]") {
    CHECK(with_thousands(0) == "0");
    CHECK(with_thousands(999) == "999");
    CHECK(with_thousands(1000) == "1,000");
    CHECK(with_thousands(139476992) == "139,476,992");
}
