#pragma once
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "seqlab/config.hpp"
#include "seqlab/errors.hpp"
#include "seqlab/params.hpp"

namespace seqlab {

enum class Phase { training, inference };

inline const char* to_string(Phase p) { return p == Phase::training ? "training" : "inference"; }

// Exact operation and parameter counts for one sublayer configuration.
// Training counts cover a full forward over a length-l input; inference
// counts are the incremental cost of one new token at sequence length t.
struct OpCountReport {
    SublayerKind kind;
    Phase phase;
    int64_t d = 0;
    int64_t l_or_t = 0;
    int64_t n = 1;
    uint64_t multiplications = 0;
    uint64_t additions = 0;
    uint64_t divisions = 0;
    uint64_t exponentiations = 0;
    uint64_t parameters = 0;

    uint64_t total_arithmetic() const {
        return multiplications + additions + divisions + exponentiations;
    }
};

namespace detail {

inline uint64_t sum_1_to(uint64_t l) { return l * (l + 1) / 2; }

inline void check_count_args(SublayerKind kind, int64_t d, int64_t l_or_t, int64_t n) {
    if (d < 1 || l_or_t < 1 || n < 1) throw ConfigError("counts need d, l (or t), n >= 1");
    if (kind == SublayerKind::attention && d % n != 0)
        throw ConfigError("head count " + std::to_string(n) + " does not divide d = " + std::to_string(d));
}

inline uint64_t parameter_count_formula(SublayerKind kind, uint64_t d, uint64_t l) {
    switch (kind) {
        case SublayerKind::attention: return 4 * d * d;            // 3d(d/n)n + d^2
        case SublayerKind::she: return l * d * d + 2 * d * d;
        case SublayerKind::he: return l * d + 3 * d * d;
        case SublayerKind::we: return l * d + 2 * d * d;
        case SublayerKind::me: return l;
    }
    throw ConfigError("unknown sublayer kind");
}

}  // namespace detail

// Closed-form counts, evaluated through their exact summation forms so every
// result is an integer. For the incremental self-attention additions the
// common single-head simplification (2td - tn + t + 4d^2 - 5d - 1) drops the
// head factor on the softmax-cumulation term; the summation form
// (2td + 4d^2 - 5d - n) is what the training counts and the
// training = sum-over-steps identity require, so it is authoritative here.
inline OpCountReport analytic_counts(SublayerKind kind, Phase phase, int64_t d_in, int64_t l_or_t,
                                     int64_t n_in = 1) {
    detail::check_count_args(kind, d_in, l_or_t, n_in);
    const auto d = static_cast<uint64_t>(d_in);
    const auto n = static_cast<uint64_t>(n_in);
    const auto L = static_cast<uint64_t>(l_or_t);  // l in training, t in inference
    OpCountReport r;
    r.kind = kind;
    r.phase = phase;
    r.d = d_in;
    r.l_or_t = l_or_t;
    r.n = n_in;
    r.parameters = detail::parameter_count_formula(kind, d, L);

    const uint64_t h = kind == SublayerKind::attention ? d / n : 0;
    const uint64_t s1 = detail::sum_1_to(L);  // sum of t
    if (phase == Phase::training) {
        switch (kind) {
            case SublayerKind::attention:
                // (3d·h·l + sum_t(t·h + t·h))·n + d·d·l = l^2 d + 4 l d^2 + l d
                r.multiplications = (3 * d * h * L + 2 * s1 * h) * n + d * d * L;
                // (sum_t(t(h-1) + (t-1)h + (t-1)) + 3(d-1)h·l)·n + (d-1)d·l
                r.additions =
                    (s1 * (h - 1) + (s1 - L) * h + (s1 - L) + 3 * (d - 1) * h * L) * n + (d - 1) * d * L;
                r.divisions = 2 * n * s1;        // n·sum_t(t + t) = n l^2 + n l
                r.exponentiations = n * s1;      // n·sum_t t
                break;
            case SublayerKind::she:
                // sum_t(d·d·t + d·d + d + d·d)
                r.multiplications = d * d * s1 + L * (2 * d * d + d);
                // sum_t((d-1)d·t + (t-1)d + (d-1)d + (d-1)d)
                r.additions = (d - 1) * d * s1 + (s1 - L) * d + 2 * L * (d - 1) * d;
                break;
            case SublayerKind::he:
                // sum_t(d·t + d·d + d + d·d) + d·d·l
                r.multiplications = d * s1 + L * (2 * d * d + d) + d * d * L;
                r.additions = (s1 - L) * d + 2 * L * (d - 1) * d + (d - 1) * d * L;
                break;
            case SublayerKind::we:
                r.multiplications = d * s1 + L * (2 * d * d + d);
                r.additions = (s1 - L) * d + 2 * L * (d - 1) * d;
                break;
            case SublayerKind::me:
                r.multiplications = d * s1;        // sum_t d·t = l^2 d / 2 + l d / 2
                r.additions = (s1 - L) * d;        // sum_t (t-1)d
                break;
        }
    } else {
        const uint64_t t = L;
        switch (kind) {
            case SublayerKind::attention:
                r.multiplications = (3 * d * h + 2 * t * h) * n + d * d;  // 2td + 4d^2
                r.additions = (3 * (d - 1) * h + t * (h - 1) + (t - 1) * h + (t - 1)) * n + (d - 1) * d;
                r.divisions = 2 * t * n;
                r.exponentiations = t * n;
                break;
            case SublayerKind::she:
                r.multiplications = d * d * t + 2 * d * d + d;
                r.additions = (d - 1) * d * t + (t - 1) * d + 2 * (d - 1) * d;
                break;
            case SublayerKind::he:
                r.multiplications = d * t + 3 * d * d + d;
                r.additions = (t - 1) * d + 3 * (d - 1) * d;
                break;
            case SublayerKind::we:
                r.multiplications = d * t + 2 * d * d + d;
                r.additions = (t - 1) * d + 2 * (d - 1) * d;
                break;
            case SublayerKind::me:
                r.multiplications = d * t;
                r.additions = (t - 1) * d;
                break;
        }
    }
    return r;
}

namespace detail {

struct Counter {
    uint64_t mults = 0, adds = 0, divs = 0, exps = 0;
    void dot(uint64_t len) {  // inner product of length len
        mults += len;
        adds += len - 1;
    }
    void rowvec_matmul(uint64_t in, uint64_t out) {  // 1 x in times in x out
        for (uint64_t j = 0; j < out; ++j) dot(in);
    }
};

// Literal per-position walk of one new token at sequence length t, with
// causal bounds: exactly the useful work the defining equations perform.
inline void measure_row(SublayerKind kind, uint64_t d, uint64_t t, uint64_t n, Counter& c) {
    switch (kind) {
        case SublayerKind::attention: {
            const uint64_t h = d / n;
            for (uint64_t head = 0; head < n; ++head) {
                c.rowvec_matmul(d, h);  // q for the new row
                c.rowvec_matmul(d, h);  // k
                c.rowvec_matmul(d, h);  // v
                for (uint64_t f = 0; f < t; ++f) {
                    c.dot(h);   // q . k_f
                    c.divs++;   // / sqrt(h)
                }
                for (uint64_t f = 0; f < t; ++f) c.exps++;  // e^z
                c.adds += t - 1;                            // softmax denominator cumulation
                for (uint64_t f = 0; f < t; ++f) c.divs++;  // normalization
                for (uint64_t e = 0; e < h; ++e) {
                    c.mults += t;      // a_f * v_f per component
                    c.adds += t - 1;   // cumulate the weighted rows
                }
            }
            c.rowvec_matmul(d, d);  // output projection of the new row
            break;
        }
        case SublayerKind::she:
            for (uint64_t j = 0; j < t; ++j) c.rowvec_matmul(d, d);  // x_j W_{lag}
            c.adds += (t - 1) * d;                                   // cumulate t row vectors
            c.rowvec_matmul(d, d);                                   // gate transform
            c.mults += d;                                            // element-wise adjustment
            c.rowvec_matmul(d, d);                                   // output projection
            break;
        case SublayerKind::he:
            c.rowvec_matmul(d, d);   // shared transform of the new row
            c.mults += t * d;        // t element-wise lag products
            c.adds += (t - 1) * d;
            c.rowvec_matmul(d, d);   // gate transform
            c.mults += d;
            c.rowvec_matmul(d, d);   // output projection
            break;
        case SublayerKind::we:
            c.mults += t * d;
            c.adds += (t - 1) * d;
            c.rowvec_matmul(d, d);
            c.mults += d;
            c.rowvec_matmul(d, d);
            break;
        case SublayerKind::me:
            c.mults += t * d;
            c.adds += (t - 1) * d;
            break;
    }
}

// Actual tensor-size sum of one constructed sublayer's parameters.
inline uint64_t measured_parameters(SublayerKind kind, int64_t d, int64_t l, int64_t n) {
    ModelConfig cfg;
    cfg.u = 2;
    cfg.l = l;
    cfg.d = d;
    cfg.c = 1;
    cfg.m = 1;
    cfg.n = n;
    cfg.sublayer_kind = kind;
    ParamSet ps = ParamSet::build(cfg);
    int64_t total = 0;
    const std::string prefix = "layer1." + std::string(to_string(kind)) + ".";
    const std::string att_prefix = "layer1.att.";
    for (const auto& e : ps.entries()) {
        if (e.name.rfind(prefix, 0) == 0 || e.name.rfind(att_prefix, 0) == 0) total += e.tensor.numel();
    }
    return static_cast<uint64_t>(total);
}

}  // namespace detail

// Instrumented brute-force counter: walks the literal per-position loops of
// the defining equations and tallies every scalar operation. Training is the
// sum of the per-position walks for t = 1..l; parameters come from actual
// constructed tensors.
inline OpCountReport measured_counts(SublayerKind kind, Phase phase, int64_t d, int64_t l_or_t,
                                     int64_t n = 1) {
    detail::check_count_args(kind, d, l_or_t, n);
    detail::Counter c;
    if (phase == Phase::training) {
        for (int64_t t = 1; t <= l_or_t; ++t)
            detail::measure_row(kind, static_cast<uint64_t>(d), static_cast<uint64_t>(t),
                                static_cast<uint64_t>(n), c);
    } else {
        detail::measure_row(kind, static_cast<uint64_t>(d), static_cast<uint64_t>(l_or_t),
                            static_cast<uint64_t>(n), c);
    }
    OpCountReport r;
    r.kind = kind;
    r.phase = phase;
    r.d = d;
    r.l_or_t = l_or_t;
    r.n = n;
    r.multiplications = c.mults;
    r.additions = c.adds;
    r.divisions = c.divs;
    r.exponentiations = c.exps;
    r.parameters = detail::measured_parameters(kind, d, l_or_t, n);
    return r;
}

// ---- critical path -------------------------------------------------------------

enum class StageKind { multiplication, cumulation, division, exponentiation };

inline const char* to_string(StageKind s) {
    switch (s) {
        case StageKind::multiplication: return "multiplication";
        case StageKind::cumulation: return "cumulation";
        case StageKind::division: return "division";
        case StageKind::exponentiation: return "exponentiation";
    }
    return "?";
}

struct CriticalPath {
    SublayerKind kind;
    std::vector<StageKind> stages;
    bool derived = false;  // true for HE/WE: no reference sequence, dataflow only
};

namespace detail {

struct StageNode {
    StageKind label;
    std::vector<size_t> preds;
    bool primary = true;  // tie-break: prefer the extraction chain
};

// Longest dependency chain through the stage graph of one incremental-step
// dataflow.
inline std::vector<StageKind> longest_stage_path(const std::vector<StageNode>& dag) {
    std::vector<int> len(dag.size(), 1);
    std::vector<int> back(dag.size(), -1);
    for (size_t i = 0; i < dag.size(); ++i) {
        for (size_t p : dag[i].preds) {
            const int cand = len[p] + 1;
            if (cand > len[i] || (cand == len[i] && back[i] >= 0 && !dag[static_cast<size_t>(back[i])].primary &&
                                  dag[p].primary)) {
                len[i] = cand;
                back[i] = static_cast<int>(p);
            }
        }
    }
    size_t end = 0;
    for (size_t i = 1; i < dag.size(); ++i)
        if (len[i] > len[end]) end = i;
    std::vector<StageKind> path;
    for (int i = static_cast<int>(end); i >= 0; i = back[static_cast<size_t>(i)])
        path.push_back(dag[static_cast<size_t>(i)].label);
    std::reverse(path.begin(), path.end());
    return path;
}

inline std::vector<StageNode> stage_dag(SublayerKind kind) {
    using S = StageKind;
    switch (kind) {
        case SublayerKind::attention:
            // qkv, scores, scale, exp, denominator, normalize, weighted sum, out
            return {{S::multiplication, {}},  {S::cumulation, {0}},  {S::multiplication, {1}},
                    {S::cumulation, {2}},     {S::division, {3}},    {S::exponentiation, {4}},
                    {S::cumulation, {5}},     {S::division, {6}},    {S::multiplication, {7}},
                    {S::cumulation, {8}},     {S::multiplication, {9}}, {S::cumulation, {10}}};
        case SublayerKind::she:
            return {{S::multiplication, {}},          // lag transforms
                    {S::cumulation, {0}},             // lag sum
                    {S::multiplication, {}, false},   // gate transform
                    {S::cumulation, {2}, false},      // gate transform sum
                    {S::multiplication, {1, 3}},      // element-wise adjustment
                    {S::multiplication, {4}},         // output projection
                    {S::cumulation, {5}}};
        case SublayerKind::we:
            return {{S::multiplication, {}},          // lag products
                    {S::cumulation, {0}},
                    {S::multiplication, {}, false},   // gate transform
                    {S::cumulation, {2}, false},
                    {S::multiplication, {1, 3}},
                    {S::multiplication, {4}},
                    {S::cumulation, {5}}};
        case SublayerKind::he:
            return {{S::multiplication, {}},          // shared input transform
                    {S::cumulation, {0}},
                    {S::multiplication, {1}},         // lag products
                    {S::cumulation, {2}},
                    {S::multiplication, {}, false},   // gate transform
                    {S::cumulation, {4}, false},
                    {S::multiplication, {3, 5}},      // adjustment
                    {S::multiplication, {6}},
                    {S::cumulation, {7}}};
        case SublayerKind::me:
            return {{S::multiplication, {}}, {S::cumulation, {0}}};
    }
    throw ConfigError("unknown sublayer kind");
}

}  // namespace detail

inline CriticalPath critical_path(SublayerKind kind) {
    CriticalPath cp;
    cp.kind = kind;
    cp.derived = (kind == SublayerKind::he || kind == SublayerKind::we);
    cp.stages = detail::longest_stage_path(detail::stage_dag(kind));
    return cp;
}

// ---- reporting -------------------------------------------------------------------

inline std::string with_thousands(uint64_t v) {
    std::string raw = std::to_string(v);
    std::string out;
    int count = 0;
    for (auto it = raw.rbegin(); it != raw.rend(); ++it) {
        if (count && count % 3 == 0) out.push_back(',');
        out.push_back(*it);
        ++count;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

struct Table7Column {
    std::string label;
    OpCountReport counts;
};

// Training-phase counts at d = 128, l = 128: 1-head and 32-head attention
// plus the four extractor sublayers.
inline std::vector<Table7Column> table7_columns(int64_t d = 128, int64_t l = 128) {
    return {
        {"1-head attention", analytic_counts(SublayerKind::attention, Phase::training, d, l, 1)},
        {"32-head attention", analytic_counts(SublayerKind::attention, Phase::training, d, l, 32)},
        {"SHE", analytic_counts(SublayerKind::she, Phase::training, d, l)},
        {"HE", analytic_counts(SublayerKind::he, Phase::training, d, l)},
        {"WE", analytic_counts(SublayerKind::we, Phase::training, d, l)},
        {"ME", analytic_counts(SublayerKind::me, Phase::training, d, l)},
    };
}

inline std::string table7_report(int64_t d = 128, int64_t l = 128) {
    const auto cols = table7_columns(d, l);
    const char* row_names[6] = {"Multiplications", "Additions",  "Divisions",
                                "Exponentiations", "Parameters", "Total arithmetic"};
    std::ostringstream os;
    os << "Trainable parameters and arithmetic operations in training, d=" << d << " l=" << l << "\n\n";
    os << "                    ";
    for (const auto& c : cols) {
        os.width(18);
        os << c.label;
    }
    os << "\n";
    for (int row = 0; row < 6; ++row) {
        os.width(20);
        os.setf(std::ios::left, std::ios::adjustfield);
        os << row_names[row];
        os.setf(std::ios::right, std::ios::adjustfield);
        for (const auto& c : cols) {
            uint64_t v = 0;
            switch (row) {
                case 0: v = c.counts.multiplications; break;
                case 1: v = c.counts.additions; break;
                case 2: v = c.counts.divisions; break;
                case 3: v = c.counts.exponentiations; break;
                case 4: v = c.counts.parameters; break;
                case 5: v = c.counts.total_arithmetic(); break;
            }
            os.width(18);
            os << with_thousands(v);
        }
        os << "\n";
    }
    return os.str();
}

inline std::string counts_csv_header() { return "kind,phase,d,l,n,mults,adds,divs,exps,params"; }

inline std::string counts_csv_row(const OpCountReport& r) {
    std::ostringstream os;
    os << to_string(r.kind) << "," << to_string(r.phase) << "," << r.d << "," << r.l_or_t << "," << r.n
       << "," << r.multiplications << "," << r.additions << "," << r.divisions << ","
       << r.exponentiations << "," << r.parameters;
    return os.str();
}

}  // namespace seqlab
