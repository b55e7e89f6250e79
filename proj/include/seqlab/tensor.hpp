#pragma once
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqlab/errors.hpp"
#include "seqlab/rng.hpp"

namespace seqlab {

// Dense row-major f64 tensor. Copying a Tensor copies the handle; storage is
// shared. Backward passes accumulate into grad; data is treated as immutable
// once the tensor has been fed to an op.
class Tensor {
  public:
    struct Impl {
        std::vector<int64_t> shape;
        std::vector<double> data;
        std::vector<double> grad;    // empty until backward touches it
        bool requires_grad = false;  // leaf marker
        bool tracked = false;        // participates in some tape
        int64_t node_id = -1;
    };

    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape) {
        auto impl = std::make_shared<Impl>();
        impl->shape = std::move(shape);
        impl->data.assign(numel_of(impl->shape), 0.0);
        return Tensor(std::move(impl));
    }

    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.impl_->data.begin(), t.impl_->data.end(), v);
        return t;
    }

    static Tensor from_data(std::vector<int64_t> shape, std::vector<double> data) {
        auto impl = std::make_shared<Impl>();
        if (numel_of(shape) != static_cast<int64_t>(data.size()))
            throw DimensionError("tensor data length does not match shape");
        impl->shape = std::move(shape);
        impl->data = std::move(data);
        return Tensor(std::move(impl));
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const auto r = static_cast<int64_t>(rows.size());
        const auto c = static_cast<int64_t>(rows.begin()->size());
        std::vector<double> data;
        data.reserve(static_cast<size_t>(r * c));
        for (const auto& row : rows) {
            if (static_cast<int64_t>(row.size()) != c)
                throw DimensionError("ragged row list");
            data.insert(data.end(), row.begin(), row.end());
        }
        return from_data({r, c}, std::move(data));
    }

    static Tensor scalar(double v) { return from_data({1}, {v}); }

    static Tensor randn(std::vector<int64_t> shape, PrngState& rng, double stddev = 1.0) {
        Tensor t = zeros(std::move(shape));
        for (auto& x : t.impl_->data) x = stddev * rng.next_normal();
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int64_t>& shape() const { return impl_->shape; }
    int64_t ndim() const { return static_cast<int64_t>(impl_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    // 2-D accessors; a 1-D tensor counts as a single row.
    int64_t rows() const { return ndim() == 1 ? 1 : impl_->shape[0]; }
    int64_t cols() const { return ndim() == 1 ? impl_->shape[0] : impl_->shape[1]; }

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    std::vector<double>& vec() { return impl_->data; }
    const std::vector<double>& vec() const { return impl_->data; }

    double at(int64_t i, int64_t j) const { return impl_->data[static_cast<size_t>(i * cols() + j)]; }
    double& at(int64_t i, int64_t j) { return impl_->data[static_cast<size_t>(i * cols() + j)]; }
    double item() const {
        if (numel() != 1) throw ContractError("item() on non-scalar tensor");
        return impl_->data[0];
    }

    Tensor& set_requires_grad(bool b = true) {
        impl_->requires_grad = b;
        return *this;
    }
    bool requires_grad() const { return impl_->requires_grad; }
    bool tracked() const { return impl_ && impl_->tracked; }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    // Gradient buffer, zeros if backward never reached this tensor.
    std::vector<double> grad_or_zeros() const {
        if (has_grad()) return impl_->grad;
        return std::vector<double>(static_cast<size_t>(numel()), 0.0);
    }
    std::vector<double>& grad_ref() { return ensure_grad(*impl_); }
    void clear_grad() {
        if (impl_) impl_->grad.clear();
    }

    bool all_finite() const {
        for (double v : impl_->data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::shared_ptr<Impl> impl() const { return impl_; }

    static int64_t numel_of(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t e : shape) {
            if (e <= 0) throw DimensionError("non-positive extent in shape");
            n *= e;
        }
        return n;
    }

    static std::vector<double>& ensure_grad(Impl& impl) {
        if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
        return impl.grad;
    }

    static std::string shape_str(const std::vector<int64_t>& s) {
        std::string out = "[";
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) out += "x";
            out += std::to_string(s[i]);
        }
        return out + "]";
    }

  private:
    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<Impl> impl_;
};

// Append-only record of performed ops. Inputs always precede outputs, so
// replaying nodes in reverse is a valid reverse-mode sweep.
class Tape {
  public:
    void record(const std::shared_ptr<Tensor::Impl>& out, std::function<void()> backward) {
        out->tracked = true;
        out->node_id = static_cast<int64_t>(nodes_.size());
        nodes_.push_back(Node{out, std::move(backward)});
    }

    size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse, accumulating
    // gradients into every tracked tensor reachable from `loss`.
    void backward(const Tensor& loss) {
        if (loss.numel() != 1) throw ContractError("backward: loss must be a scalar");
        auto impl = loss.impl();
        if (!impl || !impl->tracked || impl->node_id < 0 ||
            impl->node_id >= static_cast<int64_t>(nodes_.size()) ||
            nodes_[static_cast<size_t>(impl->node_id)].out.get() != impl.get())
            throw ContractError("backward: loss was not produced on this tape");
        Tensor::ensure_grad(*impl)[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (!it->out->grad.empty()) it->backward();
        }
    }

  private:
    struct Node {
        std::shared_ptr<Tensor::Impl> out;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
};

namespace detail {

// ---- raw kernels (no tape) ------------------------------------------------
// All kernels accumulate over the contraction index in ascending order, so
// results are bitwise reproducible and match the naive loop oracles.

// C += A (p x q) * B (q x r)
inline void kernel_nn(const double* a, const double* b, double* c, int64_t p, int64_t q, int64_t r) {
    for (int64_t i = 0; i < p; ++i) {
        const double* arow = a + i * q;
        double* crow = c + i * r;
        for (int64_t k = 0; k < q; ++k) {
            const double s = arow[k];
            const double* brow = b + k * r;
            for (int64_t j = 0; j < r; ++j) crow[j] += s * brow[j];
        }
    }
}

// C += A (p x q) * B^T where B is (r x q)
inline void kernel_nt(const double* a, const double* b, double* c, int64_t p, int64_t q, int64_t r) {
    for (int64_t i = 0; i < p; ++i) {
        const double* arow = a + i * q;
        double* crow = c + i * r;
        for (int64_t j = 0; j < r; ++j) {
            const double* brow = b + j * q;
            double acc = 0.0;
            for (int64_t k = 0; k < q; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

// C += A^T * B where A is (q x p), B is (q x r)
inline void kernel_tn(const double* a, const double* b, double* c, int64_t p, int64_t q, int64_t r) {
    for (int64_t k = 0; k < q; ++k) {
        const double* arow = a + k * p;
        const double* brow = b + k * r;
        for (int64_t i = 0; i < p; ++i) {
            const double s = arow[i];
            double* crow = c + i * r;
            for (int64_t j = 0; j < r; ++j) crow[j] += s * brow[j];
        }
    }
}

inline void require_2d(const Tensor& t, const char* who) {
    if (t.ndim() != 2) throw DimensionError(std::string(who) + ": expected a 2-D tensor, got " +
                                            Tensor::shape_str(t.shape()));
}

inline bool should_track(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad() || t->tracked()) return true;
    return false;
}

}  // namespace detail

// ---- ops -------------------------------------------------------------------

inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions disagree: " +
                             Tensor::shape_str(a.shape()) + " vs " + Tensor::shape_str(b.shape()));
    const int64_t p = a.rows(), q = a.cols(), r = b.cols();
    Tensor out = Tensor::zeros({p, r});
    detail::kernel_nn(a.data(), b.data(), out.data(), p, q, r);
    if (detail::should_track(tape, {&a, &b})) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record(oi, [ai, bi, oi, p, q, r] {
            const double* g = oi->grad.data();
            if (ai->requires_grad || ai->tracked)
                detail::kernel_nt(g, bi->data.data(), Tensor::ensure_grad(*ai).data(), p, r, q);
            if (bi->requires_grad || bi->tracked)
                detail::kernel_tn(ai->data.data(), g, Tensor::ensure_grad(*bi).data(), q, p, r);
        });
    }
    return out;
}

// a * b^T; used for attention scores.
inline Tensor matmul_nt(Tape* tape, const Tensor& a, const Tensor& b) {
    detail::require_2d(a, "matmul_nt");
    detail::require_2d(b, "matmul_nt");
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: inner dimensions disagree: " +
                             Tensor::shape_str(a.shape()) + " vs " + Tensor::shape_str(b.shape()));
    const int64_t p = a.rows(), q = a.cols(), r = b.rows();
    Tensor out = Tensor::zeros({p, r});
    detail::kernel_nt(a.data(), b.data(), out.data(), p, q, r);
    if (detail::should_track(tape, {&a, &b})) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record(oi, [ai, bi, oi, p, q, r] {
            const double* g = oi->grad.data();
            if (ai->requires_grad || ai->tracked)
                detail::kernel_nn(g, bi->data.data(), Tensor::ensure_grad(*ai).data(), p, r, q);
            if (bi->requires_grad || bi->tracked)
                detail::kernel_tn(g, ai->data.data(), Tensor::ensure_grad(*bi).data(), r, p, q);
        });
    }
    return out;
}

enum class EwiseOp { add, sub, mul };

// Element-wise op; b may equal a's shape or be a 1 x cols row vector that is
// broadcast over a's rows.
inline Tensor ewise(Tape* tape, EwiseOp op, const Tensor& a, const Tensor& b) {
    const bool bcast = (b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols());
    if (!bcast && (a.rows() != b.rows() || a.cols() != b.cols()))
        throw DimensionError("ewise: incompatible shapes " + Tensor::shape_str(a.shape()) +
                             " vs " + Tensor::shape_str(b.shape()));
    const int64_t rws = a.rows(), cls = a.cols();
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int64_t i = 0; i < rws; ++i) {
        const double* brow = bcast ? pb : pb + i * cls;
        const double* arow = pa + i * cls;
        double* orow = po + i * cls;
        switch (op) {
            case EwiseOp::add:
                for (int64_t j = 0; j < cls; ++j) orow[j] = arow[j] + brow[j];
                break;
            case EwiseOp::sub:
                for (int64_t j = 0; j < cls; ++j) orow[j] = arow[j] - brow[j];
                break;
            case EwiseOp::mul:
                for (int64_t j = 0; j < cls; ++j) orow[j] = arow[j] * brow[j];
                break;
        }
    }
    if (detail::should_track(tape, {&a, &b})) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record(oi, [ai, bi, oi, op, bcast, rws, cls] {
            const double* g = oi->grad.data();
            if (ai->requires_grad || ai->tracked) {
                double* ga = Tensor::ensure_grad(*ai).data();
                if (op == EwiseOp::mul) {
                    const double* pb = bi->data.data();
                    for (int64_t i = 0; i < rws; ++i) {
                        const double* brow = bcast ? pb : pb + i * cls;
                        for (int64_t j = 0; j < cls; ++j) ga[i * cls + j] += g[i * cls + j] * brow[j];
                    }
                } else {
                    for (int64_t i = 0; i < rws * cls; ++i) ga[i] += g[i];
                }
            }
            if (bi->requires_grad || bi->tracked) {
                double* gb = Tensor::ensure_grad(*bi).data();
                const double sign = (op == EwiseOp::sub) ? -1.0 : 1.0;
                if (op == EwiseOp::mul) {
                    const double* pa = ai->data.data();
                    for (int64_t i = 0; i < rws; ++i)
                        for (int64_t j = 0; j < cls; ++j) {
                            const int64_t bj = bcast ? j : i * cls + j;
                            gb[bj] += g[i * cls + j] * pa[i * cls + j];
                        }
                } else {
                    for (int64_t i = 0; i < rws; ++i)
                        for (int64_t j = 0; j < cls; ++j) {
                            const int64_t bj = bcast ? j : i * cls + j;
                            gb[bj] += sign * g[i * cls + j];
                        }
                }
            }
        });
    }
    return out;
}

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) { return ewise(tape, EwiseOp::add, a, b); }
inline Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) { return ewise(tape, EwiseOp::sub, a, b); }
inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) { return ewise(tape, EwiseOp::mul, a, b); }

// x * c for a plain double c (not a parameter).
inline Tensor scale(Tape* tape, const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = c * pa[i];
    if (detail::should_track(tape, {&a})) {
        auto ai = a.impl();
        auto oi = out.impl();
        tape->record(oi, [ai, oi, c, n] {
            double* ga = Tensor::ensure_grad(*ai).data();
            const double* g = oi->grad.data();
            for (int64_t i = 0; i < n; ++i) ga[i] += c * g[i];
        });
    }
    return out;
}

// x * s where s is a trainable 1x1 tensor (scalar lag weights).
inline Tensor mul_scalar(Tape* tape, const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw DimensionError("mul_scalar: multiplier must be 1x1");
    Tensor out = Tensor::zeros(a.shape());
    const double c = s.data()[0];
    const double* pa = a.data();
    double* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = c * pa[i];
    if (detail::should_track(tape, {&a, &s})) {
        auto ai = a.impl(), si = s.impl(), oi = out.impl();
        tape->record(oi, [ai, si, oi, n] {
            const double* g = oi->grad.data();
            if (ai->requires_grad || ai->tracked) {
                double* ga = Tensor::ensure_grad(*ai).data();
                const double c = si->data[0];
                for (int64_t i = 0; i < n; ++i) ga[i] += c * g[i];
            }
            if (si->requires_grad || si->tracked) {
                double acc = 0.0;
                const double* pa = ai->data.data();
                for (int64_t i = 0; i < n; ++i) acc += g[i] * pa[i];
                Tensor::ensure_grad(*si)[0] += acc;
            }
        });
    }
    return out;
}

inline Tensor relu(Tape* tape, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] > 0.0 ? pa[i] : 0.0;
    if (detail::should_track(tape, {&a})) {
        auto ai = a.impl();
        auto oi = out.impl();
        tape->record(oi, [ai, oi, n] {
            double* ga = Tensor::ensure_grad(*ai).data();
            const double* g = oi->grad.data();
            const double* pa = ai->data.data();
            for (int64_t i = 0; i < n; ++i)
                if (pa[i] > 0.0) ga[i] += g[i];
        });
    }
    return out;
}

// Row-wise softmax with optional per-row valid prefix length. Entries past
// the valid prefix are exactly 0.0 and receive no gradient. Max-subtraction
// keeps the exponentials in range.
inline Tensor softmax_rows(Tape* tape, const Tensor& z, const std::vector<int64_t>* valid_len = nullptr) {
    detail::require_2d(z, "softmax_rows");
    const int64_t rws = z.rows(), cls = z.cols();
    if (valid_len) {
        if (static_cast<int64_t>(valid_len->size()) != rws)
            throw IndexError("softmax_rows: valid_len size does not match row count");
        for (int64_t v : *valid_len)
            if (v < 1 || v > cls)
                throw IndexError("softmax_rows: valid_len " + std::to_string(v) +
                                 " outside [1, " + std::to_string(cls) + "]");
    }
    Tensor out = Tensor::zeros(z.shape());
    const double* pz = z.data();
    double* po = out.data();
    for (int64_t i = 0; i < rws; ++i) {
        const int64_t v = valid_len ? (*valid_len)[static_cast<size_t>(i)] : cls;
        const double* zrow = pz + i * cls;
        double* orow = po + i * cls;
        double mx = zrow[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, zrow[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < v; ++j) {
            orow[j] = std::exp(zrow[j] - mx);
            denom += orow[j];
        }
        for (int64_t j = 0; j < v; ++j) orow[j] /= denom;
        // tail already exactly 0.0
    }
    if (detail::should_track(tape, {&z})) {
        auto zi = z.impl();
        auto oi = out.impl();
        std::vector<int64_t> vl = valid_len ? *valid_len : std::vector<int64_t>();
        tape->record(oi, [zi, oi, vl, rws, cls] {
            double* gz = Tensor::ensure_grad(*zi).data();
            const double* g = oi->grad.data();
            const double* y = oi->data.data();
            for (int64_t i = 0; i < rws; ++i) {
                const int64_t v = vl.empty() ? cls : vl[static_cast<size_t>(i)];
                double dot = 0.0;
                for (int64_t j = 0; j < v; ++j) dot += g[i * cls + j] * y[i * cls + j];
                for (int64_t j = 0; j < v; ++j)
                    gz[i * cls + j] += y[i * cls + j] * (g[i * cls + j] - dot);
            }
        });
    }
    return out;
}

// Per-row normalization with gain/bias: g o (x - mean) / sqrt(var + eps) + b,
// var is the population variance of the row.
inline Tensor layernorm_rows(Tape* tape, const Tensor& x, const Tensor& g, const Tensor& b, double eps) {
    detail::require_2d(x, "layernorm");
    const int64_t rws = x.rows(), cls = x.cols();
    if (cls < 2) throw DimensionError("layernorm: degenerate row of width " + std::to_string(cls));
    if (g.numel() != cls || b.numel() != cls)
        throw DimensionError("layernorm: gain/bias width must equal row width");
    Tensor out = Tensor::zeros(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(rws * cls));
    auto inv = std::make_shared<std::vector<double>>(static_cast<size_t>(rws));
    const double* px = x.data();
    const double* pg = g.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int64_t i = 0; i < rws; ++i) {
        const double* xr = px + i * cls;
        double mean = 0.0;
        for (int64_t j = 0; j < cls; ++j) mean += xr[j];
        mean /= static_cast<double>(cls);
        double var = 0.0;
        for (int64_t j = 0; j < cls; ++j) {
            const double dv = xr[j] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(cls);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv)[static_cast<size_t>(i)] = is;
        for (int64_t j = 0; j < cls; ++j) {
            const double h = (xr[j] - mean) * is;
            (*xhat)[static_cast<size_t>(i * cls + j)] = h;
            po[i * cls + j] = pg[j] * h + pb[j];
        }
    }
    if (detail::should_track(tape, {&x, &g, &b})) {
        auto xi = x.impl(), gi = g.impl(), bi = b.impl(), oi = out.impl();
        tape->record(oi, [xi, gi, bi, oi, xhat, inv, rws, cls] {
            const double* gout = oi->grad.data();
            if (gi->requires_grad || gi->tracked) {
                double* gg = Tensor::ensure_grad(*gi).data();
                for (int64_t i = 0; i < rws; ++i)
                    for (int64_t j = 0; j < cls; ++j)
                        gg[j] += gout[i * cls + j] * (*xhat)[static_cast<size_t>(i * cls + j)];
            }
            if (bi->requires_grad || bi->tracked) {
                double* gb = Tensor::ensure_grad(*bi).data();
                for (int64_t i = 0; i < rws; ++i)
                    for (int64_t j = 0; j < cls; ++j) gb[j] += gout[i * cls + j];
            }
            if (xi->requires_grad || xi->tracked) {
                double* gx = Tensor::ensure_grad(*xi).data();
                const double* pg = gi->data.data();
                for (int64_t i = 0; i < rws; ++i) {
                    double mean_h = 0.0, mean_hx = 0.0;
                    for (int64_t j = 0; j < cls; ++j) {
                        const double h = gout[i * cls + j] * pg[j];
                        mean_h += h;
                        mean_hx += h * (*xhat)[static_cast<size_t>(i * cls + j)];
                    }
                    mean_h /= static_cast<double>(cls);
                    mean_hx /= static_cast<double>(cls);
                    const double is = (*inv)[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < cls; ++j) {
                        const double h = gout[i * cls + j] * pg[j];
                        gx[i * cls + j] +=
                            is * (h - mean_h - (*xhat)[static_cast<size_t>(i * cls + j)] * mean_hx);
                    }
                }
            }
        });
    }
    return out;
}

// Inverted dropout: kept entries are scaled by 1/(1-p) during training; eval
// mode is the identity.
inline Tensor dropout(Tape* tape, const Tensor& x, double p, PrngState* rng, bool training) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
    if (!training || p == 0.0) return x;
    if (!rng) throw ContractError("dropout: training mode needs a dropout rng");
    const int64_t n = x.numel();
    auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    const double keep_scale = 1.0 / (1.0 - p);
    for (int64_t i = 0; i < n; ++i)
        (*mask)[static_cast<size_t>(i)] = (rng->next_uniform() < p) ? 0.0 : keep_scale;
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = px[i] * (*mask)[static_cast<size_t>(i)];
    if (detail::should_track(tape, {&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape->record(oi, [xi, oi, mask, n] {
            double* gx = Tensor::ensure_grad(*xi).data();
            const double* g = oi->grad.data();
            for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * (*mask)[static_cast<size_t>(i)];
        });
    }
    return out;
}

// Gathers rows of `table` (u x d) at `ids`; the efficient equivalent of a
// one-hot matmul.
inline Tensor embedding_rows(Tape* tape, const Tensor& table, const std::vector<int64_t>& ids) {
    detail::require_2d(table, "embedding_rows");
    const int64_t u = table.rows(), d = table.cols();
    for (int64_t id : ids)
        if (id < 0 || id >= u)
            throw VocabError("embedding_rows: id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(u));
    const auto t = static_cast<int64_t>(ids.size());
    Tensor out = Tensor::zeros({t, d});
    const double* pt = table.data();
    double* po = out.data();
    for (int64_t i = 0; i < t; ++i)
        std::memcpy(po + i * d, pt + ids[static_cast<size_t>(i)] * d, static_cast<size_t>(d) * sizeof(double));
    if (detail::should_track(tape, {&table})) {
        auto ti = table.impl();
        auto oi = out.impl();
        auto ids_copy = std::make_shared<std::vector<int64_t>>(ids);
        tape->record(oi, [ti, oi, ids_copy, d] {
            double* gt = Tensor::ensure_grad(*ti).data();
            const double* g = oi->grad.data();
            for (size_t i = 0; i < ids_copy->size(); ++i) {
                double* grow = gt + (*ids_copy)[i] * d;
                const double* srow = g + static_cast<int64_t>(i) * d;
                for (int64_t j = 0; j < d; ++j) grow[j] += srow[j];
            }
        });
    }
    return out;
}

inline Tensor slice_rows(Tape* tape, const Tensor& x, int64_t start, int64_t len) {
    detail::require_2d(x, "slice_rows");
    if (start < 0 || len < 1 || start + len > x.rows())
        throw IndexError("slice_rows: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") outside " + std::to_string(x.rows()) + " rows");
    const int64_t cls = x.cols();
    Tensor out = Tensor::zeros({len, cls});
    std::memcpy(out.data(), x.data() + start * cls, static_cast<size_t>(len * cls) * sizeof(double));
    if (detail::should_track(tape, {&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape->record(oi, [xi, oi, start, len, cls] {
            double* gx = Tensor::ensure_grad(*xi).data();
            const double* g = oi->grad.data();
            for (int64_t i = 0; i < len * cls; ++i) gx[start * cls + i] += g[i];
        });
    }
    return out;
}

// Embeds x into a zero matrix of total_rows rows, starting at row `offset`.
inline Tensor pad_rows(Tape* tape, const Tensor& x, int64_t total_rows, int64_t offset) {
    detail::require_2d(x, "pad_rows");
    if (offset < 0 || offset + x.rows() > total_rows)
        throw IndexError("pad_rows: block does not fit");
    const int64_t cls = x.cols(), rws = x.rows();
    Tensor out = Tensor::zeros({total_rows, cls});
    std::memcpy(out.data() + offset * cls, x.data(), static_cast<size_t>(rws * cls) * sizeof(double));
    if (detail::should_track(tape, {&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape->record(oi, [xi, oi, offset, rws, cls] {
            double* gx = Tensor::ensure_grad(*xi).data();
            const double* g = oi->grad.data();
            for (int64_t i = 0; i < rws * cls; ++i) gx[i] += g[offset * cls + i];
        });
    }
    return out;
}

inline Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const int64_t rws = parts.front().rows();
    int64_t total = 0;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_cols");
        if (p.rows() != rws) throw DimensionError("concat_cols: row counts differ");
        total += p.cols();
    }
    Tensor out = Tensor::zeros({rws, total});
    double* po = out.data();
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t c = p.cols();
        const double* pp = p.data();
        for (int64_t i = 0; i < rws; ++i)
            std::memcpy(po + i * total + off, pp + i * c, static_cast<size_t>(c) * sizeof(double));
        off += c;
    }
    bool track = false;
    if (tape)
        for (const auto& p : parts)
            if (p.requires_grad() || p.tracked()) track = true;
    if (track) {
        std::vector<std::shared_ptr<Tensor::Impl>> impls;
        impls.reserve(parts.size());
        for (const auto& p : parts) impls.push_back(p.impl());
        auto oi = out.impl();
        tape->record(oi, [impls, oi, rws, total] {
            const double* g = oi->grad.data();
            int64_t off = 0;
            for (const auto& pi : impls) {
                const auto c = static_cast<int64_t>(pi->shape[1]);
                if (pi->requires_grad || pi->tracked) {
                    double* gp = Tensor::ensure_grad(*pi).data();
                    for (int64_t i = 0; i < rws; ++i)
                        for (int64_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off + j];
                }
                off += c;
            }
        });
    }
    return out;
}

inline Tensor sum_all(Tape* tape, const Tensor& x) {
    double acc = 0.0;
    const double* px = x.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) acc += px[i];
    Tensor out = Tensor::scalar(acc);
    if (detail::should_track(tape, {&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape->record(oi, [xi, oi, n] {
            double* gx = Tensor::ensure_grad(*xi).data();
            const double g = oi->grad[0];
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

// Mean negative log-likelihood of the target column of each row of a
// probability matrix. Probabilities are floored before the log so a fully
// underflowed softmax cannot produce -inf.
inline Tensor nll_loss(Tape* tape, const Tensor& probs, const std::vector<int64_t>& targets,
                       double floor = 1e-12) {
    detail::require_2d(probs, "nll_loss");
    const int64_t t = probs.rows(), u = probs.cols();
    if (static_cast<int64_t>(targets.size()) != t)
        throw DimensionError("nll_loss: need one target per row");
    for (int64_t tgt : targets)
        if (tgt < 0 || tgt >= u)
            throw VocabError("nll_loss: target " + std::to_string(tgt) + " outside vocabulary of " +
                             std::to_string(u));
    double acc = 0.0;
    const double* pp = probs.data();
    for (int64_t i = 0; i < t; ++i)
        acc += std::log(std::max(pp[i * u + targets[static_cast<size_t>(i)]], floor));
    Tensor out = Tensor::scalar(-acc / static_cast<double>(t));
    if (detail::should_track(tape, {&probs})) {
        auto pi = probs.impl();
        auto oi = out.impl();
        auto tg = std::make_shared<std::vector<int64_t>>(targets);
        tape->record(oi, [pi, oi, tg, t, u, floor] {
            double* gp = Tensor::ensure_grad(*pi).data();
            const double g = oi->grad[0];
            const double* pp = pi->data.data();
            for (int64_t i = 0; i < t; ++i) {
                const double y = pp[i * u + (*tg)[static_cast<size_t>(i)]];
                if (y > floor)
                    gp[i * u + (*tg)[static_cast<size_t>(i)]] -= g / (static_cast<double>(t) * y);
            }
        });
    }
    return out;
}

}  // namespace seqlab
