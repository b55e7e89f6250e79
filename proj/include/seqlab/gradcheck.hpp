#pragma once
#include <cmath>
#include <functional>
#include <vector>

#include "seqlab/tensor.hpp"

namespace seqlab {

// Central-difference gradient oracle. `build_loss` must rebuild the loss from
// the current contents of `inputs` on every call and be deterministic
// (dropout disabled). Returns the max over all coordinates of
// |analytic - numeric| / max(1, |analytic|).
inline double finite_diff_check_many(const std::function<Tensor(Tape*)>& build_loss,
                                     const std::vector<Tensor>& inputs, double eps = 1e-5) {
    if (eps <= 0.0) throw ContractError("finite_diff_check: eps must be positive");
    for (const auto& in : inputs) const_cast<Tensor&>(in).clear_grad();
    Tape tape;
    Tensor loss = build_loss(&tape);
    if (!std::isfinite(loss.item())) throw NumericError("finite_diff_check: non-finite loss");
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& in : inputs) analytic.push_back(in.grad_or_zeros());

    double worst = 0.0;
    for (size_t p = 0; p < inputs.size(); ++p) {
        Tensor in = inputs[p];
        for (int64_t i = 0; i < in.numel(); ++i) {
            const double saved = in.data()[i];
            in.data()[i] = saved + eps;
            const double up = build_loss(nullptr).item();
            in.data()[i] = saved - eps;
            const double dn = build_loss(nullptr).item();
            in.data()[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(dn))
                throw NumericError("finite_diff_check: non-finite perturbed loss");
            const double numeric = (up - dn) / (2.0 * eps);
            const double a = analytic[p][static_cast<size_t>(i)];
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

inline double finite_diff_check(const std::function<Tensor(Tape*, const Tensor&)>& f, const Tensor& x,
                                double eps = 1e-5) {
    return finite_diff_check_many([&](Tape* tape) { return f(tape, x); }, {x}, eps);
}

}  // namespace seqlab
