#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "rlhflab/errors.hpp"
#include "rlhflab/param_vector.hpp"

namespace rlhflab {

struct AdamWHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double clip_norm = 1.0;  // <= 0 disables clipping
};

// Moment buffers share the parameter layout so checkpoints can name them.
struct OptimizerState {
    ParamVector m;  // first moment
    ParamVector v;  // second moment
    std::uint64_t step_count = 0;

    static OptimizerState like(const ParamVector& params) {
        OptimizerState s;
        s.m = params.zeros_like();
        s.v = params.zeros_like();
        return s;
    }
};

// Scales grad in place so its global L2 norm is at most max_norm.
// Returns the pre-clip norm. No-op when already within bounds, so a second
// call is exact identity. Non-finite entries are a skipped-update condition.
inline double clip_global_norm(ParamVector& grad, double max_norm) {
    const std::size_t bad = grad.first_nonfinite();
    if (bad != ParamVector::npos) {
        throw UpdateSkipped("non-finite gradient in segment '" + grad.segment_of(bad) + "'");
    }
    const double norm = grad.l2_norm();
    if (max_norm > 0.0 && norm > max_norm) {
        grad.scale(max_norm / norm);
    }
    return norm;
}

// One AdamW step, descent direction: decoupled decay is applied to the
// parameter first (p *= 1 - lr*wd), then the bias-corrected moment update
// p -= lr * m_hat / (sqrt(v_hat) + eps). Pass the gradient of a loss; callers
// maximizing an objective negate before calling.
inline void adamw_step(ParamVector& params, const ParamVector& grad, OptimizerState& state,
                       const AdamWHyper& hyper) {
    params.check_same_layout(grad, "adamw_step: grad");
    params.check_same_layout(state.m, "adamw_step: state.m");
    params.check_same_layout(state.v, "adamw_step: state.v");

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);

    std::span<double> p = params.flat();
    std::span<const double> g = grad.flat();
    std::span<double> m = state.m.flat();
    std::span<double> v = state.v.flat();

    const double decay = 1.0 - hyper.lr * hyper.weight_decay;
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
        p[i] *= decay;
        p[i] -= hyper.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + hyper.eps);
    }
}

}  // namespace rlhflab
