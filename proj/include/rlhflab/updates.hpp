#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rlhflab/errors.hpp"
#include "rlhflab/optimizer.hpp"
#include "rlhflab/param_vector.hpp"
#include "rlhflab/policy.hpp"
#include "rlhflab/reward_model.hpp"

namespace rlhflab {

// ---------------------------------------------------------------------------
// Reward-model updates

// Ascent direction on the base network for one observed comparison: the
// gradient of log P(winner beats loser) under the model, which works out to
// (1 - p) * (grad r_winner - grad r_loser). Accumulates into grad (layout of
// rm.base) and returns p.
inline double reward_logprob_grad(const EnnRewardModel& rm, std::span<const Token> prompt,
                                  const Response& winner, const Response& loser,
                                  ParamVector& grad) {
    const double rw = reward(rm, prompt, winner, 0);
    const double rl = reward(rm, prompt, loser, 0);
    const double p = choice_prob(rw, rl);
    base_reward_backward(rm, prompt, winner, 1.0 - p, grad);
    base_reward_backward(rm, prompt, loser, -(1.0 - p), grad);
    return p;
}

// Same comparison seen through index head z, differentiated only through that
// head's learnable difference network. grad has the layout of rm.diffs[z-1].
inline double diff_logprob_grad(const EnnRewardModel& rm, std::span<const Token> prompt,
                                const Response& winner, const Response& loser,
                                EpistemicIndex z, ParamVector& grad) {
    const double rw = reward(rm, prompt, winner, z);
    const double rl = reward(rm, prompt, loser, z);
    const double p = choice_prob(rw, rl);
    diff_reward_backward(rm, prompt, winner, z, 1.0 - p, grad);
    diff_reward_backward(rm, prompt, loser, z, -(1.0 - p), grad);
    return p;
}

// ---------------------------------------------------------------------------
// Policy updates

struct PolicyHyper {
    double affirmative_nudge = 0.02;  // added to the centered preference signal
    double anchor_strength = 0.1;     // weight of the pull toward the anchor policy
    bool full_vocab_anchor = false;   // anchor term over the whole vocabulary
    double anchor_ema = 0.99;         // anchor tracking rate per policy step
};

// Ascent direction for one ordered comparison (y against y_cmp), given the
// reward-model scores of both responses. Per emitted token of y:
//
//   (p - 1/2 + nudge) * grad log pi(y_l)            reinforcement
//   + beta * pibar(y_l) * grad log pi(y_l)          anchor, sampled-token form
//
// or, with full_vocab_anchor, the anchor sums over every vocabulary token,
// which collapses to the logit cotangent pibar - pi. Both terms share one
// backward pass per step. Accumulates into grad, returns p.
inline double policy_pair_grad(const PolicyArch& arch, const ParamVector& theta,
                               const ParamVector& anchor, std::span<const Token> prompt,
                               const Response& y, double score_y, double score_cmp,
                               const PolicyHyper& hyper, ParamVector& grad) {
    const double p = choice_prob(score_y, score_cmp);
    const double signal = p - 0.5 + hyper.affirmative_nudge;
    const double beta = hyper.anchor_strength;
    const std::size_t V = arch.backbone.vocab_size;

    TokenSeq ctx(prompt.begin(), prompt.end());
    std::vector<double> cot(V);
    for (Token tok : emitted_tokens(arch, y)) {
        const StepEval ev = eval_step(arch, theta, ctx);
        // grad log pi(tok) has logit cotangent e_tok - pi
        if (hyper.full_vocab_anchor) {
            const StepEval ref = eval_step(arch, anchor, ctx);
            for (std::size_t v = 0; v < V; ++v) {
                cot[v] = -signal * ev.probs[v] + beta * (ref.probs[v] - ev.probs[v]);
            }
            cot[tok] += signal;
        } else {
            const StepEval ref = eval_step(arch, anchor, ctx);
            const double w = signal + beta * ref.probs[tok];
            for (std::size_t v = 0; v < V; ++v) cot[v] = -w * ev.probs[v];
            cot[tok] += w;
        }
        step_backward(arch, theta, ctx, ev.repr, cot, grad);
        ctx.push_back(tok);
    }
    return p;
}

// anchor <- eta * anchor + (1 - eta) * theta
inline void ema_update(ParamVector& anchor, const ParamVector& theta, double eta) {
    anchor.check_same_layout(theta, "ema_update");
    if (eta < 0.0 || eta > 1.0) throw ConfigError("ema_update: eta must lie in [0, 1]");
    anchor.scale(eta);
    anchor.axpy(1.0 - eta, theta);
}

// ---------------------------------------------------------------------------
// Applying accumulated directions

struct UpdateOutcome {
    bool applied = false;
    double grad_norm = 0.0;       // pre-clip norm of the summed direction
    std::string skip_reason;      // set when the update was skipped
};

// Sums ascent directions, negates them into a descent gradient, clips the
// global norm, and takes one optimizer step. An empty list still steps the
// optimizer (weight decay and the step count advance). A non-finite sum skips
// the whole update and reports why; parameters and moments stay untouched.
inline UpdateOutcome accumulate_and_apply(ParamVector& params,
                                          std::span<const ParamVector* const> ascent_dirs,
                                          OptimizerState& state, const AdamWHyper& hyper) {
    ParamVector g = params.zeros_like();
    for (const ParamVector* d : ascent_dirs) {
        params.check_same_layout(*d, "accumulate_and_apply");
        g.axpy(-1.0, *d);
    }
    UpdateOutcome out;
    try {
        out.grad_norm = clip_global_norm(g, hyper.clip_norm);
    } catch (const UpdateSkipped& e) {
        out.skip_reason = e.what();
        return out;
    }
    adamw_step(params, g, state, hyper);
    out.applied = true;
    return out;
}

inline UpdateOutcome accumulate_and_apply(ParamVector& params,
                                          std::initializer_list<const ParamVector*> dirs,
                                          OptimizerState& state, const AdamWHyper& hyper) {
    std::vector<const ParamVector*> v(dirs);
    return accumulate_and_apply(params, std::span<const ParamVector* const>(v), state, hyper);
}

}  // namespace rlhflab
