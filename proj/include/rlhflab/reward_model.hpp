#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rlhflab/backbone.hpp"
#include "rlhflab/corpus.hpp"
#include "rlhflab/errors.hpp"
#include "rlhflab/mlp.hpp"
#include "rlhflab/param_vector.hpp"
#include "rlhflab/policy.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

// Head index into the reward ensemble: 0 is the base network, 1..N are the
// index heads (fixed random prior plus a learnable difference head).
using EpistemicIndex = std::size_t;

enum class HeadKind { Linear, Mlp };

inline const char* head_kind_name(HeadKind k) {
    return k == HeadKind::Linear ? "linear" : "mlp";
}

struct RewardArch {
    BackboneSpec backbone;
    HeadKind head = HeadKind::Linear;
    std::size_t head_hidden = 32;
    std::size_t num_index_heads = 0;  // 0 disables the ensemble
    std::size_t prior_hidden = 16;
    double prior_scale = 1.0;

    MlpSpec head_spec() const {
        MlpSpec s;
        s.input_dim = backbone.repr_dim;
        if (head == HeadKind::Mlp) s.hidden_widths = {head_hidden, head_hidden};
        s.output_dim = 1;
        s.activation = backbone.activation;
        return s;
    }

    // Prior heads are narrower than difference heads.
    MlpSpec prior_spec() const {
        return MlpSpec{backbone.repr_dim, {prior_hidden}, 1, backbone.activation};
    }
    MlpSpec diff_spec() const {
        return MlpSpec{backbone.repr_dim, {head_hidden}, 1, backbone.activation};
    }

    void validate() const {
        backbone.validate();
        head_spec().validate();
        if (num_index_heads > 0) {
            prior_spec().validate();
            diff_spec().validate();
        }
        if (prior_scale < 0.0) throw ConfigError("reward: prior_scale must be non-negative");
    }
};

// Trainable pieces are separated so "never updated" and "trained
// individually" hold by construction: `base` feeds one optimizer, each entry
// of `diffs` feeds its own, and `priors` never sees an optimizer at all.
struct EnnRewardModel {
    RewardArch arch;
    ParamVector base;                // embed, trunk, head
    ParamVector priors;              // prior.1 .. prior.N, fixed at creation
    std::vector<ParamVector> diffs;  // one single-segment vector per index head
};

inline std::string prior_segment(std::size_t z) { return "prior." + std::to_string(z); }

// head_gain scales the output layer of the base head and the difference
// heads. The default 0.0 gives a calm start: every response scores exactly 0
// until trained, so early choice probabilities are 0.5 and downstream updates
// see no phantom preferences from the random init. Pass a positive gain when
// the network itself must produce varied scores (e.g. synthetic oracles).
inline EnnRewardModel make_reward_model(const RewardArch& arch, const SeedTree& node,
                                        double head_gain = 0.0) {
    arch.validate();
    EnnRewardModel rm;
    rm.arch = arch;

    add_backbone_segments(rm.base, arch.backbone);
    rm.base.add_segment("head", {arch.head_spec().param_count()});
    init_backbone(arch.backbone, rm.base, node.child("backbone"));
    init_mlp_params(arch.head_spec(), rm.base.view("head"), node.child("head"), head_gain);

    const MlpSpec pspec = arch.prior_spec();
    const MlpSpec dspec = arch.diff_spec();
    for (std::size_t z = 1; z <= arch.num_index_heads; ++z) {
        rm.priors.add_segment(prior_segment(z), {pspec.param_count()});
        // full-gain final layer: the priors are the source of head diversity
        init_mlp_params(pspec, rm.priors.view(prior_segment(z)), node.child("prior").child(z),
                        1.0);

        ParamVector diff;
        diff.add_segment("diff", {dspec.param_count()});
        init_mlp_params(dspec, diff.view("diff"), node.child("diff").child(z), head_gain);
        rm.diffs.push_back(std::move(diff));
    }
    return rm;
}

// ---------------------------------------------------------------------------
// Scoring

// The reward model reads the response as emitted (end marker included) and
// mean-pools the backbone representation over the response positions.
struct PooledRepr {
    TokenSeq seq;            // prompt followed by emitted response tokens
    std::size_t resp_begin;  // first response position in seq
    std::vector<double> repr;
};

inline PooledRepr pooled_repr(const BackboneSpec& backbone, const ParamVector& params,
                              std::span<const Token> prompt, const Response& resp) {
    PooledRepr out;
    out.seq.assign(prompt.begin(), prompt.end());
    out.resp_begin = out.seq.size();
    TokenSeq em = resp.tokens;
    if (resp.terminated) em.push_back(static_cast<Token>(backbone.vocab_size - 1));
    if (em.empty()) throw ConfigError("reward: response has no emitted tokens");
    out.seq.insert(out.seq.end(), em.begin(), em.end());

    out.repr.assign(backbone.repr_dim, 0.0);
    std::vector<double> r(backbone.repr_dim);
    for (std::size_t pos = out.resp_begin; pos < out.seq.size(); ++pos) {
        backbone_repr(backbone, params, out.seq, pos, r);
        for (std::size_t i = 0; i < r.size(); ++i) out.repr[i] += r[i];
    }
    const double inv = 1.0 / static_cast<double>(out.seq.size() - out.resp_begin);
    for (double& v : out.repr) v *= inv;
    return out;
}

inline double base_reward_from_repr(const EnnRewardModel& rm, std::span<const double> repr) {
    double out = 0.0;
    mlp_forward_span(rm.arch.head_spec(), rm.base.view("head"), repr, {&out, 1});
    return out;
}

inline double index_reward_from_repr(const EnnRewardModel& rm, std::span<const double> repr,
                                     EpistemicIndex z) {
    double r = base_reward_from_repr(rm, repr);
    if (z == 0) return r;
    if (z > rm.arch.num_index_heads) throw ConfigError("reward: epistemic index out of range");
    double prior = 0.0, diff = 0.0;
    mlp_forward_span(rm.arch.prior_spec(), rm.priors.view(prior_segment(z)), repr, {&prior, 1});
    mlp_forward_span(rm.arch.diff_spec(), rm.diffs[z - 1].view("diff"), repr, {&diff, 1});
    return r + rm.arch.prior_scale * prior + diff;
}

inline double reward(const EnnRewardModel& rm, std::span<const Token> prompt,
                     const Response& resp, EpistemicIndex z = 0) {
    const PooledRepr pr = pooled_repr(rm.arch.backbone, rm.base, prompt, resp);
    return index_reward_from_repr(rm, pr.repr, z);
}

// Rewards under every head for one response; computes the pooled
// representation once.
struct HeadRewards {
    double base = 0.0;
    std::vector<double> index;  // index[z-1] holds head z
};

inline HeadRewards all_rewards(const EnnRewardModel& rm, std::span<const Token> prompt,
                               const Response& resp) {
    const PooledRepr pr = pooled_repr(rm.arch.backbone, rm.base, prompt, resp);
    HeadRewards hr;
    hr.base = base_reward_from_repr(rm, pr.repr);
    const MlpSpec pspec = rm.arch.prior_spec();
    const MlpSpec dspec = rm.arch.diff_spec();
    hr.index.resize(rm.arch.num_index_heads);
    for (std::size_t z = 1; z <= rm.arch.num_index_heads; ++z) {
        double prior = 0.0, diff = 0.0;
        mlp_forward_span(pspec, rm.priors.view(prior_segment(z)), pr.repr, {&prior, 1});
        mlp_forward_span(dspec, rm.diffs[z - 1].view("diff"), pr.repr, {&diff, 1});
        hr.index[z - 1] = hr.base + rm.arch.prior_scale * prior + diff;
    }
    return hr;
}

// P(first beats second) from two scalar rewards, computed in the
// overflow-safe form 1 / (1 + exp(r2 - r1)).
inline double choice_prob(double r1, double r2) { return 1.0 / (1.0 + std::exp(r2 - r1)); }

// Population variance over the index heads of P(A beats B).
inline double choice_prob_variance(const HeadRewards& a, const HeadRewards& b) {
    const std::size_t n = a.index.size();
    if (n != b.index.size()) throw ConfigError("reward: head count mismatch");
    if (n == 0) return 0.0;
    double mean = 0.0;
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = choice_prob(a.index[i], b.index[i]);
        mean += p[i];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : p) var += (v - mean) * (v - mean);
    return var / static_cast<double>(n);
}

// The unordered pair with the most disagreement among index heads. Ties pick
// the lexicographically smallest (i, j).
inline std::pair<std::size_t, std::size_t> infomax_pair(const std::vector<HeadRewards>& rewards,
                                                        double* best_variance = nullptr) {
    if (rewards.size() < 2) throw ConfigError("infomax: need at least two responses");
    std::pair<std::size_t, std::size_t> best{0, 1};
    double best_var = -1.0;
    for (std::size_t i = 0; i + 1 < rewards.size(); ++i) {
        for (std::size_t j = i + 1; j < rewards.size(); ++j) {
            const double var = choice_prob_variance(rewards[i], rewards[j]);
            if (var > best_var) {
                best_var = var;
                best = {i, j};
            }
        }
    }
    if (best_variance) *best_variance = best_var;
    return best;
}

// ---------------------------------------------------------------------------
// Gradients

// Accumulates cot * d(base reward)/d(base params) into grad (layout of base).
inline void base_reward_backward(const EnnRewardModel& rm, std::span<const Token> prompt,
                                 const Response& resp, double cot, ParamVector& grad) {
    const BackboneSpec& bb = rm.arch.backbone;
    const PooledRepr pr = pooled_repr(bb, rm.base, prompt, resp);

    const double c[1] = {cot};
    std::vector<double> d_repr(bb.repr_dim, 0.0);
    mlp_backward_span(rm.arch.head_spec(), rm.base.view("head"), pr.repr, c,
                      grad.view("head"), d_repr);

    const std::size_t count = pr.seq.size() - pr.resp_begin;
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<double> d_pos(bb.repr_dim);
    for (std::size_t i = 0; i < d_repr.size(); ++i) d_pos[i] = d_repr[i] * inv;
    for (std::size_t pos = pr.resp_begin; pos < pr.seq.size(); ++pos) {
        backbone_backward(bb, rm.base, pr.seq, pos, d_pos, grad);
    }
}

// Accumulates cot * d(index reward z)/d(diff head z) into grad (layout of
// diffs[z-1]). The backbone and prior stay out of the gradient.
inline void diff_reward_backward(const EnnRewardModel& rm, std::span<const Token> prompt,
                                 const Response& resp, EpistemicIndex z, double cot,
                                 ParamVector& grad) {
    if (z == 0 || z > rm.arch.num_index_heads)
        throw ConfigError("reward: diff gradient needs an index head");
    const PooledRepr pr = pooled_repr(rm.arch.backbone, rm.base, prompt, resp);
    const double c[1] = {cot};
    std::vector<double> unused(rm.arch.backbone.repr_dim, 0.0);
    mlp_backward_span(rm.arch.diff_spec(), rm.diffs[z - 1].view("diff"), pr.repr, c,
                      grad.view("diff"), unused);
}

}  // namespace rlhflab
