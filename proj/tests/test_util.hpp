#pragma once

// Shared helpers for the test suite: central-difference gradient checking
// against analytic gradients, small architectures that keep tests fast, and
// bit-exact run record comparison.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "rlhflab/param_vector.hpp"
#include "rlhflab/policy.hpp"
#include "rlhflab/reward_model.hpp"
#include "rlhflab/run_record.hpp"
#include "rlhflab/schedulers.hpp"

namespace testutil {

// Largest relative mismatch between an analytic gradient and the central
// difference of `objective` over every coordinate of `params`. The floor
// keeps near-zero entries from blowing up the ratio.
inline double max_grad_mismatch(rlhflab::ParamVector& params,
                                const std::function<double()>& objective,
                                const rlhflab::ParamVector& analytic, double h = 1e-4,
                                double floor = 1e-6) {
    std::span<double> x = params.flat();
    std::span<const double> g = analytic.flat();
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = objective();
        x[i] = saved - h;
        const double down = objective();
        x[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({floor, std::fabs(fd), std::fabs(g[i])});
        worst = std::max(worst, std::fabs(fd - g[i]) / denom);
    }
    return worst;
}

inline rlhflab::PolicyArch tiny_policy_arch() {
    rlhflab::PolicyArch arch;
    arch.backbone.vocab_size = 6;
    arch.backbone.embed_dim = 3;
    arch.backbone.window = 3;
    arch.backbone.repr_dim = 4;
    arch.backbone.trunk_widths = {5};
    arch.max_response_len = 4;
    return arch;
}

inline rlhflab::RewardArch tiny_reward_arch(std::size_t index_heads = 0,
                                            rlhflab::HeadKind head = rlhflab::HeadKind::Linear) {
    rlhflab::RewardArch arch;
    arch.backbone = tiny_policy_arch().backbone;
    arch.head = head;
    arch.head_hidden = 4;
    arch.num_index_heads = index_heads;
    arch.prior_hidden = 3;
    arch.prior_scale = 1.0;
    return arch;
}

// A fast configuration for scheduler-level tests: small nets, tiny corpus.
inline rlhflab::RunConfig small_run_config(rlhflab::Algorithm algorithm,
                                           std::uint64_t seed = 1) {
    rlhflab::RunConfig c;
    c.algorithm = algorithm;
    c.seed = seed;
    c.batch_size = 4;
    c.num_batches = 6;
    c.period = 3;
    c.responses_per_prompt = 4;
    c.ensemble_size = 2;
    c.eval_cadence = 2;
    c.checkpoint_interval = 2;
    c.policy_steps = 5;
    c.corpus.vocab_size = 12;
    c.corpus.train_size = 30;
    c.corpus.test_size = 8;
    c.corpus.eval_size = 8;
    c.corpus.prompt_len_min = 3;
    c.corpus.prompt_len_max = 4;
    c.embed_dim = 4;
    c.window = 6;
    c.trunk = {8};
    c.repr_dim = 6;
    c.max_response_len = 5;
    c.sample_k = 3;
    c.head_hidden = 4;
    c.prior_hidden = 4;
    c.calibration_pairs = 64;
    return c;
}

inline bool choices_identical(const rlhflab::ChoiceRecord& a, const rlhflab::ChoiceRecord& b) {
    return a.batch == b.batch && a.prompt_id == b.prompt_id && a.prompt == b.prompt &&
           a.candidates == b.candidates && a.first == b.first && a.second == b.second &&
           a.choice == b.choice && a.selection == b.selection &&
           a.selection_variance == b.selection_variance;
}

// Bit-exact equality of everything a run records except its algorithm label.
inline bool records_identical(const rlhflab::RunRecord& a, const rlhflab::RunRecord& b) {
    if (a.seed != b.seed || a.total_choices != b.total_choices) return false;
    if (a.calibration.scale != b.calibration.scale) return false;
    if (a.final_win_rate != b.final_win_rate) return false;
    if (a.prior_hash_start != b.prior_hash_start || a.prior_hash_end != b.prior_hash_end)
        return false;
    if (a.curve.size() != b.curve.size()) return false;
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        if (a.curve[i].n_choices != b.curve[i].n_choices) return false;
        if (a.curve[i].win_rate != b.curve[i].win_rate) return false;
    }
    if (a.batches.size() != b.batches.size()) return false;
    for (std::size_t i = 0; i < a.batches.size(); ++i) {
        const rlhflab::BatchLogEntry& x = a.batches[i];
        const rlhflab::BatchLogEntry& y = b.batches[i];
        if (x.batch != y.batch || x.total_choices != y.total_choices) return false;
        if (x.generator_hash != y.generator_hash || x.policy_hash != y.policy_hash ||
            x.rm_hash != y.rm_hash)
            return false;
        if (x.eval_win_rate != y.eval_win_rate) return false;
        if (x.choices.size() != y.choices.size()) return false;
        for (std::size_t j = 0; j < x.choices.size(); ++j) {
            if (!choices_identical(x.choices[j], y.choices[j])) return false;
        }
        if (x.updates.size() != y.updates.size()) return false;
        for (std::size_t j = 0; j < x.updates.size(); ++j) {
            const rlhflab::UpdateLogEntry& u = x.updates[j];
            const rlhflab::UpdateLogEntry& v = y.updates[j];
            if (u.target != v.target || u.applied != v.applied ||
                u.grad_norm != v.grad_norm || u.loss != v.loss ||
                u.skip_reason != v.skip_reason)
                return false;
        }
    }
    return true;
}

}  // namespace testutil
