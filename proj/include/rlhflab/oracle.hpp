#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rlhflab/corpus.hpp"
#include "rlhflab/errors.hpp"
#include "rlhflab/policy.hpp"
#include "rlhflab/reward_model.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

// Ground-truth reward used to simulate the annotator. Choices between two
// responses follow the Bradley-Terry model on the scaled true rewards.
//
// task: a hidden per-run rule. The ideal response repeats the prompt with
// every token shifted by a secret constant (modulo the content vocabulary)
// and then stops. Rewards mix shifted-copy accuracy with a length penalty.
//
// network: a randomly initialized reward network acts as the ground truth.
enum class OracleKind { Task, Network };

inline const char* oracle_kind_name(OracleKind k) {
    return k == OracleKind::Task ? "task" : "network";
}

inline OracleKind parse_oracle_kind(const std::string& s) {
    if (s == "task") return OracleKind::Task;
    if (s == "network") return OracleKind::Network;
    throw ConfigError("unknown oracle kind: " + s);
}

struct Oracle {
    OracleKind kind = OracleKind::Task;
    double scale = 1.0;

    // task oracle state
    std::size_t vocab_size = 0;
    Token shift = 0;

    // network oracle state
    EnnRewardModel net;
};

inline Oracle make_task_oracle(std::size_t vocab_size, const SeedTree& node) {
    if (vocab_size < 3) throw ConfigError("task oracle: vocab_size must be at least 3");
    Oracle o;
    o.kind = OracleKind::Task;
    o.vocab_size = vocab_size;
    RngStream rng = node.child("shift").stream();
    // nonzero shift, so plain copying is never the answer
    o.shift = static_cast<Token>(1 + rng.uniform_int(vocab_size - 2));
    return o;
}

inline Oracle make_network_oracle(const BackboneSpec& backbone, std::size_t head_hidden,
                                  const SeedTree& node) {
    Oracle o;
    o.kind = OracleKind::Network;
    o.vocab_size = backbone.vocab_size;
    RewardArch arch;
    arch.backbone = backbone;
    arch.head = HeadKind::Mlp;
    arch.head_hidden = head_hidden;
    arch.num_index_heads = 0;
    // full head gain: a zero-initialised net would give every response the
    // same score and leave nothing to calibrate
    o.net = make_reward_model(arch, node.child("net"), 1.0);
    return o;
}

// Unscaled reward. For the task oracle: position-weighted accuracy of the
// shifted copy (weights decay linearly, front tokens matter most, sum to 1)
// minus half the relative length error. An exact-length perfect copy scores
// 1, so values live in [-(max_len/M - 1)/2 - 0, 1].
inline double oracle_raw_reward(const Oracle& o, std::span<const Token> prompt,
                                const Response& resp) {
    if (o.kind == OracleKind::Network) {
        return reward(o.net, prompt, resp, 0);
    }
    const std::size_t M = prompt.size();
    if (M == 0) throw ConfigError("task oracle: empty prompt");
    const std::size_t L = resp.tokens.size();
    const Token content_vocab = static_cast<Token>(o.vocab_size - 1);

    double overlap = 0.0;
    const double denom = static_cast<double>(M) * static_cast<double>(M + 1);
    for (std::size_t i = 0; i < std::min(L, M); ++i) {
        const Token want = static_cast<Token>((prompt[i] + o.shift) % content_vocab);
        if (resp.tokens[i] == want) {
            overlap += 2.0 * static_cast<double>(M - i) / denom;
        }
    }
    const double len_err =
        std::abs(static_cast<double>(L) - static_cast<double>(M)) / static_cast<double>(M);
    return overlap - 0.5 * len_err;
}

inline double oracle_reward(const Oracle& o, std::span<const Token> prompt,
                            const Response& resp) {
    return o.scale * oracle_raw_reward(o, prompt, resp);
}

inline double preference_prob(const Oracle& o, std::span<const Token> prompt,
                              const Response& a, const Response& b) {
    return choice_prob(oracle_reward(o, prompt, a), oracle_reward(o, prompt, b));
}

// 0 if the first response wins the simulated comparison, 1 otherwise.
inline std::size_t sample_choice(const Oracle& o, std::span<const Token> prompt,
                                 const Response& a, const Response& b, RngStream& rng) {
    return rng.bernoulli(preference_prob(o, prompt, a, b)) ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationReport {
    double scale = 1.0;
    double pref_std = 0.0;  // std of P(first wins) over the probe pairs
    std::size_t pairs = 0;
};

namespace detail {

inline double pref_std_at_scale(const std::vector<double>& raw_deltas, double scale) {
    double mean = 0.0;
    std::vector<double> p(raw_deltas.size());
    for (std::size_t i = 0; i < raw_deltas.size(); ++i) {
        p[i] = 1.0 / (1.0 + std::exp(-scale * raw_deltas[i]));
        mean += p[i];
    }
    mean /= static_cast<double>(p.size());
    double var = 0.0;
    for (double v : p) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(p.size()));
}

}  // namespace detail

// Sets o.scale so that preference probabilities over pairs sampled from the
// given policy have the target spread. The spread is monotone in the scale,
// so a bisection suffices. Throws when no scale can reach the accepted band,
// which means the oracle cannot distinguish the policy's responses.
inline CalibrationReport calibrate_oracle(Oracle& o, const PolicyArch& arch,
                                          const ParamVector& policy_params,
                                          std::span<const Prompt> prompts,
                                          std::size_t num_pairs, std::size_t sample_k,
                                          const SeedTree& node, double target_std = 0.2,
                                          double min_std = 0.1, double max_std = 0.3) {
    if (prompts.empty()) throw ConfigError("calibration: no prompts");
    if (num_pairs == 0) throw ConfigError("calibration: num_pairs must be positive");

    std::vector<double> deltas;
    deltas.reserve(num_pairs);
    for (std::size_t i = 0; i < num_pairs; ++i) {
        SeedTree pnode = node.child("pair").child(i);
        RngStream pick = pnode.child("prompt").stream();
        const Prompt& prompt = prompts[pick.uniform_int(prompts.size())];
        RngStream ra = pnode.child("a").stream();
        RngStream rb = pnode.child("b").stream();
        const Response a = generate(arch, policy_params, prompt.tokens, sample_k, ra);
        const Response b = generate(arch, policy_params, prompt.tokens, sample_k, rb);
        deltas.push_back(oracle_raw_reward(o, prompt.tokens, a) -
                         oracle_raw_reward(o, prompt.tokens, b));
    }

    double lo = 1e-4, hi = 1e4;
    const double std_hi = detail::pref_std_at_scale(deltas, hi);
    const double std_lo = detail::pref_std_at_scale(deltas, lo);
    double scale;
    if (std_hi <= target_std) {
        scale = hi;
    } else if (std_lo >= target_std) {
        scale = lo;
    } else {
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (detail::pref_std_at_scale(deltas, mid) < target_std) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        scale = 0.5 * (lo + hi);
    }

    CalibrationReport rep;
    rep.scale = scale;
    rep.pref_std = detail::pref_std_at_scale(deltas, scale);
    rep.pairs = num_pairs;
    if (rep.pref_std < min_std || rep.pref_std > max_std) {
        throw ConfigError("calibration: achievable preference spread " +
                          std::to_string(rep.pref_std) + " is outside [" +
                          std::to_string(min_std) + ", " + std::to_string(max_std) + "]");
    }
    o.scale = scale;
    return rep;
}

}  // namespace rlhflab
