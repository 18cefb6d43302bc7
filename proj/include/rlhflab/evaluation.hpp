#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlhflab/corpus.hpp"
#include "rlhflab/errors.hpp"
#include "rlhflab/oracle.hpp"
#include "rlhflab/policy.hpp"
#include "rlhflab/run_record.hpp"

namespace rlhflab {

struct WinRateReport {
    std::uint64_t num_choices = 0;  // feedback consumed by the evaluated policy
    double win_rate = 0.0;
    std::string split;  // "test" or "eval"
    std::string policy_checkpoint_id;
    std::vector<double> per_prompt;  // preference probability per prompt, in split order
};

// Mean oracle preference probability of the policy's greedy responses over
// the baseline's, across the prompt list. Greedy decoding plus probability
// averaging makes this fully deterministic: no sampling enters anywhere.
inline WinRateReport win_rate(const PolicyArch& arch, const ParamVector& policy_params,
                              const ParamVector& baseline_params,
                              std::span<const Prompt> prompts, const Oracle& oracle,
                              std::uint64_t num_choices = 0, const std::string& split = "test",
                              const std::string& checkpoint_id = "") {
    if (prompts.empty()) throw ConfigError("win_rate: empty prompt list");
    WinRateReport rep;
    rep.num_choices = num_choices;
    rep.split = split;
    rep.policy_checkpoint_id = checkpoint_id;
    rep.per_prompt.reserve(prompts.size());
    double sum = 0.0;
    for (const Prompt& prompt : prompts) {
        const Response cand = generate_greedy(arch, policy_params, prompt.tokens);
        const Response base = generate_greedy(arch, baseline_params, prompt.tokens);
        const double p = preference_prob(oracle, prompt.tokens, cand, base);
        rep.per_prompt.push_back(p);
        sum += p;
    }
    rep.win_rate = sum / static_cast<double>(prompts.size());
    return rep;
}

// Same measurement when the baseline's greedy responses are already known
// (they are constant for a whole run, so schedulers cache them).
inline WinRateReport win_rate_cached(const PolicyArch& arch, const ParamVector& policy_params,
                                     std::span<const Prompt> prompts,
                                     std::span<const Response> baseline_responses,
                                     const Oracle& oracle, std::uint64_t num_choices,
                                     const std::string& split,
                                     const std::string& checkpoint_id = "") {
    if (prompts.empty()) throw ConfigError("win_rate: empty prompt list");
    if (prompts.size() != baseline_responses.size())
        throw ConfigError("win_rate: baseline response count mismatch");
    WinRateReport rep;
    rep.num_choices = num_choices;
    rep.split = split;
    rep.policy_checkpoint_id = checkpoint_id;
    rep.per_prompt.reserve(prompts.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const Response cand = generate_greedy(arch, policy_params, prompts[i].tokens);
        const double p = preference_prob(oracle, prompts[i].tokens, cand, baseline_responses[i]);
        rep.per_prompt.push_back(p);
        sum += p;
    }
    rep.win_rate = sum / static_cast<double>(prompts.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Scaling law: w(n) = 1 - 0.5 * (n / a)^(-b)

struct ScalingFit {
    double a = 0.0;
    double b = 0.0;
    double residual = 0.0;  // sum of squared errors in win-rate space, used points
    std::size_t points_used = 0;
    std::size_t points_excluded = 0;  // w <= 0.5 or n = 0; the transform needs both positive
};

inline double scaling_win_rate(const ScalingFit& fit, double n) {
    return 1.0 - 0.5 * std::pow(n / fit.a, -fit.b);
}

// Least squares on the log-linear reduction ln(2(1 - w)) = -b ln n + b ln a.
// Closed form, no iterative optimizer; the residual is reported back in
// win-rate space.
inline ScalingFit fit_scaling(std::span<const WinRatePoint> points) {
    std::vector<double> xs, ys;  // ln n, ln(2(1 - w))
    std::vector<double> ns, ws;
    std::size_t excluded = 0;
    for (const WinRatePoint& pt : points) {
        if (pt.n_choices == 0 || pt.win_rate <= 0.5 || pt.win_rate >= 1.0) {
            ++excluded;
            continue;
        }
        const double n = static_cast<double>(pt.n_choices);
        xs.push_back(std::log(n));
        ys.push_back(std::log(2.0 * (1.0 - pt.win_rate)));
        ns.push_back(n);
        ws.push_back(pt.win_rate);
    }
    const std::size_t m = xs.size();
    if (m < 2) throw FitError("scaling fit: need at least 2 usable points (w > 0.5, n > 0), have " +
                              std::to_string(m));
    bool distinct = false;
    for (std::size_t i = 1; i < m; ++i) {
        if (xs[i] != xs[0]) distinct = true;
    }
    if (!distinct) throw FitError("scaling fit: all usable points share one choice count");

    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double dm = static_cast<double>(m);
    const double slope = (dm * sxy - sx * sy) / (dm * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / dm;

    ScalingFit fit;
    fit.b = -slope;
    if (!(fit.b > 0.0) || !std::isfinite(fit.b))
        throw FitError("scaling fit: win rates do not improve with more choices (b <= 0)");
    fit.a = std::exp(intercept / fit.b);
    if (!std::isfinite(fit.a) || fit.a <= 0.0) throw FitError("scaling fit: degenerate scale a");
    fit.points_used = m;
    fit.points_excluded = excluded;
    for (std::size_t i = 0; i < m; ++i) {
        const double err = ws[i] - scaling_win_rate(fit, ns[i]);
        fit.residual += err * err;
    }
    return fit;
}

// Data-efficiency gain at budget n: how many choices the offline law needs to
// match what the exploration law reaches at n, divided by n. Exact inversion
// of the fitted form: n_offline = a_off * (2(1 - w))^(-1/b_off).
inline double project_gain(const ScalingFit& fit_explore, const ScalingFit& fit_offline,
                           double n) {
    if (n <= 0.0) throw FitError("project_gain: n must be positive");
    const double w = scaling_win_rate(fit_explore, n);
    if (w <= 0.5)
        throw FitError("project_gain: exploration win rate at n = " + std::to_string(n) +
                       " does not exceed 0.5");
    const double n_offline = fit_offline.a * std::pow(2.0 * (1.0 - w), -1.0 / fit_offline.b);
    return n_offline / n;
}

// Argmax with ties resolved toward the earliest index.
inline std::size_t argmax_earliest(std::span<const double> values) {
    if (values.empty()) throw ConfigError("argmax_earliest: empty list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

// Index of the checkpoint with the highest test-split win rate, earliest on
// ties.
inline std::size_t best_checkpoint(std::span<const ParamVector> checkpoints,
                                   const PolicyArch& arch, std::span<const Prompt> test_prompts,
                                   const ParamVector& baseline_params, const Oracle& oracle,
                                   std::vector<double>* rates_out = nullptr) {
    if (checkpoints.empty()) throw ConfigError("best_checkpoint: no checkpoints");
    std::vector<double> rates;
    rates.reserve(checkpoints.size());
    for (const ParamVector& ckpt : checkpoints) {
        rates.push_back(win_rate(arch, ckpt, baseline_params, test_prompts, oracle).win_rate);
    }
    const std::size_t best = argmax_earliest(rates);
    if (rates_out) *rates_out = std::move(rates);
    return best;
}

}  // namespace rlhflab
