#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rlhflab/corpus.hpp"
#include "rlhflab/errors.hpp"
#include "rlhflab/evaluation.hpp"
#include "rlhflab/oracle.hpp"
#include "rlhflab/optimizer.hpp"
#include "rlhflab/policy.hpp"
#include "rlhflab/reward_model.hpp"
#include "rlhflab/rng.hpp"
#include "rlhflab/run_record.hpp"
#include "rlhflab/updates.hpp"

namespace rlhflab {

enum class Algorithm { Offline, Periodic, Online, Ids };

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Offline: return "offline";
        case Algorithm::Periodic: return "periodic";
        case Algorithm::Online: return "online";
        case Algorithm::Ids: return "ids";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "offline") return Algorithm::Offline;
    if (s == "periodic") return Algorithm::Periodic;
    if (s == "online") return Algorithm::Online;
    if (s == "ids") return Algorithm::Ids;
    throw ConfigError("unknown algorithm: " + s);
}

// ---------------------------------------------------------------------------
// Pair selection

enum class PairScheme { RandomPair, ReversedDuplicate, RankExtremes2, RankExtremes4 };

inline const char* pair_scheme_name(PairScheme s) {
    switch (s) {
        case PairScheme::RandomPair: return "random-pair";
        case PairScheme::ReversedDuplicate: return "reversed-duplicate";
        case PairScheme::RankExtremes2: return "rank-extremes-2";
        case PairScheme::RankExtremes4: return "rank-extremes-4";
    }
    return "?";
}

// Ordered index pairs for policy updates, chosen by reward rank. Rank ties
// break toward the lower index (lower index = higher rank). random-pair is
// drawn by the schedulers, not here.
inline std::vector<std::pair<std::size_t, std::size_t>> select_rank_pairs(
    std::span<const double> rewards, PairScheme scheme) {
    const std::size_t m = rewards.size();
    switch (scheme) {
        case PairScheme::RandomPair:
            throw ConfigError("select_rank_pairs: random-pair needs a random stream");
        case PairScheme::ReversedDuplicate:
            if (m != 2) throw ConfigError("select_rank_pairs: reversed-duplicate needs exactly 2");
            return {{0, 1}, {1, 0}};
        case PairScheme::RankExtremes2:
        case PairScheme::RankExtremes4:
            break;
    }
    const std::size_t need = scheme == PairScheme::RankExtremes4 ? 4 : 2;
    if (m < need)
        throw ConfigError(std::string("select_rank_pairs: ") + pair_scheme_name(scheme) +
                          " needs at least " + std::to_string(need) + " responses");
    std::vector<std::size_t> rank(m);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        if (rewards[a] != rewards[b]) return rewards[a] > rewards[b];
        return a < b;
    });
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.emplace_back(rank[0], rank[m - 1]);
    pairs.emplace_back(rank[m - 1], rank[0]);
    if (scheme == PairScheme::RankExtremes4) {
        pairs.emplace_back(rank[1], rank[m - 2]);
        pairs.emplace_back(rank[m - 2], rank[1]);
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    Algorithm algorithm = Algorithm::Online;
    std::uint64_t seed = 1;
    std::string profile = "desk-scale";

    // run shape
    std::size_t batch_size = 16;
    std::size_t num_batches = 500;
    std::size_t period = 50;                // periodic only
    std::size_t responses_per_prompt = 8;   // m
    std::size_t ensemble_size = 10;         // N, index heads of the reward ensemble
    std::size_t eval_cadence = 10;          // batches between test evaluations (0 = never)
    std::size_t checkpoint_interval = 25;   // policy steps (offline/periodic) or batches (online/ids)
    std::size_t policy_steps = 125;         // per optimization round, offline/periodic
    std::size_t rm_epochs = 1;              // passes over accumulated data per retrain
    bool log_responses = true;              // keep all sampled candidates in records
    std::string checkpoint_mode = "final";  // none | final | interval

    CorpusSpec corpus;

    // architecture
    std::size_t embed_dim = 8;
    std::size_t window = 10;
    std::vector<std::size_t> trunk = {32};
    std::size_t repr_dim = 16;
    std::size_t max_response_len = 8;
    std::size_t sample_k = 5;

    // reward model
    std::string reward_head = "auto";  // auto | linear | mlp (auto resolves to mlp)
    std::size_t head_hidden = 32;
    std::size_t prior_hidden = 16;
    double prior_scale = 1.0;

    // oracle
    OracleKind oracle_kind = OracleKind::Task;
    std::size_t oracle_head_hidden = 32;
    double target_pref_std = 0.2;
    std::size_t calibration_pairs = 256;

    // optimization
    AdamWHyper opt_policy{3e-3, 0.9, 0.999, 1e-8, 1e-4, 1.0};
    AdamWHyper opt_reward{3e-3, 0.9, 0.999, 1e-8, 1e-4, 1.0};
    AdamWHyper opt_diff{3e-3, 0.9, 0.999, 1e-8, 1e-4, 1.0};
    PolicyHyper policy_hyper;

    PolicyArch make_policy_arch() const {
        PolicyArch a;
        a.backbone.vocab_size = corpus.vocab_size;
        a.backbone.embed_dim = embed_dim;
        a.backbone.window = window;
        a.backbone.repr_dim = repr_dim;
        a.backbone.trunk_widths = trunk;
        a.max_response_len = max_response_len;
        return a;
    }

    HeadKind resolved_head() const {
        if (reward_head == "auto" || reward_head == "mlp") return HeadKind::Mlp;
        if (reward_head == "linear") return HeadKind::Linear;
        throw ConfigError("reward.head must be auto, linear, or mlp; got '" + reward_head + "'");
    }

    RewardArch make_reward_arch() const {
        RewardArch r;
        r.backbone = make_policy_arch().backbone;
        r.head = resolved_head();
        r.head_hidden = head_hidden;
        r.num_index_heads = ensemble_size;
        r.prior_hidden = prior_hidden;
        r.prior_scale = prior_scale;
        return r;
    }

    void validate() const {
        corpus.validate();
        make_policy_arch().validate();
        make_reward_arch().validate();
        if (batch_size == 0) throw ConfigError("run.batch_size must be positive");
        if (responses_per_prompt < 2) throw ConfigError("run.responses_per_prompt must be >= 2");
        if (algorithm == Algorithm::Online || algorithm == Algorithm::Ids) {
            if (responses_per_prompt < 4)
                throw ConfigError("run.responses_per_prompt must be >= 4 for online and ids");
        }
        if (algorithm == Algorithm::Ids && ensemble_size < 2)
            throw ConfigError("run.ensemble_size must be >= 2 for ids");
        if (algorithm == Algorithm::Periodic) {
            if (period == 0) throw ConfigError("run.period must be positive for periodic");
            if (num_batches % period != 0)
                throw ConfigError("run.period must divide run.num_batches (got " +
                                  std::to_string(period) + " vs " +
                                  std::to_string(num_batches) + ")");
        }
        if (checkpoint_interval == 0) throw ConfigError("run.checkpoint_interval must be positive");
        if (sample_k == 0) throw ConfigError("policy.sample_k must be positive");
        if (checkpoint_mode != "none" && checkpoint_mode != "final" &&
            checkpoint_mode != "interval")
            throw ConfigError("run.checkpoint_mode must be none, final, or interval");
        if (oracle_kind == OracleKind::Task) {
            if (corpus.vocab_size < 3)
                throw ConfigError("task oracle needs corpus.vocab_size >= 3");
            if (corpus.prompt_len_max > max_response_len)
                throw ConfigError("task oracle target cannot fit: corpus.prompt_len_max exceeds "
                                  "policy.max_response_len");
        }
        (void)resolved_head();
    }
};

// ---------------------------------------------------------------------------
// Run plumbing

// Receives run events as they happen; the harness uses this to stream the log
// and write checkpoint files. Default implementation ignores everything.
class RunObserver {
  public:
    virtual ~RunObserver() = default;
    virtual void on_calibration(const CalibrationReport&) {}
    virtual void on_batch(const BatchLogEntry&) {}
    virtual void on_eval(const WinRateReport&, std::string_view context, std::uint64_t at) {
        (void)context;
        (void)at;
    }
    // target is "rm" for full retrains; entry carries losses and grad norms.
    virtual void on_round_update(std::uint64_t round, const UpdateLogEntry&,
                                 std::uint64_t records_consumed) {
        (void)round;
        (void)records_consumed;
    }
    virtual void on_selection(std::uint64_t round, std::size_t chosen,
                              std::span<const double> rates) {
        (void)round;
        (void)chosen;
        (void)rates;
    }
    // Return the path written, or empty if nothing was persisted.
    virtual std::string on_checkpoint(std::string_view reason, std::uint64_t at,
                                      const ParamVector& policy, const EnnRewardModel& rm) {
        (void)reason;
        (void)at;
        (void)policy;
        (void)rm;
        return {};
    }
};

struct RunResult {
    RunRecord record;
    PolicyArch arch;
    ParamVector baseline;  // the frozen starting policy
    ParamVector policy;    // the trained (or selected) policy
    EnnRewardModel rm;
    Oracle oracle;
    PromptCorpus corpus;
};

// Everything a run derives from config and seed before training begins: the
// prompt corpus, the starting policy, and the calibrated oracle. eval-only
// workflows rebuild this to score checkpoints outside a run.
struct RunEnvironment {
    PolicyArch arch;
    PromptCorpus corpus;
    ParamVector theta0;
    Oracle oracle;
    CalibrationReport calibration;
};

inline RunEnvironment make_run_environment(const RunConfig& cfg) {
    cfg.validate();
    const SeedTree root(cfg.seed);
    RunEnvironment env;
    env.arch = cfg.make_policy_arch();
    env.corpus = build_corpus(cfg.corpus, root.child("corpus"));
    env.theta0 = make_policy_params(env.arch);
    init_policy_params(env.arch, env.theta0, root.child("policy_init"));
    if (cfg.oracle_kind == OracleKind::Task) {
        env.oracle = make_task_oracle(cfg.corpus.vocab_size, root.child("oracle"));
    } else {
        env.oracle = make_network_oracle(env.arch.backbone, cfg.oracle_head_hidden,
                                         root.child("oracle"));
    }
    env.calibration =
        calibrate_oracle(env.oracle, env.arch, env.theta0, env.corpus.train,
                         cfg.calibration_pairs, cfg.sample_k, root.child("calibration"),
                         cfg.target_pref_std);
    return env;
}

namespace detail {

// Combined hash of every parameter block of the reward model.
inline std::uint64_t rm_state_hash(const EnnRewardModel& rm) {
    std::uint64_t h = rm.base.hash();
    h = mix(h, rm.priors.hash());
    for (const ParamVector& d : rm.diffs) h = mix(h, d.hash());
    return h;
}

struct EngineState {
    const RunConfig& cfg;
    SeedTree root;
    PolicyArch arch;
    PromptCorpus corpus;
    Oracle oracle;
    ParamVector theta0;
    std::vector<Response> baseline_test;  // greedy baseline responses, cached per split
    std::vector<Response> baseline_eval;
    RunObserver* obs;
    RunRecord record;
    std::uint64_t total_choices = 0;

    EngineState(const RunConfig& c, RunObserver* o) : cfg(c), root(c.seed), obs(o) {
        RunEnvironment env = make_run_environment(cfg);
        arch = env.arch;
        corpus = std::move(env.corpus);
        oracle = std::move(env.oracle);
        theta0 = std::move(env.theta0);
        record.algorithm = algorithm_name(cfg.algorithm);
        record.seed = cfg.seed;
        record.profile = cfg.profile;
        record.calibration = env.calibration;
        if (obs) obs->on_calibration(record.calibration);

        baseline_test.reserve(corpus.test.size());
        for (const Prompt& p : corpus.test)
            baseline_test.push_back(generate_greedy(arch, theta0, p.tokens));
        baseline_eval.reserve(corpus.eval.size());
        for (const Prompt& p : corpus.eval)
            baseline_eval.push_back(generate_greedy(arch, theta0, p.tokens));
    }

    EnnRewardModel fresh_rm() const {
        return make_reward_model(cfg.make_reward_arch(), root.child("rm_init"));
    }

    std::vector<std::size_t> draw_prompt_indices(const SeedTree& node) const {
        RngStream rng = node.child("prompts").stream();
        std::vector<std::size_t> idx(cfg.batch_size);
        for (std::size_t& i : idx) i = rng.uniform_int(corpus.train.size());
        return idx;
    }

    std::vector<Response> sample_candidates(const SeedTree& node, const ParamVector& params,
                                            std::span<const Token> prompt,
                                            std::size_t count) const {
        std::vector<Response> out;
        out.reserve(count);
        for (std::size_t j = 0; j < count; ++j) {
            RngStream rng = node.child(j).stream();
            out.push_back(generate(arch, params, prompt, cfg.sample_k, rng));
        }
        return out;
    }

    WinRateReport test_eval(const ParamVector& theta, std::uint64_t n,
                            std::string_view context, std::uint64_t at,
                            const std::string& ckpt_id = "") {
        WinRateReport rep = win_rate_cached(arch, theta, corpus.test, baseline_test, oracle, n,
                                            "test", ckpt_id);
        if (obs) obs->on_eval(rep, context, at);
        return rep;
    }

    void finish(const ParamVector& theta) {
        const WinRateReport rep = win_rate_cached(arch, theta, corpus.eval, baseline_eval,
                                                  oracle, total_choices, "eval");
        record.final_win_rate = rep.win_rate;
        record.total_choices = total_choices;
        if (obs) obs->on_eval(rep, "final", cfg.num_batches);
    }

    // Records one simulated comparison and returns the record.
    ChoiceRecord make_choice(std::uint64_t batch, const Prompt& prompt,
                             std::vector<Response> candidates, std::size_t first,
                             std::size_t second, std::string selection, double variance,
                             const SeedTree& choice_node) {
        ChoiceRecord rec;
        rec.batch = batch;
        rec.prompt_id = prompt.id;
        rec.prompt = prompt.tokens;
        rec.first = first;
        rec.second = second;
        rec.selection = std::move(selection);
        rec.selection_variance = variance;
        RngStream rng = choice_node.stream();
        rec.choice =
            sample_choice(oracle, prompt.tokens, candidates[first], candidates[second], rng);
        if (cfg.log_responses) {
            rec.candidates = std::move(candidates);
        } else {
            rec.candidates = {std::move(candidates[first]), std::move(candidates[second])};
            rec.first = 0;
            rec.second = 1;
        }
        total_choices += 1;
        return rec;
    }

    const Response& winner_of(const ChoiceRecord& rec) const {
        return rec.candidates[rec.choice == 0 ? rec.first : rec.second];
    }
    const Response& loser_of(const ChoiceRecord& rec) const {
        return rec.candidates[rec.choice == 0 ? rec.second : rec.first];
    }
};

// One reward-model optimizer step over a group of choice records. Returns the
// log entry (loss is mean negative log likelihood of the observed choices).
inline UpdateLogEntry rm_batch_update(EngineState& st, EnnRewardModel& rm,
                                      OptimizerState& optim,
                                      std::span<const ChoiceRecord> records,
                                      const char* target = "rm") {
    ParamVector grad = rm.base.zeros_like();
    double loss = 0.0;
    for (const ChoiceRecord& rec : records) {
        const double p =
            reward_logprob_grad(rm, rec.prompt, st.winner_of(rec), st.loser_of(rec), grad);
        loss -= std::log(p);
    }
    const UpdateOutcome out =
        accumulate_and_apply(rm.base, {&grad}, optim, st.cfg.opt_reward);
    UpdateLogEntry entry;
    entry.target = target;
    entry.applied = out.applied;
    entry.grad_norm = out.grad_norm;
    entry.loss = records.empty() ? 0.0 : loss / static_cast<double>(records.size());
    entry.skip_reason = out.skip_reason;
    return entry;
}

// Per-head difference updates on the same records, backbone frozen by
// construction (the gradient only exists over the head's own parameters).
inline void diff_batch_updates(EngineState& st, EnnRewardModel& rm,
                               std::vector<OptimizerState>& optims,
                               std::span<const ChoiceRecord> records,
                               std::vector<UpdateLogEntry>& out) {
    for (std::size_t z = 1; z <= rm.arch.num_index_heads; ++z) {
        ParamVector grad = rm.diffs[z - 1].zeros_like();
        double loss = 0.0;
        for (const ChoiceRecord& rec : records) {
            const double p = diff_logprob_grad(rm, rec.prompt, st.winner_of(rec),
                                               st.loser_of(rec), z, grad);
            loss -= std::log(p);
        }
        const UpdateOutcome o =
            accumulate_and_apply(rm.diffs[z - 1], {&grad}, optims[z - 1], st.cfg.opt_diff);
        UpdateLogEntry entry;
        entry.target = "diff." + std::to_string(z);
        entry.applied = o.applied;
        entry.grad_norm = o.grad_norm;
        entry.loss = records.empty() ? 0.0 : loss / static_cast<double>(records.size());
        entry.skip_reason = o.skip_reason;
        out.push_back(std::move(entry));
    }
}

// Policy step over a set of (prompt, response-set) items with given ordered
// pairs per item. scores[i][j] is the reward-model score of item i's
// candidate j. Applies one optimizer step and tracks the anchor.
struct PolicyPairItem {
    const TokenSeq* prompt;
    const std::vector<Response>* candidates;
    const std::vector<double>* scores;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

inline UpdateLogEntry policy_pairs_update(EngineState& st, ParamVector& theta,
                                          ParamVector& anchor, OptimizerState& optim,
                                          std::span<const PolicyPairItem> items,
                                          const char* target) {
    ParamVector grad = theta.zeros_like();
    double loss = 0.0;
    std::size_t pair_count = 0;
    for (const PolicyPairItem& item : items) {
        for (const auto& [ia, ib] : item.pairs) {
            const double p = policy_pair_grad(st.arch, theta, anchor, *item.prompt,
                                              (*item.candidates)[ia], (*item.scores)[ia],
                                              (*item.scores)[ib], st.cfg.policy_hyper, grad);
            loss -= (p - 0.5 + st.cfg.policy_hyper.affirmative_nudge);
            ++pair_count;
        }
    }
    const UpdateOutcome out = accumulate_and_apply(theta, {&grad}, optim, st.cfg.opt_policy);
    if (out.applied) ema_update(anchor, theta, st.cfg.policy_hyper.anchor_ema);
    UpdateLogEntry entry;
    entry.target = target;
    entry.applied = out.applied;
    entry.grad_norm = out.grad_norm;
    entry.loss = pair_count == 0 ? 0.0 : loss / static_cast<double>(pair_count);
    entry.skip_reason = out.skip_reason;
    return entry;
}

// ---------------------------------------------------------------------------
// Online / information-directed engine

struct OnlineOptions {
    bool infomax_queries = false;
    bool train_diff_heads = false;
};

inline RunResult run_online_engine(const RunConfig& cfg, const OnlineOptions& opt,
                                   RunObserver* obs) {
    EngineState st(cfg, obs);
    EnnRewardModel rm = st.fresh_rm();
    st.record.prior_hash_start = rm.priors.hash();

    ParamVector theta = st.theta0;
    ParamVector anchor = st.theta0;
    OptimizerState optim_policy = OptimizerState::like(theta);
    OptimizerState optim_rm = OptimizerState::like(rm.base);
    std::vector<OptimizerState> optim_diffs;
    for (const ParamVector& d : rm.diffs) optim_diffs.push_back(OptimizerState::like(d));

    const std::size_t m = cfg.responses_per_prompt;
    const bool use_infomax = opt.infomax_queries && rm.arch.num_index_heads >= 2;

    for (std::uint64_t b = 0; b < cfg.num_batches; ++b) {
        if (cfg.checkpoint_mode == "interval" && b % cfg.checkpoint_interval == 0 && obs) {
            const std::string path = obs->on_checkpoint("interval", b, theta, rm);
            if (!path.empty()) st.record.checkpoint_files.push_back(path);
        }

        BatchLogEntry entry;
        entry.batch = b;
        entry.generator_hash = theta.hash();
        const SeedTree bnode = st.root.child("batch").child(b);

        // queries
        const std::vector<std::size_t> prompt_idx = st.draw_prompt_indices(bnode);
        std::vector<std::vector<Response>> all_candidates(cfg.batch_size);
        std::vector<std::size_t> q_first(cfg.batch_size), q_second(cfg.batch_size);
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            const Prompt& prompt = st.corpus.train[prompt_idx[i]];
            std::vector<Response> cands =
                st.sample_candidates(bnode.child("gen").child(i), theta, prompt.tokens, m);

            std::size_t first, second;
            std::string selection;
            double variance = -1.0;
            if (use_infomax) {
                std::vector<HeadRewards> hr;
                hr.reserve(m);
                for (const Response& r : cands) hr.push_back(all_rewards(rm, prompt.tokens, r));
                std::tie(first, second) = infomax_pair(hr, &variance);
                selection = "infomax";
            } else {
                RngStream qrng = bnode.child("query").child(i).stream();
                first = qrng.uniform_int(m);
                second = qrng.uniform_int(m - 1);
                if (second >= first) ++second;
                selection = "random";
            }
            all_candidates[i] = cands;  // keep for the policy update below
            q_first[i] = first;
            q_second[i] = second;
            entry.choices.push_back(st.make_choice(b, prompt, std::move(cands), first, second,
                                                   std::move(selection), variance,
                                                   bnode.child("choice").child(i)));
        }

        // reward update, then optional per-head updates on the same data
        entry.updates.push_back(rm_batch_update(st, rm, optim_rm, entry.choices));
        if (opt.train_diff_heads && rm.arch.num_index_heads > 0) {
            diff_batch_updates(st, rm, optim_diffs, entry.choices, entry.updates);
        }

        // policy sub-update 1: queried pair, its reverse, and the rank
        // extremes, scored by the just-updated reward model's point estimate
        std::vector<std::vector<double>> scores(cfg.batch_size);
        std::vector<PolicyPairItem> items;
        items.reserve(cfg.batch_size);
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            const Prompt& prompt = st.corpus.train[prompt_idx[i]];
            scores[i].reserve(m);
            for (const Response& r : all_candidates[i])
                scores[i].push_back(reward(rm, prompt.tokens, r, 0));
            PolicyPairItem item;
            item.prompt = &prompt.tokens;
            item.candidates = &all_candidates[i];
            item.scores = &scores[i];
            item.pairs = select_rank_pairs(scores[i], PairScheme::RankExtremes2);
            item.pairs.insert(item.pairs.begin(), {{q_first[i], q_second[i]},
                                                   {q_second[i], q_first[i]}});
            items.push_back(std::move(item));
        }
        entry.updates.push_back(
            policy_pairs_update(st, theta, anchor, optim_policy, items, "policy.pairs"));

        // policy sub-update 2: a fresh prompt batch, rank pairs only, no
        // queries issued
        const SeedTree fnode = bnode.child("fresh");
        const std::vector<std::size_t> fresh_idx = st.draw_prompt_indices(fnode);
        std::vector<std::vector<Response>> fresh_cands(cfg.batch_size);
        std::vector<std::vector<double>> fresh_scores(cfg.batch_size);
        std::vector<PolicyPairItem> fresh_items;
        fresh_items.reserve(cfg.batch_size);
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            const Prompt& prompt = st.corpus.train[fresh_idx[i]];
            fresh_cands[i] =
                st.sample_candidates(fnode.child("gen").child(i), theta, prompt.tokens, m);
            fresh_scores[i].reserve(m);
            for (const Response& r : fresh_cands[i])
                fresh_scores[i].push_back(reward(rm, prompt.tokens, r, 0));
            PolicyPairItem item;
            item.prompt = &prompt.tokens;
            item.candidates = &fresh_cands[i];
            item.scores = &fresh_scores[i];
            item.pairs = select_rank_pairs(fresh_scores[i], PairScheme::RankExtremes4);
            fresh_items.push_back(std::move(item));
        }
        entry.updates.push_back(
            policy_pairs_update(st, theta, anchor, optim_policy, fresh_items, "policy.fresh"));

        entry.total_choices = st.total_choices;
        if (cfg.eval_cadence > 0 && (b + 1) % cfg.eval_cadence == 0) {
            const WinRateReport rep = st.test_eval(theta, st.total_choices, "cadence", b);
            entry.eval_win_rate = rep.win_rate;
            st.record.curve.push_back({st.total_choices, rep.win_rate});
        }
        entry.policy_hash = theta.hash();
        entry.rm_hash = rm_state_hash(rm);
        if (obs) obs->on_batch(entry);
        st.record.batches.push_back(std::move(entry));
    }

    if (cfg.checkpoint_mode != "none" && obs) {
        const std::string path = obs->on_checkpoint("final", cfg.num_batches, theta, rm);
        if (!path.empty()) st.record.checkpoint_files.push_back(path);
    }
    st.record.prior_hash_end = rm.priors.hash();
    st.finish(theta);

    RunResult res{std::move(st.record), st.arch, std::move(st.theta0), std::move(theta),
                  std::move(rm), std::move(st.oracle), std::move(st.corpus)};
    return res;
}

// ---------------------------------------------------------------------------
// Offline / periodic engine
//
// Offline is the single-round case: gather everything, train the reward
// model once, optimize the policy once. Each periodic round retrains both
// models from their initializations on all data gathered so far, so round
// R = 1 with period = num_batches reproduces offline exactly.

inline RunResult run_periodic_engine(const RunConfig& cfg, std::size_t period,
                                     RunObserver* obs) {
    EngineState st(cfg, obs);
    EnnRewardModel rm = st.fresh_rm();
    st.record.prior_hash_start = rm.priors.hash();

    ParamVector generator = st.theta0;  // policy that produces query responses
    std::vector<ChoiceRecord> all_records;
    const std::size_t rounds = period == 0 ? 0 : cfg.num_batches / period;

    for (std::uint64_t k = 1; k <= rounds; ++k) {
        // gather `period` batches from the frozen generator
        for (std::uint64_t b = (k - 1) * period; b < k * period; ++b) {
            BatchLogEntry entry;
            entry.batch = b;
            entry.generator_hash = generator.hash();
            const SeedTree bnode = st.root.child("batch").child(b);
            const std::vector<std::size_t> prompt_idx = st.draw_prompt_indices(bnode);
            for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                const Prompt& prompt = st.corpus.train[prompt_idx[i]];
                std::vector<Response> pair = st.sample_candidates(
                    bnode.child("gen").child(i), generator, prompt.tokens, 2);
                entry.choices.push_back(st.make_choice(b, prompt, std::move(pair), 0, 1,
                                                       "random", -1.0,
                                                       bnode.child("choice").child(i)));
            }
            entry.total_choices = st.total_choices;
            entry.policy_hash = generator.hash();
            entry.rm_hash = rm_state_hash(rm);
            if (obs) obs->on_batch(entry);
            st.record.batches.push_back(std::move(entry));
            const BatchLogEntry& stored = st.record.batches.back();
            all_records.insert(all_records.end(), stored.choices.begin(),
                               stored.choices.end());
        }

        // retrain the reward model from its initialization on everything so
        // far, batch by batch in gathering order
        rm = st.fresh_rm();
        OptimizerState optim_rm = OptimizerState::like(rm.base);
        for (std::size_t epoch = 0; epoch < cfg.rm_epochs; ++epoch) {
            for (std::size_t off = 0; off < all_records.size(); off += cfg.batch_size) {
                const std::size_t len = std::min(cfg.batch_size, all_records.size() - off);
                const UpdateLogEntry e = rm_batch_update(
                    st, rm, optim_rm, std::span<const ChoiceRecord>(&all_records[off], len));
                if (obs && (off + len == all_records.size()) && epoch + 1 == cfg.rm_epochs) {
                    obs->on_round_update(k, e, all_records.size());
                }
            }
        }

        // re-optimize the policy from its initialization against the
        // retrained reward model
        ParamVector theta = st.theta0;
        ParamVector anchor = st.theta0;
        OptimizerState optim_policy = OptimizerState::like(theta);
        std::vector<ParamVector> checkpoints{theta};
        for (std::size_t s = 1; s <= cfg.policy_steps; ++s) {
            const SeedTree pnode = st.root.child("round").child(k).child("policy").child(s);
            const std::vector<std::size_t> prompt_idx = st.draw_prompt_indices(pnode);
            std::vector<std::vector<Response>> cands(cfg.batch_size);
            std::vector<std::vector<double>> scores(cfg.batch_size);
            std::vector<PolicyPairItem> items;
            items.reserve(cfg.batch_size);
            for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                const Prompt& prompt = st.corpus.train[prompt_idx[i]];
                cands[i] = st.sample_candidates(pnode.child("gen").child(i), theta,
                                                prompt.tokens, 2);
                scores[i] = {reward(rm, prompt.tokens, cands[i][0], 0),
                             reward(rm, prompt.tokens, cands[i][1], 0)};
                PolicyPairItem item;
                item.prompt = &prompt.tokens;
                item.candidates = &cands[i];
                item.scores = &scores[i];
                item.pairs = select_rank_pairs(scores[i], PairScheme::ReversedDuplicate);
                items.push_back(std::move(item));
            }
            const UpdateLogEntry e =
                policy_pairs_update(st, theta, anchor, optim_policy, items, "policy.pairs");
            if (obs) obs->on_round_update(k, e, cfg.batch_size * 2);
            if (s % cfg.checkpoint_interval == 0) checkpoints.push_back(theta);
        }

        // test-split selection over the stored checkpoints
        std::vector<double> rates;
        rates.reserve(checkpoints.size());
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
            const WinRateReport rep =
                st.test_eval(checkpoints[c], st.total_choices, "selection",
                             c * cfg.checkpoint_interval,
                             "round" + std::to_string(k) + ".step" +
                                 std::to_string(c * cfg.checkpoint_interval));
            rates.push_back(rep.win_rate);
        }
        const std::size_t chosen = argmax_earliest(rates);
        if (obs) obs->on_selection(k, chosen, rates);
        generator = checkpoints[chosen];
        st.record.curve.push_back({st.total_choices, rates[chosen]});
        if (obs) {
            WinRateReport round_rep;
            round_rep.num_choices = st.total_choices;
            round_rep.win_rate = rates[chosen];
            round_rep.split = "test";
            round_rep.policy_checkpoint_id =
                "round" + std::to_string(k) + ".step" +
                std::to_string(chosen * cfg.checkpoint_interval);
            obs->on_eval(round_rep, "round", k);
        }
    }

    if (cfg.checkpoint_mode != "none" && obs) {
        const std::string path = obs->on_checkpoint("final", cfg.num_batches, generator, rm);
        if (!path.empty()) st.record.checkpoint_files.push_back(path);
    }
    st.record.prior_hash_end = rm.priors.hash();
    st.finish(generator);

    RunResult res{std::move(st.record), st.arch, std::move(st.theta0), std::move(generator),
                  std::move(rm), std::move(st.oracle), std::move(st.corpus)};
    return res;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The four schedules

inline RunResult run_offline(const RunConfig& cfg, RunObserver* obs = nullptr) {
    if (cfg.algorithm != Algorithm::Offline) throw ConfigError("run_offline: wrong algorithm");
    return detail::run_periodic_engine(cfg, cfg.num_batches, obs);
}

inline RunResult run_periodic(const RunConfig& cfg, RunObserver* obs = nullptr) {
    if (cfg.algorithm != Algorithm::Periodic)
        throw ConfigError("run_periodic: wrong algorithm");
    return detail::run_periodic_engine(cfg, cfg.period, obs);
}

inline RunResult run_online(const RunConfig& cfg, RunObserver* obs = nullptr) {
    if (cfg.algorithm != Algorithm::Online) throw ConfigError("run_online: wrong algorithm");
    return detail::run_online_engine(cfg, {false, false}, obs);
}

inline RunResult run_ids(const RunConfig& cfg, RunObserver* obs = nullptr) {
    if (cfg.algorithm != Algorithm::Ids) throw ConfigError("run_ids: wrong algorithm");
    return detail::run_online_engine(cfg, {true, true}, obs);
}

inline RunResult run_algorithm(const RunConfig& cfg, RunObserver* obs = nullptr) {
    switch (cfg.algorithm) {
        case Algorithm::Offline: return run_offline(cfg, obs);
        case Algorithm::Periodic: return run_periodic(cfg, obs);
        case Algorithm::Online: return run_online(cfg, obs);
        case Algorithm::Ids: return run_ids(cfg, obs);
    }
    throw ConfigError("run_algorithm: unknown algorithm");
}

}  // namespace rlhflab
