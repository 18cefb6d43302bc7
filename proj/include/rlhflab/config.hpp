#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rlhflab/errors.hpp"
#include "rlhflab/schedulers.hpp"

namespace rlhflab {

// Flat key-value view of a run configuration. Keys are dotted lowercase
// (run.batch_size, policy.trunk, ...). Ordered so snapshots serialize stably.
using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline double parse_f64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(key + ": empty list element in '" + v + "'");
        out.push_back(static_cast<std::size_t>(parse_u64(key, item)));
    }
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list, got '" + v + "'");
    return out;
}

inline std::string format_f64(double x) {
    std::ostringstream out;
    out.precision(17);
    out << x;
    return out.str();
}

inline std::string format_size_list(const std::vector<std::size_t>& xs) {
    std::ostringstream out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out << ',';
        out << xs[i];
    }
    return out.str();
}

using ConfigSetter = std::function<void(RunConfig&, const std::string& key, const std::string&)>;

inline const std::map<std::string, ConfigSetter>& config_setters() {
    static const std::map<std::string, ConfigSetter> table = [] {
        std::map<std::string, ConfigSetter> t;
        auto u64 = [](auto field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) {
                c.*field = static_cast<std::size_t>(parse_u64(k, v));
            };
        };
        auto f64 = [](auto field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) {
                c.*field = parse_f64(k, v);
            };
        };

        t["run.algorithm"] = [](RunConfig& c, const std::string&, const std::string& v) {
            c.algorithm = parse_algorithm(v);
        };
        t["run.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.seed = parse_u64(k, v);
        };
        t["run.batch_size"] = u64(&RunConfig::batch_size);
        t["run.num_batches"] = u64(&RunConfig::num_batches);
        t["run.period"] = u64(&RunConfig::period);
        t["run.responses_per_prompt"] = u64(&RunConfig::responses_per_prompt);
        t["run.ensemble_size"] = u64(&RunConfig::ensemble_size);
        t["run.eval_cadence"] = u64(&RunConfig::eval_cadence);
        t["run.checkpoint_interval"] = u64(&RunConfig::checkpoint_interval);
        t["run.policy_steps"] = u64(&RunConfig::policy_steps);
        t["run.rm_epochs"] = u64(&RunConfig::rm_epochs);
        t["run.log_responses"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.log_responses = parse_bool(k, v);
        };
        t["run.checkpoint_mode"] = [](RunConfig& c, const std::string&, const std::string& v) {
            c.checkpoint_mode = v;
        };

        t["corpus.vocab_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.corpus.vocab_size = static_cast<std::size_t>(parse_u64(k, v));
        };
        t["corpus.train_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.corpus.train_size = static_cast<std::size_t>(parse_u64(k, v));
        };
        t["corpus.test_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.corpus.test_size = static_cast<std::size_t>(parse_u64(k, v));
        };
        t["corpus.eval_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.corpus.eval_size = static_cast<std::size_t>(parse_u64(k, v));
        };
        t["corpus.prompt_len_min"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.corpus.prompt_len_min = static_cast<std::size_t>(parse_u64(k, v));
        };
        t["corpus.prompt_len_max"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.corpus.prompt_len_max = static_cast<std::size_t>(parse_u64(k, v));
        };

        t["policy.embed_dim"] = u64(&RunConfig::embed_dim);
        t["policy.window"] = u64(&RunConfig::window);
        t["policy.trunk"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.trunk = parse_size_list(k, v);
        };
        t["policy.repr_dim"] = u64(&RunConfig::repr_dim);
        t["policy.max_response_len"] = u64(&RunConfig::max_response_len);
        t["policy.sample_k"] = u64(&RunConfig::sample_k);

        t["reward.head"] = [](RunConfig& c, const std::string&, const std::string& v) {
            c.reward_head = v;
        };
        t["reward.head_hidden"] = u64(&RunConfig::head_hidden);
        t["reward.prior_hidden"] = u64(&RunConfig::prior_hidden);
        t["reward.prior_scale"] = f64(&RunConfig::prior_scale);

        t["oracle.kind"] = [](RunConfig& c, const std::string&, const std::string& v) {
            c.oracle_kind = parse_oracle_kind(v);
        };
        t["oracle.head_hidden"] = u64(&RunConfig::oracle_head_hidden);
        t["oracle.target_pref_std"] = f64(&RunConfig::target_pref_std);
        t["oracle.calibration_pairs"] = u64(&RunConfig::calibration_pairs);

        t["update.lr_policy"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.opt_policy.lr = parse_f64(k, v);
        };
        t["update.lr_reward"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.opt_reward.lr = parse_f64(k, v);
        };
        t["update.lr_diff"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.opt_diff.lr = parse_f64(k, v);
        };
        auto opt_all = [](double AdamWHyper::*field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) {
                const double x = parse_f64(k, v);
                c.opt_policy.*field = x;
                c.opt_reward.*field = x;
                c.opt_diff.*field = x;
            };
        };
        t["update.beta1"] = opt_all(&AdamWHyper::beta1);
        t["update.beta2"] = opt_all(&AdamWHyper::beta2);
        t["update.eps"] = opt_all(&AdamWHyper::eps);
        t["update.weight_decay"] = opt_all(&AdamWHyper::weight_decay);
        t["update.clip_norm"] = opt_all(&AdamWHyper::clip_norm);
        t["update.nudge"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.policy_hyper.affirmative_nudge = parse_f64(k, v);
        };
        t["update.anchor_strength"] = [](RunConfig& c, const std::string& k,
                                         const std::string& v) {
            c.policy_hyper.anchor_strength = parse_f64(k, v);
        };
        t["update.anchor_ema"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.policy_hyper.anchor_ema = parse_f64(k, v);
        };
        t["update.full_vocab_anchor"] = [](RunConfig& c, const std::string& k,
                                           const std::string& v) {
            c.policy_hyper.full_vocab_anchor = parse_bool(k, v);
        };
        return t;
    }();
    return table;
}

}  // namespace detail

// Parses `key = value` lines; '#' starts a comment, blank lines are ignored.
inline ConfigMap parse_config_text(const std::string& text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        const std::size_t eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + trimmed + "'");
        const std::string key = detail::trim(trimmed.substr(0, eq));
        const std::string value = detail::trim(trimmed.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        out[key] = value;
    }
    return out;
}

inline ConfigMap load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// `--set key=value` items, applied after the config file.
inline void apply_overrides(ConfigMap& cfg, std::span<const std::string> items) {
    for (const std::string& item : items) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + item + "': expected key=value");
        const std::string key = detail::trim(item.substr(0, eq));
        const std::string value = detail::trim(item.substr(eq + 1));
        if (key.empty()) throw ConfigError("override '" + item + "': empty key");
        cfg[key] = value;
    }
}

// Named parameter presets. desk-scale is the RunConfig default; paper-scale
// upsizes everything to match a long overnight run.
inline ConfigMap profile_overrides(const std::string& profile) {
    if (profile == "desk-scale") return {};
    if (profile == "paper-scale") {
        return {
            {"run.batch_size", "64"},
            {"run.num_batches", "3125"},
            {"run.period", "625"},
            {"run.responses_per_prompt", "16"},
            {"run.ensemble_size", "100"},
            {"run.eval_cadence", "25"},
            {"run.checkpoint_interval", "160"},
            {"run.policy_steps", "800"},
            {"run.log_responses", "false"},
            {"corpus.vocab_size", "64"},
            {"corpus.train_size", "200000"},
            {"corpus.test_size", "1000"},
            {"corpus.eval_size", "1000"},
            {"corpus.prompt_len_min", "5"},
            {"corpus.prompt_len_max", "10"},
            {"policy.embed_dim", "16"},
            {"policy.window", "12"},
            {"policy.trunk", "96"},
            {"policy.repr_dim", "32"},
            {"policy.max_response_len", "16"},
            {"reward.head_hidden", "1024"},
            {"reward.prior_hidden", "256"},
        };
    }
    throw ConfigError("unknown profile: " + profile + " (expected desk-scale or paper-scale)");
}

// Applies a ConfigMap on top of a RunConfig. Unknown keys are rejected by
// name so typos never pass silently.
inline void apply_config(RunConfig& cfg, const ConfigMap& map) {
    const auto& setters = detail::config_setters();
    for (const auto& [key, value] : map) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("unknown config key: " + key);
        it->second(cfg, key, value);
    }
}

// Layered assembly: profile defaults, then the config file, then --set
// overrides, then an explicit seed flag. Validates the result.
inline RunConfig build_run_config(const std::string& profile, const ConfigMap& file_cfg,
                                  const ConfigMap& overrides,
                                  std::optional<std::uint64_t> seed_flag) {
    RunConfig cfg;
    cfg.profile = profile;
    apply_config(cfg, profile_overrides(profile));
    apply_config(cfg, file_cfg);
    apply_config(cfg, overrides);
    if (seed_flag) cfg.seed = *seed_flag;
    cfg.validate();
    return cfg;
}

// Full key set of a RunConfig, for run-log metadata. apply_config on the
// result reproduces the config exactly.
inline ConfigMap snapshot_config(const RunConfig& c) {
    using detail::format_f64;
    ConfigMap out;
    out["run.algorithm"] = algorithm_name(c.algorithm);
    out["run.seed"] = std::to_string(c.seed);
    out["run.batch_size"] = std::to_string(c.batch_size);
    out["run.num_batches"] = std::to_string(c.num_batches);
    out["run.period"] = std::to_string(c.period);
    out["run.responses_per_prompt"] = std::to_string(c.responses_per_prompt);
    out["run.ensemble_size"] = std::to_string(c.ensemble_size);
    out["run.eval_cadence"] = std::to_string(c.eval_cadence);
    out["run.checkpoint_interval"] = std::to_string(c.checkpoint_interval);
    out["run.policy_steps"] = std::to_string(c.policy_steps);
    out["run.rm_epochs"] = std::to_string(c.rm_epochs);
    out["run.log_responses"] = c.log_responses ? "true" : "false";
    out["run.checkpoint_mode"] = c.checkpoint_mode;
    out["corpus.vocab_size"] = std::to_string(c.corpus.vocab_size);
    out["corpus.train_size"] = std::to_string(c.corpus.train_size);
    out["corpus.test_size"] = std::to_string(c.corpus.test_size);
    out["corpus.eval_size"] = std::to_string(c.corpus.eval_size);
    out["corpus.prompt_len_min"] = std::to_string(c.corpus.prompt_len_min);
    out["corpus.prompt_len_max"] = std::to_string(c.corpus.prompt_len_max);
    out["policy.embed_dim"] = std::to_string(c.embed_dim);
    out["policy.window"] = std::to_string(c.window);
    out["policy.trunk"] = detail::format_size_list(c.trunk);
    out["policy.repr_dim"] = std::to_string(c.repr_dim);
    out["policy.max_response_len"] = std::to_string(c.max_response_len);
    out["policy.sample_k"] = std::to_string(c.sample_k);
    out["reward.head"] = c.reward_head;
    out["reward.head_hidden"] = std::to_string(c.head_hidden);
    out["reward.prior_hidden"] = std::to_string(c.prior_hidden);
    out["reward.prior_scale"] = format_f64(c.prior_scale);
    out["oracle.kind"] = oracle_kind_name(c.oracle_kind);
    out["oracle.head_hidden"] = std::to_string(c.oracle_head_hidden);
    out["oracle.target_pref_std"] = format_f64(c.target_pref_std);
    out["oracle.calibration_pairs"] = std::to_string(c.calibration_pairs);
    out["update.lr_policy"] = format_f64(c.opt_policy.lr);
    out["update.lr_reward"] = format_f64(c.opt_reward.lr);
    out["update.lr_diff"] = format_f64(c.opt_diff.lr);
    out["update.beta1"] = format_f64(c.opt_policy.beta1);
    out["update.beta2"] = format_f64(c.opt_policy.beta2);
    out["update.eps"] = format_f64(c.opt_policy.eps);
    out["update.weight_decay"] = format_f64(c.opt_policy.weight_decay);
    out["update.clip_norm"] = format_f64(c.opt_policy.clip_norm);
    out["update.nudge"] = format_f64(c.policy_hyper.affirmative_nudge);
    out["update.anchor_strength"] = format_f64(c.policy_hyper.anchor_strength);
    out["update.anchor_ema"] = format_f64(c.policy_hyper.anchor_ema);
    out["update.full_vocab_anchor"] = c.policy_hyper.full_vocab_anchor ? "true" : "false";
    return out;
}

}  // namespace rlhflab
