#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rlhflab/checkpoint.hpp"
#include "rlhflab/config.hpp"
#include "rlhflab/errors.hpp"
#include "rlhflab/run_record.hpp"
#include "rlhflab/schedulers.hpp"

namespace rlhflab {

namespace detail {

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

inline nlohmann::json response_json(const Response& r) {
    return {{"tokens", r.tokens}, {"terminated", r.terminated}};
}

inline nlohmann::json choice_json(const ChoiceRecord& c, bool with_candidates) {
    nlohmann::json j{{"batch", c.batch},
                     {"prompt_id", c.prompt_id},
                     {"prompt", c.prompt},
                     {"first", c.first},
                     {"second", c.second},
                     {"choice", c.choice},
                     {"selection", c.selection}};
    if (c.selection_variance >= 0.0) j["variance"] = c.selection_variance;
    if (with_candidates) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Response& r : c.candidates) arr.push_back(response_json(r));
        j["candidates"] = arr;
    }
    return j;
}

inline nlohmann::json update_json(const UpdateLogEntry& u) {
    nlohmann::json j{{"target", u.target},
                     {"applied", u.applied},
                     {"grad_norm", u.grad_norm},
                     {"loss", u.loss}};
    if (!u.skip_reason.empty()) j["skip_reason"] = u.skip_reason;
    return j;
}

}  // namespace detail

// Streams one JSON object per line as the run progresses and writes
// checkpoint files when the schedule asks for them. Every line is flushed on
// write, so an interrupted run leaves a valid prefix. The only wall-clock
// field in the whole file is the meta record's timestamp.
class RunLogger : public RunObserver {
  public:
    // checkpoint_dir may be empty when the run never persists parameters.
    RunLogger(const std::string& log_path, std::string checkpoint_dir, std::string run_id,
              const RunConfig& cfg)
        : out_(log_path, std::ios::trunc),
          ckpt_dir_(std::move(checkpoint_dir)),
          run_id_(std::move(run_id)),
          arch_(cfg.make_policy_arch()),
          log_responses_(cfg.log_responses) {
        if (!out_) throw ConfigError("cannot open run log for writing: " + log_path);
        nlohmann::json config_j = nlohmann::json::object();
        for (const auto& [k, v] : snapshot_config(cfg)) config_j[k] = v;
        write({{"record", "meta"},
               {"run_id", run_id_},
               {"algorithm", algorithm_name(cfg.algorithm)},
               {"seed", cfg.seed},
               {"profile", cfg.profile},
               {"timestamp", detail::utc_timestamp()},
               {"config", config_j}});
    }

    void on_calibration(const CalibrationReport& rep) override {
        write({{"record", "calibration"},
               {"scale", rep.scale},
               {"pref_std", rep.pref_std},
               {"pairs", rep.pairs}});
    }

    void on_batch(const BatchLogEntry& e) override {
        nlohmann::json choices = nlohmann::json::array();
        for (const ChoiceRecord& c : e.choices)
            choices.push_back(detail::choice_json(c, log_responses_));
        nlohmann::json updates = nlohmann::json::array();
        for (const UpdateLogEntry& u : e.updates) updates.push_back(detail::update_json(u));
        nlohmann::json j{{"record", "batch"},
                         {"batch", e.batch},
                         {"total_choices", e.total_choices},
                         {"generator_hash", detail::hash_hex(e.generator_hash)},
                         {"policy_hash", detail::hash_hex(e.policy_hash)},
                         {"rm_hash", detail::hash_hex(e.rm_hash)},
                         {"choices", choices},
                         {"updates", updates}};
        if (e.eval_win_rate) j["eval_win_rate"] = *e.eval_win_rate;
        write(j);
    }

    void on_eval(const WinRateReport& rep, std::string_view context, std::uint64_t at) override {
        nlohmann::json j{{"record", "eval"},
                         {"context", std::string(context)},
                         {"at", at},
                         {"split", rep.split},
                         {"n_choices", rep.num_choices},
                         {"win_rate", rep.win_rate}};
        if (!rep.policy_checkpoint_id.empty()) j["checkpoint_id"] = rep.policy_checkpoint_id;
        write(j);
    }

    void on_round_update(std::uint64_t round, const UpdateLogEntry& u,
                         std::uint64_t records_consumed) override {
        nlohmann::json j = detail::update_json(u);
        j["record"] = "round_update";
        j["round"] = round;
        j["records"] = records_consumed;
        write(j);
    }

    void on_selection(std::uint64_t round, std::size_t chosen,
                      std::span<const double> rates) override {
        write({{"record", "selection"},
               {"round", round},
               {"chosen", chosen},
               {"rates", std::vector<double>(rates.begin(), rates.end())}});
    }

    std::string on_checkpoint(std::string_view reason, std::uint64_t at,
                              const ParamVector& policy, const EnnRewardModel& rm) override {
        if (ckpt_dir_.empty()) return {};
        const std::string stem =
            ckpt_dir_ + "/" + run_id_ + "_b" + std::to_string(at) + "_" + std::string(reason);
        const std::string policy_path = stem + ".policy.ckpt";
        const std::string enn_path = stem + ".enn.ckpt";
        std::map<std::string, std::string> extra{{"run_id", run_id_},
                                                 {"at", std::to_string(at)},
                                                 {"reason", std::string(reason)}};
        save_checkpoint(policy_path, make_policy_checkpoint(arch_, policy, extra));
        save_checkpoint(enn_path, make_enn_checkpoint(rm, extra));
        write({{"record", "checkpoint"},
               {"reason", std::string(reason)},
               {"at", at},
               {"policy_path", policy_path},
               {"enn_path", enn_path}});
        return policy_path;
    }

    void on_final(const RunRecord& rec) {
        write({{"record", "final"},
               {"total_choices", rec.total_choices},
               {"final_win_rate", rec.final_win_rate},
               {"prior_hash_start", detail::hash_hex(rec.prior_hash_start)},
               {"prior_hash_end", detail::hash_hex(rec.prior_hash_end)},
               {"checkpoints", rec.checkpoint_files}});
    }

  private:
    void write(const nlohmann::json& j) {
        out_ << j.dump() << '\n';
        out_.flush();
    }

    std::ofstream out_;
    std::string ckpt_dir_;
    std::string run_id_;
    PolicyArch arch_;
    bool log_responses_;
};

// ---------------------------------------------------------------------------
// Reading

inline std::vector<nlohmann::json> read_run_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open run log: " + path);
    std::vector<nlohmann::json> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

// Test-split learning curve of a logged run: cadence evaluations for online
// schedules, per-round selected rates for offline/periodic ones.
inline std::vector<WinRatePoint> curve_from_log(const std::vector<nlohmann::json>& records) {
    std::vector<WinRatePoint> curve;
    for (const nlohmann::json& r : records) {
        if (r.value("record", "") != "eval") continue;
        if (r.value("split", "") != "test") continue;
        const std::string ctx = r.value("context", "");
        if (ctx != "cadence" && ctx != "round") continue;
        curve.push_back(
            {r.at("n_choices").get<std::uint64_t>(), r.at("win_rate").get<double>()});
    }
    return curve;
}

inline std::string algorithm_from_log(const std::vector<nlohmann::json>& records) {
    for (const nlohmann::json& r : records)
        if (r.value("record", "") == "meta") return r.value("algorithm", "");
    throw ConfigError("run log has no meta record");
}

inline std::optional<double> final_win_rate_from_log(
    const std::vector<nlohmann::json>& records) {
    for (const nlohmann::json& r : records)
        if (r.value("record", "") == "final") return r.at("final_win_rate").get<double>();
    return std::nullopt;
}

}  // namespace rlhflab
