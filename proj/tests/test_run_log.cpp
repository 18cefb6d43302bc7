#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rlhflab/checkpoint.hpp"
#include "rlhflab/run_log.hpp"
#include "rlhflab/schedulers.hpp"
#include "test_util.hpp"

using namespace rlhflab;
using testutil::small_run_config;

namespace {

std::vector<std::string> file_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// Lines compared as JSON with the meta timestamp removed; the clock is the
// only thing allowed to differ between identical runs.
bool logs_equivalent(const std::string& a, const std::string& b) {
    const std::vector<std::string> la = file_lines(a), lb = file_lines(b);
    if (la.size() != lb.size()) return false;
    for (std::size_t i = 0; i < la.size(); ++i) {
        if (la[i] == lb[i]) continue;
        nlohmann::json ja = nlohmann::json::parse(la[i]);
        nlohmann::json jb = nlohmann::json::parse(lb[i]);
        ja.erase("timestamp");
        jb.erase("timestamp");
        if (ja != jb) return false;
    }
    return true;
}

struct TempTree {
    std::filesystem::path root;
    explicit TempTree(const std::string& name) : root(std::filesystem::path("logtest_" + name)) {
        std::filesystem::remove_all(root);
        std::filesystem::create_directories(root);
    }
    ~TempTree() { std::filesystem::remove_all(root); }
    std::string operator/(const std::string& leaf) const { return (root / leaf).string(); }
};

}  // namespace

TEST_CASE("a logged run produces one meta record and one line per event") {
    TempTree tmp("basic");
    const RunConfig cfg = small_run_config(Algorithm::Online, 5);
    const std::string log_path = tmp / "run.jsonl";
    RunLogger logger(log_path, "", "online-s5", cfg);
    const RunResult res = run_online(cfg, &logger);
    logger.on_final(res.record);

    const std::vector<nlohmann::json> records = read_run_log(log_path);
    REQUIRE(records.size() >= cfg.num_batches + 3);

    const nlohmann::json& meta = records[0];
    CHECK(meta.at("record") == "meta");
    CHECK(meta.at("algorithm") == "online");
    CHECK(meta.at("seed") == 5);
    CHECK(meta.at("run_id") == "online-s5");
    CHECK(meta.at("config").at("run.batch_size") == "4");
    CHECK(meta.contains("timestamp"));

    CHECK(records[1].at("record") == "calibration");
    CHECK(records[1].at("scale").get<double>() > 0.0);

    std::size_t batch_lines = 0, eval_lines = 0, final_lines = 0;
    for (const nlohmann::json& r : records) {
        const std::string kind = r.at("record");
        if (kind == "batch") ++batch_lines;
        if (kind == "eval") ++eval_lines;
        if (kind == "final") ++final_lines;
        CHECK(r.contains("timestamp") == (kind == "meta"));  // only the meta line has a clock
    }
    CHECK(batch_lines == cfg.num_batches);
    CHECK(eval_lines == res.record.curve.size() + 1);  // cadence points plus the final eval
    CHECK(final_lines == 1);
}

TEST_CASE("the logged curve matches the in memory record") {
    TempTree tmp("curve");
    const RunConfig cfg = small_run_config(Algorithm::Online, 6);
    const std::string log_path = tmp / "run.jsonl";
    RunLogger logger(log_path, "", "online-s6", cfg);
    const RunResult res = run_online(cfg, &logger);
    logger.on_final(res.record);

    const std::vector<nlohmann::json> records = read_run_log(log_path);
    const std::vector<WinRatePoint> curve = curve_from_log(records);
    REQUIRE(curve.size() == res.record.curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK(curve[i].n_choices == res.record.curve[i].n_choices);
        CHECK(curve[i].win_rate == res.record.curve[i].win_rate);
    }
    CHECK(algorithm_from_log(records) == "online");
    REQUIRE(final_win_rate_from_log(records).has_value());
    CHECK(*final_win_rate_from_log(records) == res.record.final_win_rate);
}

TEST_CASE("two runs with the same seed log identical bytes modulo the clock") {
    TempTree tmp("twins");
    const RunConfig cfg = small_run_config(Algorithm::Ids, 9);
    for (const char* leaf : {"a.jsonl", "b.jsonl"}) {
        RunLogger logger(tmp / leaf, "", "ids-s9", cfg);
        const RunResult res = run_ids(cfg, &logger);
        logger.on_final(res.record);
    }
    CHECK(logs_equivalent(tmp / "a.jsonl", tmp / "b.jsonl"));
}

TEST_CASE("different seeds produce different logs") {
    TempTree tmp("seeds");
    for (const std::uint64_t seed : {3u, 4u}) {
        const RunConfig cfg = small_run_config(Algorithm::Online, seed);
        RunLogger logger(tmp / ("s" + std::to_string(seed) + ".jsonl"), "", "r", cfg);
        const RunResult res = run_online(cfg, &logger);
        logger.on_final(res.record);
    }
    CHECK_FALSE(logs_equivalent(tmp / "s3.jsonl", tmp / "s4.jsonl"));
}

TEST_CASE("checkpoint records point at loadable files") {
    TempTree tmp("ckpt");
    RunConfig cfg = small_run_config(Algorithm::Online, 2);
    cfg.checkpoint_mode = "interval";
    cfg.checkpoint_interval = 3;
    const std::string ckpt_dir = tmp / "ckpts";
    std::filesystem::create_directories(ckpt_dir);
    RunLogger logger(tmp / "run.jsonl", ckpt_dir, "online-s2", cfg);
    const RunResult res = run_online(cfg, &logger);
    logger.on_final(res.record);

    // batches 0 and 3 plus the final state
    REQUIRE(res.record.checkpoint_files.size() == 3);

    std::vector<nlohmann::json> ckpt_records;
    for (const nlohmann::json& r : read_run_log(tmp / "run.jsonl"))
        if (r.at("record") == "checkpoint") ckpt_records.push_back(r);
    REQUIRE(ckpt_records.size() == 3);

    for (std::size_t i = 0; i < ckpt_records.size(); ++i) {
        const std::string policy_path = ckpt_records[i].at("policy_path");
        const std::string enn_path = ckpt_records[i].at("enn_path");
        CHECK(policy_path == res.record.checkpoint_files[i]);
        const auto [arch, params] = load_policy_checkpoint(load_checkpoint(policy_path));
        CHECK(arch.backbone.vocab_size == cfg.corpus.vocab_size);
        const EnnRewardModel rm = load_enn_checkpoint(load_checkpoint(enn_path));
        CHECK(rm.arch.num_index_heads == cfg.ensemble_size);
    }

    // the final checkpoint holds the finished policy and reward model
    const std::string last = ckpt_records.back().at("policy_path");
    CHECK(ckpt_records.back().at("reason") == "final");
    const auto [arch, params] = load_policy_checkpoint(load_checkpoint(last));
    CHECK(params.hash() == res.policy.hash());
    const EnnRewardModel rm = load_enn_checkpoint(load_checkpoint(
        ckpt_records.back().at("enn_path").get<std::string>()));
    CHECK(rm.base.hash() == res.rm.base.hash());
    CHECK(rm.priors.hash() == res.rm.priors.hash());
}

TEST_CASE("suppressing response payloads drops candidates from choice lines") {
    TempTree tmp("slim");
    RunConfig cfg = small_run_config(Algorithm::Online, 3);
    cfg.log_responses = false;
    RunLogger logger(tmp / "run.jsonl", "", "slim", cfg);
    const RunResult res = run_online(cfg, &logger);
    logger.on_final(res.record);

    for (const nlohmann::json& r : read_run_log(tmp / "run.jsonl")) {
        if (r.at("record") != "batch") continue;
        for (const nlohmann::json& c : r.at("choices")) {
            CHECK_FALSE(c.contains("candidates"));
            CHECK(c.contains("choice"));
        }
    }
}

TEST_CASE("every complete line prefix of a log is readable") {
    TempTree tmp("prefix");
    const RunConfig cfg = small_run_config(Algorithm::Online, 4);
    RunLogger logger(tmp / "run.jsonl", "", "p", cfg);
    const RunResult res = run_online(cfg, &logger);
    logger.on_final(res.record);

    const std::vector<std::string> lines = file_lines(tmp / "run.jsonl");
    REQUIRE(lines.size() > 4);
    // a run that died mid write leaves whole lines plus at most one torn one
    std::ofstream out(tmp / "cut.jsonl");
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) out << lines[i] << '\n';
    out << lines.back().substr(0, lines.back().size() / 2);
    out.close();
    CHECK_THROWS_WITH(read_run_log(tmp / "cut.jsonl"),
                      Catch::Matchers::ContainsSubstring("line " + std::to_string(lines.size())));

    std::ofstream clean(tmp / "clean.jsonl");
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) clean << lines[i] << '\n';
    clean.close();
    CHECK(read_run_log(tmp / "clean.jsonl").size() == lines.size() - 1);
}

TEST_CASE("selection and round records appear for staged schedules") {
    TempTree tmp("rounds");
    const RunConfig cfg = small_run_config(Algorithm::Periodic, 8);
    RunLogger logger(tmp / "run.jsonl", "", "per-s8", cfg);
    const RunResult res = run_periodic(cfg, &logger);
    logger.on_final(res.record);

    std::size_t selections = 0, round_updates = 0;
    for (const nlohmann::json& r : read_run_log(tmp / "run.jsonl")) {
        if (r.at("record") == "selection") {
            ++selections;
            CHECK(r.at("rates").is_array());
            CHECK(r.at("chosen").get<std::size_t>() < r.at("rates").size());
        }
        if (r.at("record") == "round_update") ++round_updates;
    }
    CHECK(selections == cfg.num_batches / cfg.period);
    CHECK(round_updates > 0);
    (void)res;
}

TEST_CASE("an unwritable log path fails at construction") {
    const RunConfig cfg = small_run_config(Algorithm::Online);
    CHECK_THROWS_AS(RunLogger("no_such_dir/run.jsonl", "", "x", cfg), ConfigError);
}
