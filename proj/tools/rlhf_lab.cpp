// Command-line front end: run training schedules, evaluate checkpoints,
// fit scaling curves from run logs, and sweep algorithm/seed grids.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rlhflab/rlhflab.hpp"

namespace {

using namespace rlhflab;

struct ConfigArgs {
    std::string profile = "desk-scale";
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("-p,--profile", args.profile, "parameter preset: desk-scale or paper-scale")
        ->capture_default_str();
    cmd->add_option("-c,--config", args.config_path, "key = value config file");
    cmd->add_option("-s,--seed", args.seed, "master seed (overrides config)");
    cmd->add_option("--set", args.sets, "config override, key=value (repeatable)");
}

RunConfig resolve_config(const ConfigArgs& args) {
    ConfigMap file_cfg;
    if (!args.config_path.empty()) file_cfg = load_config_file(args.config_path);
    ConfigMap overrides;
    apply_overrides(overrides, args.sets);
    return build_run_config(args.profile, file_cfg, overrides, args.seed);
}

int cmd_run(const ConfigArgs& cargs, const std::string& out_dir, std::string run_id,
            const std::string& algorithm) {
    RunConfig cfg = resolve_config(cargs);
    if (!algorithm.empty()) {
        cfg.algorithm = parse_algorithm(algorithm);
        cfg.validate();
    }
    if (run_id.empty())
        run_id = std::string(algorithm_name(cfg.algorithm)) + "-s" + std::to_string(cfg.seed);
    std::filesystem::create_directories(out_dir);
    const std::string log_path = out_dir + "/" + run_id + ".jsonl";
    RunLogger logger(log_path, out_dir, run_id, cfg);
    const RunResult res = run_algorithm(cfg, &logger);
    logger.on_final(res.record);
    std::printf("run %s: %llu choices, final eval win rate %.4f\n", run_id.c_str(),
                static_cast<unsigned long long>(res.record.total_choices),
                res.record.final_win_rate);
    std::printf("log: %s\n", log_path.c_str());
    for (const std::string& f : res.record.checkpoint_files)
        std::printf("checkpoint: %s\n", f.c_str());
    return 0;
}

int cmd_eval(const ConfigArgs& cargs, const std::string& policy_path,
             const std::string& baseline_path, const std::string& split) {
    const RunConfig cfg = resolve_config(cargs);
    const RunEnvironment env = make_run_environment(cfg);
    const auto [arch, params] = load_policy_checkpoint(load_checkpoint(policy_path));
    if (arch.backbone.vocab_size != env.arch.backbone.vocab_size)
        throw ConfigError("checkpoint vocabulary does not match the configured corpus");

    ParamVector baseline = env.theta0;
    if (!baseline_path.empty()) {
        const auto [barch, bparams] = load_policy_checkpoint(load_checkpoint(baseline_path));
        baseline = bparams;
    }
    const std::span<const Prompt> prompts = env.corpus.split(split);
    const WinRateReport rep = win_rate(arch, params, baseline, prompts, env.oracle, 0, split);
    std::printf("win rate on %s split (%zu prompts): %.6f\n", split.c_str(), prompts.size(),
                rep.win_rate);
    return 0;
}

int cmd_fit(const std::vector<std::string>& logs, std::vector<std::uint64_t> at) {
    std::map<std::string, std::vector<WinRatePoint>> by_algorithm;
    std::uint64_t max_n = 0;
    for (const std::string& path : logs) {
        const std::vector<nlohmann::json> records = read_run_log(path);
        const std::string algo = algorithm_from_log(records);
        const std::vector<WinRatePoint> curve = curve_from_log(records);
        auto& dest = by_algorithm[algo];
        dest.insert(dest.end(), curve.begin(), curve.end());
        for (const WinRatePoint& p : curve) max_n = std::max(max_n, p.n_choices);
    }
    if (by_algorithm.empty()) throw ConfigError("no curve points found in the given logs");
    if (at.empty() && max_n > 0) at.push_back(max_n);

    std::map<std::string, ScalingFit> fits;
    std::printf("%-10s %8s %8s %12s %12s %12s\n", "algorithm", "used", "excl", "a", "b",
                "residual");
    for (const auto& [algo, points] : by_algorithm) {
        try {
            const ScalingFit fit = fit_scaling(points);
            fits[algo] = fit;
            std::printf("%-10s %8zu %8zu %12.4f %12.4f %12.6f\n", algo.c_str(),
                        fit.points_used, fit.points_excluded, fit.a, fit.b, fit.residual);
        } catch (const FitError& e) {
            std::printf("%-10s fit failed: %s\n", algo.c_str(), e.what());
        }
    }
    for (const std::uint64_t n : at) {
        for (const auto& [explore_name, explore_fit] : fits) {
            for (const auto& [offline_name, offline_fit] : fits) {
                try {
                    const double g = project_gain(explore_fit, offline_fit, n);
                    std::printf("gain of %s over %s at n=%llu: %.4f\n", explore_name.c_str(),
                                offline_name.c_str(), static_cast<unsigned long long>(n), g);
                } catch (const FitError& e) {
                    std::printf("gain of %s over %s at n=%llu: unavailable (%s)\n",
                                explore_name.c_str(), offline_name.c_str(),
                                static_cast<unsigned long long>(n), e.what());
                }
            }
        }
    }
    return 0;
}

int cmd_compare(const ConfigArgs& cargs, const std::string& algorithms_csv,
                const std::string& seeds_csv, const std::string& out_dir) {
    std::vector<std::string> algos;
    {
        std::string item;
        std::istringstream in(algorithms_csv);
        while (std::getline(in, item, ',')) algos.push_back(item);
    }
    std::vector<std::uint64_t> seeds;
    {
        std::string item;
        std::istringstream in(seeds_csv);
        while (std::getline(in, item, ',')) seeds.push_back(std::stoull(item));
    }
    if (algos.empty() || seeds.empty())
        throw ConfigError("compare needs --algorithms and --seeds");
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    std::printf("%-10s %8s %10s %10s %10s  per-seed\n", "algorithm", "runs", "mean", "min",
                "max");
    for (const std::string& algo : algos) {
        std::vector<double> finals;
        std::string per_seed;
        for (const std::uint64_t seed : seeds) {
            try {
                RunConfig cfg = resolve_config(cargs);
                cfg.algorithm = parse_algorithm(algo);
                cfg.seed = seed;
                cfg.validate();
                const std::string run_id = algo + "-s" + std::to_string(seed);
                std::unique_ptr<RunLogger> logger;
                if (!out_dir.empty())
                    logger = std::make_unique<RunLogger>(out_dir + "/" + run_id + ".jsonl",
                                                         out_dir, run_id, cfg);
                const RunResult res = run_algorithm(cfg, logger.get());
                if (logger) logger->on_final(res.record);
                finals.push_back(res.record.final_win_rate);
                char buf[40];
                std::snprintf(buf, sizeof buf, " s%llu=%.4f",
                              static_cast<unsigned long long>(seed),
                              res.record.final_win_rate);
                per_seed += buf;
            } catch (const std::exception& e) {
                std::fprintf(stderr, "%s seed %llu failed: %s\n", algo.c_str(),
                             static_cast<unsigned long long>(seed), e.what());
                per_seed += " s" + std::to_string(seed) + "=failed";
            }
        }
        if (finals.empty()) {
            std::printf("%-10s %8d %10s %10s %10s %s\n", algo.c_str(), 0, "-", "-", "-",
                        per_seed.c_str());
            continue;
        }
        const double mean =
            std::accumulate(finals.begin(), finals.end(), 0.0) / finals.size();
        const auto [mn, mx] = std::minmax_element(finals.begin(), finals.end());
        std::printf("%-10s %8zu %10.4f %10.4f %10.4f %s\n", algo.c_str(), finals.size(),
                    mean, *mn, *mx, per_seed.c_str());
    }
    return 0;
}

int cmd_corpus(const ConfigArgs& cargs, const std::string& split, const std::string& out) {
    const RunConfig cfg = resolve_config(cargs);
    const SeedTree root(cfg.seed);
    const PromptCorpus corpus = build_corpus(cfg.corpus, root.child("corpus"));
    export_prompts_file(corpus.split(split), out);
    std::printf("wrote %zu %s prompts to %s\n", corpus.split(split).size(), split.c_str(),
                out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RLHF simulation laboratory"};
    app.require_subcommand(1);

    ConfigArgs run_args;
    std::string run_out = "runs", run_id, run_algorithm_flag;
    CLI::App* run_cmd = app.add_subcommand("run", "train one schedule and log the run");
    add_config_options(run_cmd, run_args);
    run_cmd->add_option("-a,--algorithm", run_algorithm_flag,
                        "offline | periodic | online | ids (overrides config)");
    run_cmd->add_option("-o,--out", run_out, "output directory")->capture_default_str();
    run_cmd->add_option("--run-id", run_id, "log/checkpoint name stem");

    ConfigArgs eval_args;
    std::string eval_policy, eval_baseline, eval_split = "eval";
    CLI::App* eval_cmd = app.add_subcommand("eval", "win rate of a policy checkpoint");
    add_config_options(eval_cmd, eval_args);
    eval_cmd->add_option("--policy", eval_policy, "policy checkpoint to evaluate")->required();
    eval_cmd->add_option("--baseline", eval_baseline,
                         "baseline checkpoint (default: the run's starting policy)");
    eval_cmd->add_option("--split", eval_split, "train | test | eval")->capture_default_str();

    std::vector<std::string> fit_logs;
    std::vector<std::uint64_t> fit_at;
    CLI::App* fit_cmd = app.add_subcommand("fit", "fit scaling curves from run logs");
    fit_cmd->add_option("--log", fit_logs, "run log (repeatable, grouped by algorithm)")
        ->required();
    fit_cmd->add_option("--at", fit_at, "query count for data-efficiency gains (repeatable)");

    ConfigArgs cmp_args;
    std::string cmp_algorithms = "offline,periodic,online,ids", cmp_seeds = "1,2,3",
                cmp_out;
    CLI::App* cmp_cmd = app.add_subcommand("compare", "run an algorithm/seed grid");
    add_config_options(cmp_cmd, cmp_args);
    cmp_cmd->add_option("--algorithms", cmp_algorithms, "comma-separated list")
        ->capture_default_str();
    cmp_cmd->add_option("--seeds", cmp_seeds, "comma-separated list")->capture_default_str();
    cmp_cmd->add_option("-o,--out", cmp_out, "directory for run logs (optional)");

    ConfigArgs corpus_args;
    std::string corpus_split = "train", corpus_out = "prompts.tsv";
    CLI::App* corpus_cmd = app.add_subcommand("corpus", "export a prompt split as TSV");
    add_config_options(corpus_cmd, corpus_args);
    corpus_cmd->add_option("--split", corpus_split, "train | test | eval")
        ->capture_default_str();
    corpus_cmd->add_option("-o,--out", corpus_out, "output file")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(run_args, run_out, run_id, run_algorithm_flag);
        if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_policy, eval_baseline, eval_split);
        if (fit_cmd->parsed()) return cmd_fit(fit_logs, fit_at);
        if (cmp_cmd->parsed()) return cmd_compare(cmp_args, cmp_algorithms, cmp_seeds, cmp_out);
        if (corpus_cmd->parsed()) return cmd_corpus(corpus_args, corpus_split, corpus_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
