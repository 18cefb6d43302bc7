#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rlhflab/corpus.hpp"
#include "rlhflab/oracle.hpp"
#include "rlhflab/policy.hpp"

namespace rlhflab {

// One simulated comparison: which responses were sampled, which pair was
// shown, and what the annotator picked. Candidates hold the full sampled set
// so a query made by one selection rule can be re-examined by another.
struct ChoiceRecord {
    std::uint64_t batch = 0;
    std::uint64_t prompt_id = 0;
    TokenSeq prompt;
    std::vector<Response> candidates;
    std::size_t first = 0;   // index into candidates
    std::size_t second = 0;  // index into candidates
    std::size_t choice = 0;  // 0 when candidates[first] won
    std::string selection;   // "random" or "infomax"
    double selection_variance = -1.0;  // head disagreement, infomax only
};

// One optimizer application, attributed to what it touched.
struct UpdateLogEntry {
    std::string target;  // "rm", "diff.3", "policy.pairs", "policy.fresh", ...
    bool applied = false;
    double grad_norm = 0.0;
    double loss = 0.0;  // mean negative log likelihood of the observed choices
    std::string skip_reason;
};

struct BatchLogEntry {
    std::uint64_t batch = 0;
    std::uint64_t total_choices = 0;  // cumulative feedback after this batch
    std::vector<ChoiceRecord> choices;
    std::vector<UpdateLogEntry> updates;
    std::optional<double> eval_win_rate;    // test split, when the cadence hit
    std::uint64_t generator_hash = 0;       // policy that produced this batch's responses
    std::uint64_t policy_hash = 0;          // parameter hashes at the end of the batch
    std::uint64_t rm_hash = 0;
};

struct WinRatePoint {
    std::uint64_t n_choices = 0;
    double win_rate = 0.0;
};

struct RunRecord {
    std::string algorithm;
    std::uint64_t seed = 0;
    std::string profile;
    CalibrationReport calibration;
    std::vector<BatchLogEntry> batches;
    std::vector<WinRatePoint> curve;  // test-split win rate against cumulative feedback
    std::vector<std::string> checkpoint_files;
    std::uint64_t total_choices = 0;
    double final_win_rate = 0.0;  // eval split, end of run
    std::uint64_t prior_hash_start = 0;  // ensemble prior parameters, run start/end
    std::uint64_t prior_hash_end = 0;
};

}  // namespace rlhflab
