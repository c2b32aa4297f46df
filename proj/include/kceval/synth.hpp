#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kceval/core.hpp"

namespace kceval::synth {

struct ProblemSpec {
    std::string problem_id;
    int initial_missing_lo = 1;
    int initial_missing_hi = 4;
};

struct SynthConfig {
    std::uint64_t seed = 1;
    int n_students = 100;
    std::vector<ProblemSpec> problems;
    double p_resolve = 0.5;   // per-step chance each missing KC is fixed
    double p_regress = 0.0;   // per-step chance a fixed KC re-breaks
    double hint_rate = 0.5;   // chance a non-complete checkpoint gets a hint
    double q_top3 = 0.85;     // planted chance a hint covers a top-3 missing KC
    std::vector<double> hint_length_weights = {0.3, 0.3, 0.2, 0.1, 0.07, 0.03};  // lengths 1..n
    double gap_lo_seconds = 60;
    double gap_hi_seconds = 300;
    int max_checkpoints = 12;  // hard stream bound so p_resolve = 0 terminates
    std::string term_label = "synthetic";
};

SynthConfig synth_config_from_json(const std::string& json_text);
SynthConfig load_synth_config(const std::string& path);

struct HintTruth {
    std::string hint_id;
    std::string checkpoint_ref;
    std::vector<std::string> addressed;
    int length = 0;
    bool top3_hit = false;
    std::optional<bool> resolved_hit;  // unset when the checkpoint has no successor
};

struct GroundTruth {
    std::map<std::string, std::vector<std::string>> missing_by_checkpoint;
    std::vector<HintTruth> hints;
    int n_checkpoints = 0;
    int n_hints = 0;
    int n_pairs = 0;
};

std::string ground_truth_to_json(const GroundTruth& truth);

struct SynthResult {
    std::string checkpoints_jsonl;
    std::string hints_jsonl;
    GroundTruth truth;
};

// Emits logs whose stub extraction reproduces the planted KC lists exactly;
// generation self-checks that property and throws InternalError on any
// mismatch. Throws InputError when the database cannot support exact
// planting (missing stub rules, ambiguous substrings, too few KCs).
SynthResult generate(const SynthConfig& config, const KCDatabase& db);

struct ExpectedRates {
    double green_share = 0;   // of all pairs
    double yellow_share = 0;
    double red_share = 0;
    double rq2_overall = 0;   // equals q_top3 by construction
    double rq3_overall = 0;
    std::array<std::optional<double>, 5> rq3_by_bucket;  // lengths 1..4, 5+
    double expected_pairs_per_student = 0;      // summed over problems
    double expected_hints_per_student = 0;      // RQ2 denominator scale
    double expected_rq3_hints_per_student = 0;  // RQ3 denominator scale
};

// Closed-form expectations for the planted dynamics, computed by exact
// enumeration over the per-step resolution/regression outcomes. Independent
// of the log-emitting path; acceptance compares pipeline measurements
// against these.
ExpectedRates expected_rates(const SynthConfig& config, int n_db_kcs);

std::string expected_rates_to_json(const ExpectedRates& rates);

}  // namespace kceval::synth
