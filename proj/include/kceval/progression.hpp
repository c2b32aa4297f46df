#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "kceval/extraction.hpp"
#include "kceval/stats.hpp"

namespace kceval::progression {

enum class Label { Green, Yellow, Red };

const char* to_string(Label label);

// Total and exclusive: the label is determined solely by the sign of delta.
Label label_for_delta(int delta);

// One time-adjacent checkpoint pair with its progression label.
struct ProgressionPair {
    std::string student_id;
    std::string problem_id;
    std::string from_checkpoint_id;
    std::string to_checkpoint_id;
    int missing_before = 0;
    int missing_after = 0;
    int delta = 0;  // missing_after - missing_before
    Label label = Label::Yellow;
    double elapsed_seconds = 0;  // raw wall-clock gap
    bool idle_excluded = false;  // gap beyond the idle cap: no time, still one submission
};

struct PairDrop {
    std::string from_checkpoint_id;
    std::string to_checkpoint_id;
    std::string reason;
};

struct PairBuildResult {
    std::vector<ProgressionPair> pairs;
    std::vector<PairDrop> dropped;
};

// One pair per adjacent couple in every stream whose two checkpoints both
// carry successful code extractions; others are dropped and reported.
PairBuildResult build_pairs(const ingest::Dataset& dataset,
                            const extraction::ExtractionStore& store,
                            double idle_cap_seconds = 1200.0);

// Per-problem RQ1 aggregate. Array index order: Green, Yellow, Red.
struct Rq1Aggregate {
    std::string problem_id;
    std::string term_label;
    int n_students = 0;
    std::array<double, 3> avg_time_s{};
    std::array<double, 3> avg_submissions{};
    // Shares across the three labels; unset when the measure totals zero.
    std::optional<std::array<double, 3>> time_share;
    std::optional<std::array<double, 3>> submission_share;
};

// Averages divide by the number of distinct students with at least one pair
// on the problem. Idle-excluded pairs contribute zero time but one
// submission.
std::vector<Rq1Aggregate> aggregate_rq1(const std::vector<ProgressionPair>& pairs,
                                        const std::string& term_label);

struct GreenStats {
    int n_green = 0;
    double mean_reduction = 0;  // mean of -delta over Green pairs
    double sd = 0;
};

struct GreenComparison {
    GreenStats set_a;  // baseline
    GreenStats set_b;  // treatment
    // two_sample_t(b, a): positive t means the treatment term reduces more
    // missing KCs per green submission.
    stats::TTestResult test;
};

// Throws InputError when either side has fewer than two Green pairs (SD
// undefined).
GreenComparison green_reduction_stats(const std::vector<ProgressionPair>& pairs_a,
                                      const std::vector<ProgressionPair>& pairs_b,
                                      stats::TVariant variant = stats::TVariant::Pooled);

}  // namespace kceval::progression
