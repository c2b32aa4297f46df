#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kceval/extraction.hpp"

namespace kceval::hintmetrics {

// Per-hint evaluation against its linked checkpoint and that checkpoint's
// successor. nullopt flags mean "not applicable".
struct HintEvaluation {
    std::string hint_id;
    int kc_list_length = 0;
    std::optional<bool> top3_hit;
    std::optional<bool> resolved_hit;
    std::vector<std::string> missing_at_i;
    std::optional<std::vector<std::string>> missing_at_i_plus_1;
    std::vector<std::string> addressed;
};

// True when the addressed set intersects the first min(3, |missing|)
// entries; not applicable when nothing is missing.
std::optional<bool> top3_overlap(const std::vector<std::string>& missing_ordered,
                                 const std::vector<std::string>& addressed);

// Set difference missing_i \ missing_i_plus_1 by kc_id; sorted output.
std::vector<std::string> resolved_kcs(const std::vector<std::string>& missing_i,
                                      const std::vector<std::string>& missing_i_plus_1);

bool resolution_hit(const std::vector<std::string>& resolved,
                    const std::vector<std::string>& addressed);

struct EvaluateResult {
    std::vector<HintEvaluation> evaluations;
    // Hints that could not be evaluated at all (no hint extraction).
    std::vector<std::string> skipped_hints;
    std::vector<std::string> notices;
};

EvaluateResult evaluate_hints(const ingest::Dataset& dataset,
                              const extraction::ExtractionStore& store);

enum class Metric { Top3, Resolved };

const char* to_string(Metric metric);

struct GroupedProportion {
    std::string bucket;  // "1".."4", "5+"
    int numerator = 0;
    int denominator = 0;
    std::optional<double> proportion;  // unset when denominator is 0
};

struct GroupedReport {
    Metric metric = Metric::Top3;
    std::vector<GroupedProportion> buckets;
    int no_kc_hints = 0;      // length-0 hints, excluded from buckets
    int not_applicable = 0;   // excluded from denominators
    int overall_numerator = 0;
    int overall_denominator = 0;
    std::optional<double> overall;
};

// Buckets 1, 2, 3, 4, 5+ keyed by hint KC-list length. Not-applicable
// entries leave the denominator; length-0 hints are counted separately.
GroupedReport group_by_length(const std::vector<HintEvaluation>& evaluations, Metric metric);

}  // namespace kceval::hintmetrics
