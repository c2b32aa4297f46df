#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kceval/core.hpp"

namespace kceval::stats {

double mean(std::span<const double> xs);
// Sample standard deviation (n-1 denominator). Requires |xs| >= 2.
double sample_sd(std::span<const double> xs);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
// Absolute accuracy better than 1e-10 over the tested domain.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p for a t statistic: I_{v/(v+t^2)}(v/2, 1/2).
double student_t_two_sided_p(double t, double dof);

// r = sqrt(t^2 / (t^2 + dof)).
double effect_size_r(double t, double dof);

enum class TVariant { Pooled, Welch };

struct TTestResult {
    double t = 0;
    double dof = 0;
    double p_two_sided = 1;
    double effect_size_r = 0;
    TVariant variant = TVariant::Pooled;
};

// Standard two-sample t with mean(a) - mean(b) in the numerator.
// Pooled dof = |a| + |b| - 2; Welch uses the Satterthwaite approximation.
// Throws InputError when a sample has fewer than two values. Zero pooled
// variance yields t = 0, p = 1 for equal means and an infinite-|t| limit
// (p = 0, r = 1) otherwise.
TTestResult two_sample_t(std::span<const double> a, std::span<const double> b,
                         TVariant variant = TVariant::Pooled);

struct AgreementResult {
    int n_items = 0;
    double percent_agreement = 0;
    // Unset when expected agreement is 1 (degenerate marginals).
    std::optional<double> cohens_kappa;
    // Confusion counts so kappa is recomputable downstream.
    int both_yes = 0;
    int both_no = 0;
    int only_a_yes = 0;
    int only_b_yes = 0;
};

// Binary two-rater agreement. Throws InputError on length mismatch or empty
// input.
AgreementResult cohens_kappa(const std::vector<bool>& a, const std::vector<bool>& b);

// Half-width of a 99% normal-approximation binomial interval.
double binomial_ci99_halfwidth(double p, double n);

// ---------------------------------------------------------------------------
// Expert-labeling sample workflow
// ---------------------------------------------------------------------------

// What a rater sees for one sampled extraction. Extractor identity is
// deliberately absent so labeling stays blind.
struct LabelingItem {
    std::string item_id;       // stable id referenced by rater files
    SubjectKind subject_kind = SubjectKind::Code;
    std::string subject_text;  // the code or the hint
    std::vector<std::string> kc_ids;
    bool joint = false;        // marked for labeling by every rater
};

struct LabelingSample {
    std::uint64_t seed = 0;
    std::vector<LabelingItem> items;
    int joint_count = 0;
};

// Candidate pool entry assembled by the caller from an extraction store plus
// the dataset that supplies subject texts.
struct LabelingCandidate {
    SubjectKind subject_kind = SubjectKind::Code;
    std::string subject_id;
    std::string subject_text;
    std::vector<std::string> kc_ids;
};

// Uniform sample of n candidates without replacement; the first
// round(overlap_fraction * n) sampled items are flagged joint. Reproducible
// from the seed. Throws InputError when n exceeds the pool.
LabelingSample draw_labeling_sample(const std::vector<LabelingCandidate>& pool,
                                    int n, std::uint64_t seed, double overlap_fraction);

// CSV with a blank verdict column for raters to fill (agree/disagree).
std::string labeling_sample_to_csv(const LabelingSample& sample);
LabelingSample labeling_sample_from_csv(const std::string& csv_text);

struct RaterFile {
    std::string name;  // for report labels; usually the file stem
    // item_id -> true for "agree". Items left blank are absent.
    std::vector<std::pair<std::string, bool>> verdicts;
};

// Throws InputError on malformed rows or verdicts outside {agree, disagree}.
RaterFile load_rater_csv(const std::string& name, const std::string& csv_text);

struct PairwiseAgreement {
    std::string rater_a;
    std::string rater_b;
    std::optional<AgreementResult> agreement;  // unset when no shared joint items
    int joint_covered = 0;
    std::string notice;
};

struct ScoreReport {
    std::vector<PairwiseAgreement> pairs;
    int items_labeled = 0;
    int items_endorsed = 0;
    // endorsed / labeled; an item is endorsed when every rater who labeled
    // it chose "agree". Unset when nothing was labeled.
    std::optional<double> extractor_accuracy;
    std::vector<std::string> notices;
};

// Throws InputError listing any rater item ids absent from the sample.
ScoreReport score_labels(const LabelingSample& sample, const std::vector<RaterFile>& raters);

}  // namespace kceval::stats
