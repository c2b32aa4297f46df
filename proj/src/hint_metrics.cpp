#include "kceval/hint_metrics.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace kceval::hintmetrics {

std::optional<bool> top3_overlap(const std::vector<std::string>& missing_ordered,
                                 const std::vector<std::string>& addressed) {
    if (missing_ordered.empty()) return std::nullopt;
    const std::size_t cut = std::min<std::size_t>(3, missing_ordered.size());
    for (std::size_t i = 0; i < cut; ++i) {
        if (std::find(addressed.begin(), addressed.end(), missing_ordered[i]) !=
            addressed.end()) {
            return true;
        }
    }
    return false;
}

std::vector<std::string> resolved_kcs(const std::vector<std::string>& missing_i,
                                      const std::vector<std::string>& missing_i_plus_1) {
    const std::set<std::string> later(missing_i_plus_1.begin(), missing_i_plus_1.end());
    std::set<std::string> resolved;
    for (const auto& id : missing_i) {
        if (!later.count(id)) resolved.insert(id);
    }
    return {resolved.begin(), resolved.end()};
}

bool resolution_hit(const std::vector<std::string>& resolved,
                    const std::vector<std::string>& addressed) {
    for (const auto& id : resolved) {
        if (std::find(addressed.begin(), addressed.end(), id) != addressed.end()) return true;
    }
    return false;
}

EvaluateResult evaluate_hints(const ingest::Dataset& dataset,
                              const extraction::ExtractionStore& store) {
    EvaluateResult result;
    for (const auto& linked : dataset.hints) {
        const ExtractionRecord* hint_rec =
            store.find(SubjectKind::Hint, linked.hint.hint_id);
        if (!hint_rec) {
            result.skipped_hints.push_back(linked.hint.hint_id);
            result.notices.push_back("hint " + linked.hint.hint_id +
                                     ": no hint extraction; skipped");
            continue;
        }

        HintEvaluation ev;
        ev.hint_id = linked.hint.hint_id;
        ev.addressed = hint_rec->kc_ids;
        ev.kc_list_length = static_cast<int>(ev.addressed.size());

        const Checkpoint* cp = dataset.find_checkpoint(linked.checkpoint_id);
        const ExtractionRecord* code_rec =
            cp ? store.find(SubjectKind::Code, cp->checkpoint_id) : nullptr;
        if (!code_rec) {
            // Linked checkpoint lacks a code extraction: both metrics are
            // unanswerable for this hint.
            result.notices.push_back("hint " + linked.hint.hint_id +
                                     ": linked checkpoint lacks a code extraction");
            result.evaluations.push_back(std::move(ev));
            continue;
        }
        ev.missing_at_i = code_rec->kc_ids;
        ev.top3_hit = top3_overlap(ev.missing_at_i, ev.addressed);

        const Checkpoint* successor = dataset.next_checkpoint(*cp);
        const ExtractionRecord* next_rec =
            successor ? store.find(SubjectKind::Code, successor->checkpoint_id) : nullptr;
        if (next_rec) {
            ev.missing_at_i_plus_1 = next_rec->kc_ids;
            ev.resolved_hit =
                resolution_hit(resolved_kcs(ev.missing_at_i, *ev.missing_at_i_plus_1),
                               ev.addressed);
        }
        result.evaluations.push_back(std::move(ev));
    }
    return result;
}

const char* to_string(Metric metric) {
    return metric == Metric::Top3 ? "top3" : "resolved";
}

GroupedReport group_by_length(const std::vector<HintEvaluation>& evaluations, Metric metric) {
    GroupedReport report;
    report.metric = metric;

    constexpr int n_buckets = 5;  // 1, 2, 3, 4, 5+
    std::array<int, n_buckets> num{};
    std::array<int, n_buckets> den{};

    for (const auto& ev : evaluations) {
        const std::optional<bool> hit =
            metric == Metric::Top3 ? ev.top3_hit : ev.resolved_hit;
        if (ev.kc_list_length == 0) {
            ++report.no_kc_hints;
            continue;
        }
        if (!hit.has_value()) {
            ++report.not_applicable;
            continue;
        }
        const int bucket = std::min(ev.kc_list_length, 5) - 1;
        ++den[static_cast<std::size_t>(bucket)];
        if (*hit) ++num[static_cast<std::size_t>(bucket)];
    }

    for (int b = 0; b < n_buckets; ++b) {
        GroupedProportion gp;
        gp.bucket = b < 4 ? std::to_string(b + 1) : "5+";
        gp.numerator = num[static_cast<std::size_t>(b)];
        gp.denominator = den[static_cast<std::size_t>(b)];
        if (gp.denominator > 0) {
            gp.proportion = static_cast<double>(gp.numerator) / gp.denominator;
        }
        report.overall_numerator += gp.numerator;
        report.overall_denominator += gp.denominator;
        report.buckets.push_back(std::move(gp));
    }
    if (report.overall_denominator > 0) {
        report.overall =
            static_cast<double>(report.overall_numerator) / report.overall_denominator;
    }
    return report;
}

}  // namespace kceval::hintmetrics
