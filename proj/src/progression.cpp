#include "kceval/progression.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace kceval::progression {

const char* to_string(Label label) {
    switch (label) {
        case Label::Green: return "green";
        case Label::Yellow: return "yellow";
        case Label::Red: return "red";
    }
    return "?";
}

Label label_for_delta(int delta) {
    if (delta < 0) return Label::Green;
    if (delta > 0) return Label::Red;
    return Label::Yellow;
}

PairBuildResult build_pairs(const ingest::Dataset& dataset,
                            const extraction::ExtractionStore& store,
                            double idle_cap_seconds) {
    PairBuildResult result;
    for (const auto& [key, stream] : dataset.streams) {
        for (std::size_t i = 0; i + 1 < stream.size(); ++i) {
            const Checkpoint& from = stream[i];
            const Checkpoint& to = stream[i + 1];
            const ExtractionRecord* rec_from =
                store.find(SubjectKind::Code, from.checkpoint_id);
            const ExtractionRecord* rec_to = store.find(SubjectKind::Code, to.checkpoint_id);
            if (!rec_from || !rec_to) {
                const std::string which = !rec_from ? from.checkpoint_id : to.checkpoint_id;
                result.dropped.push_back({from.checkpoint_id, to.checkpoint_id,
                                          "missing code extraction for " + which});
                continue;
            }
            ProgressionPair pair;
            pair.student_id = key.student_id;
            pair.problem_id = key.problem_id;
            pair.from_checkpoint_id = from.checkpoint_id;
            pair.to_checkpoint_id = to.checkpoint_id;
            pair.missing_before = static_cast<int>(rec_from->kc_ids.size());
            pair.missing_after = static_cast<int>(rec_to->kc_ids.size());
            pair.delta = pair.missing_after - pair.missing_before;
            pair.label = label_for_delta(pair.delta);
            pair.elapsed_seconds = static_cast<double>(to.timestamp - from.timestamp);
            pair.idle_excluded = pair.elapsed_seconds > idle_cap_seconds;
            result.pairs.push_back(std::move(pair));
        }
    }
    return result;
}

std::vector<Rq1Aggregate> aggregate_rq1(const std::vector<ProgressionPair>& pairs,
                                        const std::string& term_label) {
    struct Acc {
        std::array<double, 3> time{};
        std::array<double, 3> count{};
        std::set<std::string> students;
    };
    std::map<std::string, Acc> by_problem;
    for (const auto& pair : pairs) {
        Acc& acc = by_problem[pair.problem_id];
        const auto idx = static_cast<std::size_t>(pair.label);
        if (!pair.idle_excluded) acc.time[idx] += pair.elapsed_seconds;
        acc.count[idx] += 1.0;
        acc.students.insert(pair.student_id);
    }

    std::vector<Rq1Aggregate> out;
    for (const auto& [problem_id, acc] : by_problem) {
        Rq1Aggregate agg;
        agg.problem_id = problem_id;
        agg.term_label = term_label;
        agg.n_students = static_cast<int>(acc.students.size());
        const double n = agg.n_students;
        double total_time = 0;
        double total_count = 0;
        for (std::size_t i = 0; i < 3; ++i) {
            agg.avg_time_s[i] = acc.time[i] / n;
            agg.avg_submissions[i] = acc.count[i] / n;
            total_time += acc.time[i];
            total_count += acc.count[i];
        }
        if (total_time > 0) {
            std::array<double, 3> share{};
            for (std::size_t i = 0; i < 3; ++i) share[i] = acc.time[i] / total_time;
            agg.time_share = share;
        }
        if (total_count > 0) {
            std::array<double, 3> share{};
            for (std::size_t i = 0; i < 3; ++i) share[i] = acc.count[i] / total_count;
            agg.submission_share = share;
        }
        out.push_back(std::move(agg));
    }
    return out;
}

namespace {

std::vector<double> green_reductions(const std::vector<ProgressionPair>& pairs) {
    std::vector<double> out;
    for (const auto& pair : pairs) {
        if (pair.label == Label::Green) out.push_back(static_cast<double>(-pair.delta));
    }
    return out;
}

GreenStats summarize(const std::vector<double>& reductions) {
    GreenStats gs;
    gs.n_green = static_cast<int>(reductions.size());
    gs.mean_reduction = stats::mean(reductions);
    gs.sd = stats::sample_sd(reductions);
    return gs;
}

}  // namespace

GreenComparison green_reduction_stats(const std::vector<ProgressionPair>& pairs_a,
                                      const std::vector<ProgressionPair>& pairs_b,
                                      stats::TVariant variant) {
    const auto red_a = green_reductions(pairs_a);
    const auto red_b = green_reductions(pairs_b);
    if (red_a.size() < 2 || red_b.size() < 2) {
        throw InputError(
            "green_reduction_stats: each set needs at least two green pairs "
            "(got " +
            std::to_string(red_a.size()) + " and " + std::to_string(red_b.size()) +
            "); the sample standard deviation is undefined below that");
    }
    GreenComparison cmp;
    cmp.set_a = summarize(red_a);
    cmp.set_b = summarize(red_b);
    cmp.test = stats::two_sample_t(red_b, red_a, variant);
    return cmp;
}

}  // namespace kceval::progression
