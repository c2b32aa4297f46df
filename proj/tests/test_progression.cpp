#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "kceval/progression.hpp"
#include "kceval/rng.hpp"

using namespace kceval;
using namespace kceval::progression;

namespace {

namespace fs = std::filesystem;

KCDatabase counting_db(int n) {
    KCDatabase db;
    db.assignment_id = "hw01";
    db.categories = {"general"};
    for (int i = 0; i < n; ++i) {
        KnowledgeComponent kc;
        kc.kc_id = "K" + std::to_string(i);
        kc.name = "Concept " + std::to_string(i);
        kc.description = "d";
        kc.category = "general";
        db.kcs.push_back(std::move(kc));
    }
    return db;
}

// Builds a dataset plus a store where each checkpoint's missing count is
// given per stream.
struct Cohort {
    ingest::Dataset dataset;
    extraction::ExtractionStore store;
};

Cohort cohort_from_counts(
    const std::vector<std::tuple<std::string, std::string, std::vector<int>,
                                 std::vector<double>>>& streams) {
    const KCDatabase db = counting_db(16);
    static int cohort_counter = 0;
    const auto dir = fs::temp_directory_path() /
                     ("kceval_prog_" + std::to_string(::getpid()) + "_" +
                      std::to_string(cohort_counter++));
    fs::create_directories(dir);
    const auto cp_path = (dir / "cp.jsonl").string();

    Cohort cohort;
    {
        std::ofstream out(cp_path, std::ios::binary);
        int id = 0;
        for (const auto& [student, problem, counts, gaps] : streams) {
            EpochSeconds ts = *parse_rfc3339("2024-03-01T10:00:00Z");
            for (std::size_t i = 0; i < counts.size(); ++i) {
                if (i > 0) ts += static_cast<EpochSeconds>(gaps[i - 1]);
                nlohmann::json row;
                const std::string cid = "c" + std::to_string(id++);
                row["checkpoint_id"] = cid;
                row["student_id"] = student;
                row["assignment_id"] = "hw01";
                row["problem_id"] = problem;
                row["timestamp"] = format_rfc3339(ts);
                row["code"] = "";
                out << row.dump() << "\n";

                ExtractionRecord rec;
                rec.subject_kind = SubjectKind::Code;
                rec.subject_id = cid;
                for (int k = 0; k < counts[i]; ++k) rec.kc_ids.push_back("K" + std::to_string(k));
                rec.ordered = true;
                rec.extractor_id = "test";
                cohort.store.put(std::move(rec));
            }
        }
    }
    cohort.dataset = ingest::load_checkpoints(cp_path, db);
    std::error_code ec;
    fs::remove_all(dir, ec);
    return cohort;
}

}  // namespace

TEST_CASE("labels follow the sign of the missing-count delta") {
    CHECK(label_for_delta(-1) == Label::Green);
    CHECK(label_for_delta(0) == Label::Yellow);
    CHECK(label_for_delta(2) == Label::Red);

    auto cohort = cohort_from_counts({{"s1", "p1", {3, 2}, {300}}});
    auto built = build_pairs(cohort.dataset, cohort.store);
    REQUIRE(built.pairs.size() == 1);
    CHECK(built.pairs[0].label == Label::Green);
    CHECK(built.pairs[0].delta == -1);

    cohort = cohort_from_counts({{"s1", "p1", {2, 2}, {300}}});
    built = build_pairs(cohort.dataset, cohort.store);
    CHECK(built.pairs[0].label == Label::Yellow);
    CHECK(built.pairs[0].delta == 0);
}

TEST_CASE("long gaps are idle-excluded but keep their label and submission") {
    // 45-minute gap against a 20-minute cap.
    auto cohort = cohort_from_counts({{"s1", "p1", {1, 3}, {2700}}});
    const auto built = build_pairs(cohort.dataset, cohort.store, 1200);
    REQUIRE(built.pairs.size() == 1);
    CHECK(built.pairs[0].label == Label::Red);
    CHECK(built.pairs[0].delta == 2);
    CHECK(built.pairs[0].idle_excluded);

    const auto aggs = aggregate_rq1(built.pairs, "t");
    REQUIRE(aggs.size() == 1);
    CHECK(aggs[0].avg_time_s[2] == 0.0);         // no time contribution
    CHECK(aggs[0].avg_submissions[2] == 1.0);    // still one submission
}

TEST_CASE("label totality and conservation over random pairs") {
    Rng rng(606);
    int green = 0, yellow = 0, red = 0;
    for (int i = 0; i < 1000; ++i) {
        const int before = static_cast<int>(rng.bounded(12));
        const int after = static_cast<int>(rng.bounded(12));
        const Label label = label_for_delta(after - before);
        const int sign = after > before ? 1 : after < before ? -1 : 0;
        CHECK(label == (sign < 0 ? Label::Green : sign > 0 ? Label::Red : Label::Yellow));
        green += label == Label::Green;
        yellow += label == Label::Yellow;
        red += label == Label::Red;
    }
    CHECK(green + yellow + red == 1000);
}

TEST_CASE("single-student aggregate matches hand arithmetic") {
    // Pairs: Green 300 s, Yellow 420 s.
    auto cohort = cohort_from_counts({{"s1", "p1", {3, 2, 2}, {300, 420}}});
    const auto built = build_pairs(cohort.dataset, cohort.store);
    REQUIRE(built.pairs.size() == 2);
    const auto aggs = aggregate_rq1(built.pairs, "t");
    REQUIRE(aggs.size() == 1);
    const auto& a = aggs[0];
    CHECK(a.n_students == 1);
    CHECK(a.avg_time_s[0] == 300.0);
    CHECK(a.avg_time_s[1] == 420.0);
    CHECK(a.avg_time_s[2] == 0.0);
    CHECK(a.avg_submissions[0] == 1.0);
    CHECK(a.avg_submissions[1] == 1.0);
    CHECK(a.avg_submissions[2] == 0.0);
    REQUIRE(a.submission_share.has_value());
    CHECK((*a.submission_share)[0] == doctest::Approx(0.5));
    CHECK((*a.submission_share)[1] == doctest::Approx(0.5));
    CHECK((*a.submission_share)[2] == 0.0);
}

TEST_CASE("per-student averaging divides by distinct students") {
    // A: 1 green pair. B: 1 green + 1 red pair.
    auto cohort = cohort_from_counts({{"sA", "p1", {3, 2}, {60}},
                                      {"sB", "p1", {3, 2, 4}, {60, 60}}});
    const auto built = build_pairs(cohort.dataset, cohort.store);
    const auto aggs = aggregate_rq1(built.pairs, "t");
    REQUIRE(aggs.size() == 1);
    CHECK(aggs[0].n_students == 2);
    CHECK(aggs[0].avg_submissions[0] == doctest::Approx(1.0));
    CHECK(aggs[0].avg_submissions[2] == doctest::Approx(0.5));
}

TEST_CASE("all-idle datasets omit time shares but keep submission shares") {
    auto cohort = cohort_from_counts({{"s1", "p1", {3, 2, 1}, {5000, 5000}}});
    const auto built = build_pairs(cohort.dataset, cohort.store, 1200);
    const auto aggs = aggregate_rq1(built.pairs, "t");
    REQUIRE(aggs.size() == 1);
    CHECK_FALSE(aggs[0].time_share.has_value());
    REQUIRE(aggs[0].submission_share.has_value());
    CHECK((*aggs[0].submission_share)[0] == doctest::Approx(1.0));
}

TEST_CASE("proportional shares sum to one and survive time rescaling") {
    Rng rng(4444);
    std::vector<std::tuple<std::string, std::string, std::vector<int>, std::vector<double>>>
        streams;
    for (int s = 0; s < 12; ++s) {
        std::vector<int> counts;
        std::vector<double> gaps;
        const int len = 2 + static_cast<int>(rng.bounded(6));
        for (int i = 0; i < len; ++i) counts.push_back(static_cast<int>(rng.bounded(6)));
        for (int i = 0; i + 1 < len; ++i) gaps.push_back(30 + static_cast<double>(rng.bounded(600)));
        streams.emplace_back("s" + std::to_string(s), "p" + std::to_string(s % 2), counts,
                             gaps);
    }
    auto cohort = cohort_from_counts(streams);
    const auto built = build_pairs(cohort.dataset, cohort.store);
    const auto aggs = aggregate_rq1(built.pairs, "t");
    for (const auto& a : aggs) {
        if (a.time_share) {
            CHECK(std::fabs((*a.time_share)[0] + (*a.time_share)[1] + (*a.time_share)[2] -
                            1.0) <= 1e-9);
        }
        REQUIRE(a.submission_share.has_value());
        CHECK(std::fabs((*a.submission_share)[0] + (*a.submission_share)[1] +
                        (*a.submission_share)[2] - 1.0) <= 1e-9);
    }

    // Scaling every elapsed time by a constant leaves shares unchanged.
    auto scaled_pairs = built.pairs;
    for (auto& p : scaled_pairs) p.elapsed_seconds *= 3.5;
    const auto scaled = aggregate_rq1(scaled_pairs, "t");
    REQUIRE(scaled.size() == aggs.size());
    for (std::size_t i = 0; i < aggs.size(); ++i) {
        if (aggs[i].time_share) {
            REQUIRE(scaled[i].time_share.has_value());
            for (int l = 0; l < 3; ++l) {
                CHECK((*scaled[i].time_share)[l] ==
                      doctest::Approx((*aggs[i].time_share)[l]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("aggregates equal a naive recomputation over raw pairs") {
    Rng rng(9090);
    std::vector<std::tuple<std::string, std::string, std::vector<int>, std::vector<double>>>
        streams;
    for (int s = 0; s < 20; ++s) {
        std::vector<int> counts;
        std::vector<double> gaps;
        const int len = 2 + static_cast<int>(rng.bounded(5));
        for (int i = 0; i < len; ++i) counts.push_back(static_cast<int>(rng.bounded(5)));
        for (int i = 0; i + 1 < len; ++i)
            gaps.push_back(10 + static_cast<double>(rng.bounded(3000)));
        streams.emplace_back("s" + std::to_string(s), "p" + std::to_string(s % 3), counts,
                             gaps);
    }
    auto cohort = cohort_from_counts(streams);
    const double idle_cap = 1200;
    const auto built = build_pairs(cohort.dataset, cohort.store, idle_cap);
    const auto aggs = aggregate_rq1(built.pairs, "t");

    // Naive recomputation straight off the pair list.
    struct Naive {
        std::array<double, 3> time{};
        std::array<double, 3> count{};
        std::set<std::string> students;
    };
    std::map<std::string, Naive> naive;
    for (const auto& p : built.pairs) {
        auto& n = naive[p.problem_id];
        const auto idx = static_cast<std::size_t>(p.label);
        if (!p.idle_excluded) n.time[idx] += p.elapsed_seconds;
        n.count[idx] += 1;
        n.students.insert(p.student_id);
    }
    REQUIRE(aggs.size() == naive.size());
    double conserved = 0;
    for (const auto& a : aggs) {
        const auto& n = naive.at(a.problem_id);
        const double students = static_cast<double>(n.students.size());
        for (int l = 0; l < 3; ++l) {
            CHECK(a.avg_time_s[l] == doctest::Approx(n.time[l] / students).epsilon(1e-12));
            CHECK(a.avg_submissions[l] ==
                  doctest::Approx(n.count[l] / students).epsilon(1e-12));
            conserved += a.avg_submissions[l] * a.n_students;
        }
    }
    CHECK(conserved == doctest::Approx(static_cast<double>(built.pairs.size())));
}

TEST_CASE("pairs with missing extractions are dropped and reported") {
    auto cohort = cohort_from_counts({{"s1", "p1", {3, 2, 1}, {60, 60}}});
    // Remove the middle checkpoint's record: both adjacent pairs collapse.
    extraction::ExtractionStore store = cohort.store;
    store.records.erase(extraction::StoreKey{SubjectKind::Code, "c1"});
    const auto built = build_pairs(cohort.dataset, store);
    CHECK(built.pairs.empty());
    CHECK(built.dropped.size() == 2);
}

TEST_CASE("green reduction stats on the worked example") {
    auto a = cohort_from_counts({{"s1", "p1", {4, 3, 2}, {60, 60}},
                                 {"s2", "p1", {5, 3}, {60}}});
    // Set A green deltas: -1, -1, -2. Set B: -1, -2, -3.
    auto b = cohort_from_counts({{"s1", "p1", {4, 3}, {60}},
                                 {"s2", "p1", {5, 3}, {60}},
                                 {"s3", "p1", {6, 3}, {60}}});
    const auto pairs_a = build_pairs(a.dataset, a.store).pairs;
    const auto pairs_b = build_pairs(b.dataset, b.store).pairs;
    const auto cmp = green_reduction_stats(pairs_a, pairs_b);
    CHECK(cmp.set_a.n_green == 3);
    CHECK(cmp.set_a.mean_reduction == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(cmp.set_b.mean_reduction == doctest::Approx(2.0).epsilon(1e-12));
    // b vs a: improvement shows as positive t.
    CHECK(cmp.test.t == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cmp.test.dof == 4.0);
    CHECK(cmp.test.p_two_sided == doctest::Approx(0.3739009663000589).epsilon(1e-9));
}

TEST_CASE("identical green sets give the null comparison") {
    auto a = cohort_from_counts({{"s1", "p1", {4, 3, 2}, {60, 60}}});
    const auto pairs = build_pairs(a.dataset, a.store).pairs;
    const auto cmp = green_reduction_stats(pairs, pairs);
    CHECK(cmp.test.t == 0.0);
    CHECK(cmp.test.p_two_sided == 1.0);
}

TEST_CASE("comparison refuses sets with fewer than two green pairs") {
    auto rich = cohort_from_counts({{"s1", "p1", {4, 3, 2}, {60, 60}}});
    auto poor = cohort_from_counts({{"s1", "p1", {2, 2, 2}, {60, 60}}});  // all yellow
    const auto rich_pairs = build_pairs(rich.dataset, rich.store).pairs;
    const auto poor_pairs = build_pairs(poor.dataset, poor.store).pairs;
    CHECK_THROWS_AS(green_reduction_stats(poor_pairs, rich_pairs), InputError);
    CHECK_THROWS_AS(green_reduction_stats(rich_pairs, poor_pairs), InputError);
}
