#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "kceval/extraction.hpp"
#include "kceval/hint_metrics.hpp"
#include "kceval/progression.hpp"
#include "kceval/synth.hpp"

using namespace kceval;
using namespace kceval::synth;

namespace {

namespace fs = std::filesystem;

KCDatabase marker_db(int n) {
    KCDatabase db;
    db.assignment_id = "hw01";
    db.categories = {"general"};
    for (int i = 0; i < n; ++i) {
        KnowledgeComponent kc;
        kc.kc_id = "kc" + std::to_string(i);
        kc.name = "Synthetic Concept Number " + std::to_string(i) + "x";
        kc.description = "d";
        kc.category = "general";
        StubRules rules;
        rules.missing_if_absent = {"marker_token_" + std::to_string(i) + "q"};
        kc.stub_rules = rules;
        db.kcs.push_back(std::move(kc));
    }
    return db;
}

SynthConfig base_config() {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.n_students = 30;
    cfg.problems = {{"p1", 2, 4}};
    cfg.p_resolve = 0.5;
    cfg.p_regress = 0.1;
    cfg.hint_rate = 0.8;
    cfg.q_top3 = 0.7;
    cfg.hint_length_weights = {0.4, 0.3, 0.2, 0.1};
    cfg.gap_lo_seconds = 60;
    cfg.gap_hi_seconds = 200;
    cfg.max_checkpoints = 8;
    return cfg;
}

struct Loaded {
    ingest::Dataset dataset;
    extraction::ExtractionStore store;
};

// Writes the generated logs and runs the real ingest + stub extraction path.
Loaded run_pipeline(const SynthResult& result, const KCDatabase& db) {
    static int counter = 0;
    const auto dir = fs::temp_directory_path() /
                     ("kceval_synth_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
    fs::create_directories(dir);
    const auto cp_path = (dir / "cp.jsonl").string();
    const auto hint_path = (dir / "h.jsonl").string();
    {
        std::ofstream(cp_path, std::ios::binary) << result.checkpoints_jsonl;
        std::ofstream(hint_path, std::ios::binary) << result.hints_jsonl;
    }
    Loaded loaded;
    loaded.dataset = ingest::load_checkpoints(cp_path, db);
    ingest::load_hints(hint_path, loaded.dataset);
    extraction::ExtractorConfig cfg;
    extraction::Extractor extractor(db, cfg);
    auto batch = extractor.run_extraction_batch(loaded.dataset, extraction::Subjects::Both);
    loaded.store = std::move(batch.store);
    std::error_code ec;
    fs::remove_all(dir, ec);
    return loaded;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
    const auto db = marker_db(12);
    const auto cfg = base_config();
    const auto a = generate(cfg, db);
    const auto b = generate(cfg, db);
    CHECK(a.checkpoints_jsonl == b.checkpoints_jsonl);
    CHECK(a.hints_jsonl == b.hints_jsonl);
    CHECK(ground_truth_to_json(a.truth) == ground_truth_to_json(b.truth));

    auto other = cfg;
    other.seed = 8;
    CHECK(generate(other, db).checkpoints_jsonl != a.checkpoints_jsonl);
}

TEST_CASE("forced dynamics: everything resolves in one step") {
    const auto db = marker_db(12);
    SynthConfig cfg = base_config();
    cfg.n_students = 5;
    cfg.problems = {{"p1", 3, 3}};
    cfg.p_resolve = 1.0;
    cfg.p_regress = 0.0;
    cfg.hint_rate = 0.0;
    const auto result = generate(cfg, db);
    CHECK(result.truth.n_checkpoints == 10);  // two per student
    CHECK(result.truth.n_pairs == 5);

    const auto loaded = run_pipeline(result, db);
    const auto built = progression::build_pairs(loaded.dataset, loaded.store, 1e9);
    REQUIRE(built.pairs.size() == 5);
    for (const auto& pair : built.pairs) {
        CHECK(pair.label == progression::Label::Green);
        CHECK(pair.delta == -3);
        CHECK(pair.missing_before == 3);
        CHECK(pair.missing_after == 0);
    }
}

TEST_CASE("stub extraction over generated logs reproduces the plants exactly") {
    const auto db = marker_db(14);
    const auto cfg = base_config();
    const auto result = generate(cfg, db);
    const auto loaded = run_pipeline(result, db);

    CHECK(loaded.dataset.checkpoint_count() ==
          static_cast<std::size_t>(result.truth.n_checkpoints));
    int checked = 0;
    for (const auto& [cid, expected] : result.truth.missing_by_checkpoint) {
        const auto* rec = loaded.store.find(SubjectKind::Code, cid);
        REQUIRE(rec != nullptr);
        CHECK(rec->kc_ids == expected);
        ++checked;
    }
    CHECK(checked == result.truth.n_checkpoints);

    for (const auto& hint : result.truth.hints) {
        const auto* rec = loaded.store.find(SubjectKind::Hint, hint.hint_id);
        REQUIRE(rec != nullptr);
        CHECK(rec->kc_ids == hint.addressed);
    }
}

TEST_CASE("planted certainty: q_top3 = 1 measures exactly 1.0") {
    const auto db = marker_db(12);
    SynthConfig cfg = base_config();
    cfg.q_top3 = 1.0;
    cfg.n_students = 40;
    const auto result = generate(cfg, db);
    REQUIRE(result.truth.n_hints >= 100);

    const auto loaded = run_pipeline(result, db);
    const auto evaluated = hintmetrics::evaluate_hints(loaded.dataset, loaded.store);
    const auto report =
        hintmetrics::group_by_length(evaluated.evaluations, hintmetrics::Metric::Top3);
    REQUIRE(report.overall.has_value());
    CHECK(*report.overall == 1.0);
    CHECK(report.overall_denominator == result.truth.n_hints);
}

TEST_CASE("frozen dynamics make every submission yellow") {
    const auto db = marker_db(12);
    SynthConfig cfg = base_config();
    cfg.p_resolve = 0.0;
    cfg.p_regress = 0.0;
    cfg.n_students = 10;
    cfg.max_checkpoints = 5;
    const auto expected = expected_rates(cfg, 12);
    CHECK(expected.yellow_share == doctest::Approx(1.0));
    CHECK(expected.green_share == doctest::Approx(0.0));
    CHECK(expected.rq3_overall == doctest::Approx(0.0));

    const auto result = generate(cfg, db);
    const auto loaded = run_pipeline(result, db);
    const auto built = progression::build_pairs(loaded.dataset, loaded.store, 1e9);
    CHECK(built.pairs.size() ==
          static_cast<std::size_t>(10 * (cfg.max_checkpoints - 1)));
    for (const auto& pair : built.pairs) CHECK(pair.label == progression::Label::Yellow);
}

TEST_CASE("single-transition expectations match direct enumeration") {
    // One transition from three missing KCs: P(green) = 1 - (1-p)^3, no red
    // possible without prior resolutions.
    SynthConfig cfg = base_config();
    cfg.problems = {{"p1", 3, 3}};
    cfg.p_resolve = 0.5;
    cfg.p_regress = 0.25;
    cfg.max_checkpoints = 2;
    const auto expected = expected_rates(cfg, 12);
    CHECK(expected.green_share == doctest::Approx(7.0 / 8.0).epsilon(1e-12));
    CHECK(expected.yellow_share == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
    CHECK(expected.red_share == doctest::Approx(0.0));
    CHECK(expected.expected_pairs_per_student == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rq2 expectation is the planted probability") {
    SynthConfig cfg = base_config();
    cfg.q_top3 = 0.37;
    CHECK(expected_rates(cfg, 12).rq2_overall == 0.37);
}

TEST_CASE("generation refuses databases it cannot plant exactly") {
    SynthConfig cfg = base_config();

    // No stub rules at all.
    KCDatabase bare = marker_db(12);
    for (auto& kc : bare.kcs) kc.stub_rules.reset();
    CHECK_THROWS_AS(generate(cfg, bare), InputError);

    // A name that contains another KC's name would corrupt hint plants.
    KCDatabase clash = marker_db(12);
    clash.kcs[1].name = clash.kcs[0].name + " extended";
    CHECK_THROWS_AS(generate(cfg, clash), InputError);

    // A literal nested in another KC's literal would corrupt code plants.
    KCDatabase nested = marker_db(12);
    nested.kcs[2].stub_rules->missing_if_absent = {
        nested.kcs[3].stub_rules->missing_if_absent[0] + "_suffix"};
    CHECK_THROWS_AS(generate(cfg, nested), InputError);

    // Too few KCs to draw hints of the longest configured length.
    CHECK_THROWS_AS(generate(cfg, marker_db(5)), InputError);
}

TEST_CASE("the bundled example database supports exact planting") {
    const KCDatabase db = load_kcdb(std::string(KCEVAL_DATA_DIR) + "/example_kcdb.json");
    SynthConfig cfg = base_config();
    cfg.n_students = 4;
    const auto result = generate(cfg, db);  // self-checks internally
    CHECK(result.truth.n_checkpoints > 0);
}

TEST_CASE("synth config files parse and validate") {
    const auto cfg = synth_config_from_json(R"({
        "seed": 3, "n_students": 12,
        "problems": [{"problem_id": "p9", "initial_missing": [1, 3]}],
        "p_resolve": 0.4, "p_regress": 0.05, "hint_rate": 0.5, "q_top3": 0.9,
        "hint_length_weights": [1, 1],
        "gap_seconds": [30, 90],
        "max_checkpoints": 6,
        "term_label": "t"
    })");
    CHECK(cfg.seed == 3);
    CHECK(cfg.problems.size() == 1);
    CHECK(cfg.hint_length_weights.size() == 2);

    CHECK_THROWS_AS(synth_config_from_json(R"({"p_resolve": 1.5})"), InputError);
    CHECK_THROWS_AS(synth_config_from_json(R"({"problems": []})"), InputError);
    CHECK_THROWS_AS(synth_config_from_json("nonsense"), InputError);
    CHECK_THROWS_AS(
        synth_config_from_json(
            R"({"problems":[{"problem_id":"p","initial_missing":[3,1]}]})"),
        InputError);
}
