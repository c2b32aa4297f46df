#include <doctest.h>

#include "kceval/core.hpp"
#include "kceval/rng.hpp"

using namespace kceval;

namespace {

KnowledgeComponent make_kc(std::string id, std::string category) {
    KnowledgeComponent kc;
    kc.kc_id = std::move(id);
    kc.name = "Name of " + kc.kc_id;
    kc.description = "Description of " + kc.kc_id + ".";
    kc.category = std::move(category);
    return kc;
}

KCDatabase small_db(int n_kcs, int n_categories) {
    KCDatabase db;
    db.assignment_id = "hw-test";
    for (int c = 0; c < n_categories; ++c) db.categories.push_back("cat" + std::to_string(c));
    for (int i = 0; i < n_kcs; ++i) {
        db.kcs.push_back(make_kc("K" + std::to_string(i),
                                 "cat" + std::to_string(i % n_categories)));
    }
    return db;
}

int count_errors(const std::vector<ValidationFinding>& findings) {
    int n = 0;
    for (const auto& f : findings) n += f.severity == Severity::Error;
    return n;
}

int count_warnings(const std::vector<ValidationFinding>& findings) {
    int n = 0;
    for (const auto& f : findings) n += f.severity == Severity::Warning;
    return n;
}

}  // namespace

TEST_CASE("duplicate kc ids produce exactly one error") {
    KCDatabase db = small_db(35, 8);
    db.kcs[3].kc_id = "K1";  // collides with db.kcs[1]
    const auto findings = validate_database(db);
    REQUIRE(count_errors(findings) == 1);
    CHECK(findings[0].message == "duplicate kc_id K1");
}

TEST_CASE("a 35-kc 8-category database validates clean") {
    const auto findings = validate_database(small_db(35, 8));
    CHECK(findings.empty());
}

TEST_CASE("small databases warn but do not error") {
    const auto findings = validate_database(small_db(5, 2));
    CHECK(count_errors(findings) == 0);
    CHECK(count_warnings(findings) == 2);
}

TEST_CASE("dangling category and empty id are errors") {
    KCDatabase db = small_db(35, 8);
    db.kcs[0].category = "nonexistent";
    db.kcs[1].kc_id = "";
    const auto findings = validate_database(db);
    CHECK(count_errors(findings) == 2);
}

TEST_CASE("duplicate category labels are errors") {
    KCDatabase db = small_db(35, 8);
    db.categories.push_back("cat0");
    const auto findings = validate_database(db);
    CHECK(count_errors(findings) == 1);
}

TEST_CASE("validate_database is pure") {
    KCDatabase db = small_db(5, 2);
    db.kcs[2].category = "bogus";
    CHECK(validate_database(db) == validate_database(db));
}

TEST_CASE("lookup_kc finds present ids and signals absent ones") {
    KCDatabase db = small_db(10, 7);
    const auto* kc = lookup_kc(db, "K7");
    REQUIRE(kc != nullptr);
    CHECK(kc->kc_id == "K7");
    CHECK(lookup_kc(db, "K99") == nullptr);
    CHECK(lookup_kc(db, "") == nullptr);
}

TEST_CASE("database json round-trips structurally") {
    Rng rng(99);
    for (int iter = 0; iter < 20; ++iter) {
        KCDatabase db = small_db(1 + static_cast<int>(rng.bounded(40)),
                                 1 + static_cast<int>(rng.bounded(9)));
        for (auto& kc : db.kcs) {
            if (rng.bernoulli(0.5)) {
                StubRules rules;
                rules.missing_if_absent.push_back("lit_" + kc.kc_id);
                if (rng.bernoulli(0.3)) rules.missing_if_present.push_back("bad_" + kc.kc_id);
                kc.stub_rules = rules;
            }
        }
        CHECK(kcdb_from_json(kcdb_to_json(db)) == db);
    }
}

TEST_CASE("the bundled example database is warning-free") {
    const KCDatabase db = load_kcdb(std::string(KCEVAL_DATA_DIR) + "/example_kcdb.json");
    CHECK(db.kcs.size() == 35);
    CHECK(db.categories.size() == 8);
    CHECK(validate_database(db).empty());
}

TEST_CASE("malformed database documents are rejected") {
    CHECK_THROWS_AS(kcdb_from_json("not json"), InputError);
    CHECK_THROWS_AS(kcdb_from_json("[]"), InputError);
    CHECK_THROWS_AS(kcdb_from_json(R"({"assignment_id": "a"})"), InputError);
    CHECK_THROWS_AS(
        kcdb_from_json(R"({"assignment_id":"a","categories":["c"],"kcs":[{"kc_id":"x"}]})"),
        InputError);
    CHECK_THROWS_AS(load_kcdb("/nonexistent/kcdb.json"), InputError);
}
