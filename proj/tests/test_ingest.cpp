#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "kceval/ingest.hpp"
#include "kceval/rng.hpp"

using namespace kceval;
using namespace kceval::ingest;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("kceval_ingest_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::string file(const std::string& name, const std::string& content) const {
        const auto p = (path / name).string();
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p;
    }
};

KCDatabase tiny_db() {
    KCDatabase db;
    db.assignment_id = "hw01";
    db.categories = {"general"};
    KnowledgeComponent kc;
    kc.kc_id = "K1";
    kc.name = "Sample Concept";
    kc.description = "A sample.";
    kc.category = "general";
    db.kcs.push_back(kc);
    return db;
}

std::string cp_row(const std::string& id, const std::string& student,
                   const std::string& problem, const std::string& ts,
                   const std::string& extra = "") {
    return R"({"checkpoint_id":")" + id + R"(","student_id":")" + student +
           R"(","assignment_id":"hw01","problem_id":")" + problem +
           R"(","timestamp":")" + ts + R"(","code":"x = 1")" + extra + "}\n";
}

std::string hint_row(const std::string& id, const std::string& student,
                     const std::string& problem, const std::string& ts,
                     const std::string& extra = "") {
    return R"({"hint_id":")" + id + R"(","student_id":")" + student +
           R"(","assignment_id":"hw01","problem_id":")" + problem +
           R"(","timestamp":")" + ts + R"(","hint_text":"try again")" + extra + "}\n";
}

}  // namespace

TEST_CASE("checkpoints are ordered by time within a stream") {
    TempDir dir;
    const auto path = dir.file("cp.jsonl",
                               cp_row("c2", "s1", "p1", "2024-03-01T10:05:00Z") +
                                   cp_row("c3", "s1", "p1", "2024-03-01T10:12:00Z") +
                                   cp_row("c1", "s1", "p1", "2024-03-01T10:00:00Z"));
    const auto ds = load_checkpoints(path, tiny_db());
    REQUIRE(ds.streams.size() == 1);
    const auto& stream = ds.streams.begin()->second;
    REQUIRE(stream.size() == 3);
    CHECK(stream[0].checkpoint_id == "c1");
    CHECK(stream[1].checkpoint_id == "c2");
    CHECK(stream[2].checkpoint_id == "c3");
    CHECK(ds.dropped.empty());
}

TEST_CASE("equal timestamps break ties by sequence_hint") {
    TempDir dir;
    const auto path = dir.file(
        "cp.jsonl", cp_row("late", "s1", "p1", "2024-03-01T10:00:00Z", R"(,"sequence_hint":2)") +
                        cp_row("early", "s1", "p1", "2024-03-01T10:00:00Z",
                               R"(,"sequence_hint":1)"));
    const auto ds = load_checkpoints(path, tiny_db());
    const auto& stream = ds.streams.begin()->second;
    REQUIRE(stream.size() == 2);
    CHECK(stream[0].checkpoint_id == "early");
    CHECK(stream[1].checkpoint_id == "late");
}

TEST_CASE("full timestamp ties without hints keep input order") {
    TempDir dir;
    const auto path = dir.file("cp.jsonl",
                               cp_row("first", "s1", "p1", "2024-03-01T10:00:00Z") +
                                   cp_row("second", "s1", "p1", "2024-03-01T10:00:01Z") +
                                   cp_row("third", "s1", "p1", "2024-03-01T10:00:01Z",
                                          R"(,"sequence_hint":7)"));
    const auto ds = load_checkpoints(path, tiny_db());
    const auto& stream = ds.streams.begin()->second;
    REQUIRE(stream.size() == 3);
    CHECK(stream[0].checkpoint_id == "first");
    // Explicit sequence hints sort ahead of unhinted rows at the same time.
    CHECK(stream[1].checkpoint_id == "third");
    CHECK(stream[2].checkpoint_id == "second");
}

TEST_CASE("malformed rows are dropped with machine-readable reasons") {
    TempDir dir;
    const std::string no_code =
        R"({"checkpoint_id":"c1","student_id":"s1","assignment_id":"hw01",)"
        R"("problem_id":"p1","timestamp":"2024-03-01T10:00:00Z"})";
    const auto path = dir.file("cp.jsonl", no_code + "\nnot json at all\n" +
                                               cp_row("c2", "s1", "p1", "bad-time") +
                                               cp_row("ok", "s1", "p1",
                                                      "2024-03-01T10:00:00Z"));
    const auto ds = load_checkpoints(path, tiny_db());
    CHECK(ds.checkpoint_count() == 1);
    REQUIRE(ds.dropped.size() == 3);
    CHECK(ds.dropped[0].reason == "missing field: code");
    CHECK(ds.dropped[1].reason == "invalid JSON");
    CHECK(ds.dropped[2].reason == "invalid timestamp: bad-time");
}

TEST_CASE("row conservation: every line is ingested or dropped") {
    Rng rng(2024);
    TempDir dir;
    std::string content;
    int rows = 0;
    for (int i = 0; i < 200; ++i) {
        ++rows;
        switch (rng.bounded(4)) {
            case 0: content += "garbage line\n"; break;
            case 1:
                content += cp_row("dup", "s1", "p1", "2024-03-01T10:00:00Z");
                break;  // duplicates after the first are dropped
            case 2:
                content += cp_row("c" + std::to_string(i), "s" + std::to_string(i % 7),
                                  "p" + std::to_string(i % 3),
                                  "2024-03-01T1" + std::to_string(i % 10) + ":00:00Z");
                break;
            default:
                content += cp_row("m" + std::to_string(i), "s1", "p1",
                                  "2024-03-0" + std::to_string(1 + i % 9) + "T10:0" +
                                      std::to_string(i % 10) + ":00Z");
        }
    }
    const auto path = dir.file("cp.jsonl", content);
    const auto ds = load_checkpoints(path, tiny_db());
    CHECK(ds.checkpoint_count() + ds.dropped.size() == static_cast<std::size_t>(rows));
}

TEST_CASE("empty code is a valid checkpoint") {
    TempDir dir;
    const std::string row =
        R"({"checkpoint_id":"c1","student_id":"s1","assignment_id":"hw01",)"
        R"("problem_id":"p1","timestamp":"2024-03-01T10:00:00Z","code":""})";
    const auto ds = load_checkpoints(dir.file("cp.jsonl", row + "\n"), tiny_db());
    CHECK(ds.checkpoint_count() == 1);
    CHECK(ds.dropped.empty());
}

TEST_CASE("assignment mismatches and duplicates are dropped") {
    TempDir dir;
    std::string other = cp_row("c9", "s1", "p1", "2024-03-01T10:00:00Z");
    other.replace(other.find("hw01"), 4, "hw99");
    const auto path = dir.file("cp.jsonl", cp_row("c1", "s1", "p1", "2024-03-01T10:00:00Z") +
                                               cp_row("c1", "s1", "p1",
                                                      "2024-03-01T10:05:00Z") +
                                               other);
    const auto ds = load_checkpoints(path, tiny_db());
    CHECK(ds.checkpoint_count() == 1);
    REQUIRE(ds.dropped.size() == 2);
    CHECK(ds.dropped[0].reason == "duplicate checkpoint_id");
    CHECK(ds.dropped[1].reason.find("assignment mismatch") == 0);
}

TEST_CASE("hints link to the latest prior checkpoint within the window") {
    TempDir dir;
    const auto cp_path = dir.file("cp.jsonl",
                                  cp_row("c1", "s1", "p1", "2024-03-01T10:05:00Z") +
                                      cp_row("c2", "s1", "p1", "2024-03-01T10:12:00Z"));
    const auto hint_path = dir.file("h.jsonl",
                                    hint_row("h1", "s1", "p1", "2024-03-01T10:05:30Z"));
    auto ds = load_checkpoints(cp_path, tiny_db());
    load_hints(hint_path, ds);
    REQUIRE(ds.hints.size() == 1);
    CHECK(ds.hints[0].checkpoint_id == "c1");
}

TEST_CASE("an explicit checkpoint_ref wins regardless of the window") {
    TempDir dir;
    const auto cp_path = dir.file("cp.jsonl",
                                  cp_row("c42", "s1", "p1", "2024-03-01T08:00:00Z") +
                                      cp_row("c43", "s1", "p1", "2024-03-01T10:00:00Z"));
    const auto hint_path =
        dir.file("h.jsonl", hint_row("h1", "s1", "p1", "2024-03-01T10:00:30Z",
                                     R"(,"checkpoint_ref":"c42")"));
    auto ds = load_checkpoints(cp_path, tiny_db());
    load_hints(hint_path, ds);
    REQUIRE(ds.hints.size() == 1);
    CHECK(ds.hints[0].checkpoint_id == "c42");
}

TEST_CASE("hints beyond the linkage window are dropped") {
    TempDir dir;
    const auto cp_path =
        dir.file("cp.jsonl", cp_row("c1", "s1", "p1", "2024-03-01T10:05:00Z"));
    const auto hint_path =
        dir.file("h.jsonl", hint_row("h1", "s1", "p1", "2024-03-01T10:30:00Z"));
    auto ds = load_checkpoints(cp_path, tiny_db());
    load_hints(hint_path, ds);  // gap 1500 s > default 120 s
    CHECK(ds.hints.empty());
    REQUIRE(ds.dropped.size() == 1);
    CHECK(ds.dropped[0].reason == "no checkpoint within linkage window");

    // A wider window accepts the same hint.
    auto ds2 = load_checkpoints(cp_path, tiny_db());
    IngestOptions wide;
    wide.linkage_window_seconds = 3600;
    load_hints(hint_path, ds2, wide);
    CHECK(ds2.hints.size() == 1);
}

TEST_CASE("an invalid explicit ref falls back to the window rule") {
    TempDir dir;
    const auto cp_path =
        dir.file("cp.jsonl", cp_row("c1", "s1", "p1", "2024-03-01T10:05:00Z"));
    const auto hint_path =
        dir.file("h.jsonl", hint_row("h1", "s1", "p1", "2024-03-01T10:05:30Z",
                                     R"(,"checkpoint_ref":"ghost")"));
    auto ds = load_checkpoints(cp_path, tiny_db());
    load_hints(hint_path, ds);
    REQUIRE(ds.hints.size() == 1);
    CHECK(ds.hints[0].checkpoint_id == "c1");
}

TEST_CASE("hint linkage is deterministic across reloads") {
    TempDir dir;
    std::string cps, hints;
    for (int i = 0; i < 40; ++i) {
        cps += cp_row("c" + std::to_string(i), "s" + std::to_string(i % 5), "p1",
                      "2024-03-01T10:" + std::string(i % 60 < 10 ? "0" : "") +
                          std::to_string(i % 60) + ":00Z");
    }
    for (int i = 0; i < 15; ++i) {
        hints += hint_row("h" + std::to_string(i), "s" + std::to_string(i % 5), "p1",
                          "2024-03-01T10:" + std::string(i % 60 < 10 ? "0" : "") +
                              std::to_string(i % 60) + ":45Z");
    }
    const auto cp_path = dir.file("cp.jsonl", cps);
    const auto hint_path = dir.file("h.jsonl", hints);

    auto first = load_checkpoints(cp_path, tiny_db());
    load_hints(hint_path, first);
    auto second = load_checkpoints(cp_path, tiny_db());
    load_hints(hint_path, second);
    REQUIRE(first.hints.size() == second.hints.size());
    for (std::size_t i = 0; i < first.hints.size(); ++i) {
        CHECK(first.hints[i].checkpoint_id == second.hints[i].checkpoint_id);
    }
}

TEST_CASE("next_checkpoint walks streams strictly forward") {
    TempDir dir;
    const auto path = dir.file("cp.jsonl",
                               cp_row("c1", "s1", "p1", "2024-03-01T10:00:00Z") +
                                   cp_row("c2", "s1", "p1", "2024-03-01T10:05:00Z") +
                                   cp_row("c3", "s1", "p1", "2024-03-01T10:10:00Z"));
    const auto ds = load_checkpoints(path, tiny_db());
    const Checkpoint* c2 = ds.find_checkpoint("c2");
    REQUIRE(c2 != nullptr);
    const Checkpoint* c3 = ds.next_checkpoint(*c2);
    REQUIRE(c3 != nullptr);
    CHECK(c3->checkpoint_id == "c3");
    CHECK(ds.next_checkpoint(*c3) == nullptr);  // last element

    Checkpoint foreign;
    foreign.checkpoint_id = "from-another-dataset";
    CHECK_THROWS_AS(ds.next_checkpoint(foreign), InputError);

    // Successor hops never revisit an element.
    const Checkpoint* cursor = ds.find_checkpoint("c1");
    std::set<std::string> seen;
    while (cursor) {
        CHECK(seen.insert(cursor->checkpoint_id).second);
        cursor = ds.next_checkpoint(*cursor);
    }
    CHECK(seen.size() == 3);
}

TEST_CASE("unreadable files are fatal") {
    CHECK_THROWS_AS(load_checkpoints("/nonexistent/file.jsonl", tiny_db()), InputError);
}
