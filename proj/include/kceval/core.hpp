#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kceval/errors.hpp"
#include "kceval/time.hpp"

namespace kceval {

// Pattern literals consumed only by the deterministic stub extractor.
struct StubRules {
    std::vector<std::string> missing_if_absent;
    std::vector<std::string> missing_if_present;
    bool operator==(const StubRules&) const = default;
};

// One fine-grained course concept or technique tracked by the pipeline.
struct KnowledgeComponent {
    std::string kc_id;       // stable string id, unique within its database
    std::string name;        // short human label
    std::string description;
    std::string category;    // must appear in the database's category list
    std::optional<StubRules> stub_rules;
    bool operator==(const KnowledgeComponent&) const = default;
};

// The human-authored concept catalog for one assignment. KC order defines
// the importance order the stub extractor reports.
struct KCDatabase {
    std::string assignment_id;
    std::vector<std::string> categories;
    std::vector<KnowledgeComponent> kcs;
    bool operator==(const KCDatabase&) const = default;

    const KnowledgeComponent* find(const std::string& kc_id) const;
    bool contains(const std::string& kc_id) const;
};

enum class Severity { Error, Warning };

struct ValidationFinding {
    Severity severity = Severity::Error;
    std::string message;
    bool operator==(const ValidationFinding&) const = default;
};

// Pure: identical databases produce identical findings in identical order.
// Range findings (30-40 KCs, 7-9 categories) are warnings; duplicate ids and
// dangling categories are errors.
std::vector<ValidationFinding> validate_database(const KCDatabase& db);

// Returns nullptr when the id is absent; not-found is a normal outcome.
const KnowledgeComponent* lookup_kc(const KCDatabase& db, const std::string& kc_id);

// JSON database format described in the README. Both throw InputError on
// malformed documents; load_kcdb also on unreadable files.
KCDatabase kcdb_from_json(const std::string& json_text);
KCDatabase load_kcdb(const std::string& path);
std::string kcdb_to_json(const KCDatabase& db);

// One logged autograder run.
struct Checkpoint {
    std::string checkpoint_id;
    std::string student_id;
    std::string assignment_id;
    std::string problem_id;
    EpochSeconds timestamp = 0;
    std::string code;  // may legitimately be empty (empty scaffold runs)
    std::optional<std::int64_t> sequence_hint;
};

// One generated hint, tied to the checkpoint it responded to.
struct HintEvent {
    std::string hint_id;
    std::string student_id;
    std::string assignment_id;
    std::string problem_id;
    EpochSeconds timestamp = 0;
    std::string hint_text;  // non-empty
    std::optional<std::string> checkpoint_ref;
};

enum class SubjectKind { Code, Hint };

const char* to_string(SubjectKind kind);
std::optional<SubjectKind> subject_kind_from_string(const std::string& s);

// Missing-KC list for a checkpoint (importance-ordered) or addressed-KC list
// for a hint (unordered). kc_ids always resolve in the governing database.
struct ExtractionRecord {
    SubjectKind subject_kind = SubjectKind::Code;
    std::string subject_id;
    std::vector<std::string> kc_ids;
    bool ordered = true;  // true iff subject_kind == Code
    std::string reasoning;
    std::string extractor_id;
    bool judged = false;
    bool operator==(const ExtractionRecord&) const = default;
};

}  // namespace kceval
