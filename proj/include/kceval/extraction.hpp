#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kceval/ingest.hpp"
#include "kceval/stats.hpp"

namespace kceval::extraction {

enum class BackendKind { Remote, Stub };

struct ExtractorConfig {
    BackendKind backend = BackendKind::Stub;
    std::string endpoint;  // Remote only, e.g. http://host:port/v1/chat/completions
    std::string model_name = "stub";
    double temperature = 0.0;
    int max_parallel = 4;
    int retry_limit = 2;  // total attempts per subject
    int timeout_seconds = 30;
    std::string prompt_template_code;   // empty -> built-in default
    std::string prompt_template_hint;
    std::string prompt_template_judge;
    std::string cache_path;  // empty -> in-memory cache only
    std::string auth_header = "Authorization";
    std::string api_key_env = "KC_EVAL_API_KEY";
    std::string response_json_pointer = "/choices/0/message/content";
    std::map<std::string, std::string> problem_statements;  // optional metadata
};

// Built-in template texts (also written out by `kc-eval` docs; editable).
const std::string& default_code_template();
const std::string& default_hint_template();
const std::string& default_judge_template();

// Reads a JSON config; template fields accept inline text
// ("prompt_template_code") or a file path ("prompt_template_code_file").
ExtractorConfig load_extractor_config(const std::string& path);

// Placeholder and range checks; throws InputError with the offending field.
void validate_config(const ExtractorConfig& config);

enum class Task { Code, Hint, Judge };

struct ExtractionRequest {
    Task task = Task::Code;
    std::string subject_id;
    std::string subject_text;                // code or hint text
    std::vector<std::string> prior_kc_ids;   // judge input list
    std::string assignment_id;
    std::string problem_id;
};

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ExtractionBackend {
public:
    virtual ~ExtractionBackend() = default;
    virtual std::string name() const = 0;
    // Raw response text; throws BackendError on transport failure.
    virtual std::string complete(const ExtractionRequest& request) = 0;
};

// Deterministic pattern-rule extractor: a pure function of
// (subject text, database). Exists so the full pipeline runs offline.
class StubBackend : public ExtractionBackend {
public:
    explicit StubBackend(const KCDatabase& db) : db_(db) {}
    std::string name() const override { return "stub"; }
    std::string complete(const ExtractionRequest& request) override;

    // Rule evaluation, shared with the synthetic generator's self-checks.
    // A KC is missing when any missing_if_absent literal is absent from the
    // code or any missing_if_present literal is present; order follows the
    // database.
    std::vector<std::string> missing_kcs_for_code(const std::string& code) const;
    // A KC is addressed when its name or any stub literal occurs in the hint.
    std::vector<std::string> addressed_kcs_for_hint(const std::string& hint_text) const;

private:
    const KCDatabase& db_;
};

// HTTP POST of a chat-style JSON body; the response field addressed by
// config.response_json_pointer feeds the parser.
class RemoteBackend : public ExtractionBackend {
public:
    RemoteBackend(const KCDatabase& db, const ExtractorConfig& config);
    std::string name() const override;
    std::string complete(const ExtractionRequest& request) override;

private:
    const KCDatabase& db_;
    ExtractorConfig config_;
};

// Fills {{code}}/{{hint}}/{{subject}}, {{kc_list}}, {{metadata}} and, for the
// judge, {{prior_kcs}}.
std::string render_template(const std::string& tmpl, const ExtractionRequest& request,
                            const KCDatabase& db, const ExtractorConfig& config);

struct ParseResult {
    bool ok = false;
    ExtractionRecord record;  // meaningful only when ok
    std::string reason;       // "no KC list found" / "unknown kc_id: <id>"
};

// Accepts free-text reasoning followed by a final delimited list:
// "FINAL: [id, id]" or a fenced block holding the list. Ids must resolve in
// the database (hallucination rejection); duplicates keep first occurrence;
// order is preserved for Code subjects.
ParseResult parse_response(const std::string& raw_text, const KCDatabase& db,
                           SubjectKind expected_kind);

struct RawExtractionResponse {
    std::string subject_id;
    std::string raw_text;
    std::optional<ExtractionRecord> parsed;
    std::string parse_failure;
    int attempts = 0;
};

struct StoreKey {
    SubjectKind kind = SubjectKind::Code;
    std::string subject_id;
    auto operator<=>(const StoreKey&) const = default;
};

std::string record_to_json(const ExtractionRecord& record);
ExtractionRecord record_from_json(const std::string& json_text, const KCDatabase& db);

// Analysis-facing map of successful extraction records.
struct ExtractionStore {
    std::map<StoreKey, ExtractionRecord> records;

    void put(ExtractionRecord record);
    const ExtractionRecord* find(SubjectKind kind, const std::string& subject_id) const;

    // JSONL, one record per line, sorted and deterministic. Loading
    // re-validates every kc_id against the database.
    static ExtractionStore load_jsonl(const std::string& path, const KCDatabase& db);
    void save_jsonl(const std::string& path) const;
};

// Content-addressed response cache persisted as JSON Lines, one
// RawExtractionResponse per line keyed by hex content hash. Reads and writes
// serialize internally. A corrupt cache file raises InternalError naming the
// file.
class ExtractionCache {
public:
    explicit ExtractionCache(std::string path);

    std::optional<ExtractionRecord> get(const std::string& key) const;
    void put(const std::string& key, const ExtractionRecord& record,
             const std::string& raw_text, int attempts);
    // Compacts to a sorted, deterministic file.
    void flush() const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::string path_;
    std::map<std::string, RawExtractionResponse> entries_;
};

std::string cache_key(Task task, const std::string& subject_text,
                      const std::vector<std::string>& prior_kc_ids,
                      const std::string& db_hash, const std::string& template_hash,
                      const std::string& backend_id);

enum class Subjects { Code, Hints, Both };

struct DropEntry {
    SubjectKind kind = SubjectKind::Code;
    std::string subject_id;
    std::string reason;
    int attempts = 0;
};

struct BatchResult {
    ExtractionStore store;
    std::vector<DropEntry> dropped;
    int backend_calls = 0;
    int cache_hits = 0;
};

// Orchestrates the two classification tasks and the judge pass behind one
// backend, with retries and content-addressed caching.
class Extractor {
public:
    Extractor(const KCDatabase& db, ExtractorConfig config);
    Extractor(const KCDatabase& db, ExtractorConfig config,
              std::unique_ptr<ExtractionBackend> backend);

    struct Outcome {
        std::optional<ExtractionRecord> record;
        std::string error;
        int attempts = 0;
        bool from_cache = false;
    };

    // Importance-ordered missing KCs for one checkpoint (empty list means
    // the code is judged complete against the catalog).
    Outcome extract_code_kcs(const Checkpoint& checkpoint);
    // Unordered addressed KCs for one hint.
    Outcome extract_hint_kcs(const HintEvent& hint);
    // Validates or revises a record. On backend/parse failure the input
    // record is returned unchanged with judged = false and error set.
    Outcome judge_record(const ExtractionRecord& record, const std::string& subject_text,
                         const std::string& assignment_id, const std::string& problem_id);

    // Extracts every uncached subject with at most max_parallel in-flight
    // requests. Per-subject failures never abort the batch.
    BatchResult run_extraction_batch(const ingest::Dataset& dataset, Subjects subjects);
    // Judge pass over an existing store; subjects missing from the dataset
    // are reported dropped.
    BatchResult judge_batch(const ingest::Dataset& dataset, const ExtractionStore& input);

    ExtractionCache& cache() { return cache_; }
    const ExtractorConfig& config() const { return config_; }
    const std::string& db_hash() const { return db_hash_; }
    int backend_calls() const { return backend_calls_; }

private:
    Outcome extract_subject(const ExtractionRequest& request, SubjectKind kind);

    const KCDatabase& db_;
    ExtractorConfig config_;
    std::unique_ptr<ExtractionBackend> backend_;
    ExtractionCache cache_;
    std::string db_hash_;
    std::mutex backend_mu_;  // guards backend_calls_ only; backends are reentrant
    int backend_calls_ = 0;
};

std::unique_ptr<ExtractionBackend> make_backend(const KCDatabase& db,
                                                const ExtractorConfig& config);

// Candidate pool for the expert-labeling workflow: store records joined with
// their subject texts.
std::vector<stats::LabelingCandidate> make_labeling_pool(const ExtractionStore& store,
                                                         const ingest::Dataset& dataset);

}  // namespace kceval::extraction
