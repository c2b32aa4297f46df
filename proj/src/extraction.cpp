#include "kceval/extraction.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "kceval/hash.hpp"

// httplib pulls in OpenSSL-optional bits; plain HTTP is all we use.
#include <httplib.h>

namespace kceval::extraction {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Templates and config
// ---------------------------------------------------------------------------

const std::string& default_code_template() {
    static const std::string tmpl =
        "You are reviewing a student's in-progress solution.\n"
        "Knowledge components to select from (id: name - description):\n"
        "{{kc_list}}\n\n"
        "Context:\n{{metadata}}\n\n"
        "Student code:\n```\n{{code}}\n```\n\n"
        "Explain your reasoning, then output the missing knowledge component ids\n"
        "from the list above, ordered most important first, on one line:\n"
        "FINAL: [id1, id2, ...]\n"
        "Use FINAL: [] if nothing is missing.\n";
    return tmpl;
}

const std::string& default_hint_template() {
    static const std::string tmpl =
        "You are classifying which knowledge components a tutoring hint addresses.\n"
        "Knowledge components to select from (id: name - description):\n"
        "{{kc_list}}\n\n"
        "Context:\n{{metadata}}\n\n"
        "Hint:\n{{hint}}\n\n"
        "Explain your reasoning, then output the addressed knowledge component ids\n"
        "from the list above, in any order, on one line:\n"
        "FINAL: [id1, id2, ...]\n"
        "Use FINAL: [] if the hint addresses none of them.\n";
    return tmpl;
}

const std::string& default_judge_template() {
    static const std::string tmpl =
        "You are auditing a previously produced knowledge-component list.\n"
        "Knowledge components to select from (id: name - description):\n"
        "{{kc_list}}\n\n"
        "Context:\n{{metadata}}\n\n"
        "Subject under review:\n{{subject}}\n\n"
        "Proposed list: {{prior_kcs}}\n\n"
        "Either validate the list or correct it. Explain, then output the final\n"
        "ids on one line:\nFINAL: [id1, id2, ...]\n";
    return tmpl;
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string load_template_field(const json& doc, const char* inline_key,
                                const char* file_key, const std::string& fallback) {
    if (doc.contains(file_key)) {
        return read_file(doc[file_key].get<std::string>());
    }
    if (doc.contains(inline_key)) {
        return doc[inline_key].get<std::string>();
    }
    return fallback;
}

void require_placeholder(const std::string& tmpl, const std::string& placeholder,
                         const char* which) {
    if (tmpl.find(placeholder) == std::string::npos) {
        throw InputError(std::string(which) + " template lacks required placeholder " +
                         placeholder);
    }
}

std::string replace_all(std::string text, const std::string& needle,
                        const std::string& replacement) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), replacement);
        pos += replacement.size();
    }
    return text;
}

}  // namespace

ExtractorConfig load_extractor_config(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw InputError("extractor config " + path + ": invalid JSON: " + e.what());
    }
    ExtractorConfig cfg;
    if (doc.contains("backend")) {
        const auto b = doc["backend"].get<std::string>();
        if (b == "stub") cfg.backend = BackendKind::Stub;
        else if (b == "remote") cfg.backend = BackendKind::Remote;
        else throw InputError("extractor config: unknown backend '" + b + "'");
    }
    if (doc.contains("endpoint")) cfg.endpoint = doc["endpoint"].get<std::string>();
    if (doc.contains("model_name")) cfg.model_name = doc["model_name"].get<std::string>();
    if (doc.contains("temperature")) cfg.temperature = doc["temperature"].get<double>();
    if (doc.contains("max_parallel")) cfg.max_parallel = doc["max_parallel"].get<int>();
    if (doc.contains("retry_limit")) cfg.retry_limit = doc["retry_limit"].get<int>();
    if (doc.contains("timeout_seconds")) cfg.timeout_seconds = doc["timeout_seconds"].get<int>();
    if (doc.contains("cache_path")) cfg.cache_path = doc["cache_path"].get<std::string>();
    if (doc.contains("auth_header")) cfg.auth_header = doc["auth_header"].get<std::string>();
    if (doc.contains("api_key_env")) cfg.api_key_env = doc["api_key_env"].get<std::string>();
    if (doc.contains("response_json_pointer")) {
        cfg.response_json_pointer = doc["response_json_pointer"].get<std::string>();
    }
    cfg.prompt_template_code = load_template_field(doc, "prompt_template_code",
                                                   "prompt_template_code_file",
                                                   default_code_template());
    cfg.prompt_template_hint = load_template_field(doc, "prompt_template_hint",
                                                   "prompt_template_hint_file",
                                                   default_hint_template());
    cfg.prompt_template_judge = load_template_field(doc, "prompt_template_judge",
                                                    "prompt_template_judge_file",
                                                    default_judge_template());
    if (doc.contains("problem_statements")) {
        for (const auto& [k, v] : doc["problem_statements"].items()) {
            cfg.problem_statements[k] = v.get<std::string>();
        }
    }
    validate_config(cfg);
    return cfg;
}

void validate_config(const ExtractorConfig& config) {
    if (config.temperature < 0) throw InputError("extractor config: temperature must be >= 0");
    if (config.max_parallel < 1) throw InputError("extractor config: max_parallel must be >= 1");
    if (config.retry_limit < 1) throw InputError("extractor config: retry_limit must be >= 1");
    if (config.backend == BackendKind::Remote && config.endpoint.empty()) {
        throw InputError("extractor config: remote backend requires an endpoint");
    }
    const std::string& code = config.prompt_template_code.empty() ? default_code_template()
                                                                  : config.prompt_template_code;
    const std::string& hint = config.prompt_template_hint.empty() ? default_hint_template()
                                                                  : config.prompt_template_hint;
    const std::string& judge = config.prompt_template_judge.empty() ? default_judge_template()
                                                                    : config.prompt_template_judge;
    require_placeholder(code, "{{code}}", "code");
    require_placeholder(code, "{{kc_list}}", "code");
    require_placeholder(code, "{{metadata}}", "code");
    require_placeholder(hint, "{{hint}}", "hint");
    require_placeholder(hint, "{{kc_list}}", "hint");
    require_placeholder(hint, "{{metadata}}", "hint");
    require_placeholder(judge, "{{prior_kcs}}", "judge");
    require_placeholder(judge, "{{kc_list}}", "judge");
    require_placeholder(judge, "{{metadata}}", "judge");
}

std::string render_template(const std::string& tmpl, const ExtractionRequest& request,
                            const KCDatabase& db, const ExtractorConfig& config) {
    std::string kc_list;
    for (const auto& kc : db.kcs) {
        kc_list += kc.kc_id + ": " + kc.name + " - " + kc.description + " [" +
                   kc.category + "]\n";
    }
    std::string metadata = "assignment: " + request.assignment_id + "\nproblem: " +
                           request.problem_id;
    const auto stmt = config.problem_statements.find(request.problem_id);
    if (stmt != config.problem_statements.end()) {
        metadata += "\nstatement: " + stmt->second;
    }
    std::string prior = "[";
    for (std::size_t i = 0; i < request.prior_kc_ids.size(); ++i) {
        if (i) prior += ", ";
        prior += request.prior_kc_ids[i];
    }
    prior += "]";

    std::string out = tmpl;
    out = replace_all(std::move(out), "{{kc_list}}", kc_list);
    out = replace_all(std::move(out), "{{metadata}}", metadata);
    out = replace_all(std::move(out), "{{code}}", request.subject_text);
    out = replace_all(std::move(out), "{{hint}}", request.subject_text);
    out = replace_all(std::move(out), "{{subject}}", request.subject_text);
    out = replace_all(std::move(out), "{{prior_kcs}}", prior);
    return out;
}

// ---------------------------------------------------------------------------
// Stub backend
// ---------------------------------------------------------------------------

namespace {

bool contains(const std::string& haystack, const std::string& needle) {
    return !needle.empty() && haystack.find(needle) != std::string::npos;
}

std::string final_line(const std::vector<std::string>& ids) {
    std::string line = "FINAL: [";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) line += ", ";
        line += ids[i];
    }
    line += "]";
    return line;
}

}  // namespace

std::vector<std::string> StubBackend::missing_kcs_for_code(const std::string& code) const {
    std::vector<std::string> missing;
    for (const auto& kc : db_.kcs) {
        if (!kc.stub_rules) continue;
        bool is_missing = false;
        for (const auto& pattern : kc.stub_rules->missing_if_absent) {
            if (!contains(code, pattern)) {
                is_missing = true;
                break;
            }
        }
        if (!is_missing) {
            for (const auto& pattern : kc.stub_rules->missing_if_present) {
                if (contains(code, pattern)) {
                    is_missing = true;
                    break;
                }
            }
        }
        if (is_missing) missing.push_back(kc.kc_id);
    }
    return missing;
}

std::vector<std::string> StubBackend::addressed_kcs_for_hint(const std::string& hint_text) const {
    std::vector<std::string> addressed;
    for (const auto& kc : db_.kcs) {
        bool hit = contains(hint_text, kc.name);
        if (!hit && kc.stub_rules) {
            for (const auto& pattern : kc.stub_rules->missing_if_absent) {
                if (contains(hint_text, pattern)) {
                    hit = true;
                    break;
                }
            }
            if (!hit) {
                for (const auto& pattern : kc.stub_rules->missing_if_present) {
                    if (contains(hint_text, pattern)) {
                        hit = true;
                        break;
                    }
                }
            }
        }
        if (hit) addressed.push_back(kc.kc_id);
    }
    return addressed;
}

std::string StubBackend::complete(const ExtractionRequest& request) {
    // Responses mention no subject identity: identical content must produce
    // identical bytes so the content-addressed cache stays deterministic.
    switch (request.task) {
        case Task::Code: {
            const auto ids = missing_kcs_for_code(request.subject_text);
            return "Stub rule evaluation over the provided code.\n" + final_line(ids);
        }
        case Task::Hint: {
            const auto ids = addressed_kcs_for_hint(request.subject_text);
            return "Stub rule evaluation over the provided hint.\n" + final_line(ids);
        }
        case Task::Judge:
            // The stub judge validates every input unchanged.
            return "Stub judge validated the proposed list.\n" +
                   final_line(request.prior_kc_ids);
    }
    throw InternalError("unreachable stub task");
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

RemoteBackend::RemoteBackend(const KCDatabase& db, const ExtractorConfig& config)
    : db_(db), config_(config) {}

std::string RemoteBackend::name() const {
    return "remote:" + config_.model_name;
}

std::string RemoteBackend::complete(const ExtractionRequest& request) {
    const std::string* tmpl = nullptr;
    switch (request.task) {
        case Task::Code: tmpl = &config_.prompt_template_code; break;
        case Task::Hint: tmpl = &config_.prompt_template_hint; break;
        case Task::Judge: tmpl = &config_.prompt_template_judge; break;
    }
    const std::string prompt = render_template(*tmpl, request, db_, config_);

    json body;
    body["model"] = config_.model_name;
    body["temperature"] = config_.temperature;
    body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});

    // Split endpoint into origin + path for httplib.
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw BackendError("endpoint is not a URL: " + config_.endpoint);
    }
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos
                                   ? config_.endpoint
                                   : config_.endpoint.substr(0, path_start);
    const std::string path = path_start == std::string::npos
                                 ? "/"
                                 : config_.endpoint.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
        const std::string value = config_.auth_header == "Authorization"
                                      ? std::string("Bearer ") + key
                                      : std::string(key);
        headers.emplace(config_.auth_header, value);
    }

    const auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw BackendError("backend unreachable: " + config_.endpoint);
    }
    if (res->status < 200 || res->status >= 300) {
        throw BackendError("backend returned HTTP " + std::to_string(res->status));
    }
    json doc;
    try {
        doc = json::parse(res->body);
    } catch (const json::exception&) {
        throw BackendError("backend response is not JSON");
    }
    try {
        return doc.at(json::json_pointer(config_.response_json_pointer)).get<std::string>();
    } catch (const json::exception&) {
        throw BackendError("backend response lacks text at " + config_.response_json_pointer);
    }
}

std::unique_ptr<ExtractionBackend> make_backend(const KCDatabase& db,
                                                const ExtractorConfig& config) {
    if (config.backend == BackendKind::Stub) {
        return std::make_unique<StubBackend>(db);
    }
    return std::make_unique<RemoteBackend>(db, config);
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string strip_quotes(std::string s) {
    if (s.size() >= 2) {
        const char a = s.front();
        const char b = s.back();
        if ((a == '"' && b == '"') || (a == '\'' && b == '\'') || (a == '`' && b == '`')) {
            return s.substr(1, s.size() - 2);
        }
    }
    return s;
}

// Splits a bracket-free "a, b, c" (commas and/or newlines) into tokens.
std::vector<std::string> split_ids(const std::string& body) {
    std::vector<std::string> ids;
    std::string token;
    for (char c : body) {
        if (c == ',' || c == '\n') {
            const auto t = strip_quotes(trim(token));
            if (!t.empty()) ids.push_back(t);
            token.clear();
        } else {
            token += c;
        }
    }
    const auto t = strip_quotes(trim(token));
    if (!t.empty()) ids.push_back(t);
    return ids;
}

// Extracts the ids from a "[...]" section; nullopt when brackets are absent
// or unbalanced.
std::optional<std::vector<std::string>> bracket_list(const std::string& text,
                                                     std::size_t from) {
    const auto open = text.find('[', from);
    if (open == std::string::npos) return std::nullopt;
    const auto close = text.find(']', open);
    if (close == std::string::npos) return std::nullopt;
    return split_ids(text.substr(open + 1, close - open - 1));
}

}  // namespace

ParseResult parse_response(const std::string& raw_text, const KCDatabase& db,
                           SubjectKind expected_kind) {
    ParseResult result;

    std::optional<std::vector<std::string>> ids;
    const auto marker = raw_text.rfind("FINAL:");
    if (marker != std::string::npos) {
        ids = bracket_list(raw_text, marker);
    } else {
        // Fall back to the last fenced block.
        const auto fence_close = raw_text.rfind("```");
        if (fence_close != std::string::npos && fence_close > 0) {
            const auto fence_open = raw_text.rfind("```", fence_close - 1);
            if (fence_open != std::string::npos && fence_open + 3 <= fence_close) {
                std::string body =
                    raw_text.substr(fence_open + 3, fence_close - fence_open - 3);
                // Skip a possible language tag on the opening fence line.
                const auto nl = body.find('\n');
                if (nl != std::string::npos) {
                    const std::string first = trim(body.substr(0, nl));
                    if (!first.empty() && first.find(',') == std::string::npos &&
                        first.find('[') == std::string::npos) {
                        body = body.substr(nl + 1);
                    }
                }
                const std::string trimmed = trim(body);
                if (!trimmed.empty() && trimmed.front() == '[') {
                    ids = bracket_list(trimmed, 0);
                } else if (!trimmed.empty()) {
                    ids = split_ids(trimmed);
                }
            }
        }
    }

    if (!ids) {
        result.reason = "no KC list found";
        return result;
    }

    std::vector<std::string> deduped;
    std::unordered_set<std::string> seen;
    for (const auto& id : *ids) {
        if (!db.contains(id)) {
            result.reason = "unknown kc_id: " + id;
            return result;
        }
        if (seen.insert(id).second) deduped.push_back(id);
    }

    result.ok = true;
    result.record.subject_kind = expected_kind;
    result.record.kc_ids = std::move(deduped);
    result.record.ordered = expected_kind == SubjectKind::Code;
    const auto reasoning_end = marker != std::string::npos ? marker : raw_text.size();
    result.record.reasoning = trim(raw_text.substr(0, reasoning_end));
    return result;
}

// ---------------------------------------------------------------------------
// Store and cache
// ---------------------------------------------------------------------------

std::string record_to_json(const ExtractionRecord& record) {
    json doc;
    doc["subject_kind"] = to_string(record.subject_kind);
    doc["subject_id"] = record.subject_id;
    doc["kc_ids"] = record.kc_ids;
    doc["ordered"] = record.ordered;
    doc["reasoning"] = record.reasoning;
    doc["extractor_id"] = record.extractor_id;
    doc["judged"] = record.judged;
    return doc.dump();
}

ExtractionRecord record_from_json(const std::string& json_text, const KCDatabase& db) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InputError(std::string("extraction record: invalid JSON: ") + e.what());
    }
    ExtractionRecord rec;
    const auto kind = subject_kind_from_string(doc.at("subject_kind").get<std::string>());
    if (!kind) throw InputError("extraction record: bad subject_kind");
    rec.subject_kind = *kind;
    rec.subject_id = doc.at("subject_id").get<std::string>();
    for (const auto& id : doc.at("kc_ids")) {
        const auto s = id.get<std::string>();
        if (!db.contains(s)) {
            throw InputError("extraction record " + rec.subject_id + ": unknown kc_id: " + s);
        }
        rec.kc_ids.push_back(s);
    }
    rec.ordered = doc.at("ordered").get<bool>();
    if (rec.ordered != (rec.subject_kind == SubjectKind::Code)) {
        throw InputError("extraction record " + rec.subject_id +
                         ": ordered flag contradicts subject_kind");
    }
    rec.reasoning = doc.value("reasoning", "");
    rec.extractor_id = doc.value("extractor_id", "");
    rec.judged = doc.value("judged", false);
    return rec;
}

void ExtractionStore::put(ExtractionRecord record) {
    StoreKey key{record.subject_kind, record.subject_id};
    records[std::move(key)] = std::move(record);
}

const ExtractionRecord* ExtractionStore::find(SubjectKind kind,
                                              const std::string& subject_id) const {
    const auto it = records.find(StoreKey{kind, subject_id});
    return it == records.end() ? nullptr : &it->second;
}

ExtractionStore ExtractionStore::load_jsonl(const std::string& path, const KCDatabase& db) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read extraction store: " + path);
    ExtractionStore store;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            store.put(record_from_json(line, db));
        } catch (const InputError& e) {
            throw InputError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return store;
}

void ExtractionStore::save_jsonl(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write extraction store: " + path);
    for (const auto& [key, rec] : records) {
        out << record_to_json(rec) << '\n';
    }
}

namespace {

json cache_entry_json(const std::string& key, const RawExtractionResponse& entry) {
    json doc;
    doc["key"] = key;
    doc["raw_text"] = entry.raw_text;
    doc["attempts"] = entry.attempts;
    doc["record"] = json::parse(record_to_json(*entry.parsed));
    return doc;
}

}  // namespace

ExtractionCache::ExtractionCache(std::string path) : path_(std::move(path)) {
    if (path_.empty()) return;
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;  // absent cache file starts empty
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json doc = json::parse(line);
            RawExtractionResponse entry;
            entry.raw_text = doc.at("raw_text").get<std::string>();
            entry.attempts = doc.at("attempts").get<int>();
            const auto& rec = doc.at("record");
            ExtractionRecord r;
            const auto kind = subject_kind_from_string(rec.at("subject_kind").get<std::string>());
            if (!kind) throw InputError("bad subject_kind");
            r.subject_kind = *kind;
            r.subject_id = rec.at("subject_id").get<std::string>();
            for (const auto& id : rec.at("kc_ids")) r.kc_ids.push_back(id.get<std::string>());
            r.ordered = rec.at("ordered").get<bool>();
            r.reasoning = rec.value("reasoning", "");
            r.extractor_id = rec.value("extractor_id", "");
            r.judged = rec.value("judged", false);
            entry.parsed = std::move(r);
            entries_[doc.at("key").get<std::string>()] = std::move(entry);
        } catch (const std::exception&) {
            throw InternalError("corrupt cache file: " + path_ + " (line " +
                                std::to_string(line_no) + ")");
        }
    }
}

std::optional<ExtractionRecord> ExtractionCache::get(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.parsed;
}

void ExtractionCache::put(const std::string& key, const ExtractionRecord& record,
                          const std::string& raw_text, int attempts) {
    std::lock_guard<std::mutex> lock(mu_);
    // Entries are content-addressed and may serve any subject with matching
    // content, so the stored record carries no subject identity.
    RawExtractionResponse entry;
    entry.raw_text = raw_text;
    entry.attempts = attempts;
    entry.parsed = record;
    entry.parsed->subject_id.clear();
    auto [it, inserted] = entries_.emplace(key, std::move(entry));
    if (!inserted || path_.empty()) return;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw InputError("cannot append to cache file: " + path_);
    out << cache_entry_json(key, it->second).dump() << '\n';
}

void ExtractionCache::flush() const {
    std::lock_guard<std::mutex> lock(mu_);
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write cache file: " + path_);
    for (const auto& [key, entry] : entries_) {
        out << cache_entry_json(key, entry).dump() << '\n';
    }
}

std::size_t ExtractionCache::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
}

std::string cache_key(Task task, const std::string& subject_text,
                      const std::vector<std::string>& prior_kc_ids,
                      const std::string& db_hash, const std::string& template_hash,
                      const std::string& backend_id) {
    std::string material;
    switch (task) {
        case Task::Code: material = "code\x1f"; break;
        case Task::Hint: material = "hint\x1f"; break;
        case Task::Judge: material = "judge\x1f"; break;
    }
    material += sha256_hex(subject_text) + "\x1f";
    for (const auto& id : prior_kc_ids) material += id + "\x1e";
    material += "\x1f" + db_hash + "\x1f" + template_hash + "\x1f" + backend_id;
    return sha256_hex(material);
}

// ---------------------------------------------------------------------------
// Extractor
// ---------------------------------------------------------------------------

Extractor::Extractor(const KCDatabase& db, ExtractorConfig config)
    : Extractor(db, std::move(config), nullptr) {}

Extractor::Extractor(const KCDatabase& db, ExtractorConfig config,
                     std::unique_ptr<ExtractionBackend> backend)
    : db_(db),
      config_(std::move(config)),
      backend_(backend ? std::move(backend) : nullptr),
      cache_(config_.cache_path),
      db_hash_(sha256_hex(kcdb_to_json(db))) {
    if (config_.prompt_template_code.empty())
        config_.prompt_template_code = default_code_template();
    if (config_.prompt_template_hint.empty())
        config_.prompt_template_hint = default_hint_template();
    if (config_.prompt_template_judge.empty())
        config_.prompt_template_judge = default_judge_template();
    validate_config(config_);
    if (!backend_) backend_ = make_backend(db_, config_);
}

Extractor::Outcome Extractor::extract_subject(const ExtractionRequest& request,
                                              SubjectKind kind) {
    const std::string& tmpl = request.task == Task::Code ? config_.prompt_template_code
                              : request.task == Task::Hint ? config_.prompt_template_hint
                                                           : config_.prompt_template_judge;
    const std::string key = cache_key(request.task, request.subject_text,
                                      request.prior_kc_ids, db_hash_,
                                      sha256_hex(tmpl), backend_->name());
    if (auto cached = cache_.get(key)) {
        Outcome out;
        cached->subject_id = request.subject_id;  // content-addressed entries are shareable
        out.record = std::move(*cached);
        out.from_cache = true;
        return out;
    }

    Outcome out;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry_limit; ++attempt) {
        out.attempts = attempt;
        std::string raw;
        try {
            raw = backend_->complete(request);
            {
                std::lock_guard<std::mutex> lock(backend_mu_);
                ++backend_calls_;
            }
        } catch (const BackendError& e) {
            last_error = e.what();
            {
                std::lock_guard<std::mutex> lock(backend_mu_);
                ++backend_calls_;
            }
            continue;
        }
        auto parsed = parse_response(raw, db_, kind);
        if (!parsed.ok) {
            last_error = parsed.reason;
            continue;
        }
        parsed.record.subject_id = request.subject_id;
        parsed.record.extractor_id = backend_->name();
        cache_.put(key, parsed.record, raw, attempt);
        out.record = std::move(parsed.record);
        return out;
    }
    out.error = last_error.empty() ? "extraction failed" : last_error;
    return out;
}

Extractor::Outcome Extractor::extract_code_kcs(const Checkpoint& checkpoint) {
    ExtractionRequest req;
    req.task = Task::Code;
    req.subject_id = checkpoint.checkpoint_id;
    req.subject_text = checkpoint.code;
    req.assignment_id = checkpoint.assignment_id;
    req.problem_id = checkpoint.problem_id;
    return extract_subject(req, SubjectKind::Code);
}

Extractor::Outcome Extractor::extract_hint_kcs(const HintEvent& hint) {
    ExtractionRequest req;
    req.task = Task::Hint;
    req.subject_id = hint.hint_id;
    req.subject_text = hint.hint_text;
    req.assignment_id = hint.assignment_id;
    req.problem_id = hint.problem_id;
    return extract_subject(req, SubjectKind::Hint);
}

Extractor::Outcome Extractor::judge_record(const ExtractionRecord& record,
                                           const std::string& subject_text,
                                           const std::string& assignment_id,
                                           const std::string& problem_id) {
    ExtractionRequest req;
    req.task = Task::Judge;
    req.subject_id = record.subject_id;
    req.subject_text = subject_text;
    req.prior_kc_ids = record.kc_ids;
    req.assignment_id = assignment_id;
    req.problem_id = problem_id;

    Outcome out = extract_subject(req, record.subject_kind);
    if (out.record) {
        out.record->subject_kind = record.subject_kind;
        out.record->ordered = record.ordered;
        out.record->extractor_id = record.extractor_id;
        out.record->judged = true;
    } else {
        // Judge failure keeps the unjudged record.
        out.record = record;
        out.record->judged = false;
    }
    return out;
}

namespace {

struct BatchJob {
    SubjectKind kind;
    const Checkpoint* checkpoint = nullptr;
    const ingest::LinkedHint* hint = nullptr;
};

}  // namespace

BatchResult Extractor::run_extraction_batch(const ingest::Dataset& dataset, Subjects subjects) {
    std::vector<BatchJob> jobs;
    if (subjects != Subjects::Hints) {
        for (const auto& [key, stream] : dataset.streams) {
            for (const auto& cp : stream) {
                jobs.push_back({SubjectKind::Code, &cp, nullptr});
            }
        }
    }
    if (subjects != Subjects::Code) {
        for (const auto& hint : dataset.hints) {
            jobs.push_back({SubjectKind::Hint, nullptr, &hint});
        }
    }

    BatchResult result;
    std::mutex result_mu;
    std::atomic<std::size_t> next{0};
    std::atomic<int> cache_hits{0};
    const int before_calls = backend_calls_;

    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const auto& job = jobs[i];
            Outcome outcome = job.kind == SubjectKind::Code
                                  ? extract_code_kcs(*job.checkpoint)
                                  : extract_hint_kcs(job.hint->hint);
            if (outcome.from_cache) ++cache_hits;
            std::lock_guard<std::mutex> lock(result_mu);
            if (outcome.record) {
                result.store.put(std::move(*outcome.record));
            } else {
                const std::string id = job.kind == SubjectKind::Code
                                           ? job.checkpoint->checkpoint_id
                                           : job.hint->hint.hint_id;
                result.dropped.push_back({job.kind, id, outcome.error, outcome.attempts});
            }
        }
    };

    const int n_threads = std::min<int>(config_.max_parallel,
                                        static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::sort(result.dropped.begin(), result.dropped.end(),
              [](const DropEntry& a, const DropEntry& b) {
                  return std::tie(a.kind, a.subject_id) < std::tie(b.kind, b.subject_id);
              });
    result.backend_calls = backend_calls_ - before_calls;
    result.cache_hits = cache_hits;
    cache_.flush();
    return result;
}

BatchResult Extractor::judge_batch(const ingest::Dataset& dataset,
                                   const ExtractionStore& input) {
    std::vector<const ExtractionRecord*> jobs;
    jobs.reserve(input.records.size());
    for (const auto& [key, rec] : input.records) jobs.push_back(&rec);

    BatchResult result;
    std::mutex result_mu;
    std::atomic<std::size_t> next{0};
    std::atomic<int> cache_hits{0};
    const int before_calls = backend_calls_;

    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const ExtractionRecord& rec = *jobs[i];
            std::string subject_text, assignment_id, problem_id;
            if (rec.subject_kind == SubjectKind::Code) {
                const Checkpoint* cp = dataset.find_checkpoint(rec.subject_id);
                if (!cp) {
                    std::lock_guard<std::mutex> lock(result_mu);
                    result.dropped.push_back({rec.subject_kind, rec.subject_id,
                                              "subject not in dataset", 0});
                    continue;
                }
                subject_text = cp->code;
                assignment_id = cp->assignment_id;
                problem_id = cp->problem_id;
            } else {
                const ingest::LinkedHint* h = dataset.find_hint(rec.subject_id);
                if (!h) {
                    std::lock_guard<std::mutex> lock(result_mu);
                    result.dropped.push_back({rec.subject_kind, rec.subject_id,
                                              "subject not in dataset", 0});
                    continue;
                }
                subject_text = h->hint.hint_text;
                assignment_id = h->hint.assignment_id;
                problem_id = h->hint.problem_id;
            }
            Outcome outcome = judge_record(rec, subject_text, assignment_id, problem_id);
            if (outcome.from_cache) ++cache_hits;
            std::lock_guard<std::mutex> lock(result_mu);
            if (!outcome.error.empty()) {
                result.dropped.push_back({rec.subject_kind, rec.subject_id,
                                          "judge failed, record kept unjudged: " + outcome.error,
                                          outcome.attempts});
            }
            result.store.put(std::move(*outcome.record));
        }
    };

    const int n_threads = std::min<int>(config_.max_parallel,
                                        static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::sort(result.dropped.begin(), result.dropped.end(),
              [](const DropEntry& a, const DropEntry& b) {
                  return std::tie(a.kind, a.subject_id) < std::tie(b.kind, b.subject_id);
              });
    result.backend_calls = backend_calls_ - before_calls;
    result.cache_hits = cache_hits;
    cache_.flush();
    return result;
}

std::vector<stats::LabelingCandidate> make_labeling_pool(const ExtractionStore& store,
                                                         const ingest::Dataset& dataset) {
    std::vector<stats::LabelingCandidate> pool;
    for (const auto& [key, rec] : store.records) {
        stats::LabelingCandidate cand;
        cand.subject_kind = rec.subject_kind;
        cand.subject_id = rec.subject_id;
        cand.kc_ids = rec.kc_ids;
        if (rec.subject_kind == SubjectKind::Code) {
            const Checkpoint* cp = dataset.find_checkpoint(rec.subject_id);
            if (!cp) continue;
            cand.subject_text = cp->code;
        } else {
            const ingest::LinkedHint* h = dataset.find_hint(rec.subject_id);
            if (!h) continue;
            cand.subject_text = h->hint.hint_text;
        }
        pool.push_back(std::move(cand));
    }
    return pool;
}

}  // namespace kceval::extraction
