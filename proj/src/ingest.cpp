#include "kceval/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <tuple>

#include <json.hpp>

namespace kceval::ingest {

using nlohmann::json;

std::size_t Dataset::checkpoint_count() const {
    std::size_t n = 0;
    for (const auto& [key, stream] : streams) n += stream.size();
    return n;
}

const Checkpoint* Dataset::find_checkpoint(const std::string& checkpoint_id) const {
    const auto it = index_.find(checkpoint_id);
    if (it == index_.end()) return nullptr;
    return &streams.at(it->second.first)[it->second.second];
}

const LinkedHint* Dataset::find_hint(const std::string& hint_id) const {
    const auto it = hint_index_.find(hint_id);
    if (it == hint_index_.end()) return nullptr;
    return &hints[it->second];
}

const Checkpoint* Dataset::next_checkpoint(const Checkpoint& cp) const {
    const auto it = index_.find(cp.checkpoint_id);
    if (it == index_.end()) {
        throw InputError("checkpoint not in dataset: " + cp.checkpoint_id);
    }
    const auto& [key, pos] = it->second;
    const auto& stream = streams.at(key);
    if (pos + 1 >= stream.size()) return nullptr;
    return &stream[pos + 1];
}

void Dataset::rebuild_index() {
    index_.clear();
    for (const auto& [key, stream] : streams) {
        for (std::size_t i = 0; i < stream.size(); ++i) {
            index_.emplace(stream[i].checkpoint_id, std::make_pair(key, i));
        }
    }
    hint_index_.clear();
    for (std::size_t i = 0; i < hints.size(); ++i) {
        hint_index_.emplace(hints[i].hint.hint_id, i);
    }
}

namespace {

bool get_string(const json& row, const char* key, std::string& out, std::string& error) {
    const auto it = row.find(key);
    if (it == row.end()) {
        error = std::string("missing field: ") + key;
        return false;
    }
    if (!it->is_string()) {
        error = std::string("non-string field: ") + key;
        return false;
    }
    out = it->get<std::string>();
    return true;
}

bool parse_timestamp(const json& row, EpochSeconds& out, std::string& error) {
    std::string raw;
    if (!get_string(row, "timestamp", raw, error)) return false;
    const auto parsed = parse_rfc3339(raw);
    if (!parsed) {
        error = "invalid timestamp: " + raw;
        return false;
    }
    out = *parsed;
    return true;
}

std::optional<json> parse_row_object(const std::string& line, std::string& error) {
    json row;
    try {
        row = json::parse(line);
    } catch (const json::exception&) {
        error = "invalid JSON";
        return std::nullopt;
    }
    if (!row.is_object()) {
        error = "row is not a JSON object";
        return std::nullopt;
    }
    return row;
}

}  // namespace

std::optional<Checkpoint> parse_checkpoint_row(const std::string& json_line, std::string& error) {
    const auto row = parse_row_object(json_line, error);
    if (!row) return std::nullopt;

    Checkpoint cp;
    if (!get_string(*row, "checkpoint_id", cp.checkpoint_id, error)) return std::nullopt;
    if (!get_string(*row, "student_id", cp.student_id, error)) return std::nullopt;
    if (!get_string(*row, "assignment_id", cp.assignment_id, error)) return std::nullopt;
    if (!get_string(*row, "problem_id", cp.problem_id, error)) return std::nullopt;
    if (!parse_timestamp(*row, cp.timestamp, error)) return std::nullopt;
    if (!get_string(*row, "code", cp.code, error)) return std::nullopt;  // empty code is valid
    if (row->contains("sequence_hint")) {
        const auto& sh = (*row)["sequence_hint"];
        if (!sh.is_number_integer()) {
            error = "non-integer field: sequence_hint";
            return std::nullopt;
        }
        cp.sequence_hint = sh.get<std::int64_t>();
    }
    return cp;
}

std::optional<HintEvent> parse_hint_row(const std::string& json_line, std::string& error) {
    const auto row = parse_row_object(json_line, error);
    if (!row) return std::nullopt;

    HintEvent h;
    if (!get_string(*row, "hint_id", h.hint_id, error)) return std::nullopt;
    if (!get_string(*row, "student_id", h.student_id, error)) return std::nullopt;
    if (!get_string(*row, "assignment_id", h.assignment_id, error)) return std::nullopt;
    if (!get_string(*row, "problem_id", h.problem_id, error)) return std::nullopt;
    if (!parse_timestamp(*row, h.timestamp, error)) return std::nullopt;
    if (!get_string(*row, "hint_text", h.hint_text, error)) return std::nullopt;
    if (h.hint_text.empty()) {
        error = "empty hint_text";
        return std::nullopt;
    }
    if (row->contains("checkpoint_ref")) {
        std::string ref;
        if (!get_string(*row, "checkpoint_ref", ref, error)) return std::nullopt;
        h.checkpoint_ref = std::move(ref);
    }
    return h;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool is_blank(const std::string& line) {
    return line.find_first_not_of(" \t") == std::string::npos;
}

// Tie order at equal timestamps: explicit sequence hints first (ascending),
// then input order. Stable sort supplies the input-order fallback.
std::int64_t sequence_rank(const Checkpoint& cp) {
    return cp.sequence_hint.value_or(std::numeric_limits<std::int64_t>::max());
}

}  // namespace

Dataset load_checkpoints(const std::string& path, const KCDatabase& db,
                         const IngestOptions& options) {
    Dataset ds;
    ds.db = db;
    ds.term_label = options.term_label;

    const auto lines = read_lines(path);
    std::set<std::string> seen_ids;
    std::set<std::tuple<std::string, std::string, EpochSeconds, std::int64_t>> seen_tuples;

    int line_no = 0;
    for (const auto& line : lines) {
        ++line_no;
        if (is_blank(line)) continue;
        std::string error;
        auto cp = parse_checkpoint_row(line, error);
        if (!cp) {
            ds.dropped.push_back({"checkpoints", line_no, "", error});
            continue;
        }
        if (cp->assignment_id != db.assignment_id) {
            ds.dropped.push_back({"checkpoints", line_no, cp->checkpoint_id,
                                  "assignment mismatch: " + cp->assignment_id});
            continue;
        }
        if (!seen_ids.insert(cp->checkpoint_id).second) {
            ds.dropped.push_back({"checkpoints", line_no, cp->checkpoint_id,
                                  "duplicate checkpoint_id"});
            continue;
        }
        const auto tuple = std::make_tuple(cp->student_id, cp->problem_id, cp->timestamp,
                                           cp->sequence_hint.value_or(
                                               std::numeric_limits<std::int64_t>::min()));
        if (!seen_tuples.insert(tuple).second) {
            ds.dropped.push_back({"checkpoints", line_no, cp->checkpoint_id,
                                  "duplicate (student, problem, timestamp, sequence_hint)"});
            continue;
        }
        ds.streams[{cp->student_id, cp->problem_id}].push_back(std::move(*cp));
    }

    for (auto& [key, stream] : ds.streams) {
        std::stable_sort(stream.begin(), stream.end(),
                         [](const Checkpoint& a, const Checkpoint& b) {
                             if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                             return sequence_rank(a) < sequence_rank(b);
                         });
    }
    ds.rebuild_index();
    return ds;
}

void load_hints(const std::string& path, Dataset& dataset, const IngestOptions& options) {
    const auto lines = read_lines(path);

    int line_no = 0;
    for (const auto& line : lines) {
        ++line_no;
        if (is_blank(line)) continue;
        std::string error;
        auto hint = parse_hint_row(line, error);
        if (!hint) {
            dataset.dropped.push_back({"hints", line_no, "", error});
            continue;
        }
        if (hint->assignment_id != dataset.db.assignment_id) {
            dataset.dropped.push_back({"hints", line_no, hint->hint_id,
                                       "assignment mismatch: " + hint->assignment_id});
            continue;
        }

        const StreamKey key{hint->student_id, hint->problem_id};

        // Explicit checkpoint_ref wins when it names a checkpoint in the
        // same stream, regardless of the window.
        if (hint->checkpoint_ref) {
            const Checkpoint* target = dataset.find_checkpoint(*hint->checkpoint_ref);
            if (target && target->student_id == hint->student_id &&
                target->problem_id == hint->problem_id) {
                dataset.hints.push_back({std::move(*hint), target->checkpoint_id});
                continue;
            }
            // Invalid ref falls through to the window rule.
        }

        const auto stream_it = dataset.streams.find(key);
        const Checkpoint* best = nullptr;
        if (stream_it != dataset.streams.end()) {
            for (const auto& cp : stream_it->second) {
                if (cp.timestamp > hint->timestamp) break;
                best = &cp;  // latest checkpoint at or before the hint
            }
        }
        if (best && hint->timestamp - best->timestamp <= options.linkage_window_seconds) {
            dataset.hints.push_back({std::move(*hint), best->checkpoint_id});
        } else {
            dataset.dropped.push_back({"hints", line_no, hint->hint_id,
                                       "no checkpoint within linkage window"});
        }
    }
    dataset.rebuild_index();
}

}  // namespace kceval::ingest
