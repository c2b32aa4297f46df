#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "kceval/core.hpp"

namespace kceval::ingest {

struct StreamKey {
    std::string student_id;
    std::string problem_id;
    auto operator<=>(const StreamKey&) const = default;
};

// A hint with its linkage resolved to a concrete checkpoint.
struct LinkedHint {
    HintEvent hint;
    std::string checkpoint_id;
};

struct DroppedRecord {
    std::string source;  // "checkpoints" or "hints"
    int line = 0;        // 1-based line in the input file
    std::string id;      // record id when one parsed
    std::string reason;
};

struct IngestOptions {
    std::int64_t linkage_window_seconds = 120;
    std::string term_label = "default";
};

// Checkpoint streams plus linked hints for one term. Immutable after
// loading; safe to share across threads.
struct Dataset {
    KCDatabase db;
    std::map<StreamKey, std::vector<Checkpoint>> streams;  // time-ordered
    std::vector<LinkedHint> hints;
    std::string term_label;
    std::vector<DroppedRecord> dropped;

    std::size_t checkpoint_count() const;
    const Checkpoint* find_checkpoint(const std::string& checkpoint_id) const;
    const LinkedHint* find_hint(const std::string& hint_id) const;

    // Stream successor; nullptr when the checkpoint is the last of its
    // stream. Throws InputError for checkpoints this dataset never loaded.
    const Checkpoint* next_checkpoint(const Checkpoint& cp) const;

    void rebuild_index();

private:
    // checkpoint_id -> (stream, position)
    std::unordered_map<std::string, std::pair<StreamKey, std::size_t>> index_;
    std::unordered_map<std::string, std::size_t> hint_index_;
};

// Row-level parsers, exposed for tests. On failure they return nullopt and
// set a machine-readable reason.
std::optional<Checkpoint> parse_checkpoint_row(const std::string& json_line, std::string& error);
std::optional<HintEvent> parse_hint_row(const std::string& json_line, std::string& error);

// Loads a JSON Lines checkpoint log. Unreadable file -> InputError;
// malformed rows land in dataset.dropped, never abort the load.
Dataset load_checkpoints(const std::string& path, const KCDatabase& db,
                         const IngestOptions& options = {});

// Links each hint to its checkpoint: an explicit valid checkpoint_ref wins;
// otherwise the latest same-stream checkpoint within the linkage window.
void load_hints(const std::string& path, Dataset& dataset, const IngestOptions& options = {});

}  // namespace kceval::ingest
