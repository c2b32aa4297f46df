#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kceval/hint_metrics.hpp"
#include "kceval/progression.hpp"

namespace kceval::report {

enum class Mode { Absolute, Proportional };

// One SVG document with a time panel and a submissions panel, one stacked
// green/yellow/red bar per problem. Proportional mode normalizes every bar
// to unit height. Output is deterministic (no timestamps). Returns nullopt
// for empty aggregates (caller emits a notice instead of a file).
std::optional<std::string> render_stacked_bars(
    const std::vector<progression::Rq1Aggregate>& aggregates, Mode mode);

// One bar per KC-list-length bucket, y in [0, 1], denominators annotated;
// empty buckets are omitted with a footnote.
std::string render_grouped_bars(const hintmetrics::GroupedReport& report,
                                const std::string& title);

// CSV documents. Column layouts are part of the external interface.
std::string rq1_absolute_csv(const std::vector<progression::Rq1Aggregate>& aggregates);
std::string rq1_proportional_csv(const std::vector<progression::Rq1Aggregate>& aggregates);
std::string grouped_csv(const std::string& term, const std::string& assignment,
                        const hintmetrics::GroupedReport& report);
std::string grouped_summary_json(const std::string& term, const std::string& assignment,
                                 const hintmetrics::GroupedReport& report);

// Per-term green stats; the comparison block is present when both terms were
// supplied.
std::string green_stats_json(const std::map<std::string, progression::GreenStats>& per_term,
                             const std::optional<progression::GreenComparison>& comparison,
                             const std::string& term_a, const std::string& term_b);

struct RunManifest {
    std::string command_line;
    std::string tool_version;
    std::string created_utc;  // informational; excluded from determinism checks
    std::map<std::string, std::string> input_hashes;  // path -> sha256
    std::vector<std::string> outputs;
};

// Writes <out_dir>/manifest.json (exactly one per analysis directory).
void write_manifest(const std::string& out_dir, const RunManifest& manifest);

// Creates parent directories as needed; throws InputError on failure.
void write_file(const std::string& path, const std::string& content);

}  // namespace kceval::report
