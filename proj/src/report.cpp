#include "kceval/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "kceval/csv.hpp"

namespace kceval::report {

using nlohmann::json;

namespace {

constexpr const char* kLabelColors[3] = {"#4caf50", "#fdd835", "#e53935"};
constexpr const char* kLabelNames[3] = {"green", "yellow", "red"};

std::string fmt2(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Panel {
    std::string title;
    // per problem: label -> value
    std::vector<std::pair<std::string, std::array<double, 3>>> bars;
};

std::string render_panel(const Panel& panel, double origin_y, double unit_max) {
    constexpr double bar_width = 48;
    constexpr double bar_gap = 28;
    constexpr double left = 70;
    constexpr double plot_height = 180;
    const double top = origin_y + 28;

    std::string svg;
    svg += "<text x=\"" + fmt2(left) + "\" y=\"" + fmt2(origin_y + 14) +
           "\" font-size=\"13\" fill=\"#222\">" + xml_escape(panel.title) + "</text>\n";

    // Axis and ticks.
    svg += "<line x1=\"" + fmt2(left) + "\" y1=\"" + fmt2(top) + "\" x2=\"" + fmt2(left) +
           "\" y2=\"" + fmt2(top + plot_height) + "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double frac = tick / 4.0;
        const double y = top + plot_height * (1.0 - frac);
        svg += "<line x1=\"" + fmt2(left - 4) + "\" y1=\"" + fmt2(y) + "\" x2=\"" +
               fmt2(left) + "\" y2=\"" + fmt2(y) + "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fmt2(left - 8) + "\" y=\"" + fmt2(y + 4) +
               "\" font-size=\"10\" text-anchor=\"end\" fill=\"#444\">" +
               format_sig6(unit_max * frac) + "</text>\n";
    }

    double x = left + bar_gap;
    for (const auto& [problem, values] : panel.bars) {
        double stack_base = top + plot_height;
        for (std::size_t label = 0; label < 3; ++label) {
            const double v = values[label];
            if (v <= 0) continue;
            const double h = unit_max > 0 ? plot_height * (v / unit_max) : 0;
            stack_base -= h;
            svg += "<rect x=\"" + fmt2(x) + "\" y=\"" + fmt2(stack_base) + "\" width=\"" +
                   fmt2(bar_width) + "\" height=\"" + fmt2(h) + "\" fill=\"" +
                   kLabelColors[label] + "\"/>\n";
        }
        svg += "<text x=\"" + fmt2(x + bar_width / 2) + "\" y=\"" +
               fmt2(top + plot_height + 16) +
               "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#222\">" +
               xml_escape(problem) + "</text>\n";
        x += bar_width + bar_gap;
    }
    return svg;
}

}  // namespace

std::optional<std::string> render_stacked_bars(
    const std::vector<progression::Rq1Aggregate>& aggregates, Mode mode) {
    if (aggregates.empty()) return std::nullopt;

    auto sorted = aggregates;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.problem_id < b.problem_id; });

    Panel time_panel;
    Panel subs_panel;
    const std::string& term = sorted.front().term_label;
    if (mode == Mode::Absolute) {
        time_panel.title = "Average time spent per student (s), " + term;
        subs_panel.title = "Average submissions per student, " + term;
    } else {
        time_panel.title = "Share of time spent per progression label, " + term;
        subs_panel.title = "Share of submissions per progression label, " + term;
    }

    double time_max = 0;
    double subs_max = 0;
    for (const auto& agg : sorted) {
        std::array<double, 3> time_vals{};
        std::array<double, 3> subs_vals{};
        if (mode == Mode::Absolute) {
            time_vals = agg.avg_time_s;
            subs_vals = agg.avg_submissions;
        } else {
            if (agg.time_share) time_vals = *agg.time_share;
            if (agg.submission_share) subs_vals = *agg.submission_share;
        }
        time_max = std::max(time_max, time_vals[0] + time_vals[1] + time_vals[2]);
        subs_max = std::max(subs_max, subs_vals[0] + subs_vals[1] + subs_vals[2]);
        time_panel.bars.emplace_back(agg.problem_id, time_vals);
        subs_panel.bars.emplace_back(agg.problem_id, subs_vals);
    }
    if (mode == Mode::Proportional) {
        time_max = 1.0;
        subs_max = 1.0;
    }
    if (time_max <= 0) time_max = 1.0;
    if (subs_max <= 0) subs_max = 1.0;

    const double width =
        std::max<double>(360, 70 + 28 + sorted.size() * (48 + 28) + 30);
    constexpr double panel_height = 250;
    const double height = 2 * panel_height + 40;

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(width) +
                      "\" height=\"" + fmt2(height) + "\" viewBox=\"0 0 " + fmt2(width) +
                      " " + fmt2(height) + "\" font-family=\"sans-serif\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + fmt2(width) + "\" height=\"" + fmt2(height) +
           "\" fill=\"#ffffff\"/>\n";
    svg += render_panel(time_panel, 10, time_max);
    svg += render_panel(subs_panel, 10 + panel_height + 20, subs_max);

    // Legend.
    double lx = 70;
    const double ly = height - 14;
    for (std::size_t label = 0; label < 3; ++label) {
        svg += "<rect x=\"" + fmt2(lx) + "\" y=\"" + fmt2(ly - 10) +
               "\" width=\"12\" height=\"12\" fill=\"" + kLabelColors[label] + "\"/>\n";
        svg += "<text x=\"" + fmt2(lx + 16) + "\" y=\"" + fmt2(ly) +
               "\" font-size=\"11\" fill=\"#222\">" + kLabelNames[label] + "</text>\n";
        lx += 90;
    }
    svg += "</svg>\n";
    return svg;
}

std::string render_grouped_bars(const hintmetrics::GroupedReport& report,
                                const std::string& title) {
    constexpr double bar_width = 52;
    constexpr double bar_gap = 30;
    constexpr double left = 60;
    constexpr double top = 40;
    constexpr double plot_height = 200;

    std::vector<const hintmetrics::GroupedProportion*> present;
    std::vector<std::string> omitted;
    for (const auto& bucket : report.buckets) {
        if (bucket.denominator > 0) present.push_back(&bucket);
        else omitted.push_back(bucket.bucket);
    }

    const double width =
        std::max<double>(360, left + bar_gap + present.size() * (bar_width + bar_gap) + 30);
    const double height = top + plot_height + 70;

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(width) +
                      "\" height=\"" + fmt2(height) + "\" viewBox=\"0 0 " + fmt2(width) +
                      " " + fmt2(height) + "\" font-family=\"sans-serif\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + fmt2(width) + "\" height=\"" + fmt2(height) +
           "\" fill=\"#ffffff\"/>\n";
    svg += "<text x=\"" + fmt2(left) + "\" y=\"20\" font-size=\"13\" fill=\"#222\">" +
           xml_escape(title) + "</text>\n";

    svg += "<line x1=\"" + fmt2(left) + "\" y1=\"" + fmt2(top) + "\" x2=\"" + fmt2(left) +
           "\" y2=\"" + fmt2(top + plot_height) + "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double frac = tick / 4.0;
        const double y = top + plot_height * (1.0 - frac);
        svg += "<text x=\"" + fmt2(left - 8) + "\" y=\"" + fmt2(y + 4) +
               "\" font-size=\"10\" text-anchor=\"end\" fill=\"#444\">" + format_sig6(frac) +
               "</text>\n";
    }

    double x = left + bar_gap;
    for (const auto* bucket : present) {
        const double p = *bucket->proportion;
        const double h = plot_height * p;
        svg += "<rect x=\"" + fmt2(x) + "\" y=\"" + fmt2(top + plot_height - h) +
               "\" width=\"" + fmt2(bar_width) + "\" height=\"" + fmt2(h) +
               "\" fill=\"#1976d2\"/>\n";
        svg += "<text x=\"" + fmt2(x + bar_width / 2) + "\" y=\"" +
               fmt2(top + plot_height + 16) +
               "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#222\">" +
               xml_escape(bucket->bucket) + "</text>\n";
        svg += "<text x=\"" + fmt2(x + bar_width / 2) + "\" y=\"" +
               fmt2(top + plot_height + 30) +
               "\" font-size=\"10\" text-anchor=\"middle\" fill=\"#666\">n=" +
               std::to_string(bucket->denominator) + "</text>\n";
        x += bar_width + bar_gap;
    }

    if (!omitted.empty()) {
        std::string note = "buckets omitted (no data): ";
        for (std::size_t i = 0; i < omitted.size(); ++i) {
            if (i) note += ", ";
            note += omitted[i];
        }
        svg += "<text x=\"" + fmt2(left) + "\" y=\"" + fmt2(height - 12) +
               "\" font-size=\"10\" fill=\"#666\">" + xml_escape(note) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string rq1_absolute_csv(const std::vector<progression::Rq1Aggregate>& aggregates) {
    std::string out = csv_row({"term", "problem", "label", "avg_time_s", "avg_submissions",
                               "n_students"});
    auto sorted = aggregates;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return std::tie(a.term_label, a.problem_id) < std::tie(b.term_label, b.problem_id);
    });
    for (const auto& agg : sorted) {
        for (std::size_t label = 0; label < 3; ++label) {
            out += csv_row({agg.term_label, agg.problem_id, kLabelNames[label],
                            format_sig6(agg.avg_time_s[label]),
                            format_sig6(agg.avg_submissions[label]),
                            std::to_string(agg.n_students)});
        }
    }
    return out;
}

std::string rq1_proportional_csv(const std::vector<progression::Rq1Aggregate>& aggregates) {
    std::string out = csv_row({"term", "problem", "label", "time_share", "submission_share",
                               "n_students"});
    auto sorted = aggregates;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return std::tie(a.term_label, a.problem_id) < std::tie(b.term_label, b.problem_id);
    });
    for (const auto& agg : sorted) {
        for (std::size_t label = 0; label < 3; ++label) {
            // Shares carry 12 decimals so emitted row groups sum to 1 within
            // 1e-9; a degenerate total leaves the column empty.
            out += csv_row({agg.term_label, agg.problem_id, kLabelNames[label],
                            agg.time_share ? format_fixed12((*agg.time_share)[label]) : "",
                            agg.submission_share
                                ? format_fixed12((*agg.submission_share)[label])
                                : "",
                            std::to_string(agg.n_students)});
        }
    }
    return out;
}

std::string grouped_csv(const std::string& term, const std::string& assignment,
                        const hintmetrics::GroupedReport& report) {
    std::string out =
        csv_row({"term", "assignment", "bucket", "numerator", "denominator", "proportion"});
    for (const auto& bucket : report.buckets) {
        out += csv_row({term, assignment, bucket.bucket, std::to_string(bucket.numerator),
                        std::to_string(bucket.denominator),
                        bucket.proportion ? format_sig6(*bucket.proportion) : ""});
    }
    return out;
}

std::string grouped_summary_json(const std::string& term, const std::string& assignment,
                                 const hintmetrics::GroupedReport& report) {
    json doc;
    doc["term"] = term;
    doc["assignment"] = assignment;
    doc["metric"] = hintmetrics::to_string(report.metric);
    doc["overall_numerator"] = report.overall_numerator;
    doc["overall_denominator"] = report.overall_denominator;
    if (report.overall) doc["overall_proportion"] = *report.overall;
    else doc["overall_proportion"] = nullptr;
    doc["no_kc_hints"] = report.no_kc_hints;
    doc["not_applicable"] = report.not_applicable;
    doc["buckets"] = json::array();
    for (const auto& bucket : report.buckets) {
        json b;
        b["bucket"] = bucket.bucket;
        b["numerator"] = bucket.numerator;
        b["denominator"] = bucket.denominator;
        if (bucket.proportion) b["proportion"] = *bucket.proportion;
        else b["proportion"] = nullptr;
        doc["buckets"].push_back(std::move(b));
    }
    return doc.dump(2) + "\n";
}

std::string green_stats_json(const std::map<std::string, progression::GreenStats>& per_term,
                             const std::optional<progression::GreenComparison>& comparison,
                             const std::string& term_a, const std::string& term_b) {
    json doc;
    doc["per_term"] = json::object();
    for (const auto& [term, gs] : per_term) {
        doc["per_term"][term] = {{"n_green", gs.n_green},
                                 {"mean_reduction", gs.mean_reduction},
                                 {"sd", gs.sd}};
    }
    if (comparison) {
        const auto& cmp = *comparison;
        doc["comparison"] = {
            {"baseline_term", term_a},
            {"treatment_term", term_b},
            {"t", cmp.test.t},
            {"dof", cmp.test.dof},
            {"p_two_sided", cmp.test.p_two_sided},
            {"effect_size_r", cmp.test.effect_size_r},
            {"variant", cmp.test.variant == stats::TVariant::Pooled ? "pooled" : "welch"},
        };
    }
    return doc.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write file: " + path);
    out << content;
    if (!out) throw InputError("failed while writing file: " + path);
}

void write_manifest(const std::string& out_dir, const RunManifest& manifest) {
    json doc;
    doc["command_line"] = manifest.command_line;
    doc["tool_version"] = manifest.tool_version;
    doc["created_utc"] = manifest.created_utc;
    doc["input_hashes"] = json::object();
    for (const auto& [path, hash] : manifest.input_hashes) doc["input_hashes"][path] = hash;
    doc["outputs"] = manifest.outputs;
    write_file((std::filesystem::path(out_dir) / "manifest.json").string(),
               doc.dump(2) + "\n");
}

}  // namespace kceval::report
