#include "kceval/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kceval/csv.hpp"
#include "kceval/extraction.hpp"
#include "kceval/hash.hpp"
#include "kceval/hint_metrics.hpp"
#include "kceval/ingest.hpp"
#include "kceval/progression.hpp"
#include "kceval/report.hpp"
#include "kceval/stats.hpp"
#include "kceval/synth.hpp"

namespace kceval::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string join_args(const std::vector<std::string>& args) {
    std::string line = "kc-eval";
    for (const auto& a : args) line += " " + a;
    return line;
}

std::string now_utc() {
    const auto now = std::chrono::system_clock::now();
    return format_rfc3339(std::chrono::duration_cast<std::chrono::seconds>(
                              now.time_since_epoch())
                              .count());
}

report::RunManifest make_manifest(const std::vector<std::string>& args,
                                  const std::vector<std::string>& inputs,
                                  std::vector<std::string> outputs) {
    report::RunManifest manifest;
    manifest.command_line = join_args(args);
    manifest.tool_version = kToolVersion;
    manifest.created_utc = now_utc();
    for (const auto& path : inputs) {
        if (!path.empty() && fs::exists(path)) {
            manifest.input_hashes[path] = sha256_file_hex(path);
        }
    }
    std::sort(outputs.begin(), outputs.end());
    manifest.outputs = std::move(outputs);
    return manifest;
}

struct DatasetArgs {
    std::string checkpoints;
    std::string hints;  // optional
    std::string kcdb;
    std::string term = "default";
    std::int64_t window_seconds = 120;
};

KCDatabase load_validated_db(const std::string& path, std::ostream& err) {
    KCDatabase db = load_kcdb(path);
    const auto findings = validate_database(db);
    bool fatal = false;
    for (const auto& f : findings) {
        if (f.severity == Severity::Error) {
            err << "kc database error: " << f.message << "\n";
            fatal = true;
        } else {
            err << "kc database warning: " << f.message << "\n";
        }
    }
    if (fatal) throw InputError("kc database failed validation: " + path);
    return db;
}

ingest::Dataset load_dataset(const DatasetArgs& args, std::ostream& err) {
    const KCDatabase db = load_validated_db(args.kcdb, err);
    ingest::IngestOptions opts;
    opts.term_label = args.term;
    opts.linkage_window_seconds = args.window_seconds;
    ingest::Dataset ds = ingest::load_checkpoints(args.checkpoints, db, opts);
    if (!args.hints.empty()) ingest::load_hints(args.hints, ds, opts);
    return ds;
}

void report_drops(const ingest::Dataset& ds, std::ostream& where) {
    if (ds.dropped.empty()) return;
    std::map<std::string, int> reasons;
    for (const auto& d : ds.dropped) ++reasons[d.source + ": " + d.reason];
    where << "dropped rows:\n";
    for (const auto& [reason, count] : reasons) {
        where << "  " << reason << ": " << count << "\n";
    }
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_ingest_validate(const DatasetArgs& args, std::ostream& out, std::ostream& err) {
    const KCDatabase db = load_validated_db(args.kcdb, err);
    ingest::IngestOptions opts;
    opts.term_label = args.term;
    opts.linkage_window_seconds = args.window_seconds;
    ingest::Dataset ds = ingest::load_checkpoints(args.checkpoints, db, opts);
    if (!args.hints.empty()) ingest::load_hints(args.hints, ds, opts);

    out << "kc database: " << db.kcs.size() << " kcs, " << db.categories.size()
        << " categories\n";
    out << "checkpoints: " << ds.checkpoint_count() << " ingested across "
        << ds.streams.size() << " streams\n";
    out << "hints: " << ds.hints.size() << " linked\n";
    out << "dropped: " << ds.dropped.size() << "\n";
    if (!ds.dropped.empty()) {
        std::map<std::string, int> reasons;
        for (const auto& d : ds.dropped) ++reasons[d.source + ": " + d.reason];
        out << "drop reasons:\n";
        for (const auto& [reason, count] : reasons) {
            out << "  " << reason << ": " << count << "\n";
        }
    }
    return 0;
}

struct ExtractArgs {
    DatasetArgs dataset;
    std::string config_path;
    std::string cache_override;
    std::string out_path = "extractions.jsonl";
    std::string extractions_in;  // judge only
};

int cmd_extract(const std::string& what, const ExtractArgs& args, std::ostream& err) {
    const KCDatabase db = load_validated_db(args.dataset.kcdb, err);
    ingest::IngestOptions opts;
    opts.term_label = args.dataset.term;
    opts.linkage_window_seconds = args.dataset.window_seconds;
    ingest::Dataset ds = ingest::load_checkpoints(args.dataset.checkpoints, db, opts);
    if (!args.dataset.hints.empty()) ingest::load_hints(args.dataset.hints, ds, opts);
    report_drops(ds, err);

    extraction::ExtractorConfig cfg;
    if (!args.config_path.empty()) cfg = extraction::load_extractor_config(args.config_path);
    if (!args.cache_override.empty()) cfg.cache_path = args.cache_override;

    extraction::Extractor extractor(ds.db, cfg);
    extraction::BatchResult batch;
    if (what == "judge") {
        const auto input = extraction::ExtractionStore::load_jsonl(args.extractions_in, ds.db);
        batch = extractor.judge_batch(ds, input);
    } else {
        batch = extractor.run_extraction_batch(
            ds, what == "code" ? extraction::Subjects::Code : extraction::Subjects::Hints);
    }

    batch.store.save_jsonl(args.out_path);
    err << "extracted " << batch.store.records.size() << " records ("
        << batch.backend_calls << " backend calls, " << batch.cache_hits
        << " cache hits)\n";
    if (!batch.dropped.empty()) {
        err << batch.dropped.size() << " subjects dropped:\n";
        std::string drops;
        for (const auto& d : batch.dropped) {
            err << "  " << to_string(d.kind) << " " << d.subject_id << ": " << d.reason
                << "\n";
            json row;
            row["subject_kind"] = to_string(d.kind);
            row["subject_id"] = d.subject_id;
            row["reason"] = d.reason;
            row["attempts"] = d.attempts;
            drops += row.dump();
            drops += '\n';
        }
        report::write_file(args.out_path + ".drops.jsonl", drops);
    }
    return 0;
}

struct Rq1Args {
    DatasetArgs dataset;
    std::string extractions;
    std::string baseline_checkpoints;
    std::string baseline_extractions;
    std::string baseline_term = "baseline";
    double idle_cap_seconds = 1200;
    bool welch = false;
    std::string out_dir = ".";
};

int cmd_analyze_rq1(const Rq1Args& args, const std::vector<std::string>& argv,
                    std::ostream& err) {
    const ingest::Dataset ds = load_dataset(args.dataset, err);
    report_drops(ds, err);
    const auto store = extraction::ExtractionStore::load_jsonl(args.extractions, ds.db);

    const auto built = progression::build_pairs(ds, store, args.idle_cap_seconds);
    if (!built.dropped.empty()) {
        err << built.dropped.size() << " pairs dropped for missing extractions\n";
    }
    auto aggregates = progression::aggregate_rq1(built.pairs, ds.term_label);

    {
        std::set<std::string> with_pairs;
        for (const auto& agg : aggregates) with_pairs.insert(agg.problem_id);
        std::set<std::string> all_problems;
        for (const auto& [key, stream] : ds.streams) all_problems.insert(key.problem_id);
        for (const auto& p : all_problems) {
            if (!with_pairs.count(p)) {
                err << "notice: problem " << p << " has no checkpoint pairs; omitted\n";
            }
        }
    }

    std::map<std::string, progression::GreenStats> per_term;
    std::optional<progression::GreenComparison> comparison;
    std::vector<progression::ProgressionPair> baseline_pairs;

    const auto summarize_term = [&](const std::vector<progression::ProgressionPair>& pairs,
                                    const std::string& term) {
        std::vector<double> reductions;
        for (const auto& p : pairs) {
            if (p.label == progression::Label::Green) {
                reductions.push_back(static_cast<double>(-p.delta));
            }
        }
        progression::GreenStats gs;
        gs.n_green = static_cast<int>(reductions.size());
        if (reductions.size() >= 2) {
            gs.mean_reduction = stats::mean(reductions);
            gs.sd = stats::sample_sd(reductions);
        } else if (!reductions.empty()) {
            gs.mean_reduction = stats::mean(reductions);
            err << "notice: term " << term << " has fewer than two green pairs; SD omitted\n";
        }
        per_term[term] = gs;
    };
    summarize_term(built.pairs, ds.term_label);

    if (!args.baseline_checkpoints.empty()) {
        DatasetArgs base = args.dataset;
        base.checkpoints = args.baseline_checkpoints;
        base.hints.clear();
        base.term = args.baseline_term;
        const ingest::Dataset baseline_ds = load_dataset(base, err);
        const auto baseline_store =
            extraction::ExtractionStore::load_jsonl(args.baseline_extractions, baseline_ds.db);
        auto baseline_built =
            progression::build_pairs(baseline_ds, baseline_store, args.idle_cap_seconds);
        baseline_pairs = std::move(baseline_built.pairs);
        summarize_term(baseline_pairs, args.baseline_term);
        auto baseline_aggs = progression::aggregate_rq1(baseline_pairs, args.baseline_term);
        aggregates.insert(aggregates.end(), baseline_aggs.begin(), baseline_aggs.end());
        try {
            comparison = progression::green_reduction_stats(
                baseline_pairs, built.pairs,
                args.welch ? stats::TVariant::Welch : stats::TVariant::Pooled);
        } catch (const InputError& e) {
            err << "green comparison refused: " << e.what() << "\n";
        }
    }

    const fs::path out_dir(args.out_dir);
    const std::string abs_path = (out_dir / "rq1_absolute.csv").string();
    const std::string prop_path = (out_dir / "rq1_proportional.csv").string();
    const std::string stats_path = (out_dir / "rq1_green_stats.json").string();
    report::write_file(abs_path, report::rq1_absolute_csv(aggregates));
    report::write_file(prop_path, report::rq1_proportional_csv(aggregates));
    report::write_file(stats_path,
                       report::green_stats_json(per_term, comparison, args.baseline_term,
                                                ds.term_label));
    report::write_manifest(args.out_dir,
                           make_manifest(argv,
                                         {args.dataset.checkpoints, args.dataset.hints,
                                          args.dataset.kcdb, args.extractions,
                                          args.baseline_checkpoints, args.baseline_extractions},
                                         {abs_path, prop_path, stats_path}));
    return 0;
}

struct Rq23Args {
    DatasetArgs dataset;
    std::string extractions;
    std::string out_dir = ".";
};

int cmd_analyze_rq23(hintmetrics::Metric metric, const Rq23Args& args,
                     const std::vector<std::string>& argv, std::ostream& err) {
    const ingest::Dataset ds = load_dataset(args.dataset, err);
    report_drops(ds, err);
    const auto store = extraction::ExtractionStore::load_jsonl(args.extractions, ds.db);

    const auto evaluated = hintmetrics::evaluate_hints(ds, store);
    for (const auto& notice : evaluated.notices) err << "notice: " << notice << "\n";
    const auto grouped = hintmetrics::group_by_length(evaluated.evaluations, metric);

    const fs::path out_dir(args.out_dir);
    const std::string csv_name =
        metric == hintmetrics::Metric::Top3 ? "rq2_overlap.csv" : "rq3_resolution.csv";
    const std::string csv_path = (out_dir / csv_name).string();
    const std::string summary_path = (out_dir / "summary.json").string();
    report::write_file(csv_path,
                       report::grouped_csv(ds.term_label, ds.db.assignment_id, grouped));
    report::write_file(summary_path,
                       report::grouped_summary_json(ds.term_label, ds.db.assignment_id,
                                                    grouped));
    report::write_manifest(args.out_dir,
                           make_manifest(argv,
                                         {args.dataset.checkpoints, args.dataset.hints,
                                          args.dataset.kcdb, args.extractions},
                                         {csv_path, summary_path}));
    return 0;
}

struct SampleArgs {
    DatasetArgs dataset;
    std::string extractions;
    int n = 63;
    std::uint64_t seed = 7;
    double overlap = 0.22;
    std::string out_path = "labeling_sample.csv";
};

int cmd_sample_labels(const SampleArgs& args, std::ostream& err) {
    const ingest::Dataset ds = load_dataset(args.dataset, err);
    const auto store = extraction::ExtractionStore::load_jsonl(args.extractions, ds.db);
    const auto pool = extraction::make_labeling_pool(store, ds);
    const auto sample = stats::draw_labeling_sample(pool, args.n, args.seed, args.overlap);
    report::write_file(args.out_path, stats::labeling_sample_to_csv(sample));
    err << "sampled " << sample.items.size() << " items (" << sample.joint_count
        << " joint) to " << args.out_path << "\n";
    return 0;
}

struct AgreementArgs {
    std::string sample_path;
    std::vector<std::string> rater_paths;
    std::string out_path;  // empty -> stdout
};

int cmd_agreement(const AgreementArgs& args, std::ostream& out) {
    const auto sample = stats::labeling_sample_from_csv(read_file(args.sample_path));
    std::vector<stats::RaterFile> raters;
    for (const auto& path : args.rater_paths) {
        raters.push_back(stats::load_rater_csv(fs::path(path).stem().string(),
                                               read_file(path)));
    }
    const auto report = stats::score_labels(sample, raters);

    json doc;
    doc["pairs"] = json::array();
    for (const auto& pw : report.pairs) {
        json p;
        p["rater_a"] = pw.rater_a;
        p["rater_b"] = pw.rater_b;
        p["joint_covered"] = pw.joint_covered;
        if (pw.agreement) {
            p["n_items"] = pw.agreement->n_items;
            p["percent_agreement"] = pw.agreement->percent_agreement;
            if (pw.agreement->cohens_kappa) p["cohens_kappa"] = *pw.agreement->cohens_kappa;
            else p["cohens_kappa"] = nullptr;
            p["confusion"] = {{"both_yes", pw.agreement->both_yes},
                              {"both_no", pw.agreement->both_no},
                              {"only_a_yes", pw.agreement->only_a_yes},
                              {"only_b_yes", pw.agreement->only_b_yes}};
        }
        if (!pw.notice.empty()) p["notice"] = pw.notice;
        doc["pairs"].push_back(std::move(p));
    }
    doc["items_labeled"] = report.items_labeled;
    doc["items_endorsed"] = report.items_endorsed;
    if (report.extractor_accuracy) doc["extractor_accuracy"] = *report.extractor_accuracy;
    else doc["extractor_accuracy"] = nullptr;
    doc["notices"] = report.notices;

    const std::string text = doc.dump(2) + "\n";
    if (args.out_path.empty()) out << text;
    else report::write_file(args.out_path, text);
    return 0;
}

struct SynthArgs {
    std::string config_path;
    std::string kcdb;
    std::string out_dir = ".";
};

int cmd_synth_generate(const SynthArgs& args, const std::vector<std::string>& argv,
                       std::ostream& err) {
    const KCDatabase db = load_validated_db(args.kcdb, err);
    const auto cfg = synth::load_synth_config(args.config_path);
    const auto result = synth::generate(cfg, db);
    const auto expected = synth::expected_rates(cfg, static_cast<int>(db.kcs.size()));

    const fs::path out_dir(args.out_dir);
    const std::string cp_path = (out_dir / "checkpoints.jsonl").string();
    const std::string hint_path = (out_dir / "hints.jsonl").string();
    const std::string truth_path = (out_dir / "ground_truth.json").string();
    const std::string expect_path = (out_dir / "expectations.json").string();
    report::write_file(cp_path, result.checkpoints_jsonl);
    report::write_file(hint_path, result.hints_jsonl);
    report::write_file(truth_path, synth::ground_truth_to_json(result.truth));
    report::write_file(expect_path, synth::expected_rates_to_json(expected));
    report::write_manifest(args.out_dir,
                           make_manifest(argv, {args.config_path, args.kcdb},
                                         {cp_path, hint_path, truth_path, expect_path}));
    err << "generated " << result.truth.n_checkpoints << " checkpoints, "
        << result.truth.n_hints << " hints (" << result.truth.n_pairs << " pairs)\n";
    return 0;
}

struct ReportArgs {
    DatasetArgs dataset;
    std::string extractions;
    double idle_cap_seconds = 1200;
    std::string out_dir = ".";
};

int cmd_report(const ReportArgs& args, const std::vector<std::string>& argv,
               std::ostream& err) {
    const ingest::Dataset ds = load_dataset(args.dataset, err);
    const auto store = extraction::ExtractionStore::load_jsonl(args.extractions, ds.db);

    const auto built = progression::build_pairs(ds, store, args.idle_cap_seconds);
    const auto aggregates = progression::aggregate_rq1(built.pairs, ds.term_label);
    const auto evaluated = hintmetrics::evaluate_hints(ds, store);
    const auto rq2 = hintmetrics::group_by_length(evaluated.evaluations,
                                                  hintmetrics::Metric::Top3);
    const auto rq3 = hintmetrics::group_by_length(evaluated.evaluations,
                                                  hintmetrics::Metric::Resolved);

    const fs::path out_dir(args.out_dir);
    std::vector<std::string> outputs;

    const auto absolute = report::render_stacked_bars(aggregates, report::Mode::Absolute);
    const auto proportional =
        report::render_stacked_bars(aggregates, report::Mode::Proportional);
    if (absolute) {
        const std::string p = (out_dir / "rq1_absolute.svg").string();
        report::write_file(p, *absolute);
        outputs.push_back(p);
    } else {
        err << "notice: no rq1 aggregates; stacked-bar charts skipped\n";
    }
    if (proportional) {
        const std::string p = (out_dir / "rq1_proportional.svg").string();
        report::write_file(p, *proportional);
        outputs.push_back(p);
    }
    {
        const std::string p = (out_dir / "rq2_top3.svg").string();
        report::write_file(
            p, report::render_grouped_bars(
                   rq2, "Hints addressing a top-3 missing KC, by KC list length (" +
                            ds.term_label + ")"));
        outputs.push_back(p);
        const std::string q = (out_dir / "rq3_resolution.svg").string();
        report::write_file(
            q, report::render_grouped_bars(
                   rq3, "Hints addressing a next-step resolved KC, by KC list length (" +
                            ds.term_label + ")"));
        outputs.push_back(q);
    }
    report::write_manifest(args.out_dir,
                           make_manifest(argv,
                                         {args.dataset.checkpoints, args.dataset.hints,
                                          args.dataset.kcdb, args.extractions},
                                         outputs));
    return 0;
}

void add_dataset_options(CLI::App* cmd, DatasetArgs& args, bool hints_required) {
    cmd->add_option("--checkpoints", args.checkpoints, "checkpoint log (JSON Lines)")
        ->required();
    auto* hints = cmd->add_option("--hints", args.hints, "hint log (JSON Lines)");
    if (hints_required) hints->required();
    cmd->add_option("--kcdb", args.kcdb, "KC database (JSON)")->required();
    cmd->add_option("--term", args.term, "term label for this dataset");
    cmd->add_option("--linkage-window-seconds", args.window_seconds,
                    "hint-to-checkpoint linkage window");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge-component evaluation toolkit for AI programming-assistant hints"};
    app.name("kc-eval");
    app.set_version_flag("--version", std::string(kToolVersion));
    app.set_config("--config-file", "", "key-value file supplying any flag (flags win)");
    app.require_subcommand(1);

    int rc = 0;

    // ingest validate
    auto* ingest_cmd = app.add_subcommand("ingest", "parse and link logs");
    ingest_cmd->require_subcommand(1);
    auto validate_args = std::make_shared<DatasetArgs>();
    auto* validate_cmd =
        ingest_cmd->add_subcommand("validate", "parse logs and report counts and drops");
    add_dataset_options(validate_cmd, *validate_args, false);
    validate_cmd->callback(
        [&, validate_args] { rc = cmd_ingest_validate(*validate_args, out, err); });

    // extract code|hints|judge
    auto* extract_cmd = app.add_subcommand("extract", "run KC extraction");
    extract_cmd->require_subcommand(1);
    auto wire_extract = [&](const std::string& what, bool hints_required) {
        auto eargs = std::make_shared<ExtractArgs>();
        auto* cmd = extract_cmd->add_subcommand(
            what, what == "judge" ? "judge pass over an extraction store"
                                  : "extract KCs from " + what);
        add_dataset_options(cmd, eargs->dataset, hints_required);
        cmd->add_option("--config", eargs->config_path, "extractor config (JSON)");
        cmd->add_option("--cache", eargs->cache_override, "cache file override");
        cmd->add_option("--out", eargs->out_path, "output extraction store (JSONL)");
        if (what == "judge") {
            cmd->add_option("--extractions", eargs->extractions_in,
                            "input extraction store to judge")
                ->required();
        }
        cmd->callback([&, what, eargs] { rc = cmd_extract(what, *eargs, err); });
    };
    wire_extract("code", false);
    wire_extract("hints", true);
    wire_extract("judge", false);

    // analyze rq1|rq2|rq3
    auto* analyze_cmd = app.add_subcommand("analyze", "compute RQ metrics");
    analyze_cmd->require_subcommand(1);

    auto rq1_args = std::make_shared<Rq1Args>();
    auto* rq1_cmd = analyze_cmd->add_subcommand("rq1", "progression labels and aggregates");
    add_dataset_options(rq1_cmd, rq1_args->dataset, false);
    rq1_cmd->add_option("--extractions", rq1_args->extractions, "extraction store (JSONL)")
        ->required();
    rq1_cmd->add_option("--idle-cap-seconds", rq1_args->idle_cap_seconds,
                        "gaps above this carry no time");
    rq1_cmd->add_option("--baseline-checkpoints", rq1_args->baseline_checkpoints,
                        "baseline term checkpoint log");
    rq1_cmd->add_option("--baseline-extractions", rq1_args->baseline_extractions,
                        "baseline term extraction store");
    rq1_cmd->add_option("--baseline-term", rq1_args->baseline_term, "baseline term label");
    rq1_cmd->add_flag("--welch", rq1_args->welch, "Welch t-test instead of pooled");
    rq1_cmd->add_option("--out-dir", rq1_args->out_dir, "output directory");
    rq1_cmd->callback([&, rq1_args] {
        if (!rq1_args->baseline_checkpoints.empty() && rq1_args->baseline_extractions.empty()) {
            throw CLI::ValidationError("--baseline-extractions",
                                       "required when --baseline-checkpoints is given");
        }
        rc = cmd_analyze_rq1(*rq1_args, args, err);
    });

    auto wire_rq23 = [&](const std::string& name, hintmetrics::Metric metric) {
        auto rq_args = std::make_shared<Rq23Args>();
        auto* cmd = analyze_cmd->add_subcommand(
            name, metric == hintmetrics::Metric::Top3
                      ? "top-3 overlap between hint KCs and missing KCs"
                      : "hint KCs among subsequently resolved KCs");
        add_dataset_options(cmd, rq_args->dataset, true);
        cmd->add_option("--extractions", rq_args->extractions, "extraction store (JSONL)")
            ->required();
        cmd->add_option("--out-dir", rq_args->out_dir, "output directory");
        cmd->callback(
            [&, metric, rq_args] { rc = cmd_analyze_rq23(metric, *rq_args, args, err); });
    };
    wire_rq23("rq2", hintmetrics::Metric::Top3);
    wire_rq23("rq3", hintmetrics::Metric::Resolved);

    // sample-labels
    auto sample_args = std::make_shared<SampleArgs>();
    auto* sample_cmd =
        app.add_subcommand("sample-labels", "draw a blind expert-labeling sample");
    add_dataset_options(sample_cmd, sample_args->dataset, false);
    sample_cmd->add_option("--extractions", sample_args->extractions,
                           "extraction store (JSONL)")
        ->required();
    sample_cmd->add_option("--n", sample_args->n, "sample size");
    sample_cmd->add_option("--seed", sample_args->seed, "sampling seed");
    sample_cmd->add_option("--overlap", sample_args->overlap,
                           "fraction marked for joint labeling");
    sample_cmd->add_option("--out", sample_args->out_path, "output CSV path");
    sample_cmd->callback([&, sample_args] { rc = cmd_sample_labels(*sample_args, err); });

    // agreement
    auto agreement_args = std::make_shared<AgreementArgs>();
    auto* agreement_cmd =
        app.add_subcommand("agreement", "score rater files against a labeling sample");
    agreement_cmd
        ->add_option("--sample", agreement_args->sample_path, "labeling sample CSV")
        ->required();
    agreement_cmd
        ->add_option("--rater", agreement_args->rater_paths,
                     "rater CSV with verdicts (repeatable)")
        ->required();
    agreement_cmd->add_option("--out", agreement_args->out_path,
                              "write the JSON report here instead of stdout");
    agreement_cmd->callback([&, agreement_args] { rc = cmd_agreement(*agreement_args, out); });

    // synth generate
    auto* synth_cmd = app.add_subcommand("synth", "synthetic cohorts with planted truth");
    synth_cmd->require_subcommand(1);
    auto synth_args = std::make_shared<SynthArgs>();
    auto* generate_cmd = synth_cmd->add_subcommand("generate", "emit logs and ground truth");
    generate_cmd->add_option("--config", synth_args->config_path, "synth config (JSON)")
        ->required();
    generate_cmd->add_option("--kcdb", synth_args->kcdb, "KC database (JSON)")->required();
    generate_cmd->add_option("--out-dir", synth_args->out_dir, "output directory");
    generate_cmd->callback(
        [&, synth_args] { rc = cmd_synth_generate(*synth_args, args, err); });

    // report
    auto report_args = std::make_shared<ReportArgs>();
    auto* report_cmd = app.add_subcommand("report", "render SVG figures");
    add_dataset_options(report_cmd, report_args->dataset, true);
    report_cmd->add_option("--extractions", report_args->extractions,
                           "extraction store (JSONL)")
        ->required();
    report_cmd->add_option("--idle-cap-seconds", report_args->idle_cap_seconds,
                           "gaps above this carry no time");
    report_cmd->add_option("--out-dir", report_args->out_dir, "output directory");
    report_cmd->callback([&, report_args] { rc = cmd_report(*report_args, args, err); });

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "kc-eval: " << e.what() << "\n";
        err << "run 'kc-eval --help' for usage\n";
        return 1;
    } catch (const InputError& e) {
        err << "kc-eval: " << e.what() << "\n";
        return 1;
    } catch (const InternalError& e) {
        err << "kc-eval: internal error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "kc-eval: internal error: " << e.what() << "\n";
        return 2;
    }
    return rc;
}

}  // namespace kceval::cli
