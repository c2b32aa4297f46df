#include "kceval/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kceval/extraction.hpp"
#include "kceval/rng.hpp"

namespace kceval::synth {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

double probability_field(const json& doc, const char* key, double fallback) {
    if (!doc.contains(key)) return fallback;
    const double v = doc[key].get<double>();
    if (v < 0 || v > 1) {
        throw InputError(std::string("synth config: ") + key + " must lie in [0, 1]");
    }
    return v;
}

}  // namespace

SynthConfig synth_config_from_json(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InputError(std::string("synth config: invalid JSON: ") + e.what());
    }
    SynthConfig cfg;
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("n_students")) cfg.n_students = doc["n_students"].get<int>();
    if (cfg.n_students < 1) throw InputError("synth config: n_students must be >= 1");
    if (doc.contains("problems")) {
        cfg.problems.clear();
        for (const auto& p : doc["problems"]) {
            ProblemSpec spec;
            spec.problem_id = p.at("problem_id").get<std::string>();
            const auto& range = p.at("initial_missing");
            spec.initial_missing_lo = range.at(0).get<int>();
            spec.initial_missing_hi = range.at(1).get<int>();
            if (spec.initial_missing_lo < 0 ||
                spec.initial_missing_hi < spec.initial_missing_lo) {
                throw InputError("synth config: bad initial_missing range for " +
                                 spec.problem_id);
            }
            cfg.problems.push_back(std::move(spec));
        }
    }
    if (cfg.problems.empty()) throw InputError("synth config: at least one problem required");
    cfg.p_resolve = probability_field(doc, "p_resolve", cfg.p_resolve);
    cfg.p_regress = probability_field(doc, "p_regress", cfg.p_regress);
    cfg.hint_rate = probability_field(doc, "hint_rate", cfg.hint_rate);
    cfg.q_top3 = probability_field(doc, "q_top3", cfg.q_top3);
    if (doc.contains("hint_length_weights")) {
        cfg.hint_length_weights.clear();
        for (const auto& w : doc["hint_length_weights"]) {
            const double v = w.get<double>();
            if (v < 0) throw InputError("synth config: negative hint length weight");
            cfg.hint_length_weights.push_back(v);
        }
    }
    double weight_sum = 0;
    for (double w : cfg.hint_length_weights) weight_sum += w;
    if (cfg.hint_length_weights.empty() || weight_sum <= 0) {
        throw InputError("synth config: hint_length_weights need positive mass");
    }
    if (doc.contains("gap_seconds")) {
        cfg.gap_lo_seconds = doc["gap_seconds"].at(0).get<double>();
        cfg.gap_hi_seconds = doc["gap_seconds"].at(1).get<double>();
    }
    if (cfg.gap_lo_seconds < 1 || cfg.gap_hi_seconds < cfg.gap_lo_seconds) {
        throw InputError("synth config: gap_seconds must satisfy 1 <= lo <= hi");
    }
    if (doc.contains("max_checkpoints")) cfg.max_checkpoints = doc["max_checkpoints"].get<int>();
    if (cfg.max_checkpoints < 1) throw InputError("synth config: max_checkpoints must be >= 1");
    if (doc.contains("term_label")) cfg.term_label = doc["term_label"].get<std::string>();
    return cfg;
}

SynthConfig load_synth_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read synth config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return synth_config_from_json(buf.str());
}

// ---------------------------------------------------------------------------
// Database pre-checks for exact planting
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCodeHeader = "# autograder snapshot";
constexpr const char* kHintPrefix = "Focus on: ";
constexpr const char* kHintJoiner = "; ";
constexpr const char* kHintSuffix = ".";

std::vector<std::string> match_tokens(const KnowledgeComponent& kc) {
    std::vector<std::string> tokens{kc.name};
    if (kc.stub_rules) {
        for (const auto& p : kc.stub_rules->missing_if_absent) tokens.push_back(p);
        for (const auto& p : kc.stub_rules->missing_if_present) tokens.push_back(p);
    }
    return tokens;
}

bool contains(const std::string& haystack, const std::string& needle) {
    return !needle.empty() && haystack.find(needle) != std::string::npos;
}

// The generator plants ground truth by emitting exact pattern literals; any
// accidental substring match between KC materials would corrupt the plants,
// so the database is vetted up front.
void check_database(const KCDatabase& db, const SynthConfig& config) {
    if (db.kcs.empty()) throw InputError("synth: kc database is empty");

    const int max_len = static_cast<int>(config.hint_length_weights.size());
    if (static_cast<int>(db.kcs.size()) < max_len + 3) {
        throw InputError("synth: database needs at least " + std::to_string(max_len + 3) +
                         " KCs to plant hints of length " + std::to_string(max_len));
    }
    for (const auto& p : config.problems) {
        if (p.initial_missing_hi > static_cast<int>(db.kcs.size())) {
            throw InputError("synth: initial_missing range for " + p.problem_id +
                             " exceeds database size");
        }
    }

    for (const auto& kc : db.kcs) {
        if (!kc.stub_rules || kc.stub_rules->missing_if_absent.empty()) {
            throw InputError("synth: kc " + kc.kc_id +
                             " lacks missing_if_absent stub rules; exact planting "
                             "needs a presence literal per KC");
        }
        for (const auto& token : match_tokens(kc)) {
            if (token.empty() || token.find('\n') != std::string::npos) {
                throw InputError("synth: kc " + kc.kc_id +
                                 " has an empty or multi-line stub token");
            }
        }
    }

    const std::vector<std::string> fixed = {kCodeHeader, kHintPrefix, kHintJoiner, kHintSuffix};
    for (const auto& kc : db.kcs) {
        for (const auto& token : match_tokens(kc)) {
            for (const auto& f : fixed) {
                if (contains(f, token)) {
                    throw InputError("synth: token '" + token + "' of kc " + kc.kc_id +
                                     " collides with generator fixed text");
                }
            }
        }
    }

    for (const auto& a : db.kcs) {
        for (const auto& b : db.kcs) {
            if (a.kc_id == b.kc_id) continue;
            // No token of a may fire inside material emitted for b.
            for (const auto& token : match_tokens(a)) {
                if (contains(b.name, token)) {
                    throw InputError("synth: token '" + token + "' of kc " + a.kc_id +
                                     " occurs in the name of kc " + b.kc_id);
                }
                for (const auto& lit : b.stub_rules->missing_if_absent) {
                    if (contains(lit, token)) {
                        throw InputError("synth: token '" + token + "' of kc " + a.kc_id +
                                         " occurs in a literal of kc " + b.kc_id);
                    }
                }
            }
        }
        // A KC's own missing_if_present literal must never appear in code it
        // is present in; its own presence literals are emitted, so check
        // against them and the header.
        if (a.stub_rules) {
            for (const auto& mip : a.stub_rules->missing_if_present) {
                if (contains(kCodeHeader, mip)) {
                    throw InputError("synth: missing_if_present literal '" + mip +
                                     "' of kc " + a.kc_id + " collides with the code header");
                }
                for (const auto& mia : a.stub_rules->missing_if_absent) {
                    if (contains(mia, mip)) {
                        throw InputError("synth: kc " + a.kc_id +
                                         " has a missing_if_present literal inside its own "
                                         "presence literal");
                    }
                }
            }
        }
    }
}

std::string build_code(const KCDatabase& db, const std::vector<bool>& missing) {
    std::string code = std::string(kCodeHeader) + "\n";
    for (std::size_t i = 0; i < db.kcs.size(); ++i) {
        if (missing[i]) continue;
        for (const auto& lit : db.kcs[i].stub_rules->missing_if_absent) {
            code += lit;
            code += '\n';
        }
    }
    return code;
}

std::string build_hint_text(const KCDatabase& db, const std::vector<int>& addressed) {
    std::string text = kHintPrefix;
    for (std::size_t i = 0; i < addressed.size(); ++i) {
        if (i) text += kHintJoiner;
        text += db.kcs[static_cast<std::size_t>(addressed[i])].name;
    }
    text += kHintSuffix;
    return text;
}

std::vector<std::string> ids_for(const KCDatabase& db, const std::vector<int>& indices) {
    std::vector<std::string> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(db.kcs[static_cast<std::size_t>(i)].kc_id);
    return out;
}

std::string pad4(int v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

SynthResult generate(const SynthConfig& config, const KCDatabase& db) {
    check_database(db, config);

    const auto base_ts = parse_rfc3339("2024-02-05T09:00:00Z");
    const int n_kcs = static_cast<int>(db.kcs.size());
    extraction::StubBackend stub(db);
    Rng rng(config.seed);

    SynthResult result;
    std::string& cp_out = result.checkpoints_jsonl;
    std::string& hint_out = result.hints_jsonl;
    GroundTruth& truth = result.truth;

    std::vector<int> all_indices(static_cast<std::size_t>(n_kcs));
    for (int i = 0; i < n_kcs; ++i) all_indices[static_cast<std::size_t>(i)] = i;

    for (std::size_t pi = 0; pi < config.problems.size(); ++pi) {
        const auto& problem = config.problems[pi];
        for (int si = 0; si < config.n_students; ++si) {
            const std::string student_id = "s" + pad4(si + 1);
            EpochSeconds ts = *base_ts + static_cast<EpochSeconds>(si) * 521 +
                              static_cast<EpochSeconds>(pi) * 131071;

            const int lo = problem.initial_missing_lo;
            const int hi = problem.initial_missing_hi;
            const int k0 = lo + static_cast<int>(rng.bounded(
                                    static_cast<std::uint64_t>(hi - lo + 1)));

            std::vector<bool> missing(static_cast<std::size_t>(n_kcs), false);
            std::vector<bool> resolved(static_cast<std::size_t>(n_kcs), false);
            for (int idx : rng.sample_without_replacement(all_indices,
                                                          static_cast<std::size_t>(k0))) {
                missing[static_cast<std::size_t>(idx)] = true;
            }

            struct PendingHint {
                std::size_t truth_index;
                std::vector<int> addressed;
            };

            int step = 1;
            for (;;) {
                std::vector<int> missing_idx;
                for (int i = 0; i < n_kcs; ++i) {
                    if (missing[static_cast<std::size_t>(i)]) missing_idx.push_back(i);
                }
                const int m = static_cast<int>(missing_idx.size());

                const std::string checkpoint_id =
                    "c-" + problem.problem_id + "-" + student_id + "-" + pad4(step);
                const std::string code = build_code(db, missing);
                const auto planted_ids = ids_for(db, missing_idx);

                // The plants must round-trip through the stub exactly.
                if (stub.missing_kcs_for_code(code) != planted_ids) {
                    throw InternalError("synth: stub extraction diverged from plants at " +
                                        checkpoint_id);
                }

                json row;
                row["checkpoint_id"] = checkpoint_id;
                row["student_id"] = student_id;
                row["assignment_id"] = db.assignment_id;
                row["problem_id"] = problem.problem_id;
                row["timestamp"] = format_rfc3339(ts);
                row["code"] = code;
                cp_out += row.dump();
                cp_out += '\n';
                truth.missing_by_checkpoint[checkpoint_id] = planted_ids;
                ++truth.n_checkpoints;

                std::optional<PendingHint> pending;
                if (m > 0 && rng.bernoulli(config.hint_rate)) {
                    const int length =
                        1 + static_cast<int>(rng.weighted_index(config.hint_length_weights));
                    const bool branch_hit = rng.bernoulli(config.q_top3);

                    const int top = std::min(3, m);
                    std::vector<int> top3(missing_idx.begin(), missing_idx.begin() + top);
                    std::vector<int> outside;
                    for (int i = 0; i < n_kcs; ++i) {
                        if (std::find(top3.begin(), top3.end(), i) == top3.end()) {
                            outside.push_back(i);
                        }
                    }

                    std::vector<int> addressed;
                    if (branch_hit) {
                        addressed.push_back(
                            top3[static_cast<std::size_t>(rng.bounded(
                                static_cast<std::uint64_t>(top)))]);
                        for (int idx : rng.sample_without_replacement(
                                 outside, static_cast<std::size_t>(length - 1))) {
                            addressed.push_back(idx);
                        }
                    } else {
                        addressed = rng.sample_without_replacement(
                            outside, static_cast<std::size_t>(length));
                    }
                    std::sort(addressed.begin(), addressed.end());

                    const std::string hint_id =
                        "h-" + problem.problem_id + "-" + student_id + "-" + pad4(step);
                    const std::string hint_text = build_hint_text(db, addressed);
                    const auto addressed_ids = ids_for(db, addressed);
                    if (stub.addressed_kcs_for_hint(hint_text) != addressed_ids) {
                        throw InternalError("synth: stub hint extraction diverged at " +
                                            hint_id);
                    }

                    json hrow;
                    hrow["hint_id"] = hint_id;
                    hrow["student_id"] = student_id;
                    hrow["assignment_id"] = db.assignment_id;
                    hrow["problem_id"] = problem.problem_id;
                    hrow["timestamp"] = format_rfc3339(ts + 5);
                    hrow["hint_text"] = hint_text;
                    hrow["checkpoint_ref"] = checkpoint_id;
                    hint_out += hrow.dump();
                    hint_out += '\n';

                    HintTruth ht;
                    ht.hint_id = hint_id;
                    ht.checkpoint_ref = checkpoint_id;
                    ht.addressed = addressed_ids;
                    ht.length = length;
                    ht.top3_hit = branch_hit;
                    truth.hints.push_back(std::move(ht));
                    ++truth.n_hints;
                    pending = PendingHint{truth.hints.size() - 1, addressed};
                }

                if (m == 0 || step == config.max_checkpoints) break;

                // Transition: resolve then regress, independent per KC.
                std::vector<int> just_resolved;
                for (int idx : missing_idx) {
                    if (rng.bernoulli(config.p_resolve)) just_resolved.push_back(idx);
                }
                std::vector<int> rebroken;
                for (int i = 0; i < n_kcs; ++i) {
                    if (resolved[static_cast<std::size_t>(i)] &&
                        rng.bernoulli(config.p_regress)) {
                        rebroken.push_back(i);
                    }
                }
                for (int idx : just_resolved) {
                    missing[static_cast<std::size_t>(idx)] = false;
                    resolved[static_cast<std::size_t>(idx)] = true;
                }
                for (int idx : rebroken) {
                    resolved[static_cast<std::size_t>(idx)] = false;
                    missing[static_cast<std::size_t>(idx)] = true;
                }

                if (pending) {
                    bool hit = false;
                    for (int idx : pending->addressed) {
                        if (std::find(just_resolved.begin(), just_resolved.end(), idx) !=
                            just_resolved.end()) {
                            hit = true;
                            break;
                        }
                    }
                    truth.hints[pending->truth_index].resolved_hit = hit;
                }

                const auto gap = static_cast<EpochSeconds>(
                    std::llround(rng.uniform(config.gap_lo_seconds, config.gap_hi_seconds)));
                ts += std::max<EpochSeconds>(gap, 1);
                ++truth.n_pairs;
                ++step;
            }
        }
    }
    return result;
}

std::string ground_truth_to_json(const GroundTruth& truth) {
    json doc;
    doc["n_checkpoints"] = truth.n_checkpoints;
    doc["n_hints"] = truth.n_hints;
    doc["n_pairs"] = truth.n_pairs;
    doc["missing_by_checkpoint"] = json::object();
    for (const auto& [id, kcs] : truth.missing_by_checkpoint) {
        doc["missing_by_checkpoint"][id] = kcs;
    }
    doc["hints"] = json::array();
    for (const auto& h : truth.hints) {
        json item;
        item["hint_id"] = h.hint_id;
        item["checkpoint_ref"] = h.checkpoint_ref;
        item["addressed"] = h.addressed;
        item["length"] = h.length;
        item["top3_hit"] = h.top3_hit;
        if (h.resolved_hit) item["resolved_hit"] = *h.resolved_hit;
        else item["resolved_hit"] = nullptr;
        doc["hints"].push_back(std::move(item));
    }
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Expected rates by exact enumeration
// ---------------------------------------------------------------------------

namespace {

double binom_pmf(int n, int k, double p) {
    if (k < 0 || k > n) return 0.0;
    if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return k == n ? 1.0 : 0.0;
    const double log_choose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                              std::lgamma(n - k + 1.0);
    return std::exp(log_choose + k * std::log(p) + (n - k) * std::log1p(-p));
}

double hyper_pmf(int pop, int succ, int draws, int h) {
    if (h < 0 || h > succ || h > draws || draws - h > pop - succ) return 0.0;
    const auto log_choose = [](int n, int k) {
        return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    };
    return std::exp(log_choose(succ, h) + log_choose(pop - succ, draws - h) -
                    log_choose(pop, draws));
}

}  // namespace

ExpectedRates expected_rates(const SynthConfig& config, int n_db_kcs) {
    ExpectedRates rates;
    rates.rq2_overall = config.q_top3;

    const int n_lengths = static_cast<int>(config.hint_length_weights.size());
    double weight_sum = 0;
    for (double w : config.hint_length_weights) weight_sum += w;

    // P(resolution hit | m missing, hint length L): the planted top-3 pick is
    // missing for sure in the hit branch; extras overlap the rest of the
    // missing set hypergeometrically; each overlapping KC resolves
    // independently at the next step.
    const auto p_hit_given = [&](int m, int length) {
        const int top = std::min(3, m);
        const int rest = m - top;
        const int pool = n_db_kcs - top;
        const double keep = 1.0 - config.p_resolve;  // chance one missing KC stays
        double p_hit_branch = 0;
        for (int h = 0; h <= std::min(rest, length - 1); ++h) {
            p_hit_branch += hyper_pmf(pool, rest, length - 1, h) *
                            (1.0 - std::pow(keep, 1 + h));
        }
        double p_miss_branch = 0;
        for (int h = 0; h <= std::min(rest, length); ++h) {
            p_miss_branch += hyper_pmf(pool, rest, length, h) *
                             (1.0 - std::pow(keep, h));
        }
        return config.q_top3 * p_hit_branch + (1.0 - config.q_top3) * p_miss_branch;
    };

    double e_green = 0, e_yellow = 0, e_red = 0;
    double e_hints = 0, e_rq3_hints = 0, e_rq3_hits = 0;
    std::array<double, 5> bucket_hits{};
    std::array<double, 5> bucket_totals{};

    for (const auto& problem : config.problems) {
        const int lo = problem.initial_missing_lo;
        const int hi = problem.initial_missing_hi;
        const double k0_weight = 1.0 / (hi - lo + 1);
        for (int k0 = lo; k0 <= hi; ++k0) {
            if (k0 == 0) continue;  // single complete checkpoint, nothing to count
            std::vector<double> dist(static_cast<std::size_t>(k0) + 1, 0.0);
            dist[static_cast<std::size_t>(k0)] = 1.0;

            for (int i = 1; i <= config.max_checkpoints; ++i) {
                std::vector<double> next(static_cast<std::size_t>(k0) + 1, 0.0);
                for (int m = 1; m <= k0; ++m) {
                    const double mass = k0_weight * dist[static_cast<std::size_t>(m)];
                    if (mass <= 0) continue;

                    e_hints += mass * config.hint_rate;
                    if (i == config.max_checkpoints) continue;  // final checkpoint, no pair

                    e_rq3_hints += mass * config.hint_rate;
                    double p_hit_m = 0;
                    for (int len = 1; len <= n_lengths; ++len) {
                        const double w =
                            config.hint_length_weights[static_cast<std::size_t>(len - 1)] /
                            weight_sum;
                        const double ph = p_hit_given(m, len);
                        p_hit_m += w * ph;
                        const std::size_t bucket = static_cast<std::size_t>(std::min(len, 5) - 1);
                        bucket_totals[bucket] += mass * config.hint_rate * w;
                        bucket_hits[bucket] += mass * config.hint_rate * w * ph;
                    }
                    e_rq3_hits += mass * config.hint_rate * p_hit_m;

                    const int r = k0 - m;
                    for (int j = 0; j <= m; ++j) {
                        const double pj = binom_pmf(m, j, config.p_resolve);
                        if (pj <= 0) continue;
                        for (int k = 0; k <= r; ++k) {
                            const double pk = binom_pmf(r, k, config.p_regress);
                            const double pr = mass * pj * pk;
                            if (pr <= 0) continue;
                            if (j > k) e_green += pr;
                            else if (j == k) e_yellow += pr;
                            else e_red += pr;
                            next[static_cast<std::size_t>(m - j + k)] += pr / k0_weight;
                        }
                    }
                }
                dist.swap(next);
            }
        }
    }

    const double total_pairs = e_green + e_yellow + e_red;
    if (total_pairs > 0) {
        rates.green_share = e_green / total_pairs;
        rates.yellow_share = e_yellow / total_pairs;
        rates.red_share = e_red / total_pairs;
    }
    rates.expected_pairs_per_student = total_pairs;
    rates.expected_hints_per_student = e_hints;
    rates.expected_rq3_hints_per_student = e_rq3_hints;
    if (e_rq3_hints > 0) rates.rq3_overall = e_rq3_hits / e_rq3_hints;
    for (std::size_t b = 0; b < 5; ++b) {
        if (bucket_totals[b] > 0) rates.rq3_by_bucket[b] = bucket_hits[b] / bucket_totals[b];
    }
    return rates;
}

std::string expected_rates_to_json(const ExpectedRates& rates) {
    json doc;
    doc["rq1"] = {{"green_share", rates.green_share},
                  {"yellow_share", rates.yellow_share},
                  {"red_share", rates.red_share}};
    doc["rq2"] = {{"overall", rates.rq2_overall}};
    doc["rq3"] = json::object();
    doc["rq3"]["overall"] = rates.rq3_overall;
    doc["rq3"]["by_bucket"] = json::object();
    static const char* bucket_names[] = {"1", "2", "3", "4", "5+"};
    for (std::size_t b = 0; b < 5; ++b) {
        if (rates.rq3_by_bucket[b]) {
            doc["rq3"]["by_bucket"][bucket_names[b]] = *rates.rq3_by_bucket[b];
        }
    }
    doc["expected_per_student"] = {{"pairs", rates.expected_pairs_per_student},
                                   {"hints", rates.expected_hints_per_student},
                                   {"rq3_hints", rates.expected_rq3_hints_per_student}};
    return doc.dump(2) + "\n";
}

}  // namespace kceval::synth
