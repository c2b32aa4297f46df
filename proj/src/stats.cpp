#include "kceval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "kceval/csv.hpp"
#include "kceval/rng.hpp"

namespace kceval::stats {

double mean(std::span<const double> xs) {
    double s = 0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) throw InputError("sample_sd requires at least two values");
    const double m = mean(xs);
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace {

// Lentz's continued fraction for the incomplete beta, as in the classic
// numerical literature.
double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 1e-15;
    constexpr double fpmin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0) || !(b > 0)) throw InputError("incomplete beta requires a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
    if (!(dof > 0)) throw InputError("t distribution requires dof > 0");
    if (std::isinf(t)) return 0.0;
    const double x = dof / (dof + t * t);
    return regularized_incomplete_beta(dof / 2.0, 0.5, x);
}

double effect_size_r(double t, double dof) {
    if (std::isinf(t)) return 1.0;
    return std::sqrt(t * t / (t * t + dof));
}

TTestResult two_sample_t(std::span<const double> a, std::span<const double> b,
                         TVariant variant) {
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    if (a.size() < 2 || b.size() < 2) {
        throw InputError("two_sample_t requires at least two values per sample");
    }
    const double ma = mean(a);
    const double mb = mean(b);
    const double sda = sample_sd(a);
    const double sdb = sample_sd(b);
    const double va = sda * sda;
    const double vb = sdb * sdb;

    TTestResult r;
    r.variant = variant;
    if (variant == TVariant::Pooled) {
        r.dof = na + nb - 2.0;
        const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / r.dof;
        if (pooled == 0.0) {
            if (ma == mb) {
                r.t = 0.0;
                r.p_two_sided = 1.0;
                r.effect_size_r = 0.0;
            } else {
                r.t = ma > mb ? std::numeric_limits<double>::infinity()
                              : -std::numeric_limits<double>::infinity();
                r.p_two_sided = 0.0;
                r.effect_size_r = 1.0;
            }
            return r;
        }
        const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
        r.t = (ma - mb) / se;
    } else {
        const double sea = va / na;
        const double seb = vb / nb;
        const double se2 = sea + seb;
        if (se2 == 0.0) {
            r.dof = na + nb - 2.0;
            if (ma == mb) {
                r.t = 0.0;
                r.p_two_sided = 1.0;
                r.effect_size_r = 0.0;
            } else {
                r.t = ma > mb ? std::numeric_limits<double>::infinity()
                              : -std::numeric_limits<double>::infinity();
                r.p_two_sided = 0.0;
                r.effect_size_r = 1.0;
            }
            return r;
        }
        r.t = (ma - mb) / std::sqrt(se2);
        r.dof = se2 * se2 /
                (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
    }
    r.p_two_sided = student_t_two_sided_p(r.t, r.dof);
    r.effect_size_r = effect_size_r(r.t, r.dof);
    return r;
}

AgreementResult cohens_kappa(const std::vector<bool>& a, const std::vector<bool>& b) {
    if (a.size() != b.size()) throw InputError("cohens_kappa: rating lists differ in length");
    if (a.empty()) throw InputError("cohens_kappa: empty rating lists");

    AgreementResult res;
    res.n_items = static_cast<int>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] && b[i]) ++res.both_yes;
        else if (!a[i] && !b[i]) ++res.both_no;
        else if (a[i]) ++res.only_a_yes;
        else ++res.only_b_yes;
    }
    const double n = res.n_items;
    const double po = (res.both_yes + res.both_no) / n;
    res.percent_agreement = po;
    const double a_yes = (res.both_yes + res.only_a_yes) / n;
    const double b_yes = (res.both_yes + res.only_b_yes) / n;
    const double pe = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    if (pe >= 1.0) {
        res.cohens_kappa = std::nullopt;  // degenerate marginals
    } else {
        res.cohens_kappa = (po - pe) / (1.0 - pe);
    }
    return res;
}

double binomial_ci99_halfwidth(double p, double n) {
    constexpr double z99 = 2.5758293035489004;
    if (n <= 0) return 1.0;
    return z99 * std::sqrt(std::max(p * (1.0 - p), 0.0) / n);
}

// ---------------------------------------------------------------------------
// Labeling workflow
// ---------------------------------------------------------------------------

LabelingSample draw_labeling_sample(const std::vector<LabelingCandidate>& pool,
                                    int n, std::uint64_t seed, double overlap_fraction) {
    if (n <= 0) throw InputError("labeling sample size must be positive");
    if (static_cast<std::size_t>(n) > pool.size()) {
        throw InputError("labeling sample size " + std::to_string(n) +
                         " exceeds store size " + std::to_string(pool.size()));
    }
    if (overlap_fraction < 0 || overlap_fraction > 1) {
        throw InputError("overlap_fraction must lie in [0, 1]");
    }

    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    const auto picked = rng.sample_without_replacement(order, static_cast<std::size_t>(n));

    LabelingSample sample;
    sample.seed = seed;
    sample.joint_count = static_cast<int>(std::llround(overlap_fraction * n));
    for (int i = 0; i < n; ++i) {
        const auto& cand = pool[picked[static_cast<std::size_t>(i)]];
        LabelingItem item;
        char id[32];
        std::snprintf(id, sizeof(id), "item-%04d", i + 1);
        item.item_id = id;
        item.subject_kind = cand.subject_kind;
        item.subject_text = cand.subject_text;
        item.kc_ids = cand.kc_ids;
        item.joint = i < sample.joint_count;
        sample.items.push_back(std::move(item));
    }
    return sample;
}

std::string labeling_sample_to_csv(const LabelingSample& sample) {
    std::string out = csv_row({"item_id", "subject_kind", "subject_text",
                               "kc_list", "joint_flag", "verdict"});
    for (const auto& item : sample.items) {
        std::string kc_list;
        for (std::size_t i = 0; i < item.kc_ids.size(); ++i) {
            if (i) kc_list += ';';
            kc_list += item.kc_ids[i];
        }
        out += csv_row({item.item_id, to_string(item.subject_kind), item.subject_text,
                        kc_list, item.joint ? "joint" : "solo", ""});
    }
    return out;
}

LabelingSample labeling_sample_from_csv(const std::string& csv_text) {
    const auto rows = parse_csv(csv_text);
    if (rows.empty()) throw InputError("labeling sample CSV is empty");
    LabelingSample sample;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() < 5) throw InputError("labeling sample CSV: short row");
        LabelingItem item;
        item.item_id = row[0];
        const auto kind = subject_kind_from_string(row[1]);
        if (!kind) throw InputError("labeling sample CSV: bad subject_kind '" + row[1] + "'");
        item.subject_kind = *kind;
        item.subject_text = row[2];
        std::string id;
        for (char c : row[3]) {
            if (c == ';') {
                if (!id.empty()) item.kc_ids.push_back(id);
                id.clear();
            } else {
                id += c;
            }
        }
        if (!id.empty()) item.kc_ids.push_back(id);
        item.joint = row[4] == "joint";
        if (item.joint) ++sample.joint_count;
        sample.items.push_back(std::move(item));
    }
    return sample;
}

RaterFile load_rater_csv(const std::string& name, const std::string& csv_text) {
    const auto rows = parse_csv(csv_text);
    if (rows.empty()) throw InputError("rater file '" + name + "' is empty");
    const auto& header = rows[0];
    std::size_t id_col = 0;
    std::size_t verdict_col = std::string::npos;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "item_id") id_col = c;
        if (header[c] == "verdict") verdict_col = c;
    }
    if (verdict_col == std::string::npos) {
        throw InputError("rater file '" + name + "' lacks a verdict column");
    }
    RaterFile rf;
    rf.name = name;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() <= std::max(id_col, verdict_col)) continue;
        const std::string& verdict = row[verdict_col];
        if (verdict.empty()) continue;  // unlabeled item
        if (verdict == "agree") {
            rf.verdicts.emplace_back(row[id_col], true);
        } else if (verdict == "disagree") {
            rf.verdicts.emplace_back(row[id_col], false);
        } else {
            throw InputError("rater file '" + name + "': verdict '" + verdict +
                             "' is not agree/disagree");
        }
    }
    return rf;
}

ScoreReport score_labels(const LabelingSample& sample, const std::vector<RaterFile>& raters) {
    std::set<std::string> known_ids;
    std::set<std::string> joint_ids;
    for (const auto& item : sample.items) {
        known_ids.insert(item.item_id);
        if (item.joint) joint_ids.insert(item.item_id);
    }

    std::vector<std::string> unknown;
    for (const auto& rf : raters) {
        for (const auto& [id, verdict] : rf.verdicts) {
            (void)verdict;
            if (!known_ids.count(id)) unknown.push_back(rf.name + ":" + id);
        }
    }
    if (!unknown.empty()) {
        std::string msg = "unknown item ids:";
        for (const auto& u : unknown) msg += " " + u;
        throw InputError(msg);
    }

    std::vector<std::map<std::string, bool>> verdict_maps;
    for (const auto& rf : raters) {
        std::map<std::string, bool> m;
        for (const auto& [id, v] : rf.verdicts) m[id] = v;
        verdict_maps.push_back(std::move(m));
    }

    ScoreReport report;
    for (std::size_t i = 0; i < raters.size(); ++i) {
        for (std::size_t j = i + 1; j < raters.size(); ++j) {
            PairwiseAgreement pw;
            pw.rater_a = raters[i].name;
            pw.rater_b = raters[j].name;
            std::vector<bool> va, vb;
            for (const auto& id : joint_ids) {
                const auto ia = verdict_maps[i].find(id);
                const auto ib = verdict_maps[j].find(id);
                if (ia != verdict_maps[i].end() && ib != verdict_maps[j].end()) {
                    va.push_back(ia->second);
                    vb.push_back(ib->second);
                }
            }
            pw.joint_covered = static_cast<int>(va.size());
            if (va.empty()) {
                pw.notice = "no jointly labeled items shared by " + pw.rater_a + " and " +
                            pw.rater_b + "; kappa skipped";
                report.notices.push_back(pw.notice);
            } else {
                pw.agreement = cohens_kappa(va, vb);
            }
            report.pairs.push_back(std::move(pw));
        }
    }

    // Item-level endorsement, each item counted once across raters.
    for (const auto& item : sample.items) {
        bool labeled = false;
        bool endorsed = true;
        for (const auto& m : verdict_maps) {
            const auto it = m.find(item.item_id);
            if (it != m.end()) {
                labeled = true;
                endorsed = endorsed && it->second;
            }
        }
        if (labeled) {
            ++report.items_labeled;
            if (endorsed) ++report.items_endorsed;
        }
    }
    if (report.items_labeled > 0) {
        report.extractor_accuracy =
            static_cast<double>(report.items_endorsed) / report.items_labeled;
    }
    return report;
}

}  // namespace kceval::stats
