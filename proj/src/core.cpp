#include "kceval/core.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace kceval {

using nlohmann::json;

const KnowledgeComponent* KCDatabase::find(const std::string& kc_id) const {
    if (kc_id.empty()) return nullptr;
    for (const auto& kc : kcs) {
        if (kc.kc_id == kc_id) return &kc;
    }
    return nullptr;
}

bool KCDatabase::contains(const std::string& kc_id) const {
    return find(kc_id) != nullptr;
}

std::vector<ValidationFinding> validate_database(const KCDatabase& db) {
    std::vector<ValidationFinding> findings;
    const std::set<std::string> categories(db.categories.begin(), db.categories.end());

    std::unordered_set<std::string> seen;
    std::unordered_set<std::string> reported_dup;
    for (const auto& kc : db.kcs) {
        if (kc.kc_id.empty()) {
            findings.push_back({Severity::Error, "empty kc_id (name: '" + kc.name + "')"});
            continue;
        }
        if (!seen.insert(kc.kc_id).second) {
            if (reported_dup.insert(kc.kc_id).second) {
                findings.push_back({Severity::Error, "duplicate kc_id " + kc.kc_id});
            }
            continue;
        }
        if (kc.category.empty()) {
            findings.push_back({Severity::Error, "kc " + kc.kc_id + ": empty category"});
        } else if (!categories.count(kc.category)) {
            findings.push_back({Severity::Error, "kc " + kc.kc_id + ": category '" +
                                                     kc.category + "' not in category list"});
        }
    }

    {
        std::set<std::string> cat_seen;
        for (const auto& c : db.categories) {
            if (!cat_seen.insert(c).second) {
                findings.push_back({Severity::Error, "duplicate category '" + c + "'"});
            }
        }
    }

    const auto n_kcs = db.kcs.size();
    if (n_kcs < 30 || n_kcs > 40) {
        findings.push_back({Severity::Warning,
                            "kc count " + std::to_string(n_kcs) +
                                " outside the expected 30-40 range"});
    }
    const auto n_cats = db.categories.size();
    if (n_cats < 7 || n_cats > 9) {
        findings.push_back({Severity::Warning,
                            "category count " + std::to_string(n_cats) +
                                " outside the expected 7-9 range"});
    }
    return findings;
}

const KnowledgeComponent* lookup_kc(const KCDatabase& db, const std::string& kc_id) {
    return db.find(kc_id);
}

namespace {

std::string require_string(const json& obj, const char* key, const char* where) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw InputError(std::string(where) + ": missing or non-string field '" + key + "'");
    }
    return it->get<std::string>();
}

std::vector<std::string> string_list(const json& value, const char* where) {
    if (!value.is_array()) throw InputError(std::string(where) + ": expected an array");
    std::vector<std::string> out;
    for (const auto& v : value) {
        if (!v.is_string()) throw InputError(std::string(where) + ": expected string entries");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

KCDatabase kcdb_from_json(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InputError(std::string("kc database: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw InputError("kc database: top level must be an object");

    KCDatabase db;
    db.assignment_id = require_string(doc, "assignment_id", "kc database");
    if (!doc.contains("categories")) throw InputError("kc database: missing 'categories'");
    db.categories = string_list(doc["categories"], "kc database categories");
    if (!doc.contains("kcs") || !doc["kcs"].is_array()) {
        throw InputError("kc database: missing 'kcs' array");
    }
    for (const auto& item : doc["kcs"]) {
        if (!item.is_object()) throw InputError("kc database: kc entries must be objects");
        KnowledgeComponent kc;
        kc.kc_id = require_string(item, "kc_id", "kc entry");
        kc.name = require_string(item, "name", "kc entry");
        kc.description = require_string(item, "description", "kc entry");
        kc.category = require_string(item, "category", "kc entry");
        if (item.contains("stub_rules")) {
            const auto& rules = item["stub_rules"];
            if (!rules.is_object()) throw InputError("kc entry: stub_rules must be an object");
            StubRules sr;
            if (rules.contains("missing_if_absent")) {
                sr.missing_if_absent = string_list(rules["missing_if_absent"], "stub_rules");
            }
            if (rules.contains("missing_if_present")) {
                sr.missing_if_present = string_list(rules["missing_if_present"], "stub_rules");
            }
            kc.stub_rules = std::move(sr);
        }
        db.kcs.push_back(std::move(kc));
    }
    return db;
}

KCDatabase load_kcdb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read kc database: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return kcdb_from_json(buf.str());
}

std::string kcdb_to_json(const KCDatabase& db) {
    json doc;
    doc["assignment_id"] = db.assignment_id;
    doc["categories"] = db.categories;
    doc["kcs"] = json::array();
    for (const auto& kc : db.kcs) {
        json item;
        item["kc_id"] = kc.kc_id;
        item["name"] = kc.name;
        item["description"] = kc.description;
        item["category"] = kc.category;
        if (kc.stub_rules) {
            item["stub_rules"] = {
                {"missing_if_absent", kc.stub_rules->missing_if_absent},
                {"missing_if_present", kc.stub_rules->missing_if_present},
            };
        }
        doc["kcs"].push_back(std::move(item));
    }
    return doc.dump(2) + "\n";
}

const char* to_string(SubjectKind kind) {
    return kind == SubjectKind::Code ? "code" : "hint";
}

std::optional<SubjectKind> subject_kind_from_string(const std::string& s) {
    if (s == "code") return SubjectKind::Code;
    if (s == "hint") return SubjectKind::Hint;
    return std::nullopt;
}

}  // namespace kceval
