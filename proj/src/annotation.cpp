#include "stylesel/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "stylesel/errors.hpp"
#include "stylesel/text.hpp"

namespace stylesel {

using nlohmann::json;

const AnnotationEntry& AnnotationDictionary::at(int index) const {
    auto it = entries.find(index);
    if (it == entries.end()) {
        throw ValidationError("dictionary has no entry with index " + std::to_string(index));
    }
    return it->second;
}

namespace {

void validate_entry(const AnnotationEntry& e) {
    if (e.index < 1) {
        throw ValidationError("entry index must be >= 1, got " + std::to_string(e.index));
    }
    if (is_blank(e.description)) {
        throw ValidationError("entry " + std::to_string(e.index) + ": description is empty");
    }
    if (e.reference_id.empty()) {
        throw ValidationError("entry " + std::to_string(e.index) + ": reference_id is empty");
    }
    if (e.mean_phone_duration) {
        double d = *e.mean_phone_duration;
        if (!std::isfinite(d) || d <= 0.0) {
            throw ValidationError("entry " + std::to_string(e.index) +
                                  ": mean_phone_duration must be a positive number");
        }
    }
}

}  // namespace

void validate_dictionary(const AnnotationDictionary& dict) {
    if (dict.entries.empty()) {
        throw ValidationError("dictionary has no entries");
    }
    std::unordered_map<std::string, int> seen_refs;
    for (const auto& [index, entry] : dict.entries) {
        if (entry.index != index) {
            throw ValidationError("entry keyed " + std::to_string(index) +
                                  " carries index " + std::to_string(entry.index));
        }
        validate_entry(entry);
        auto [it, inserted] = seen_refs.emplace(entry.reference_id, index);
        if (!inserted) {
            throw ValidationError("duplicate reference_id '" + entry.reference_id +
                                  "' in entries " + std::to_string(it->second) + " and " +
                                  std::to_string(index));
        }
    }
    if (dict.corpus_mean_phone_duration) {
        double d = *dict.corpus_mean_phone_duration;
        if (!std::isfinite(d) || d <= 0.0) {
            throw ValidationError("corpus_mean_phone_duration must be a positive number");
        }
    }
}

AnnotationDictionary make_dictionary(std::vector<AnnotationEntry> entries,
                                     std::optional<double> corpus_mean_phone_duration) {
    AnnotationDictionary dict;
    dict.corpus_mean_phone_duration = corpus_mean_phone_duration;
    for (auto& e : entries) {
        int index = e.index;
        auto [it, inserted] = dict.entries.emplace(index, std::move(e));
        if (!inserted) {
            throw ValidationError("duplicate index " + std::to_string(index));
        }
    }
    validate_dictionary(dict);
    return dict;
}

AnnotationDictionary dictionary_from_json(const json& j, const std::string& origin) {
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array()) {
        throw ValidationError(origin + ": expected an object with an \"entries\" array");
    }
    std::vector<AnnotationEntry> entries;
    std::size_t pos = 0;
    for (const auto& item : j["entries"]) {
        try {
            AnnotationEntry e;
            e.index = item.at("index").get<int>();
            e.description = item.at("description").get<std::string>();
            e.reference_id = item.at("reference_id").get<std::string>();
            if (item.contains("mean_phone_duration") && !item["mean_phone_duration"].is_null()) {
                e.mean_phone_duration = item["mean_phone_duration"].get<double>();
            }
            entries.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw ValidationError(origin + ": entries[" + std::to_string(pos) +
                                  "]: " + ex.what());
        }
        ++pos;
    }
    std::optional<double> corpus_mean;
    if (j.contains("corpus_mean_phone_duration") && !j["corpus_mean_phone_duration"].is_null()) {
        corpus_mean = j["corpus_mean_phone_duration"].get<double>();
    }
    try {
        return make_dictionary(std::move(entries), corpus_mean);
    } catch (const ValidationError& ex) {
        throw ValidationError(origin + ": " + ex.what());
    }
}

nlohmann::json dictionary_to_json(const AnnotationDictionary& dict) {
    json j;
    j["corpus_mean_phone_duration"] =
        dict.corpus_mean_phone_duration ? json(*dict.corpus_mean_phone_duration) : json(nullptr);
    json arr = json::array();
    for (const auto& [index, e] : dict.entries) {
        json item;
        item["index"] = e.index;
        item["description"] = e.description;
        item["reference_id"] = e.reference_id;
        item["mean_phone_duration"] =
            e.mean_phone_duration ? json(*e.mean_phone_duration) : json(nullptr);
        arr.push_back(std::move(item));
    }
    j["entries"] = std::move(arr);
    return j;
}

AnnotationDictionary load_dictionary(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        throw ValidationError("dictionary file not found: " + path.string());
    }
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot read dictionary file: " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& ex) {
        throw ValidationError(path.string() + ": " + ex.what());
    }
    return dictionary_from_json(j, path.string());
}

void save_dictionary(const AnnotationDictionary& dict, const std::filesystem::path& path) {
    validate_dictionary(dict);
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << dictionary_to_json(dict).dump(2) << '\n';
    out.flush();
    if (!out.good()) {
        throw IoError("write failed: " + path.string());
    }
}

AnnotationDictionary subset_dictionary(const AnnotationDictionary& dict, std::size_t n,
                                       std::uint64_t seed) {
    validate_dictionary(dict);
    if (n < 1 || n > dict.size()) {
        throw ValidationError("subset size " + std::to_string(n) + " out of range [1, " +
                              std::to_string(dict.size()) + "]");
    }
    std::vector<int> indices;
    indices.reserve(dict.size());
    for (const auto& [index, entry] : dict.entries) {
        indices.push_back(index);
    }
    // Hand-rolled Fisher-Yates: std::shuffle's draw sequence is not pinned by
    // the standard, and the subset contract is deterministic. One full
    // shuffle, then a prefix, so one seed yields nested subsets across n.
    std::mt19937_64 rng(seed);
    for (std::size_t i = indices.size() - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(indices[i], indices[j]);
    }
    AnnotationDictionary out;
    out.corpus_mean_phone_duration = dict.corpus_mean_phone_duration;
    for (std::size_t i = 0; i < n; ++i) {
        out.entries.emplace(indices[i], dict.entries.at(indices[i]));
    }
    return out;
}

}  // namespace stylesel
