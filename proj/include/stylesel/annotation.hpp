#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stylesel {

// One annotated reference utterance: a free-form style label plus the id of
// the recording it describes.
struct AnnotationEntry {
    int index = 0;
    std::string description;
    std::string reference_id;
    std::optional<double> mean_phone_duration;  // seconds per phone

    bool operator==(const AnnotationEntry&) const = default;
};

// The style dictionary the selector retrieves against. Immutable after
// construction; index keys and reference ids are both unique.
struct AnnotationDictionary {
    std::map<int, AnnotationEntry> entries;
    std::optional<double> corpus_mean_phone_duration;  // seconds per phone

    bool operator==(const AnnotationDictionary&) const = default;

    std::size_t size() const { return entries.size(); }
    bool contains(int index) const { return entries.count(index) != 0; }
    const AnnotationEntry& at(int index) const;
};

// Validates entries and builds a dictionary. Throws ValidationError naming
// the offending index on duplicates or malformed fields.
AnnotationDictionary make_dictionary(std::vector<AnnotationEntry> entries,
                                     std::optional<double> corpus_mean_phone_duration = {});

void validate_dictionary(const AnnotationDictionary& dict);

// File format:
//   {
//     "corpus_mean_phone_duration": number|null,
//     "entries": [
//       {"index": int, "description": str, "reference_id": str,
//        "mean_phone_duration": number|null},
//       ...
//     ]
//   }
AnnotationDictionary load_dictionary(const std::filesystem::path& path);
void save_dictionary(const AnnotationDictionary& dict, const std::filesystem::path& path);

nlohmann::json dictionary_to_json(const AnnotationDictionary& dict);
AnnotationDictionary dictionary_from_json(const nlohmann::json& j, const std::string& origin = "dictionary");

// Uniform sample of exactly n entries, without replacement, keeping original
// indices. Deterministic for a fixed seed; for one seed the sampled sets are
// nested across n (prefixes of one shuffled order).
AnnotationDictionary subset_dictionary(const AnnotationDictionary& dict, std::size_t n,
                                       std::uint64_t seed);

}  // namespace stylesel
