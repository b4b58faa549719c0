#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stylesel/annotation.hpp"
#include "stylesel/selector.hpp"

namespace stylesel {

// One retrieval probe with the set of annotation indices accepted as correct.
struct AblationCase {
    StylePrompt prompt;
    std::set<int> expected;
};

// Cases file: JSON array of {"kind": "selection"|"inference", "text": str,
// "expected": [int, ...]}.
std::vector<AblationCase> load_cases(const std::filesystem::path& path);

struct HitRateCell {
    double mean_hit_rate = 0.0;  // over all cases, remainder included
    double group_mean = 0.0;     // mean of per-group rates (complete groups only)
    double std_dev = 0.0;        // sample std across complete groups
    std::size_t n_groups = 0;
    std::size_t n_cases = 0;
    std::size_t n_failures = 0;  // selections that errored out; counted as misses
};

struct HitRateReport {
    std::vector<std::string> backends;   // row order
    std::vector<std::size_t> counts;     // column order
    std::size_t group_size = 20;
    std::uint64_t seed = 0;
    std::map<std::pair<std::string, std::size_t>, HitRateCell> grid;
};

struct AblationOptions {
    std::uint64_t seed = 0;
    std::size_t group_size = 20;
    std::size_t parallelism = 4;  // concurrent selections inside one cell
};

// For every (backend, count) pair: subset the dictionary with the shared
// seed, select for every case, score a hit when the returned index is in the
// case's expected set. Failed selections count as misses and are logged.
// Outcomes are shuffled with the seed and partitioned into groups of
// group_size for the spread statistics; the remainder only feeds the
// overall mean.
HitRateReport run_ablation(const std::vector<AblationCase>& cases,
                           const AnnotationDictionary& dict,
                           const std::vector<std::size_t>& counts,
                           const std::vector<SelectorConfig>& backends,
                           const AblationOptions& options = {});

nlohmann::json report_to_json(const HitRateReport& report);
// One row per annotation count, one mean-hit-rate column per backend.
std::string report_to_csv(const HitRateReport& report);
std::string report_to_table(const HitRateReport& report);

struct ScoreBatch {
    std::string label;
    std::vector<double> scores;  // each in [1, 5]
};

struct ScoreSummary {
    double mean = 0.0;
    double half_width = 0.0;
};

// Sample mean with normal-approximation confidence half-width z * s / sqrt(n).
ScoreSummary aggregate_scores(const ScoreBatch& batch, double confidence = 0.95);

// Inverse standard-normal CDF (Acklam's rational approximation plus one
// Halley refinement; good to ~1e-13 over (0,1)).
double normal_quantile(double p);

// Two-sided critical value for the given confidence. The 95% level returns
// the conventional tabulated 1.96; other levels use normal_quantile.
double critical_z(double confidence);

enum class Vote { A, B, NoPreference };

struct PreferenceShare {
    double a_pct = 0.0;
    double no_pref_pct = 0.0;
    double b_pct = 0.0;
};

// Percentages of A / no-preference / B votes; always sums to 100.
PreferenceShare preference_tally(const std::vector<Vote>& votes);

}  // namespace stylesel
