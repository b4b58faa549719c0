#include "stylesel/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "stylesel/errors.hpp"
#include "stylesel/text.hpp"

namespace stylesel {

using nlohmann::json;

std::vector<AblationCase> load_cases(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        throw ValidationError("cases file not found: " + path.string());
    }
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot read cases file: " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& ex) {
        throw ValidationError(path.string() + ": " + ex.what());
    }
    if (!j.is_array() || j.empty()) {
        throw ValidationError(path.string() + ": expected a non-empty array of cases");
    }
    std::vector<AblationCase> cases;
    cases.reserve(j.size());
    std::size_t pos = 0;
    for (const auto& item : j) {
        try {
            AblationCase c;
            std::string kind = item.at("kind").get<std::string>();
            if (kind == "selection") {
                c.prompt.kind = PromptKind::StyleSelection;
            } else if (kind == "inference") {
                c.prompt.kind = PromptKind::StyleInference;
            } else {
                throw ValidationError("kind must be \"selection\" or \"inference\", got \"" +
                                      kind + "\"");
            }
            c.prompt.text = item.at("text").get<std::string>();
            if (is_blank(c.prompt.text)) {
                throw ValidationError("text is empty");
            }
            for (int v : item.at("expected").get<std::vector<int>>()) {
                if (v < 1) throw ValidationError("expected indices must be >= 1");
                c.expected.insert(v);
            }
            if (c.expected.empty()) {
                throw ValidationError("expected set is empty");
            }
            cases.push_back(std::move(c));
        } catch (const json::exception& ex) {
            throw ValidationError(path.string() + ": cases[" + std::to_string(pos) +
                                  "]: " + ex.what());
        } catch (const ValidationError& ex) {
            throw ValidationError(path.string() + ": cases[" + std::to_string(pos) +
                                  "]: " + ex.what());
        }
        ++pos;
    }
    return cases;
}

namespace {

// Hits for every case against one dictionary subset, filled in case order so
// the result is independent of worker scheduling.
struct CellOutcome {
    std::vector<char> hit;
    std::size_t failures = 0;
};

CellOutcome run_cell(const std::vector<AblationCase>& cases, const Selector& selector,
                     const AnnotationDictionary& dict, std::size_t parallelism) {
    CellOutcome outcome;
    outcome.hit.assign(cases.size(), 0);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> failures{0};
    std::mutex log_mutex;

    auto worker = [&]() {
        for (std::size_t i = next.fetch_add(1); i < cases.size(); i = next.fetch_add(1)) {
            try {
                RetrievalResult r = selector.select(cases[i].prompt, dict);
                outcome.hit[i] = cases[i].expected.count(r.index) ? 1 : 0;
            } catch (const std::exception& ex) {
                failures.fetch_add(1);
                std::lock_guard<std::mutex> lock(log_mutex);
                std::cerr << "ablation: case " << i << " failed (" << selector.name()
                          << "): " << ex.what() << '\n';
            }
        }
    };

    std::size_t n_threads = std::max<std::size_t>(1, std::min(parallelism, cases.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    outcome.failures = failures.load();
    return outcome;
}

HitRateCell summarize(const CellOutcome& outcome, std::size_t group_size, std::uint64_t seed) {
    HitRateCell cell;
    cell.n_cases = outcome.hit.size();
    cell.n_failures = outcome.failures;
    std::size_t total_hits = 0;
    for (char h : outcome.hit) total_hits += h;
    cell.mean_hit_rate =
        cell.n_cases == 0 ? 0.0 : static_cast<double>(total_hits) / static_cast<double>(cell.n_cases);

    std::vector<char> shuffled = outcome.hit;
    std::mt19937_64 rng(seed);
    for (std::size_t i = shuffled.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(shuffled[i - 1], shuffled[j]);
    }
    cell.n_groups = shuffled.size() / group_size;
    if (cell.n_groups == 0) {
        return cell;
    }
    std::vector<double> rates(cell.n_groups);
    for (std::size_t g = 0; g < cell.n_groups; ++g) {
        std::size_t hits = 0;
        for (std::size_t k = 0; k < group_size; ++k) hits += shuffled[g * group_size + k];
        rates[g] = static_cast<double>(hits) / static_cast<double>(group_size);
    }
    double mean = 0.0;
    for (double r : rates) mean += r;
    mean /= static_cast<double>(cell.n_groups);
    cell.group_mean = mean;
    if (cell.n_groups >= 2) {
        double ss = 0.0;
        for (double r : rates) ss += (r - mean) * (r - mean);
        cell.std_dev = std::sqrt(ss / static_cast<double>(cell.n_groups - 1));
    }
    return cell;
}

}  // namespace

HitRateReport run_ablation(const std::vector<AblationCase>& cases,
                           const AnnotationDictionary& dict,
                           const std::vector<std::size_t>& counts,
                           const std::vector<SelectorConfig>& backends,
                           const AblationOptions& options) {
    if (cases.empty()) {
        throw ValidationError("ablation needs at least one case");
    }
    if (counts.empty()) {
        throw ValidationError("ablation needs at least one annotation count");
    }
    if (backends.empty()) {
        throw ValidationError("ablation needs at least one backend");
    }
    if (options.group_size < 1) {
        throw ValidationError("group size must be >= 1");
    }
    for (std::size_t count : counts) {
        if (count < 1 || count > dict.size()) {
            throw ValidationError("annotation count " + std::to_string(count) +
                                  " out of range [1, " + std::to_string(dict.size()) + "]");
        }
    }

    HitRateReport report;
    report.counts = counts;
    report.group_size = options.group_size;
    report.seed = options.seed;

    for (const auto& config : backends) {
        Selector selector(config);
        report.backends.push_back(selector.name());
        for (std::size_t count : counts) {
            AnnotationDictionary sub = subset_dictionary(dict, count, options.seed);
            CellOutcome outcome = run_cell(cases, selector, sub, options.parallelism);
            report.grid[{selector.name(), count}] =
                summarize(outcome, options.group_size, options.seed);
        }
    }
    return report;
}

nlohmann::json report_to_json(const HitRateReport& report) {
    json j;
    j["backends"] = report.backends;
    j["counts"] = report.counts;
    j["group_size"] = report.group_size;
    j["seed"] = report.seed;
    json cells = json::array();
    for (const auto& backend : report.backends) {
        for (std::size_t count : report.counts) {
            const HitRateCell& cell = report.grid.at({backend, count});
            json c;
            c["backend"] = backend;
            c["count"] = count;
            c["mean_hit_rate"] = cell.mean_hit_rate;
            c["group_mean"] = cell.group_mean;
            c["std"] = cell.std_dev;
            c["n_groups"] = cell.n_groups;
            c["n_cases"] = cell.n_cases;
            c["n_failures"] = cell.n_failures;
            cells.push_back(std::move(c));
        }
    }
    j["cells"] = std::move(cells);
    return j;
}

std::string report_to_csv(const HitRateReport& report) {
    std::ostringstream out;
    out << "annotation_count";
    for (const auto& backend : report.backends) out << ',' << backend;
    out << '\n';
    out.setf(std::ios::fixed);
    out.precision(6);
    for (std::size_t count : report.counts) {
        out << count;
        for (const auto& backend : report.backends) {
            out << ',' << report.grid.at({backend, count}).mean_hit_rate;
        }
        out << '\n';
    }
    return out.str();
}

std::string report_to_table(const HitRateReport& report) {
    std::ostringstream out;
    out << "hit rate by annotation count (mean +/- std across groups of "
        << report.group_size << ")\n";
    out << "count";
    for (const auto& backend : report.backends) out << '\t' << backend;
    out << '\n';
    out.setf(std::ios::fixed);
    out.precision(4);
    for (std::size_t count : report.counts) {
        out << count;
        for (const auto& backend : report.backends) {
            const HitRateCell& cell = report.grid.at({backend, count});
            out << '\t' << cell.mean_hit_rate << " +/- " << cell.std_dev;
        }
        out << '\n';
    }
    return out.str();
}

double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0)) {
        throw ValidationError("normal quantile requires p in (0, 1)");
    }
    // Acklam's rational approximation.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // One Halley step against the true CDF.
    const double sqrt_half = 0.70710678118654752440;
    const double inv_sqrt_two_pi = 0.39894228040143267794;
    double e = 0.5 * std::erfc(-x * sqrt_half) - p;
    double u = e / (inv_sqrt_two_pi * std::exp(-0.5 * x * x));
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

double critical_z(double confidence) {
    if (!(confidence > 0.0) || !(confidence < 1.0)) {
        throw ValidationError("confidence must be in (0, 1)");
    }
    // Score reports use the tabulated 1.96 at the default 95% level.
    if (std::abs(confidence - 0.95) < 1e-12) {
        return 1.96;
    }
    return normal_quantile(0.5 * (1.0 + confidence));
}

ScoreSummary aggregate_scores(const ScoreBatch& batch, double confidence) {
    if (batch.scores.size() < 2) {
        throw ValidationError("score batch '" + batch.label + "' needs at least 2 scores");
    }
    for (double s : batch.scores) {
        if (!std::isfinite(s) || s < 1.0 || s > 5.0) {
            throw ValidationError("score batch '" + batch.label +
                                  "' has a score outside [1, 5]");
        }
    }
    double n = static_cast<double>(batch.scores.size());
    double mean = 0.0;
    for (double s : batch.scores) mean += s;
    mean /= n;
    double ss = 0.0;
    for (double s : batch.scores) ss += (s - mean) * (s - mean);
    double sd = std::sqrt(ss / (n - 1.0));
    double z = critical_z(confidence);
    return ScoreSummary{mean, z * sd / std::sqrt(n)};
}

PreferenceShare preference_tally(const std::vector<Vote>& votes) {
    if (votes.empty()) {
        throw ValidationError("preference tally needs at least one vote");
    }
    std::size_t a = 0, b = 0, none = 0;
    for (Vote v : votes) {
        switch (v) {
            case Vote::A: ++a; break;
            case Vote::B: ++b; break;
            case Vote::NoPreference: ++none; break;
        }
    }
    double total = static_cast<double>(votes.size());
    return PreferenceShare{100.0 * static_cast<double>(a) / total,
                           100.0 * static_cast<double>(none) / total,
                           100.0 * static_cast<double>(b) / total};
}

}  // namespace stylesel
