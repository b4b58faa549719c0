#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace stylesel {

// Per-reference Gaussian posterior parameters (mean and log standard
// deviation), as produced by a trained style encoder.
struct LatentSpec {
    std::vector<double> mu;
    std::vector<double> log_sigma;

    std::size_t dim() const { return mu.size(); }

    bool operator==(const LatentSpec&) const = default;
};

void validate_latent_spec(const LatentSpec& spec);

// reference_id -> LatentSpec, all with one shared dimension.
struct LatentBank {
    std::map<std::string, LatentSpec> specs;
    std::size_t dim = 0;
};

// File format: {"<reference_id>": {"mu": [D numbers], "log_sigma": [D numbers]}, ...}
LatentBank load_latent_bank(const std::filesystem::path& path);

// Deterministic i.i.d. standard-normal vector (Box-Muller over mt19937_64,
// fully specified so the same seed gives the same bytes everywhere).
std::vector<double> sample_noise(std::size_t d, std::uint64_t seed);

// z[i] = mu[i] + noise[i] * exp(log_sigma[i])
std::vector<double> reparameterize(const LatentSpec& spec, std::span<const double> noise);

// KL(N(mu, diag sigma^2) || N(0, I)) in closed form:
//   1/2 * sum_i (mu_i^2 + sigma_i^2 - 2*log sigma_i - 1)
// computed as mu_i^2 + expm1(2*lambda_i) - 2*lambda_i with lambda = log sigma,
// which is the same sum but never goes negative in floating point.
double kl_to_standard_normal(const LatentSpec& spec);

struct ConstantSchedule {
    double beta = 1e-6;
};

struct LinearRampSchedule {
    double beta_max = 1.0;
    std::uint64_t ramp_steps = 1;
};

using AnnealingSchedule = std::variant<ConstantSchedule, LinearRampSchedule>;

double annealing_weight(std::uint64_t step, const AnnealingSchedule& schedule);

// The scalar loss terms combined by total_loss. All are opaque inputs here.
struct LossComponents {
    double dur = 0.0;
    double vq = 0.0;
    double pros = 0.0;
    double kl = 0.0;
};

// dur + vq + pros + beta * kl
double total_loss(const LossComponents& c, double beta);

// reference_mean / corpus_mean, both in seconds per phone.
double duration_scale(double reference_mean, double corpus_mean);

struct DurationClamp {
    double lo = 0.25;
    double hi = 4.0;
};

double clamped_duration_scale(double reference_mean, double corpus_mean, DurationClamp clamp);

}  // namespace stylesel
