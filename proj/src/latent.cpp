#include "stylesel/latent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "stylesel/errors.hpp"

namespace stylesel {

using nlohmann::json;

void validate_latent_spec(const LatentSpec& spec) {
    if (spec.mu.empty()) {
        throw ValidationError("latent spec has dimension 0");
    }
    if (spec.mu.size() != spec.log_sigma.size()) {
        throw ValidationError("latent spec dimension mismatch: |mu|=" +
                              std::to_string(spec.mu.size()) + " |log_sigma|=" +
                              std::to_string(spec.log_sigma.size()));
    }
    for (double v : spec.mu) {
        if (!std::isfinite(v)) throw ValidationError("latent spec mu has a non-finite entry");
    }
    for (double v : spec.log_sigma) {
        if (!std::isfinite(v)) throw ValidationError("latent spec log_sigma has a non-finite entry");
    }
}

LatentBank load_latent_bank(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        throw ValidationError("latent bank file not found: " + path.string());
    }
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot read latent bank file: " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& ex) {
        throw ValidationError(path.string() + ": " + ex.what());
    }
    if (!j.is_object()) {
        throw ValidationError(path.string() + ": expected an object keyed by reference_id");
    }
    LatentBank bank;
    for (const auto& [reference_id, value] : j.items()) {
        LatentSpec spec;
        try {
            spec.mu = value.at("mu").get<std::vector<double>>();
            spec.log_sigma = value.at("log_sigma").get<std::vector<double>>();
        } catch (const json::exception& ex) {
            throw ValidationError(path.string() + ": entry '" + reference_id + "': " + ex.what());
        }
        try {
            validate_latent_spec(spec);
        } catch (const ValidationError& ex) {
            throw ValidationError(path.string() + ": entry '" + reference_id + "': " + ex.what());
        }
        if (bank.dim == 0) {
            bank.dim = spec.dim();
        } else if (spec.dim() != bank.dim) {
            throw ValidationError(path.string() + ": entry '" + reference_id +
                                  "' has dimension " + std::to_string(spec.dim()) +
                                  ", bank dimension is " + std::to_string(bank.dim));
        }
        bank.specs.emplace(reference_id, std::move(spec));
    }
    return bank;
}

std::vector<double> sample_noise(std::size_t d, std::uint64_t seed) {
    if (d < 1) {
        throw ValidationError("noise dimension must be >= 1");
    }
    std::mt19937_64 rng(seed);
    auto unit = [&rng]() {
        // 53 random mantissa bits -> [0, 1)
        return static_cast<double>(rng() >> 11) * 0x1.0p-53;
    };
    std::vector<double> out;
    out.reserve(d);
    constexpr double two_pi = 6.283185307179586476925286766559;
    while (out.size() < d) {
        double u1 = 1.0 - unit();  // (0, 1], keeps log(u1) finite
        double u2 = unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        out.push_back(r * std::cos(two_pi * u2));
        if (out.size() < d) {
            out.push_back(r * std::sin(two_pi * u2));
        }
    }
    return out;
}

std::vector<double> reparameterize(const LatentSpec& spec, std::span<const double> noise) {
    validate_latent_spec(spec);
    if (noise.size() != spec.dim()) {
        throw ValidationError("noise dimension " + std::to_string(noise.size()) +
                              " does not match latent dimension " + std::to_string(spec.dim()));
    }
    std::vector<double> z(spec.dim());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = spec.mu[i] + noise[i] * std::exp(spec.log_sigma[i]);
    }
    return z;
}

double kl_to_standard_normal(const LatentSpec& spec) {
    validate_latent_spec(spec);
    double sum = 0.0;
    for (std::size_t i = 0; i < spec.dim(); ++i) {
        double lambda = spec.log_sigma[i];
        // mu^2 + (sigma^2 - 1) - 2*log sigma, with sigma^2 - 1 = expm1(2*lambda)
        sum += spec.mu[i] * spec.mu[i] + std::expm1(2.0 * lambda) - 2.0 * lambda;
    }
    double kl = 0.5 * sum;
    if (!std::isfinite(kl)) {
        throw ValidationError("KL divergence is not finite for this latent spec");
    }
    return kl;
}

double annealing_weight(std::uint64_t step, const AnnealingSchedule& schedule) {
    if (const auto* c = std::get_if<ConstantSchedule>(&schedule)) {
        if (!(c->beta > 0.0) || !std::isfinite(c->beta)) {
            throw ValidationError("constant schedule requires beta > 0");
        }
        return c->beta;
    }
    const auto& ramp = std::get<LinearRampSchedule>(schedule);
    if (!(ramp.beta_max > 0.0) || !std::isfinite(ramp.beta_max)) {
        throw ValidationError("ramp schedule requires beta_max > 0");
    }
    if (ramp.ramp_steps < 1) {
        throw ValidationError("ramp schedule requires ramp_steps >= 1");
    }
    double fraction = static_cast<double>(step) / static_cast<double>(ramp.ramp_steps);
    return ramp.beta_max * std::min(1.0, fraction);
}

double total_loss(const LossComponents& c, double beta) {
    for (double v : {c.dur, c.vq, c.pros, c.kl}) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ValidationError("loss components must be finite and non-negative");
        }
    }
    if (!std::isfinite(beta) || beta < 0.0) {
        throw ValidationError("beta must be finite and non-negative");
    }
    return c.dur + c.vq + c.pros + beta * c.kl;
}

double duration_scale(double reference_mean, double corpus_mean) {
    if (!std::isfinite(reference_mean) || reference_mean <= 0.0) {
        throw ValidationError("reference mean phone duration must be positive");
    }
    if (!std::isfinite(corpus_mean) || corpus_mean <= 0.0) {
        throw ValidationError("corpus mean phone duration must be positive");
    }
    return reference_mean / corpus_mean;
}

double clamped_duration_scale(double reference_mean, double corpus_mean, DurationClamp clamp) {
    if (!(clamp.lo > 0.0) || !(clamp.hi >= clamp.lo)) {
        throw ValidationError("duration clamp bounds must satisfy 0 < lo <= hi");
    }
    return std::clamp(duration_scale(reference_mean, corpus_mean), clamp.lo, clamp.hi);
}

}  // namespace stylesel
