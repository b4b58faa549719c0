#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "stylesel/errors.hpp"
#include "stylesel/latent.hpp"
#include "test_support.hpp"

using namespace stylesel;

TEST_CASE("reparameterize with zero noise returns mu exactly") {
    LatentSpec spec{{0.3, -0.1}, {0.0, 0.0}};
    auto z = reparameterize(spec, std::vector<double>{0.0, 0.0});
    CHECK(z == std::vector<double>{0.3, -0.1});
}

TEST_CASE("reparameterize with unit sigma and zero mu returns the noise") {
    LatentSpec spec{{0.0, 0.0}, {0.0, 0.0}};
    auto z = reparameterize(spec, std::vector<double>{1.0, -1.0});
    CHECK(z == std::vector<double>{1.0, -1.0});
}

TEST_CASE("reparameterize scales noise by sigma") {
    LatentSpec spec{{1.0, 2.0}, {std::log(2.0), std::log(0.5)}};
    auto z = reparameterize(spec, std::vector<double>{1.0, 1.0});
    CHECK(z[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(z[1] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("reparameterize rejects mismatched dimensions") {
    LatentSpec spec{{0.0, 0.0}, {0.0, 0.0}};
    CHECK_THROWS_AS(reparameterize(spec, std::vector<double>{0.0}), ValidationError);
}

TEST_CASE("latent spec validation") {
    CHECK_THROWS_AS(validate_latent_spec(LatentSpec{{}, {}}), ValidationError);
    CHECK_THROWS_AS(validate_latent_spec(LatentSpec{{0.0}, {0.0, 0.0}}), ValidationError);
    double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate_latent_spec(LatentSpec{{0.0}, {-inf}}), ValidationError);
    CHECK_THROWS_AS(validate_latent_spec(LatentSpec{{std::nan("")}, {0.0}}), ValidationError);
}

TEST_CASE("sample_noise is deterministic per seed") {
    auto a = sample_noise(8, 42);
    auto b = sample_noise(8, 42);
    CHECK(a == b);
    CHECK(a.size() == 8);
    CHECK(sample_noise(8, 43) != a);
    CHECK_THROWS_AS(sample_noise(0, 1), ValidationError);
}

TEST_CASE("sample_noise moments match a standard normal") {
    const std::size_t n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t seed = 0; seed < n; ++seed) {
        double v = sample_noise(1, seed)[0];
        sum += v;
        sum_sq += v * v;
    }
    double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("reparameterized draws match the latent parameters") {
    LatentSpec spec{{0.7, -1.2}, {std::log(0.5), std::log(2.0)}};
    const std::size_t n = 100000;
    std::vector<double> sum(2, 0.0), sum_sq(2, 0.0);
    for (std::size_t seed = 0; seed < n; ++seed) {
        auto z = reparameterize(spec, sample_noise(2, seed));
        for (int i = 0; i < 2; ++i) {
            sum[i] += z[i];
            sum_sq[i] += z[i] * z[i];
        }
    }
    for (int i = 0; i < 2; ++i) {
        double sigma = std::exp(spec.log_sigma[i]);
        double mean = sum[i] / n;
        double sd = std::sqrt(sum_sq[i] / n - mean * mean);
        // 3-sigma Monte Carlo bounds on the estimators
        CHECK(std::abs(mean - spec.mu[i]) < 3.0 * sigma / std::sqrt(double(n)));
        CHECK(std::abs(sd - sigma) < 3.0 * sigma / std::sqrt(2.0 * double(n)));
    }
}

TEST_CASE("KL of the standard normal to itself is zero") {
    LatentSpec spec{std::vector<double>(8, 0.0), std::vector<double>(8, 0.0)};
    CHECK(std::abs(kl_to_standard_normal(spec)) <= 1e-12);
}

TEST_CASE("KL with a single unit mean is one half") {
    std::vector<double> mu(8, 0.0);
    mu[0] = 1.0;
    LatentSpec spec{mu, std::vector<double>(8, 0.0)};
    CHECK(kl_to_standard_normal(spec) == doctest::Approx(0.5).epsilon(1e-12));
}

namespace {

// Monte-Carlo KL oracle: sample z ~ N(mu, diag sigma^2) and average the
// log-density ratio against N(0, I). Uses its own RNG on purpose.
double monte_carlo_kl(const LatentSpec& spec, std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t d = spec.dim();
    std::vector<double> sigma(d);
    for (std::size_t i = 0; i < d; ++i) sigma[i] = std::exp(spec.log_sigma[i]);
    double acc = 0.0;
    for (std::size_t k = 0; k < draws; ++k) {
        double log_ratio = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double eps = normal(rng);
            double z = spec.mu[i] + sigma[i] * eps;
            log_ratio += -spec.log_sigma[i] - 0.5 * eps * eps + 0.5 * z * z;
        }
        acc += log_ratio;
    }
    return acc / static_cast<double>(draws);
}

}  // namespace

TEST_CASE("closed-form KL agrees with the Monte-Carlo oracle on a hand spec") {
    LatentSpec spec{std::vector<double>(8, 0.5), std::vector<double>(8, std::log(0.5))};
    double exact = kl_to_standard_normal(spec);
    double estimate = monte_carlo_kl(spec, 1000000, 555);
    CHECK(std::abs(estimate - exact) / exact < 0.01);
}

TEST_CASE("closed-form KL agrees with the Monte-Carlo oracle on random specs") {
    std::mt19937_64 rng(2025);
    std::uniform_real_distribution<double> mu_dist(-2.0, 2.0);
    std::uniform_real_distribution<double> ls_dist(-0.7, 0.7);
    for (int trial = 0; trial < 20; ++trial) {
        LatentSpec spec;
        for (int i = 0; i < 8; ++i) {
            spec.mu.push_back(mu_dist(rng));
            spec.log_sigma.push_back(ls_dist(rng));
        }
        double exact = kl_to_standard_normal(spec);
        double estimate = monte_carlo_kl(spec, 100000, 1000 + trial);
        CHECK(std::abs(estimate - exact) / exact < 0.02);
    }
}

TEST_CASE("KL is non-negative and zero only at the standard normal") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> mu_dist(-3.0, 3.0);
    std::uniform_real_distribution<double> ls_dist(-2.0, 2.0);
    for (int trial = 0; trial < 500; ++trial) {
        LatentSpec spec;
        for (int i = 0; i < 4; ++i) {
            spec.mu.push_back(mu_dist(rng));
            spec.log_sigma.push_back(ls_dist(rng));
        }
        double kl = kl_to_standard_normal(spec);
        CHECK(kl >= 0.0);
        double distance = 0.0;
        for (int i = 0; i < 4; ++i) {
            distance += std::abs(spec.mu[i]) + std::abs(spec.log_sigma[i]);
        }
        if (distance > 1e-3) CHECK(kl > 1e-12);
    }
}

TEST_CASE("KL grows with the magnitude of any mean entry") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> mu_dist(-2.0, 2.0);
    std::uniform_real_distribution<double> ls_dist(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        LatentSpec spec;
        for (int i = 0; i < 8; ++i) {
            spec.mu.push_back(mu_dist(rng));
            spec.log_sigma.push_back(ls_dist(rng));
        }
        LatentSpec larger = spec;
        std::size_t which = rng() % 8;
        larger.mu[which] *= 1.5;
        if (std::abs(spec.mu[which]) > 1e-9) {
            CHECK(kl_to_standard_normal(larger) > kl_to_standard_normal(spec));
        }
    }
}

TEST_CASE("KL rejects overflowing specs") {
    LatentSpec spec{{0.0}, {400.0}};
    CHECK_THROWS_AS(kl_to_standard_normal(spec), ValidationError);
}

TEST_CASE("annealing weight schedules") {
    AnnealingSchedule fixed = ConstantSchedule{1e-6};
    CHECK(annealing_weight(0, fixed) == 1e-6);
    CHECK(annealing_weight(123456, fixed) == 1e-6);

    AnnealingSchedule ramp = LinearRampSchedule{1.0, 100};
    CHECK(annealing_weight(0, ramp) == 0.0);
    CHECK(annealing_weight(50, ramp) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(annealing_weight(100, ramp) == 1.0);
    CHECK(annealing_weight(5000, ramp) == 1.0);

    CHECK_THROWS_AS(annealing_weight(0, AnnealingSchedule{ConstantSchedule{0.0}}),
                    ValidationError);
    CHECK_THROWS_AS(annealing_weight(0, AnnealingSchedule{LinearRampSchedule{1.0, 0}}),
                    ValidationError);
}

TEST_CASE("total_loss composes the four terms") {
    CHECK(total_loss({1.0, 1.0, 1.0, 1e6}, 1e-6) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(total_loss({0.0, 0.0, 0.0, 0.0}, 0.5) == 0.0);
    CHECK(total_loss({0.2, 1.3, 0.5, 2.0}, 0.1) == doctest::Approx(2.2).epsilon(1e-12));
    CHECK_THROWS_AS(total_loss({-1.0, 0.0, 0.0, 0.0}, 0.1), ValidationError);
    CHECK_THROWS_AS(total_loss({0.0, 0.0, 0.0, 0.0}, -0.1), ValidationError);
}

TEST_CASE("total_loss is linear in each component and in beta") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> dist(0.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        LossComponents a{dist(rng), dist(rng), dist(rng), dist(rng)};
        LossComponents b{dist(rng), dist(rng), dist(rng), dist(rng)};
        double beta = dist(rng);
        double t = dist(rng);
        LossComponents sum{a.dur + b.dur, a.vq + b.vq, a.pros + b.pros, a.kl + b.kl};
        CHECK(total_loss(sum, beta) ==
              doctest::Approx(total_loss(a, beta) + total_loss(b, beta)).epsilon(1e-12));
        LossComponents scaled{t * a.dur, t * a.vq, t * a.pros, t * a.kl};
        CHECK(total_loss(scaled, beta) == doctest::Approx(t * total_loss(a, beta)).epsilon(1e-12));
        LossComponents kl_only{0.0, 0.0, 0.0, a.kl};
        CHECK(total_loss(kl_only, t * beta) ==
              doctest::Approx(t * total_loss(kl_only, beta)).epsilon(1e-12));
    }
}

TEST_CASE("duration scale is the ratio of means") {
    CHECK(duration_scale(0.12, 0.12) == 1.0);
    CHECK(duration_scale(0.24, 0.12) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS_AS(duration_scale(0.12, 0.0), ValidationError);
    CHECK_THROWS_AS(duration_scale(-0.1, 0.12), ValidationError);
}

TEST_CASE("scaling durations moves their mean onto the reference mean") {
    std::vector<double> durations = {0.08, 0.15, 0.11, 0.09, 0.17};
    double corpus_mean = 0.0;
    for (double d : durations) corpus_mean += d;
    corpus_mean /= static_cast<double>(durations.size());
    double reference_mean = 0.24;
    double scale = duration_scale(reference_mean, corpus_mean);
    double scaled_mean = 0.0;
    for (double d : durations) scaled_mean += scale * d;
    scaled_mean /= static_cast<double>(durations.size());
    CHECK(scaled_mean == doctest::Approx(reference_mean).epsilon(1e-12));
}

TEST_CASE("duration_scale(x, x) is one for many x") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> dist(1e-4, 10.0);
    for (int i = 0; i < 200; ++i) {
        double x = dist(rng);
        CHECK(duration_scale(x, x) == 1.0);
    }
}

TEST_CASE("clamped duration scale") {
    CHECK(clamped_duration_scale(1.2, 0.1, {0.25, 4.0}) == 4.0);
    CHECK(clamped_duration_scale(0.01, 0.5, {0.25, 4.0}) == 0.25);
    CHECK(clamped_duration_scale(0.24, 0.12, {0.25, 4.0}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(clamped_duration_scale(1.0, 1.0, {0.0, 4.0}), ValidationError);
    CHECK_THROWS_AS(clamped_duration_scale(1.0, 1.0, {2.0, 1.0}), ValidationError);
}

TEST_CASE("latent bank loads and validates") {
    LatentBank bank = load_latent_bank(testsup::data_dir() / "fixture_latents.json");
    CHECK(bank.specs.size() == 4);
    CHECK(bank.dim == 8);
    CHECK(bank.specs.at("u001").mu[0] == doctest::Approx(0.31));
}

TEST_CASE("latent bank rejects inconsistent dimensions and bad values") {
    testsup::TempDir tmp;
    testsup::write_file(tmp.file("bad_dims.json"), R"({
        "a": {"mu": [0.0, 0.0], "log_sigma": [0.0, 0.0]},
        "b": {"mu": [0.0], "log_sigma": [0.0]}
    })");
    CHECK_THROWS_AS(load_latent_bank(tmp.file("bad_dims.json")), ValidationError);

    testsup::write_file(tmp.file("bad_entry.json"), R"({
        "a": {"mu": [0.0, 0.0], "log_sigma": [0.0]}
    })");
    CHECK_THROWS_AS(load_latent_bank(tmp.file("bad_entry.json")), ValidationError);

    CHECK_THROWS_AS(load_latent_bank(tmp.file("absent.json")), ValidationError);
}
