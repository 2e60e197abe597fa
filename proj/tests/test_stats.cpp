#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hbjm/errors.hpp"
#include "hbjm/rng.hpp"
#include "hbjm/stats.hpp"

using namespace hbjm;

TEST_CASE("normal cdf and quantile agree with reference values") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    CHECK(normal_cdf(-1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-12));

    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-10));
    CHECK(normal_quantile(0.1) == doctest::Approx(-1.2815515655446004).epsilon(1e-10));
    CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-8));
    CHECK_THROWS_AS(normal_quantile(0.0), numeric_error);
    CHECK_THROWS_AS(normal_quantile(1.0), numeric_error);

    // Round trip across the support.
    for (double x = -6.0; x <= 6.0; x += 0.37) {
        CHECK(normal_quantile(normal_cdf(x)) == doctest::Approx(x).epsilon(1e-9));
    }
}

TEST_CASE("incomplete gamma matches independent series evaluation") {
    // P(1, x) = 1 - exp(-x).
    CHECK(gamma_p(1.0, 0.7) == doctest::Approx(1.0 - std::exp(-0.7)).epsilon(1e-13));
    // P(1/2, x) = erf(sqrt(x)).
    CHECK(gamma_p(0.5, 2.0) == doctest::Approx(std::erf(std::sqrt(2.0))).epsilon(1e-13));
    // Chi-square with 4 dof at its mean: P(2, 2) = 1 - 3 exp(-2).
    CHECK(gamma_p(2.0, 2.0) == doctest::Approx(1.0 - 3.0 * std::exp(-2.0)).epsilon(1e-13));
    CHECK(gamma_q(2.0, 2.0) == doctest::Approx(3.0 * std::exp(-2.0)).epsilon(1e-13));
    CHECK(gamma_p(3.0, 0.0) == 0.0);

    // Very large shape: the distribution is close to normal with mean a and
    // sd sqrt(a); the median is within ~0.3 of a.
    const double a = 400001.0;
    CHECK(gamma_p(a, a) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(gamma_p(a, a + 3.0 * std::sqrt(a)) == doctest::Approx(normal_cdf(3.0)).epsilon(1e-2));
    CHECK(gamma_p(a, a) + gamma_q(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gamma and inverse-gamma cdfs use shape-rate conventions") {
    // Gamma(shape 2, rate 1/2) has mean 4: cdf at 0 is 0 and it is monotone.
    CHECK(gamma_cdf(0.0, 2.0, 0.5) == 0.0);
    CHECK(gamma_cdf(4.0, 2.0, 0.5) > 0.5);
    // Exponential special case: Gamma(1, 2) cdf at 1 is 1 - exp(-2).
    CHECK(gamma_cdf(1.0, 1.0, 2.0) == doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-13));

    // Inverse-gamma(a, b): X ~ IG iff 1/X ~ Gamma(a, rate b).
    const double a = 3.0;
    const double b = 2.0;
    const double x = 0.9;
    CHECK(inverse_gamma_cdf(x, a, b) ==
          doctest::Approx(1.0 - gamma_cdf(1.0 / x, a, b)).epsilon(1e-12));
    CHECK(inverse_gamma_cdf(0.0, a, b) == 0.0);
}

TEST_CASE("student t2 cdf closed form") {
    CHECK(student_t2_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    // t with 2 dof: quantile at 0.975 is 4.30265...
    CHECK(student_t2_cdf(4.302652729911275) == doctest::Approx(0.975).epsilon(1e-9));
    CHECK(student_t2_cdf(-4.302652729911275) == doctest::Approx(0.025).epsilon(1e-9));
}

TEST_CASE("ks statistic against brute-force computation") {
    std::vector<double> sample = {0.1, 0.3, 0.35, 0.8};
    auto unif = [](double x) { return x; };
    const double d = ks_statistic(sample, unif);
    // Hand computation: sup over step points of |F_n - F|.
    // i/n - x_i: .25-.1=.15, .5-.3=.2, .75-.35=.4, 1-.8=.2
    // x_i - (i-1)/n: .1, .05, -.15, .05
    CHECK(d == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("ks acceptance thresholds detect distribution mismatch") {
    Rng rng(2024);
    std::vector<double> unif_sample;
    std::vector<double> shifted;
    for (int i = 0; i < 5000; ++i) {
        const double u = rng.uniform();
        unif_sample.push_back(u);
        shifted.push_back(std::pow(u, 1.15));
    }
    auto unif = [](double x) { return std::min(1.0, std::max(0.0, x)); };
    const double crit = ks_critical(0.01, unif_sample.size());
    CHECK(ks_statistic(unif_sample, unif) < crit);
    CHECK(ks_statistic(shifted, unif) > crit);
    CHECK(ks_critical(0.01, 1000) == doctest::Approx(1.62762 / (std::sqrt(1000.0) + 0.12 + 0.11 / std::sqrt(1000.0))).epsilon(1e-12));
}

TEST_CASE("mann-whitney auc equals exhaustive pair counting") {
    Rng rng(7);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 120; ++i) {
        const int y = rng.uniform() < 0.4 ? 1 : 0;
        // Discretized scores force ties.
        const double s = std::floor((rng.normal() + (y ? 0.8 : 0.0)) * 4.0) / 4.0;
        scores.push_back(s);
        labels.push_back(y);
    }
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    CHECK(mann_whitney_auc(scores, labels) == doctest::Approx(wins / pairs).epsilon(1e-12));

    CHECK_THROWS_AS(mann_whitney_auc({1.0, 2.0}, {1, 1}), numeric_error);
}

TEST_CASE("bootstrap auc interval brackets the point estimate and is deterministic") {
    Rng rng(99);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
        const int y = i % 3 == 0 ? 1 : 0;
        scores.push_back(rng.normal() + (y ? 1.0 : 0.0));
        labels.push_back(y);
    }
    const double auc = mann_whitney_auc(scores, labels);
    const auto ci = bootstrap_auc_ci(scores, labels, 500, 0.95, 42);
    CHECK(ci.first < auc);
    CHECK(ci.second > auc);
    CHECK(ci.first > 0.5); // clearly separated classes
    const auto ci2 = bootstrap_auc_ci(scores, labels, 500, 0.95, 42);
    CHECK(ci.first == ci2.first);
    CHECK(ci.second == ci2.second);
}

TEST_CASE("quantile interpolation and moments") {
    std::vector<double> v = {4.0, 1.0, 3.0, 2.0};
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 4.0);
    CHECK(quantile(v, 0.5) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(quantile(v, 0.25) == doctest::Approx(1.75).epsilon(1e-15));
    CHECK(mean(v) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(variance(v) == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
}
