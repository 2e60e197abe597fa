#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hbjm/errors.hpp"
#include "hbjm/likelihood.hpp"
#include "hbjm/rng.hpp"

using namespace hbjm;

namespace {

const Eigensystem& eig() {
    static const Eigensystem sys = build_eigensystem(8, 64);
    return sys;
}

// Independent long-precision implementations used as oracles.

long double normal_logpdf_ld(long double x, long double mu, long double var) {
    const long double r = x - mu;
    return -0.5L * std::log(2.0L * 3.14159265358979323846264338327950288L * var) -
           r * r / (2.0L * var);
}

long double response_oracle(const std::vector<double>& h, const Eigen::VectorXd& t,
                            double sigma2) {
    long double acc = 0.0L;
    for (std::size_t s = 0; s < h.size(); ++s)
        acc += normal_logpdf_ld(h[s], t[static_cast<Eigen::Index>(s)], sigma2);
    return acc;
}

long double event_oracle(const EventGrid& grid, const std::vector<double>& hazards) {
    long double acc = 0.0L;
    for (std::size_t s = 0; s < grid.intervals.size(); ++s) {
        const auto& iv = grid.intervals[s];
        if (!iv.in_risk_set) continue;
        const long double mu = static_cast<long double>(iv.length) * hazards[s];
        acc += iv.count * std::log(mu) - mu - std::lgammal(iv.count + 1.0L);
    }
    return acc;
}

} // namespace

TEST_CASE("response likelihood matches hand-computed values") {
    const double norm = -0.5 * std::log(2.0 * M_PI * 0.25);
    Eigen::VectorXd t(3);
    t << 10.0, 11.0, 12.0;
    CHECK(response_loglik({10.0, 11.0, 12.0}, t, 0.25) ==
          doctest::Approx(3.0 * norm).epsilon(1e-13));

    Eigen::VectorXd one(1);
    one << 10.0;
    CHECK(response_loglik({11.0}, one, 0.25) == doctest::Approx(norm - 2.0).epsilon(1e-13));

    CHECK_THROWS_AS(response_loglik({1.0}, one, 0.0), contract_violation);
    CHECK_THROWS_AS(response_loglik({1.0, 2.0}, one, 1.0), contract_violation);
}

TEST_CASE("response likelihood agrees with a long-precision oracle") {
    Rng rng(71);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 1 + static_cast<int>(rng.below(40));
        std::vector<double> h;
        Eigen::VectorXd t(n);
        for (int s = 0; s < n; ++s) {
            t[s] = rng.normal(11.0, 2.0);
            h.push_back(t[s] + rng.normal(0.0, 0.6));
        }
        const double sigma2 = rng.uniform(0.05, 2.0);
        const double got = response_loglik(h, t, sigma2);
        const double want = static_cast<double>(response_oracle(h, t, sigma2));
        CHECK(std::abs(got - want) < 1e-10 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("hazard factorizes the frailty exactly") {
    Eigen::VectorXd b(3);
    b << 1.0, 0.5, 0.0;
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(3);
    CHECK(hazard(1.0, b, psi) == 1.0);

    psi << std::log(3.0), 0.0, 0.0;
    CHECK(hazard(2.0, b, psi) == doctest::Approx(6.0).epsilon(1e-14));

    Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        Eigen::VectorXd p(3);
        for (int i = 0; i < 3; ++i) p[i] = rng.normal();
        const double rho = rng.uniform(0.1, 5.0);
        CHECK(hazard(rho, b, p) == rho * hazard(1.0, b, p));
        // Strictly increasing in any coefficient with a positive covariate.
        Eigen::VectorXd q = p;
        q[1] += 0.3;
        CHECK(hazard(rho, b, q) > hazard(rho, b, p));
    }
    CHECK_THROWS_AS(hazard(0.0, b, psi), contract_violation);
}

TEST_CASE("event likelihood reproduces poisson factors") {
    EventGrid grid;
    grid.intervals.push_back({0.0, 1.0, 0, 0, true, 0.0});
    CHECK(event_loglik(grid, {0.1}) == doctest::Approx(-0.1).epsilon(1e-14));

    grid.intervals[0].count = 1;
    CHECK(event_loglik(grid, {0.1}) ==
          doctest::Approx(std::log(0.1) - 0.1).epsilon(1e-13));

    // Intervals outside the risk set contribute nothing.
    grid.intervals.push_back({1.0, 1.0, 0, 0, false, 0.0});
    CHECK(event_loglik(grid, {0.1, 99.0}) ==
          doctest::Approx(std::log(0.1) - 0.1).epsilon(1e-13));

    // A positive count outside the risk set is corrupt data.
    grid.intervals[1].count = 1;
    CHECK_THROWS_AS(event_loglik(grid, {0.1, 99.0}), data_error);

    CHECK_THROWS_AS(event_loglik(grid, {0.1}), contract_violation);
}

TEST_CASE("event likelihood with no events is the survival term") {
    Rng rng(13);
    EventGrid grid;
    std::vector<double> hazards;
    double survival = 0.0;
    for (int s = 0; s < 50; ++s) {
        EventInterval iv;
        iv.start = s;
        iv.length = rng.uniform(0.2, 1.0);
        iv.state = static_cast<int>(rng.below(2));
        grid.intervals.push_back(iv);
        hazards.push_back(rng.uniform(0.01, 0.4));
        survival -= iv.length * hazards.back();
    }
    CHECK(event_loglik(grid, hazards) == doctest::Approx(survival).epsilon(1e-12));
}

TEST_CASE("event likelihood agrees with a long-precision oracle on random grids") {
    Rng rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        EventGrid grid;
        std::vector<double> hazards;
        for (int s = 0; s < 30; ++s) {
            EventInterval iv;
            iv.start = s;
            iv.length = rng.uniform(0.1, 1.0);
            iv.state = static_cast<int>(rng.below(2));
            iv.count = rng.uniform() < 0.15 ? 1 : 0;
            grid.intervals.push_back(iv);
            hazards.push_back(rng.uniform(0.01, 0.8));
        }
        const double got = event_loglik(grid, hazards);
        const double want = static_cast<double>(event_oracle(grid, hazards));
        CHECK(std::abs(got - want) < 1e-10 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("per-interval poisson factors normalize over all counts") {
    // The exponentiated log-likelihood summed over y = 0, 1, 2, ... must be
    // one; truncating at 40 terms leaves error far below 1e-12.
    for (double mu : {0.05, 0.5, 2.0}) {
        long double total = 0.0L;
        long double logfact = 0.0L;
        for (int y = 0; y <= 40; ++y) {
            if (y > 0) logfact += std::log(static_cast<long double>(y));
            total += std::exp(y * std::log(static_cast<long double>(mu)) - mu - logfact);
        }
        CHECK(std::abs(static_cast<double>(total) - 1.0) < 1e-12);
    }
}

TEST_CASE("effect prior reduces to independent normals when slopes vanish") {
    const int b = 5;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(b);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(2 * b);
    const double omega2 = 0.7;
    CHECK(beta_logprior(beta, 0.4, eta, omega2, eig()) ==
          doctest::Approx(b * (-0.5 * std::log(2.0 * M_PI * omega2))).epsilon(1e-13));

    // With zero slopes the prior ignores the admission level.
    Rng rng(55);
    for (int k = 0; k < b; ++k) {
        eta[2 * k] = rng.normal();
        beta[k] = rng.normal();
    }
    CHECK(beta_logprior(beta, 0.1, eta, omega2, eig()) ==
          doctest::Approx(beta_logprior(beta, 0.9, eta, omega2, eig())).epsilon(1e-13));
}

TEST_CASE("effect prior couples levels and slopes through eigenvalue weights") {
    const int b = 4;
    Rng rng(56);
    Eigen::VectorXd beta(b);
    Eigen::VectorXd eta(2 * b);
    for (int k = 0; k < b; ++k) {
        beta[k] = rng.normal();
        eta[2 * k] = rng.normal();
        eta[2 * k + 1] = rng.normal();
    }
    const double hb = 0.37;
    const double omega2 = 0.4;
    long double want = 0.0L;
    for (int k = 0; k < b; ++k) {
        const long double mean =
            eta[2 * k] + std::sqrt(eig().eigenvalue(k + 1)) * hb * eta[2 * k + 1];
        want += normal_logpdf_ld(beta[k], mean, omega2);
    }
    CHECK(beta_logprior(beta, hb, eta, omega2, eig()) ==
          doctest::Approx(static_cast<double>(want)).epsilon(1e-12));
}

TEST_CASE("recovery-rate prior is lognormal with the jacobian term") {
    Rng rng(57);
    Eigen::VectorXd q(recovery_design_size());
    Eigen::VectorXd zeta(recovery_design_size());
    for (int i = 0; i < q.size(); ++i) {
        q[i] = rng.uniform();
        zeta[i] = rng.normal(0.0, 0.4);
    }
    const double s2 = 0.3;

    // At the mode of log-lambda the exponent vanishes.
    const double mode = std::exp(q.dot(zeta));
    CHECK(lambda_logprior(mode, q, zeta, s2) ==
          doctest::Approx(-q.dot(zeta) - 0.5 * std::log(2.0 * M_PI * s2)).epsilon(1e-12));

    // Oracle comparison at random points.
    for (int rep = 0; rep < 10; ++rep) {
        const double lam = rng.uniform(0.01, 2.0);
        const long double want =
            normal_logpdf_ld(std::log(lam), q.dot(zeta), s2) - std::log((long double)lam);
        CHECK(lambda_logprior(lam, q, zeta, s2) ==
              doctest::Approx(static_cast<double>(want)).epsilon(1e-12));
    }

    // A huge variance flattens the distribution of log-lambda.
    const double flat1 = lambda_logprior(0.3, q, zeta, 1e12) + std::log(0.3);
    const double flat2 = lambda_logprior(3.0, q, zeta, 1e12) + std::log(3.0);
    CHECK(std::abs(flat1 - flat2) < 1e-8);

    CHECK_THROWS_AS(lambda_logprior(0.0, q, zeta, s2), contract_violation);
    CHECK_THROWS_AS(lambda_logprior(1.0, q, zeta, 0.0), contract_violation);
}

TEST_CASE("global parameter container validates dimensions and positivity") {
    const int p = 8;
    const int b = 4;
    GlobalParams g = GlobalParams::sized(p, b);
    g.validate(p, b);
    CHECK(g.gamma0.size() == trend_design_size());
    CHECK(g.gamma.size() == p - 1);
    CHECK(g.eta.size() == 2 * b);
    CHECK(g.zeta.size() == recovery_design_size());
    CHECK(g.psi[0].size() == hazard_layout(0).total);
    CHECK(g.psi[1].size() == hazard_layout(1).total);
    CHECK(g.nu2[0].size() == hazard_layout(0).n_blocks());

    GlobalParams bad = g;
    bad.sigma2 = 0.0;
    CHECK_THROWS_AS(bad.validate(p, b), contract_violation);
    bad = g;
    bad.eta = Eigen::VectorXd::Zero(2 * b + 1);
    CHECK_THROWS_AS(bad.validate(p, b), contract_violation);
    bad = g;
    bad.nu2[1][0] = -1.0;
    CHECK_THROWS_AS(bad.validate(p, b), contract_violation);
}
