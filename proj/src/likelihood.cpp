#include "hbjm/likelihood.hpp"

#include <cmath>

#include "hbjm/errors.hpp"

namespace hbjm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

GlobalParams GlobalParams::sized(int p, int b) {
    GlobalParams g;
    g.gamma0 = Eigen::VectorXd::Zero(trend_design_size());
    g.gamma = Eigen::VectorXd::Zero(p - 1);
    g.eta = Eigen::VectorXd::Zero(2 * b);
    g.zeta = Eigen::VectorXd::Zero(recovery_design_size());
    g.sigma2_zeta = Eigen::VectorXd::Ones(recovery_layout().n_blocks());
    for (int a = 0; a < 2; ++a) {
        const DesignLayout& layout = hazard_layout(a);
        g.psi[a] = Eigen::VectorXd::Zero(layout.total);
        g.nu2[a] = Eigen::VectorXd::Ones(layout.n_blocks());
    }
    return g;
}

void GlobalParams::validate(int p, int b) const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw contract_violation(std::string("GlobalParams: ") + name +
                                     " must be positive and finite");
    };
    positive(sigma2, "sigma2");
    positive(tau2_0, "tau2_0");
    positive(sigma2_gamma0, "sigma2_gamma0");
    positive(tau2, "tau2");
    positive(sigma2_gamma, "sigma2_gamma");
    positive(omega2, "omega2");
    positive(sigma2_eta, "sigma2_eta");
    positive(sigma2_lambda, "sigma2_lambda");
    if (sigma2_zeta.size() != recovery_layout().n_blocks())
        throw contract_violation("GlobalParams: sigma2_zeta length mismatch");
    for (int z = 0; z < sigma2_zeta.size(); ++z) positive(sigma2_zeta[z], "sigma2_zeta");
    if (gamma0.size() != trend_design_size())
        throw contract_violation("GlobalParams: gamma0 length mismatch");
    if (gamma.size() != p - 1) throw contract_violation("GlobalParams: gamma length mismatch");
    if (eta.size() != 2 * b) throw contract_violation("GlobalParams: eta length mismatch");
    if (zeta.size() != recovery_design_size())
        throw contract_violation("GlobalParams: zeta length mismatch");
    for (int a = 0; a < 2; ++a) {
        const DesignLayout& layout = hazard_layout(a);
        if (psi[a].size() != layout.total)
            throw contract_violation("GlobalParams: psi length mismatch");
        if (nu2[a].size() != layout.n_blocks())
            throw contract_violation("GlobalParams: nu2 length mismatch");
        for (int d = 0; d < layout.n_blocks(); ++d) positive(nu2[a][d], "nu2");
        positive(alpha_rho[a], "alpha_rho");
        positive(beta_rho[a], "beta_rho");
    }
}

double response_loglik(const std::vector<double>& observed, const Eigen::VectorXd& truth,
                       double sigma2) {
    if (!(sigma2 > 0.0)) throw contract_violation("response_loglik: sigma2 must be positive");
    if (static_cast<Eigen::Index>(observed.size()) != truth.size())
        throw contract_violation("response_loglik: length mismatch");
    const double inv = 1.0 / (2.0 * sigma2);
    const double norm = -0.5 * (kLog2Pi + std::log(sigma2));
    double ll = 0.0;
    for (std::size_t s = 0; s < observed.size(); ++s) {
        const double r = observed[s] - truth[static_cast<Eigen::Index>(s)];
        ll += norm - r * r * inv;
    }
    return ll;
}

double hazard(double rho, const Eigen::VectorXd& covariates, const Eigen::VectorXd& psi) {
    if (!(rho > 0.0)) throw contract_violation("hazard: rho must be positive");
    if (covariates.size() != psi.size()) throw contract_violation("hazard: length mismatch");
    return rho * std::exp(covariates.dot(psi));
}

double event_loglik(const EventGrid& grid, const std::vector<double>& hazards) {
    if (hazards.size() != grid.intervals.size())
        throw contract_violation("event_loglik: one hazard per interval required");
    double ll = 0.0;
    for (std::size_t s = 0; s < grid.intervals.size(); ++s) {
        const auto& iv = grid.intervals[s];
        if (!iv.in_risk_set) {
            if (iv.count > 0)
                throw data_error("event_count",
                                 "positive count on an interval outside the risk set");
            continue;
        }
        const double mu = iv.length * hazards[s];
        // Counts are 0 or 1 by grid construction, so log(Y!) vanishes.
        ll += iv.count * std::log(mu) - mu;
    }
    return ll;
}

double beta_logprior(const Eigen::VectorXd& beta, double hb_admit_scaled,
                     const Eigen::VectorXd& eta, double omega2, const Eigensystem& eig) {
    if (!(omega2 > 0.0)) throw contract_violation("beta_logprior: omega2 must be positive");
    if (eta.size() != 2 * beta.size())
        throw contract_violation("beta_logprior: eta must hold a level and slope per entry");
    if (beta.size() >= eig.size())
        throw contract_violation("beta_logprior: more effect entries than basis functions");
    const double inv = 1.0 / (2.0 * omega2);
    const double norm = -0.5 * (kLog2Pi + std::log(omega2));
    double ll = 0.0;
    for (Eigen::Index k = 0; k < beta.size(); ++k) {
        const double mean = eta[2 * k] + std::sqrt(eig.eigenvalue(static_cast<int>(k) + 1)) *
                                             hb_admit_scaled * eta[2 * k + 1];
        const double r = beta[k] - mean;
        ll += norm - r * r * inv;
    }
    return ll;
}

double lambda_logprior(double lambda, const Eigen::VectorXd& q, const Eigen::VectorXd& zeta,
                       double sigma2_lambda) {
    if (!(lambda > 0.0)) throw contract_violation("lambda_logprior: lambda must be positive");
    if (!(sigma2_lambda > 0.0))
        throw contract_violation("lambda_logprior: sigma2_lambda must be positive");
    if (q.size() != zeta.size()) throw contract_violation("lambda_logprior: length mismatch");
    const double log_lambda = std::log(lambda);
    const double r = log_lambda - q.dot(zeta);
    return -log_lambda - 0.5 * (kLog2Pi + std::log(sigma2_lambda)) -
           r * r / (2.0 * sigma2_lambda);
}

} // namespace hbjm
