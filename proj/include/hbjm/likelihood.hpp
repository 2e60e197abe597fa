#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "hbjm/basis.hpp"
#include "hbjm/cohort.hpp"

namespace hbjm {

/// Population-level parameters of the joint model. Hospitalization-effect
/// regression coefficients are ordered (level, slope) per basis function;
/// hazard coefficients are stored flat per state with the block structure
/// given by hazard_layout().
struct GlobalParams {
    double sigma2 = 0.25; // response measurement noise

    Eigen::VectorXd gamma0; // trend-intercept regression coefficients
    double tau2_0 = 1.0;
    double sigma2_gamma0 = 1.0;

    Eigen::VectorXd gamma; // one coefficient per non-constant trend function
    double tau2 = 1.0;
    double sigma2_gamma = 1.0;

    Eigen::VectorXd eta; // 2b entries: (level_1, slope_1, ..., level_b, slope_b)
    double omega2 = 1.0;
    double sigma2_eta = 1.0;

    Eigen::VectorXd zeta; // recovery-rate regression coefficients
    double sigma2_lambda = 1.0;
    Eigen::VectorXd sigma2_zeta; // one prior variance per recovery_layout() block

    std::array<Eigen::VectorXd, 2> psi;  // hazard coefficients per state
    std::array<Eigen::VectorXd, 2> nu2;  // prior variance per coefficient block
    std::array<double, 2> alpha_rho = {2.0, 2.0}; // frailty shape per state
    std::array<double, 2> beta_rho = {0.5, 0.5};  // frailty rate per state

    /// Allocates all vectors for p trend functions and b hospitalization
    /// functions, zeroing coefficients and setting unit variances.
    static GlobalParams sized(int p, int b);

    /// Throws contract_violation when a variance is non-positive or a
    /// vector length disagrees with the fixed covariate layouts.
    void validate(int p, int b) const;
};

/// Gaussian measurement log-likelihood of observed values given matching
/// true values.
double response_loglik(const std::vector<double>& observed, const Eigen::VectorXd& truth,
                       double sigma2);

/// Event intensity: frailty times the exponentiated coefficient inner
/// product.
double hazard(double rho, const Eigen::VectorXd& covariates, const Eigen::VectorXd& psi);

/// Poisson log-likelihood of the alternating event process over a grid.
/// hazards[s] must be the intensity of the process the patient is at risk
/// for during interval s. Intervals outside the risk set contribute nothing;
/// a positive count on such an interval is a data error.
double event_loglik(const EventGrid& grid, const std::vector<double>& hazards);

/// Log-prior of one hospitalization's effect coefficients. The mean of
/// coefficient k couples the level and the admission-hemoglobin slope
/// through the same eigenvalue weight the effect columns use.
double beta_logprior(const Eigen::VectorXd& beta, double hb_admit_scaled,
                     const Eigen::VectorXd& eta, double omega2, const Eigensystem& eig);

/// Lognormal log-prior of one recovery rate with regression mean
/// <q, zeta> on the log scale.
double lambda_logprior(double lambda, const Eigen::VectorXd& q, const Eigen::VectorXd& zeta,
                       double sigma2_lambda);

} // namespace hbjm
