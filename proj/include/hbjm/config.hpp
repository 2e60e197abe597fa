#pragma once

#include <cstdint>
#include <string>

namespace hbjm {

/// Structural knobs of the model itself.
struct ModelConfig {
    int p = 10;          // trend basis functions, including the constant
    int b = 5;           // hospitalization-effect basis columns
    double m_max = 14.0; // inpatient time saturates after this many days
    int grid_size = 512; // quadrature grid behind the eigensystem
    double max_interval = 1.0; // event-grid refinement in days
};

/// Prior constants, one (a, b) pair per variance component plus the gamma
/// priors on the frailty hyperparameters. Defaults follow the published
/// hyperparameter table.
struct PriorConfig {
    double a_sigma = 400001.0; // response noise, strongly centered at 0.25
    double b_sigma = 100000.0;
    double a_tau0 = 1.0;
    double b_tau0 = 1.0;
    double a_gamma0 = 1.0; // trend-intercept coefficient variance
    double b_gamma0 = 1.0;
    double a_tau = 1.0;
    double b_tau = 1.0;
    double a_sigma_gamma = 1.0; // trend-component coefficient variance
    double b_sigma_gamma = 1.0;
    double a_omega = 1.0;
    double b_omega = 1.0;
    double a_eta = 1.0;
    double b_eta = 1.0;
    double a_lambda = 10.0; // recovery-rate log variance
    double b_lambda = 10.0;
    double a_zeta = 1.0;
    double b_zeta = 1.0;
    double a_nu = 1.0;
    double b_nu = 1.0;
    double a_alpha_rho = 2.0; // frailty shape hyperprior
    double b_alpha_rho = 0.5;
    double a_beta_rho = 2.0; // frailty rate hyperprior
    double b_beta_rho = 0.5;
};

/// MCMC run controls.
struct ChainConfig {
    std::uint64_t seed = 1;
    int n_iter = 5000;
    int n_burnin = 2000;
    int thin = 5;
    double target_accept = 0.44;
    int adapt_window = 50;
    bool save_effects = false; // also write per-patient draws to a sidecar
};

/// Forward-simulation controls. Times are study days (0 = one year before
/// the anchor discharge, 365 = the anchor discharge itself).
struct PredictConfig {
    double t_star = 365.0;  // condition on data up to here
    double horizon = 730.0; // simulate trajectories up to here
    double delta = 1.0;     // event-step discretization in days
    int draws = 100;        // posterior draws per patient
    int inner_sweeps = 25;  // patient-parameter refresh sweeps per draw
};

struct ValidateConfig {
    int folds = 5;
};

/// Synthetic cohort generation controls.
struct SimulateConfig {
    int n_patients = 200;
    double obs_prob_hospital = 0.7; // daily draw probability while admitted
    double obs_rate_home = 0.085;   // draws per day at home
    double censor_prob = 0.1;       // chance of censoring before the horizon
};

struct RunConfig {
    int threads = 0; // 0 uses hardware concurrency
    ModelConfig model;
    PriorConfig prior;
    ChainConfig chain;
    PredictConfig predict;
    ValidateConfig validate;
    SimulateConfig simulate;
};

/// Parses the flat key-value configuration format. Unknown keys, duplicate
/// keys and malformed values raise config_error naming the line.
RunConfig parse_config(const std::string& text);

/// Reads and parses a configuration file; a missing file raises
/// data_error("missing_file").
RunConfig load_config(const std::string& path);

/// Canonical text form listing every key. dump -> parse -> dump is
/// byte-identical.
std::string dump_config(const RunConfig& cfg);

/// Applies HBJM_-prefixed environment variables (model.grid_size becomes
/// HBJM_MODEL_GRID_SIZE). Malformed values raise config_error naming the
/// variable.
void apply_env_overrides(RunConfig& cfg);

/// Cross-field invariants; violations raise config_error.
void validate_config(const RunConfig& cfg);

} // namespace hbjm
