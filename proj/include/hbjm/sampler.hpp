#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "hbjm/basis.hpp"
#include "hbjm/cohort.hpp"
#include "hbjm/config.hpp"
#include "hbjm/likelihood.hpp"
#include "hbjm/rng.hpp"
#include "hbjm/trajectory.hpp"

namespace hbjm {

// Substream channels keeping per-patient, global, prediction and simulation
// random numbers disjoint under a shared seed.
inline constexpr std::uint64_t kChannelPatient = 1;
inline constexpr std::uint64_t kChannelGlobal = 2;
inline constexpr std::uint64_t kChannelPredict = 3;
inline constexpr std::uint64_t kChannelSimulate = 4;
inline constexpr std::uint64_t kChannelForward = 5;

/// Draw from the Gaussian full conditional of a coefficient vector with
/// independent N(0, 1/prior_prec[c]) priors and a Gaussian likelihood whose
/// sufficient statistics are `gram` (sum of design outer products) and `xy`
/// (design times response): precision P = diag(prior_prec) + gram/noise_var,
/// mean P^-1 xy / noise_var. Consumes exactly xy.size() normal draws.
Eigen::VectorXd draw_gaussian_conditional(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xy,
                                          const Eigen::VectorXd& prior_prec, double noise_var,
                                          Rng& rng);

/// Conjugate inverse-gamma variance draw IG(a + n_terms/2, b + sum_sq/2).
double draw_variance_conjugate(double a, double b, double n_terms, double sum_sq, Rng& rng);

/// Conjugate gamma draw for a multiplicative frailty on a Poisson process:
/// Gamma(shape + events, rate + exposure), rate parameterization.
double draw_frailty_conjugate(double shape, double rate, double events, double exposure,
                              Rng& rng);

/// Metropolis accept decision. Always consumes exactly one uniform draw so
/// stream positions do not depend on the outcome.
bool mh_accept(double log_ratio, Rng& rng);

/// Stochastic-approximation update of a proposal scale toward the target
/// acceptance rate, with gain decaying over adaptation batches:
/// scale * exp((observed_rate - target) / sqrt(batch + 1)), clamped to
/// [1e-8, 1e8].
double adapt_scale(double scale, double observed_rate, double target, int batch);

/// One in-risk interval of a patient's event history with its hazard
/// covariates cached. The hemoglobin feature tracks the current trajectory.
struct RiskSlice {
    double start = 0.0;
    double length = 0.0;
    int process = 0; // 0 = admission hazard (at home), 1 = discharge hazard
    int count = 0;
    double study_feat = 0.0;     // scaled study time at the interval start
    double inpatient_feat = 0.0; // scaled days since admission, discharge process only
    double hb_feat = 0.0;        // scaled true hemoglobin at the interval start
    int anchor = -1;
};

/// Mutable sampling state of one patient: effect values plus caches of the
/// trajectory and hazard terms at every anchor time. The Metropolis updates
/// maintain the caches incrementally; refresh() rebuilds them from scratch.
struct PatientState {
    const PatientRecord* record = nullptr;

    PatientEffects effects;
    Eigen::VectorXd z0; // trend-level regression covariates

    // Observed series; imputed values overwrite missing entries each sweep.
    std::vector<double> obs_value;
    std::vector<int> obs_anchor; // nondecreasing
    std::vector<int> missing_obs;

    // Anchors: the sorted unique times of all observations, risk-interval
    // starts, admissions and in-window discharges.
    std::vector<double> anchor_time;
    Eigen::MatrixXd trend_rows; // p x n_anchor weighted basis rows
    Eigen::VectorXd t_cur;      // true hemoglobin at each anchor

    struct StayCache {
        int lo = 0; // anchor range with admit <= t <= discharge
        int hi = 0;
        int admit_anchor = -1;
        int discharge_anchor = -1; // -1 when follow-up censors the stay
        Eigen::MatrixXd rows;      // b x (hi - lo) in-stay effect rows
        Eigen::VectorXd discharge_row;
        double level = 0.0;     // discharge_row . beta
        Eigen::VectorXd decay;  // exp(-lambda (t - discharge)) on anchors [hi, n)
    };
    std::vector<StayCache> stays;

    std::vector<RiskSlice> risk; // in-risk intervals only, ordered by start
    std::array<double, 2> constant_dot = {0.0, 0.0}; // intercept + static part of the lp
    std::array<double, 2> count_sum = {0.0, 0.0};
    std::array<double, 2> exposure = {0.0, 0.0}; // sum of length * hazard / frailty
    std::array<Eigen::VectorXd, 2> static_tail;  // hazard row beyond the varying features

    // Self-tuning proposal scales with acceptance tallies for the current
    // adaptation window.
    Eigen::VectorXd step_alpha;
    Eigen::VectorXd step_beta; // pooled over stays, one scale per basis index
    double step_lambda = 0.5;
    Eigen::ArrayXi acc_alpha, att_alpha, acc_beta, att_beta;
    int acc_lambda = 0, att_lambda = 0;
    long long clamped = 0; // proposals rejected on a -inf log ratio

    // Proposal scratch reused across sweeps; not part of the sampling state.
    struct Scratch {
        Eigen::VectorXd t_new;
        Eigen::VectorXd decay_new;
        std::vector<double> hb_new;
        std::array<double, 2> d_expo = {0.0, 0.0};
    } scratch;

    /// Rebuilds t_cur, stay levels and decays, hazard features, constant
    /// linear-predictor parts and exposures from the current effects and
    /// global parameters.
    void refresh(const GlobalParams& g);
};

/// Builds the sampling cache for one record: index-conditioned event grid,
/// anchor design rows and neutral starting effects (flat trend at the mean
/// observed hemoglobin, zero disturbances, unit decay rates and frailties).
PatientState build_patient_state(const PatientRecord& rec, const Eigensystem& eig,
                                 const ModelConfig& model);

/// One Metropolis-within-Gibbs pass over a single patient: refreshes caches,
/// imputes missing observations, then updates trend coefficients, per-stay
/// disturbance coefficients, decay rates and the two frailties. Proposal
/// scales are read but never adapted here, so the pass is reusable for
/// prediction-time conditioning on partial histories.
void patient_sweep(PatientState& ps, const GlobalParams& g, const Eigensystem& eig, Rng& rng);

/// Pooled acceptance diagnostics over all patients and sweeps so far.
struct SamplerDiagnostics {
    long long clamped = 0;
    double accept_alpha = 0.0;
    double accept_beta = 0.0;
    double accept_lambda = 0.0;
    double accept_psi = 0.0;
    double accept_rho_hyper = 0.0;
};

/// Metropolis-within-Gibbs sampler for the joint longitudinal and
/// event-history model. Every draw is a deterministic function of the seed
/// and iteration number; the worker thread count never changes results.
class Sampler {
  public:
    /// Validates the configuration and cohort, then builds all per-patient
    /// caches. The cohort is copied, so the argument need not outlive the
    /// sampler.
    Sampler(const Cohort& cohort, const RunConfig& cfg);

    /// One full sweep: per-patient pass (parallel over patients), then the
    /// global parameter blocks. During burn-in, proposal scales adapt every
    /// chain.adapt_window sweeps; after burn-in they are frozen.
    void sweep(int iter);

    /// Runs the configured chain, calling keep(iter) for each retained
    /// post-burn-in draw after thinning. Inspect state via the accessors
    /// from inside the callback.
    void run(const std::function<void(int)>& keep);

    const GlobalParams& globals() const { return globals_; }
    GlobalParams& globals() { return globals_; }
    const std::vector<PatientState>& patients() const { return patients_; }
    std::vector<PatientState>& patients() { return patients_; }
    const Eigensystem& eigensystem() const { return eig_; }
    const RunConfig& config() const { return cfg_; }
    const std::array<std::vector<double>, 2>& psi_steps() const { return step_psi_; }
    SamplerDiagnostics diagnostics() const;

  private:
    void patient_pass(int iter);
    void update_globals(Rng& rng, bool prior_shot);
    void update_psi(Rng& rng, bool prior_shot);
    void update_frailty_hyper(Rng& rng, bool prior_shot);
    void adapt(int batch);

    RunConfig cfg_;
    Eigensystem eig_;
    Cohort cohort_; // owned copy; patient states point into its records
    GlobalParams globals_;
    std::vector<PatientState> patients_;
    Eigen::MatrixXd gram0_; // sum of z0 z0^T over patients
    int n_threads_ = 1;

    std::array<std::vector<double>, 2> step_psi_;
    std::array<std::vector<int>, 2> acc_psi_, att_psi_;
    std::array<double, 2> step_rho_shape_ = {0.5, 0.5};
    std::array<double, 2> step_rho_rate_ = {0.5, 0.5};
    std::array<int, 2> acc_rho_shape_ = {0, 0}, att_rho_shape_ = {0, 0};
    std::array<int, 2> acc_rho_rate_ = {0, 0}, att_rho_rate_ = {0, 0};
    std::vector<double> expo_scratch_;

    // Window tallies folded in here when adaptation resets them.
    long long cum_acc_alpha_ = 0, cum_att_alpha_ = 0;
    long long cum_acc_beta_ = 0, cum_att_beta_ = 0;
    long long cum_acc_lambda_ = 0, cum_att_lambda_ = 0;
    long long cum_acc_psi_ = 0, cum_att_psi_ = 0;
    long long cum_acc_rho_ = 0, cum_att_rho_ = 0;
    long long cum_clamped_ = 0;
};

} // namespace hbjm
