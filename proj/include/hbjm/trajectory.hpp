#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "hbjm/basis.hpp"
#include "hbjm/cohort.hpp"

namespace hbjm {

/// Shape of the per-hospitalization effect expansion: how many non-constant
/// basis functions carry each stay's disturbance and over how many days the
/// in-hospital ramp saturates.
struct HospBasisConfig {
    int b = 5;
    double m_max = 14.0;
};

/// Latent quantities describing one patient's hemoglobin surface and event
/// intensity.
struct PatientEffects {
    Eigen::VectorXd alpha;             // basis coefficients of the long-run trend
    std::vector<Eigen::VectorXd> beta; // one b-vector per hospitalization
    std::vector<double> lambda;        // positive post-discharge decay rates
    std::array<double, 2> rho = {1.0, 1.0}; // frailties: admission, discharge
};

/// Effect design row of one hospitalization at time t: zero before
/// admission, a basis ramp anchored at the admission level while in
/// hospital, and the discharge level decaying exponentially afterwards.
/// Entry k (0-based) uses eigenfunction k+1, so the constant never enters.
Eigen::VectorXd hosp_effect_row(const Eigensystem& eig, const HospBasisConfig& cfg,
                                const Hospitalization& stay, double lambda, double t);

/// True hemoglobin at time t: the smooth trend plus every hospitalization
/// disturbance active at t.
double true_hb_at(const Eigensystem& eig, const HospBasisConfig& cfg,
                  const PatientRecord& patient, const PatientEffects& effects, double t);

/// Vectorized true_hb_at.
Eigen::VectorXd true_hb(const Eigensystem& eig, const HospBasisConfig& cfg,
                        const PatientRecord& patient, const PatientEffects& effects,
                        const std::vector<double>& times);

} // namespace hbjm
