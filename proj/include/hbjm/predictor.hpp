#pragma once

// Conditioning on a partial patient history and forward simulation of
// complete trajectories under posterior draws.

#include <cstdint>
#include <string>
#include <vector>

#include "hbjm/basis.hpp"
#include "hbjm/cohort.hpp"
#include "hbjm/config.hpp"
#include "hbjm/likelihood.hpp"
#include "hbjm/rng.hpp"
#include "hbjm/trajectory.hpp"

namespace hbjm {

/// Study days (0 = one year before the anchor discharge) convert to patient
/// days by subtracting this offset.
inline constexpr double kStudyDayOffset = 365.0;

/// Sentinel discharge for a stay still open while the process is being
/// simulated; far beyond any reachable patient day.
inline constexpr double kOpenDischarge = 1.0e6;

struct SimulatedEvent {
    double time = 0.0; // patient days
    int type = 0;      // 0 admission, 1 discharge
};

/// One complete simulated future: hemoglobin sampled at daily marks and
/// event knots, the state at each sample, the events past the conditioning
/// time, and the record and effects behind the path.
struct SimulatedTrajectory {
    std::vector<double> time; // patient days
    std::vector<double> true_hb;
    std::vector<int> state; // 1 while hospitalized, right-continuous
    std::vector<SimulatedEvent> events;
    PatientRecord record;   // history extended by the simulated stays
    PatientEffects effects; // includes draws for the simulated stays
};

/// Truncates a record at t_star (study days): keeps observations and
/// admissions up to the cut, marks a stay still open there as censored, and
/// ends follow-up at the cut.
PatientRecord truncate_history(const PatientRecord& rec, double t_star);

/// Draws the patient's effects from their conditional given the globals and
/// the history, by running inner_sweeps Metropolis-within-Gibbs sweeps over
/// the patient block. The history must end at the conditioning time; data
/// beyond it raise contract_violation.
PatientEffects condition_on_history(const GlobalParams& globals, const PatientRecord& history,
                                    const Eigensystem& eig, const ModelConfig& model,
                                    int inner_sweeps, Rng& rng);

/// Draws disturbance coefficients for a stay admitted at admit_time from
/// their admission-level model, given the trajectory the record and effects
/// currently imply.
Eigen::VectorXd draw_admission_coefficients(const GlobalParams& globals, const Eigensystem& eig,
                                            const ModelConfig& model,
                                            const PatientRecord& record,
                                            const PatientEffects& effects, double admit_time,
                                            Rng& rng);

/// Draws a recovery rate for the (closed) stay at stay_index from its
/// regression model on the trajectory at admission and discharge.
double draw_recovery_rate(const GlobalParams& globals, const Eigensystem& eig,
                          const ModelConfig& model, const PatientRecord& record,
                          const PatientEffects& effects, std::size_t stay_index, Rng& rng);

/// Advances the alternating admission/discharge process from t_from to t_to
/// holding the hazard constant over delta-length steps. Stays opened or
/// closed on the way get fresh effect draws; events are appended. A stay
/// with discharge >= kOpenDischarge marks the process as hospitalized on
/// entry. When cum_exposure is given, the realized integrated hazard per
/// process accumulates into it.
void advance_process(const GlobalParams& globals, const Eigensystem& eig,
                     const ModelConfig& model, PatientRecord& record, PatientEffects& effects,
                     std::vector<SimulatedEvent>& events, double t_from, double t_to,
                     double delta, Rng& rng, std::array<double, 2>* cum_exposure = nullptr);

/// Simulates one future path from the end of the history to the horizon.
SimulatedTrajectory simulate_forward(const GlobalParams& globals, const PatientEffects& effects,
                                     const PatientRecord& history, const Eigensystem& eig,
                                     const ModelConfig& model, const PredictConfig& pcfg,
                                     Rng& rng);

/// R conditioned forward simulations for one patient; posterior draws are
/// cycled when R exceeds them. patient_key separates random substreams
/// between patients, so ensembles are reproducible regardless of the thread
/// count.
std::vector<SimulatedTrajectory> generate_ensemble(const std::vector<GlobalParams>& posterior,
                                                   const PatientRecord& history,
                                                   const Eigensystem& eig,
                                                   const ModelConfig& model,
                                                   const PredictConfig& pcfg,
                                                   std::uint64_t seed,
                                                   std::uint64_t patient_key, int threads = 1);

/// Writes the sampled paths as CSV (trajectory_id, day, true_hb, state),
/// days on the study axis. Bytes are identical across reruns.
void write_trajectory_csv(const std::string& path,
                          const std::vector<SimulatedTrajectory>& ensemble);

/// Writes the simulated events as CSV (trajectory_id, time, event_type),
/// times on the study axis.
void write_event_csv(const std::string& path, const std::vector<SimulatedTrajectory>& ensemble);

} // namespace hbjm
