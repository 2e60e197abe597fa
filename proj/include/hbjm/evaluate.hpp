#pragma once

// Windowed evaluation of predicted trajectories against held-out data:
// absolute deviations, recovery and hospitalization classification, AUC,
// calibration and probability-integral-transform diagnostics.

#include <string>
#include <vector>

#include "hbjm/cohort.hpp"
#include "hbjm/predictor.hpp"
#include "hbjm/rng.hpp"

namespace hbjm {

/// Half-open span of study days.
struct Window {
    double start = 0.0;
    double end = 0.0;
};

/// The twelve windows covering study days [365, 730): eleven 30-day windows
/// anchored at day 365 and a final 35-day window.
std::vector<Window> evaluation_windows();

/// Recovery threshold in g/dL: 13 for men, 12 for women.
double recovery_threshold(int gender);

/// One patient-window classification: the model's probability and the
/// observed outcome. Entries with evaluable == false carry no information
/// and are skipped by auc and calibration_bins.
struct ScoredLabel {
    long patient_id = 0;
    int window = 0;
    double score = 0.0;
    bool label = false;
    bool evaluable = false;
};

struct LabelResult {
    bool evaluable = false;
    bool label = false;
};

/// Drops sampled points and events at or after the death/censoring day
/// (study axis), so no metric sees the unobserved remainder.
std::vector<SimulatedTrajectory> truncate_at_death(std::vector<SimulatedTrajectory> ensemble,
                                                   double death_day);

/// Trajectory value at patient day t: exact at sampled marks, linear in
/// between (reporting only, never a likelihood input). Throws
/// contract_violation outside the sampled span.
double path_value(const SimulatedTrajectory& traj, double t);

/// Fraction of trajectories whose sampled path reaches the sex-specific
/// threshold at least once inside the window.
double recovery_score(const std::vector<SimulatedTrajectory>& ensemble, const Window& w,
                      int gender);

/// Fraction of trajectories hospitalized at some sampled point in the window.
double hospitalization_score(const std::vector<SimulatedTrajectory>& ensemble, const Window& w);

/// Observed recovery in the window: true when any non-missing measurement
/// reaches the threshold. Not evaluable without in-window measurements.
LabelResult recovery_label(const PatientRecord& rec, const Window& w);

/// Observed hospital time in the window, clipped to the record's follow-up.
/// Not evaluable when follow-up ends before the window opens.
LabelResult hospitalization_label(const PatientRecord& rec, const Window& w);

struct AucResult {
    bool evaluable = false;
    double value = 0.5;
};

/// Mann-Whitney area under the ROC curve over the evaluable entries; not
/// evaluable unless both classes are present.
AucResult auc(const std::vector<ScoredLabel>& scored);

/// Probability-integral-transform quantile per non-missing observation that
/// falls inside the ensemble's sampled span: predictive draws add
/// Normal(0, sigma2) noise to each trajectory's value, and
/// q = (#{draw <= observed} + 1/2) / (R + 1/2).
std::vector<double> pit_quantiles(const std::vector<SimulatedTrajectory>& ensemble,
                                  const std::vector<Observation>& observations, double sigma2,
                                  Rng& rng);

/// One probability bin of a reliability table. Empty bins keep n == 0 and
/// NaN summaries.
struct CalibrationBin {
    double lo = 0.0;
    double hi = 0.0;
    long n = 0;
    double mean_score = 0.0;
    double p_hat = 0.0;
    double se = 0.0;
};

/// Equal-width reliability table over the evaluable entries.
std::vector<CalibrationBin> calibration_bins(const std::vector<ScoredLabel>& scored, int n_bins);

/// Value of one windowed metric; n == 0 marks a window with no usable data.
struct WindowMetric {
    Window window;
    long n = 0;
    double value = 0.0;
};

/// Per-window mean absolute deviation between held-out measurements and the
/// pointwise ensemble median, pooled over patients. ensembles[i] pairs with
/// observations[i]; observation times are patient days.
std::vector<WindowMetric> mad(const std::vector<std::vector<SimulatedTrajectory>>& ensembles,
                              const std::vector<std::vector<Observation>>& observations,
                              const std::vector<Window>& windows);

/// Everything the validation pipeline reports.
struct MetricsReport {
    std::vector<Window> windows;
    std::vector<WindowMetric> mad;
    std::vector<WindowMetric> auc_recovery;
    std::vector<WindowMetric> auc_hospitalization;
    std::vector<CalibrationBin> calibration_recovery;
    std::vector<CalibrationBin> calibration_hospitalization;
    std::vector<double> pit;
};

/// JSON document with every table in the report. NaN summaries of empty
/// cells serialize as null.
void write_metrics_json(const std::string& path, const MetricsReport& report);

/// Reliability table as CSV (lo, hi, n, mean_score, p_hat, se); empty bins
/// leave their summary fields blank.
void write_calibration_csv(const std::string& path, const std::vector<CalibrationBin>& bins);

/// Normal-score quantile-quantile pairs of the PIT values, sorted:
/// theoretical score of rank (i + 1/2)/n against the observed score. Values
/// at the boundary are clamped just inside (0, 1) before scoring.
void write_qq_csv(const std::string& path, std::vector<double> pit);

} // namespace hbjm
