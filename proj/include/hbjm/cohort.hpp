#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hbjm {

/// Follow-up runs from one year before the anchor discharge to one year
/// after; all patient times are days relative to that anchor.
constexpr double kFollowupStart = -365.0;
constexpr double kFollowupEnd = 365.0;
constexpr double kStudyLengthDays = 730.0;

/// A hemoglobin measurement. `missing` marks draws whose value was lost;
/// these are imputed during sampling.
struct Observation {
    double time = 0.0;
    double value = 0.0;
    bool missing = false;
};

struct Hospitalization {
    double admit = 0.0;
    double discharge = 0.0;
    bool is_index = false;
};

/// Baseline covariates recorded at the anchor admission. Categorical fields
/// hold level codes; continuous fields are stored raw and scaled on use.
struct Baseline {
    double age = 60.0;
    int gender = 0; // 0 male, 1 female
    double charlson = 0.0;
    int suppl_iron = 0;
    int renal_disease = 0;
    int metastatic_tumor = 0;
    int other_cancer = 0;
    int surgical = 0;
    int race = 4; // level code into kRaceLevels
    double sofa = 0.0;
    double rbc_day1 = 0.0;
    double index_icu_days = 0.0;
    double index_hospital_days = 0.0;
    double total_hospital_duration = 0.0;
    double total_ed_duration = 0.0;
    double total_emergency_duration = 0.0;
    double total_hospital_days = 0.0;
};

constexpr int kGenderLevels = 2;
constexpr int kRaceLevels = 6;

struct PatientRecord {
    long id = 0;
    Baseline baseline;
    std::vector<Observation> observations;    // sorted by time
    std::vector<Hospitalization> hospitalizations; // sorted by admit
    double end_of_followup = kFollowupEnd;

    /// Position of the anchor stay in `hospitalizations`.
    int index_stay() const;
};

struct Cohort {
    std::vector<PatientRecord> patients;
};

/// Loads observations.csv, hospitalizations.csv, baseline.csv and
/// followup.csv from a directory and validates the result. Throws
/// data_error or format_error on any violation.
Cohort load_cohort(const std::string& dir);

/// Writes the four cohort files into a directory (inverse of load_cohort).
void save_cohort(const Cohort& cohort, const std::string& dir);

/// Validation used by load_cohort, exposed for synthetic cohorts assembled
/// in memory.
void validate_cohort(const Cohort& cohort);

/// Same rules for a single conditioning history, except that measurements
/// during the anchor stay are optional (histories may carry no hemoglobin
/// values at all).
void validate_history(const PatientRecord& p);

/// Maps a patient-time in days to the unit interval spanning the follow-up
/// window (time 0 maps to 0.5).
double study_time_unit(double t);

// Scaling ranges for continuous covariates. Values outside a range are
// clamped before scaling.
namespace bounds {
constexpr double hb_lo = 2.2, hb_hi = 20.0;
constexpr double study_lo = 0.0, study_hi = 730.0;
constexpr double inpatient_lo = 0.0, inpatient_hi = 14.0;
constexpr double age_lo = 16.0, age_hi = 100.0;
constexpr double charlson_lo = 0.0, charlson_hi = 19.0;
constexpr double sofa_lo = 0.0, sofa_hi = 20.0;
constexpr double rbc_lo = 0.0, rbc_hi = 107.0;
constexpr double icu_lo = 0.0, icu_hi = 30.0;
constexpr double index_hosp_lo = 0.0, index_hosp_hi = 50.0;
constexpr double total_hosp_dur_lo = 0.0, total_hosp_dur_hi = 83.0;
constexpr double total_ed_lo = 0.0, total_ed_hi = 62.0;
constexpr double total_emg_lo = 0.0, total_emg_hi = 50.0;
constexpr double total_hosp_days_lo = 0.0, total_hosp_days_hi = 9.0;
} // namespace bounds

/// Scaled hemoglobin value used in hazard and recovery designs.
double scale_hb(double hb);

/// Number of entries in the baseline trend design (intercept plus scaled
/// and contrast-expanded covariates).
int trend_design_size(); // 29

/// Design row for the patient-level trend intercept prior.
Eigen::VectorXd trend_design(const Baseline& b);

/// Number of entries in the recovery-rate regression design.
int recovery_design_size(); // 10

/// Design row for the log recovery rate of one hospitalization: baseline
/// terms plus scaled true hemoglobin at admission and discharge and their
/// interaction.
Eigen::VectorXd recovery_design(const Baseline& b, double hb_at_admit, double hb_at_discharge);

/// Coefficient block structure of a design row. Blocks group the expanded
/// columns of one covariate so block-wise proposals and prior variances
/// line up.
struct DesignLayout {
    std::vector<std::string> block_names;
    std::vector<int> block_offsets;
    std::vector<int> block_sizes;
    int total = 0;

    int n_blocks() const { return static_cast<int>(block_sizes.size()); }
};

/// Block structure of the hazard design for one process (0 = admission,
/// 1 = discharge).
const DesignLayout& hazard_layout(int state);

/// Block structure of the recovery-rate regression design; each block has
/// its own prior variance.
const DesignLayout& recovery_layout();

/// Index of the scaled-hemoglobin entry within a hazard design row (the only
/// entry that depends on model parameters).
constexpr int kHazardHbEntry = 1;

/// Hazard design row with the hemoglobin entry left at zero. `t` is the
/// interval start in patient days; `admit_time` is the admission time of the
/// ongoing stay and is only read for the discharge process.
Eigen::VectorXd hazard_design_static(const Baseline& b, int state, double t,
                                     double admit_time = 0.0);

/// One interval of the event-process partition of a patient's follow-up.
struct EventInterval {
    double start = 0.0;
    double length = 0.0;
    int state = 0;     // 0 at home, 1 hospitalized
    int count = 0;     // 1 when a state change closes the interval
    bool in_risk_set = true;
    double admit_time = 0.0; // admission time of the ongoing stay (state 1 only)
};

struct EventGrid {
    std::vector<EventInterval> intervals;
    /// Interval closed by the anchor admission, or -1 when that admission
    /// precedes the follow-up window.
    int index_admission_interval = -1;
};

/// Partitions [follow-up start, end_of_followup] at every admission and
/// discharge and refines each piece to at most max_interval days. Exactly
/// the intervals closed by a state change carry count 1, and the interval
/// closed by the anchor admission is marked outside the risk set.
EventGrid build_event_grid(const PatientRecord& p, double max_interval);

/// Removes the anchor admission event from the admission process: its
/// interval ends up with zero count and outside the risk set, so the whole
/// Poisson factor of that interval drops from the likelihood. Idempotent;
/// throws data_error when the grid holds no anchor admission.
EventGrid index_conditioning(EventGrid grid);

} // namespace hbjm
