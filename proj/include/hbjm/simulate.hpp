#pragma once

// Synthetic cohorts generated forward from known parameters: the oracle for
// end-to-end verification of the fitting and prediction pipeline.

#include <array>
#include <cstdint>
#include <vector>

#include "hbjm/basis.hpp"
#include "hbjm/cohort.hpp"
#include "hbjm/config.hpp"
#include "hbjm/likelihood.hpp"
#include "hbjm/trajectory.hpp"

namespace hbjm {

/// A generated cohort together with everything the generator knew.
struct SynthCohort {
    Cohort cohort;                       // observable records, validated
    std::vector<PatientRecord> complete; // uncensored records with every stay kept
    std::vector<PatientEffects> truth;   // latent effects aligned with `complete`

    // Realized integrated hazard and event counts past the anchor admission,
    // per process, pooled over patients and taken on the uncensored paths.
    // Their difference is a martingale, so |observed - expected| should stay
    // within a few square roots of expected.
    std::array<double, 2> expected_events = {0.0, 0.0};
    std::array<long, 2> observed_events = {0, 0};
};

/// Fully specified generating parameters with realistic dynamics: hemoglobin
/// near 10.5 g/dL, admissions around once or twice a year and more likely
/// when hemoglobin is low, stays of a few days, recovery over about two
/// weeks.
GlobalParams example_globals(int p, int b);

/// Simulates a cohort forward from one year before each patient's anchor
/// admission: baseline covariates and effects from their priors, alternating
/// events by the same constant-hazard stepping the predictor uses, and
/// measurements denser in hospital than at home. Patient i draws from an
/// independent substream of seed, so any prefix of the cohort is stable
/// under changes to n_patients.
SynthCohort synth_cohort(const GlobalParams& globals, const Eigensystem& eig,
                         const ModelConfig& model, const SimulateConfig& scfg,
                         std::uint64_t seed);

} // namespace hbjm
