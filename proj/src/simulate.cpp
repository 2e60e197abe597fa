#include "hbjm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "hbjm/errors.hpp"
#include "hbjm/predictor.hpp"
#include "hbjm/rng.hpp"
#include "hbjm/sampler.hpp"

namespace hbjm {

namespace {

constexpr double kSimDelta = 1.0;        // event-step discretization in days
constexpr double kIndexAdmitLo = -20.0;  // anchor admissions fall a few weeks
constexpr double kIndexAdmitHi = -3.0;   // before patient day zero
constexpr int kMaxHistoryAttempts = 200;

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

Baseline draw_baseline(Rng& rng) {
    Baseline b;
    b.age = uniform_in(rng, 25.0, 95.0);
    b.gender = rng.uniform() < 0.5 ? 0 : 1;
    b.charlson = uniform_in(rng, 0.0, 12.0);
    b.suppl_iron = rng.uniform() < 0.35 ? 1 : 0;
    b.renal_disease = rng.uniform() < 0.35 ? 1 : 0;
    b.metastatic_tumor = rng.uniform() < 0.2 ? 1 : 0;
    b.other_cancer = rng.uniform() < 0.25 ? 1 : 0;
    b.surgical = rng.uniform() < 0.4 ? 1 : 0;
    b.race = static_cast<int>(rng.uniform() * kRaceLevels) % kRaceLevels;
    b.sofa = uniform_in(rng, 0.0, 15.0);
    b.rbc_day1 = uniform_in(rng, 0.0, 8.0);
    b.index_icu_days = uniform_in(rng, 0.0, 14.0);
    b.index_hospital_days = uniform_in(rng, 2.0, 30.0);
    b.total_hospital_duration = uniform_in(rng, 0.0, 60.0);
    b.total_ed_duration = uniform_in(rng, 0.0, 40.0);
    b.total_emergency_duration = uniform_in(rng, 0.0, 30.0);
    b.total_hospital_days = uniform_in(rng, 0.0, 9.0);
    return b;
}

Eigen::VectorXd draw_trend_coefficients(const GlobalParams& g, const Eigensystem& eig,
                                        const Baseline& baseline, int p, Rng& rng) {
    Eigen::VectorXd alpha(p);
    alpha[0] = trend_design(baseline).dot(g.gamma0) + std::sqrt(g.tau2_0) * rng.normal();
    for (int k = 1; k < p; ++k)
        alpha[k] =
            std::sqrt(eig.eigenvalue(k)) * g.gamma[k - 1] + std::sqrt(g.tau2) * rng.normal();
    return alpha;
}

/// Measurement times over [lo, hi]: one per day with probability
/// obs_prob_hospital while admitted, exponential gaps at rate obs_rate_home
/// otherwise.
std::vector<double> draw_obs_times(const PatientRecord& rec, double lo, double hi,
                                   const SimulateConfig& scfg, Rng& rng) {
    std::vector<double> times;
    struct Span {
        double a, d;
    };
    std::vector<Span> stays;
    for (const auto& h : rec.hospitalizations) {
        const double a = std::max(h.admit, lo);
        const double d = std::min(h.discharge, hi);
        if (a < d) stays.push_back({a, d});
    }

    for (const auto& s : stays)
        for (double day = std::ceil(s.a); day <= s.d; day += 1.0)
            if (rng.uniform() < scfg.obs_prob_hospital) times.push_back(day);

    double seg_start = lo;
    for (std::size_t j = 0; j <= stays.size(); ++j) {
        const double seg_end = j < stays.size() ? stays[j].a : hi;
        if (seg_end > seg_start && scfg.obs_rate_home > 0.0) {
            double t = seg_start + rng.exponential(scfg.obs_rate_home);
            while (t < seg_end) {
                times.push_back(t);
                t += rng.exponential(scfg.obs_rate_home);
            }
        }
        if (j < stays.size()) seg_start = stays[j].d;
    }
    return times;
}

} // namespace

GlobalParams example_globals(int p, int b) {
    GlobalParams g = GlobalParams::sized(p, b);

    g.sigma2 = 0.25;

    g.gamma0[0] = 10.5;
    for (int j = 1; j < g.gamma0.size(); ++j)
        g.gamma0[j] = 0.35 * std::pow(-0.7, j);
    g.tau2_0 = 0.36;

    for (int k = 0; k < g.gamma.size(); ++k)
        g.gamma[k] = (k % 2 == 0 ? 1.0 : -0.7) * std::pow(0.75, k);
    g.tau2 = 0.25;

    // Hospitalizations knock hemoglobin down and recovery climbs back: the
    // leading disturbance level is negative, higher admission hemoglobin
    // softens the drop.
    for (int k = 0; k < b; ++k) {
        g.eta[2 * k] = -2.0 * std::pow(0.6, k);
        g.eta[2 * k + 1] = 0.8 * std::pow(0.6, k);
    }
    g.omega2 = 0.25;

    g.zeta[0] = -2.0;
    g.zeta[1] = 0.15;
    g.zeta[2] = 0.05;
    g.zeta[3] = -0.05;
    g.zeta[4] = -0.2;
    g.zeta[5] = 0.05;
    g.zeta[6] = -0.05;
    g.zeta[7] = 0.4;
    g.zeta[8] = -0.3;
    g.zeta[9] = 0.1;
    g.sigma2_lambda = 0.09;

    // Admission hazard falls steeply in hemoglobin; discharge hazard rises
    // with recovery and with time already spent in hospital.
    g.psi[0][0] = -3.6;
    g.psi[0][1] = -4.5;
    g.psi[0][2] = 0.3;
    for (int j = 3; j < g.psi[0].size(); ++j)
        g.psi[0][j] = (j % 2 == 0 ? 0.12 : -0.12) / (1.0 + 0.08 * j);
    g.psi[1][0] = -2.2;
    g.psi[1][1] = 1.5;
    g.psi[1][2] = -0.2;
    g.psi[1][3] = 0.8;
    for (int j = 4; j < g.psi[1].size(); ++j)
        g.psi[1][j] = (j % 2 == 0 ? 0.1 : -0.1) / (1.0 + 0.08 * j);

    g.alpha_rho = {2.0, 2.0};
    g.beta_rho = {2.0, 2.0};

    g.validate(p, b);
    return g;
}

SynthCohort synth_cohort(const GlobalParams& globals, const Eigensystem& eig,
                         const ModelConfig& model, const SimulateConfig& scfg,
                         std::uint64_t seed) {
    if (scfg.n_patients < 0)
        throw contract_violation("synth_cohort: n_patients must be non-negative");
    // Zero noise variances are legal here (they make the generator
    // deterministic in that component), so bump them past the shape check.
    GlobalParams shape_check = globals;
    for (double* v : {&shape_check.sigma2, &shape_check.tau2_0, &shape_check.tau2,
                      &shape_check.omega2, &shape_check.sigma2_lambda})
        if (*v == 0.0) *v = 1.0;
    shape_check.validate(model.p, model.b);

    const HospBasisConfig hcfg{model.b, model.m_max};
    SynthCohort out;
    out.cohort.patients.reserve(static_cast<std::size_t>(scfg.n_patients));

    for (int i = 0; i < scfg.n_patients; ++i) {
        Rng rng = Rng::substream(seed, kChannelSimulate, static_cast<std::uint64_t>(i), 0);

        PatientRecord rec;
        rec.id = i + 1;
        rec.baseline = draw_baseline(rng);
        rec.end_of_followup = kFollowupEnd;

        PatientEffects eff;
        eff.alpha = draw_trend_coefficients(globals, eig, rec.baseline, model.p, rng);
        eff.rho[0] = rng.gamma(globals.alpha_rho[0], globals.beta_rho[0]);
        eff.rho[1] = rng.gamma(globals.alpha_rho[1], globals.beta_rho[1]);

        const double admit_idx = uniform_in(rng, kIndexAdmitLo, kIndexAdmitHi);

        // Pre-anchor history: run the event process from the window start and
        // keep the first realization that has the patient at home when the
        // anchor admission is due.
        for (int attempt = 0; attempt < kMaxHistoryAttempts; ++attempt) {
            PatientRecord trial = rec;
            PatientEffects trial_eff = eff;
            std::vector<SimulatedEvent> ev;
            advance_process(globals, eig, model, trial, trial_eff, ev, kFollowupStart,
                            admit_idx, kSimDelta, rng);
            const bool at_home = trial.hospitalizations.empty() ||
                                 trial.hospitalizations.back().discharge < admit_idx;
            if (at_home) {
                rec = std::move(trial);
                eff = std::move(trial_eff);
                break;
            }
        }

        eff.beta.push_back(
            draw_admission_coefficients(globals, eig, model, rec, eff, admit_idx, rng));
        eff.lambda.push_back(1.0);
        rec.hospitalizations.push_back({admit_idx, kOpenDischarge, true});

        std::vector<SimulatedEvent> post_events;
        std::array<double, 2> exposure = {0.0, 0.0};
        advance_process(globals, eig, model, rec, eff, post_events, admit_idx, kFollowupEnd,
                        kSimDelta, rng, &exposure);
        out.expected_events[0] += exposure[0];
        out.expected_events[1] += exposure[1];
        for (const auto& e : post_events) ++out.observed_events[static_cast<std::size_t>(e.type)];

        // Close out the complete record: a stay still running at the window
        // end is censored just past it.
        for (auto& h : rec.hospitalizations)
            if (h.discharge >= kOpenDischarge) h.discharge = kFollowupEnd + 1.0;

        // Administrative censoring after the anchor discharge.
        const std::size_t idx = static_cast<std::size_t>(rec.index_stay());
        const double discharge_idx = rec.hospitalizations[idx].discharge;
        double end = kFollowupEnd;
        if (discharge_idx + 5.0 < kFollowupEnd && rng.uniform() < scfg.censor_prob)
            end = uniform_in(rng, discharge_idx + 5.0, kFollowupEnd);

        PatientRecord obs_rec;
        obs_rec.id = rec.id;
        obs_rec.baseline = rec.baseline;
        obs_rec.end_of_followup = end;
        for (const auto& h : rec.hospitalizations) {
            if (h.admit >= end) continue;
            Hospitalization stay = h;
            if (stay.discharge > end) stay.discharge = end + 1.0;
            obs_rec.hospitalizations.push_back(stay);
        }

        // Two measurements inside the anchor stay anchor the fit; the rest
        // follow the in-hospital and at-home sampling intensities.
        const double span = std::min(discharge_idx, end) - admit_idx;
        std::vector<double> times = {admit_idx + 0.2 * span, admit_idx + 0.8 * span};
        const std::size_t n_forced = times.size();
        for (double t : draw_obs_times(obs_rec, kFollowupStart, end, scfg, rng))
            times.push_back(t);

        const double noise_sd = std::sqrt(globals.sigma2);
        for (std::size_t k = 0; k < times.size(); ++k) {
            Observation o;
            o.time = times[k];
            const double truth = true_hb_at(eig, hcfg, rec, eff, o.time);
            o.value = truth + noise_sd * rng.normal();
            for (int tries = 0; o.value <= 0.0 && tries < 50; ++tries)
                o.value = truth + noise_sd * rng.normal();
            if (o.value <= 0.0)
                throw numeric_error("synth_cohort: could not draw a positive measurement");
            if (k >= n_forced && rng.uniform() < 0.05) {
                o.value = 0.0;
                o.missing = true;
            }
            obs_rec.observations.push_back(o);
        }
        std::sort(obs_rec.observations.begin(), obs_rec.observations.end(),
                  [](const Observation& a, const Observation& b) { return a.time < b.time; });

        out.cohort.patients.push_back(std::move(obs_rec));
        out.complete.push_back(std::move(rec));
        out.truth.push_back(std::move(eff));
    }

    validate_cohort(out.cohort);
    return out;
}

} // namespace hbjm
