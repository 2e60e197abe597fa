#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hbjm/basis.hpp"
#include "hbjm/cohort.hpp"
#include "hbjm/config.hpp"
#include "hbjm/errors.hpp"
#include "hbjm/predictor.hpp"
#include "hbjm/rng.hpp"
#include "hbjm/sampler.hpp"
#include "hbjm/simulate.hpp"
#include "hbjm/stats.hpp"
#include "hbjm/trajectory.hpp"

using namespace hbjm;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/hbjm_pred_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

ModelConfig small_model() {
    ModelConfig m;
    m.p = 5;
    m.b = 2;
    m.grid_size = 64;
    m.max_interval = 5.0;
    return m;
}

const Eigensystem& small_eig() {
    static const Eigensystem eig = build_eigensystem(small_model().p, small_model().grid_size);
    return eig;
}

/// Globals whose event side ignores the trajectory (zero hemoglobin
/// coefficients), so patient effects decouple from the event history.
GlobalParams decoupled_globals() {
    GlobalParams g = GlobalParams::sized(small_model().p, small_model().b);
    g.sigma2 = 0.25;
    g.gamma0.setZero();
    g.gamma0[0] = 12.0;
    g.tau2_0 = 1.0;
    g.gamma.setZero();
    g.tau2 = 0.25;
    g.eta.setZero();
    g.omega2 = 0.25;
    g.zeta.setZero();
    g.sigma2_lambda = 0.25;
    g.psi[0].setZero();
    g.psi[0][0] = -2.5;
    g.psi[1].setZero();
    g.psi[1][0] = -1.5;
    return g;
}

/// Minimal conditioning history: one closed anchor stay, a few measurements.
PatientRecord basic_history() {
    PatientRecord p;
    p.id = 1;
    p.end_of_followup = 5.0;
    p.hospitalizations.push_back({-4.0, -1.0, true});
    p.observations.push_back({-3.5, 10.2, false});
    p.observations.push_back({-2.0, 9.8, false});
    p.observations.push_back({2.0, 10.5, false});
    return p;
}

PatientRecord no_obs_history() {
    PatientRecord p = basic_history();
    p.observations.clear();
    return p;
}

PatientEffects fixed_effects(int p, int b) {
    PatientEffects e;
    e.alpha = Eigen::VectorXd::Zero(p);
    e.alpha[0] = 10.8;
    e.alpha[1] = 0.3;
    e.alpha[2] = -0.2;
    e.beta.push_back(Eigen::VectorXd::Zero(b));
    e.beta[0][0] = -1.5;
    e.beta[0][1] = 0.4;
    e.lambda.push_back(0.2);
    e.rho = {1.0, 1.0};
    return e;
}

double sample_mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double sample_var(const std::vector<double>& x) {
    const double m = sample_mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("truncation keeps exactly the data known at the cut") {
    PatientRecord rec;
    rec.id = 3;
    rec.end_of_followup = 365.0;
    rec.hospitalizations.push_back({-12.0, -2.0, true});
    rec.hospitalizations.push_back({80.0, 90.0, false});
    rec.hospitalizations.push_back({240.0, 260.0, false});
    rec.hospitalizations.push_back({300.0, 310.0, false});
    rec.observations.push_back({-10.0, 10.0, false});
    rec.observations.push_back({0.0, 9.5, false});
    rec.observations.push_back({100.0, 10.8, false});
    rec.observations.push_back({250.0, 10.1, false});
    rec.observations.push_back({320.0, 11.0, false});

    const PatientRecord cut = truncate_history(rec, 250.0 + 365.0);
    CHECK(cut.end_of_followup == 250.0);
    CHECK(cut.observations.size() == 4);
    CHECK(cut.observations.back().time == 250.0);
    REQUIRE(cut.hospitalizations.size() == 3);
    CHECK(cut.hospitalizations[0].is_index);
    CHECK(cut.hospitalizations[1].discharge == 90.0);
    // The stay running past the cut is known only to be ongoing.
    CHECK(cut.hospitalizations[2].admit == 240.0);
    CHECK(cut.hospitalizations[2].discharge == 251.0);
    CHECK_NOTHROW(validate_history(cut));

    // A discharge exactly at the cut is complete.
    const PatientRecord at_edge = truncate_history(rec, 90.0 + 365.0);
    REQUIRE(at_edge.hospitalizations.size() == 2);
    CHECK(at_edge.hospitalizations[1].discharge == 90.0);

    CHECK_THROWS_AS(truncate_history(rec, 1200.0), contract_violation);
    CHECK_THROWS_AS(truncate_history(rec, -20.0), contract_violation);
    PatientRecord short_rec = rec;
    short_rec.end_of_followup = 100.0;
    CHECK_THROWS_AS(truncate_history(short_rec, 600.0), contract_violation);
}

TEST_CASE("conditioning rejects histories with data past the cut") {
    const GlobalParams g = decoupled_globals();
    Rng rng(1);

    PatientRecord late_obs = basic_history();
    late_obs.end_of_followup = 1.0;
    CHECK_THROWS_AS(
        condition_on_history(g, late_obs, small_eig(), small_model(), 5, rng),
        contract_violation);

    PatientRecord late_admit = basic_history();
    late_admit.observations.clear();
    late_admit.end_of_followup = -4.0;
    CHECK_THROWS_AS(
        condition_on_history(g, late_admit, small_eig(), small_model(), 5, rng),
        contract_violation);

    PatientRecord no_anchor = basic_history();
    no_anchor.hospitalizations[0].is_index = false;
    CHECK_THROWS_AS(
        condition_on_history(g, no_anchor, small_eig(), small_model(), 5, rng),
        data_error);

    CHECK_THROWS_AS(
        condition_on_history(g, basic_history(), small_eig(), small_model(), 0, rng),
        contract_violation);
}

TEST_CASE("conditioning on an event-only history recovers the effect priors") {
    const GlobalParams g = decoupled_globals();
    const PatientRecord hist = no_obs_history();
    const int n_draws = 300;

    std::vector<double> a0, a1, b00, log_lambda;
    for (int r = 0; r < n_draws; ++r) {
        Rng rng = Rng::substream(77, kChannelPredict, 1, static_cast<std::uint64_t>(r));
        const PatientEffects eff =
            condition_on_history(g, hist, small_eig(), small_model(), 40, rng);
        a0.push_back(eff.alpha[0]);
        a1.push_back(eff.alpha[1]);
        b00.push_back(eff.beta[0][0]);
        log_lambda.push_back(std::log(eff.lambda[0]));
    }

    // With zero hemoglobin coefficients everywhere, the trajectory never
    // enters the event likelihood, so each effect's conditional given an
    // observation-free history is its prior.
    const double crit = ks_critical(0.01, static_cast<std::size_t>(n_draws));
    CHECK(ks_statistic(a0, [](double t) { return normal_cdf(t - 12.0); }) < crit);
    // gamma is zero, so alpha[1]'s prior mean sqrt(pi_1) * gamma[0] vanishes.
    CHECK(ks_statistic(a1, [](double t) { return normal_cdf(t / std::sqrt(0.25)); }) < crit);
    CHECK(ks_statistic(b00, [](double t) { return normal_cdf(t / std::sqrt(0.25)); }) < crit);
    CHECK(ks_statistic(log_lambda,
                       [](double t) { return normal_cdf(t / std::sqrt(0.25)); }) < crit);
}

TEST_CASE("conditioning is deterministic in its substream") {
    const GlobalParams g = decoupled_globals();
    const PatientRecord hist = basic_history();

    Rng r1 = Rng::substream(9, kChannelPredict, 4, 2);
    Rng r2 = Rng::substream(9, kChannelPredict, 4, 2);
    Rng r3 = Rng::substream(9, kChannelPredict, 4, 3);
    const PatientEffects e1 = condition_on_history(g, hist, small_eig(), small_model(), 15, r1);
    const PatientEffects e2 = condition_on_history(g, hist, small_eig(), small_model(), 15, r2);
    const PatientEffects e3 = condition_on_history(g, hist, small_eig(), small_model(), 15, r3);

    CHECK(e1.alpha == e2.alpha);
    CHECK(e1.beta[0] == e2.beta[0]);
    CHECK(e1.lambda[0] == e2.lambda[0]);
    CHECK(e1.rho[0] == e2.rho[0]);
    CHECK(e1.rho[1] == e2.rho[1]);
    CHECK(e1.alpha != e3.alpha);
}

TEST_CASE("conditioning binds the trajectory to dense measurements") {
    const ModelConfig model = small_model();
    const Eigensystem& eig = small_eig();
    const HospBasisConfig hcfg{model.b, model.m_max};

    PatientRecord rec;
    rec.id = 7;
    rec.end_of_followup = 300.0;
    rec.hospitalizations.push_back({-10.0, -3.0, true});
    const PatientEffects truth = fixed_effects(model.p, model.b);

    Rng noise = Rng::substream(5, 9, 0, 0);
    for (double t = -355.0; t <= 295.0; t += 10.0) {
        const double value = true_hb_at(eig, hcfg, rec, truth, t) + 0.1 * noise.normal();
        rec.observations.push_back({t, value, false});
    }

    GlobalParams g = decoupled_globals();
    g.gamma0[0] = 10.0;
    g.sigma2 = 0.04;
    g.omega2 = 1.0;
    g.sigma2_lambda = 0.5;

    const int n_draws = 40;
    const std::array<double, 4> probes = {-200.0, -50.0, 50.0, 200.0};
    std::array<double, 4> mean_hat = {0.0, 0.0, 0.0, 0.0};
    for (int r = 0; r < n_draws; ++r) {
        Rng rng = Rng::substream(31, kChannelPredict, 7, static_cast<std::uint64_t>(r));
        const PatientEffects eff = condition_on_history(g, rec, eig, model, 40, rng);
        for (std::size_t k = 0; k < probes.size(); ++k)
            mean_hat[k] += true_hb_at(eig, hcfg, rec, eff, probes[k]);
    }
    for (std::size_t k = 0; k < probes.size(); ++k) {
        mean_hat[k] /= n_draws;
        const double truth_k = true_hb_at(eig, hcfg, rec, truth, probes[k]);
        CHECK(std::abs(mean_hat[k] - truth_k) < 0.3);
    }
}

TEST_CASE("zero hazard gives an event-free deterministic path") {
    const ModelConfig model = small_model();
    const Eigensystem& eig = small_eig();
    const HospBasisConfig hcfg{model.b, model.m_max};

    GlobalParams g = decoupled_globals();
    g.psi[0][0] = -1.0e4; // exp underflows to exactly zero hazard
    g.psi[1][0] = -1.0e4;

    const PatientRecord hist = basic_history();
    const PatientEffects eff = fixed_effects(model.p, model.b);
    PredictConfig pcfg;
    pcfg.horizon = 500.0;

    Rng rng(3);
    const SimulatedTrajectory traj = simulate_forward(g, eff, hist, eig, model, pcfg, rng);
    CHECK(traj.events.empty());
    CHECK(traj.record.hospitalizations.size() == hist.hospitalizations.size());
    REQUIRE(traj.time.size() >= 2);
    CHECK(traj.time.front() == hist.end_of_followup);
    CHECK(traj.time.back() == pcfg.horizon - kStudyDayOffset);
    for (std::size_t i = 0; i < traj.time.size(); ++i) {
        CHECK(traj.true_hb[i] == true_hb_at(eig, hcfg, hist, eff, traj.time[i]));
        CHECK(traj.state[i] == 0);
    }

    std::array<double, 2> expo = {0.0, 0.0};
    PatientRecord work = hist;
    PatientEffects weff = eff;
    std::vector<SimulatedEvent> ev;
    advance_process(g, eig, model, work, weff, ev, 0.0, 50.0, 1.0, rng, &expo);
    CHECK(ev.empty());
    CHECK(expo[0] == 0.0);
    CHECK(expo[1] == 0.0);
}

TEST_CASE("a vanishing hazard still advances and accounts exposure") {
    const ModelConfig model = small_model();
    GlobalParams g = decoupled_globals();
    g.psi[0][0] = -40.0;
    g.psi[1][0] = -40.0;

    PatientRecord work = basic_history();
    PatientEffects eff = fixed_effects(model.p, model.b);
    std::vector<SimulatedEvent> ev;
    std::array<double, 2> expo = {0.0, 0.0};
    Rng rng(4);
    advance_process(g, small_eig(), model, work, eff, ev, 0.0, 50.0, 1.0, rng, &expo);
    CHECK(ev.empty());
    const double h = std::exp(-40.0);
    CHECK(expo[0] == doctest::Approx(50.0 * h).epsilon(1e-9));
    CHECK(expo[1] == 0.0);
}

TEST_CASE("process stepping validates its inputs") {
    const ModelConfig model = small_model();
    const GlobalParams g = decoupled_globals();
    PatientRecord work = basic_history();
    PatientEffects eff = fixed_effects(model.p, model.b);
    std::vector<SimulatedEvent> ev;
    Rng rng(5);

    CHECK_THROWS_AS(advance_process(g, small_eig(), model, work, eff, ev, 0.0, 10.0, 0.0, rng),
                    contract_violation);
    CHECK_THROWS_AS(advance_process(g, small_eig(), model, work, eff, ev, 10.0, 0.0, 1.0, rng),
                    contract_violation);

    PatientEffects bad = eff;
    bad.beta.clear();
    CHECK_THROWS_AS(advance_process(g, small_eig(), model, work, bad, ev, 0.0, 10.0, 1.0, rng),
                    contract_violation);

    GlobalParams hot = g;
    hot.psi[0][0] = 800.0; // overflows the exponential
    CHECK_THROWS_AS(advance_process(hot, small_eig(), model, work, eff, ev, 0.0, 10.0, 1.0, rng),
                    numeric_error);
}

TEST_CASE("constant hazards make the waiting times exponential") {
    const ModelConfig model = small_model();
    const Eigensystem& eig = small_eig();

    // Only the intercepts are nonzero, so each process has a flat hazard.
    GlobalParams g = decoupled_globals();
    g.psi[0][0] = -1.2;
    g.psi[1][0] = -0.8;
    const double h0 = std::exp(-1.2);
    const double h1 = std::exp(-0.8);

    PatientRecord hist = no_obs_history();
    hist.end_of_followup = 0.0;
    PatientEffects eff = fixed_effects(model.p, model.b);

    PredictConfig pcfg;
    pcfg.horizon = 730.0;

    std::vector<double> admit_gaps, stay_lengths;
    for (int r = 0; r < 60; ++r) {
        Rng rng = Rng::substream(999, 7, 0, static_cast<std::uint64_t>(r));
        const SimulatedTrajectory traj = simulate_forward(g, eff, hist, eig, model, pcfg, rng);
        double at_home_since = 0.0;
        double admitted_at = 0.0;
        for (std::size_t k = 0; k < traj.events.size(); ++k) {
            const SimulatedEvent& e = traj.events[k];
            // Events strictly alternate, starting from home.
            CHECK(e.type == static_cast<int>(k % 2));
            if (e.type == 0) {
                admit_gaps.push_back(e.time - at_home_since);
                admitted_at = e.time;
            } else {
                stay_lengths.push_back(e.time - admitted_at);
                at_home_since = e.time;
            }
        }
    }

    REQUIRE(admit_gaps.size() > 1000);
    REQUIRE(stay_lengths.size() > 1000);
    admit_gaps.resize(1000);
    stay_lengths.resize(1000);
    const double crit = ks_critical(0.01, 1000);
    CHECK(ks_statistic(admit_gaps,
                       [&](double t) { return 1.0 - std::exp(-h0 * t); }) < crit);
    CHECK(ks_statistic(stay_lengths,
                       [&](double t) { return 1.0 - std::exp(-h1 * t); }) < crit);
}

TEST_CASE("simulated paths are continuous at every event") {
    const ModelConfig model = small_model();
    const Eigensystem& eig = small_eig();
    const HospBasisConfig hcfg{model.b, model.m_max};
    const GlobalParams g = example_globals(model.p, model.b);

    // Make admissions frequent enough to exercise both event types often.
    GlobalParams busy = g;
    busy.psi[0][0] = -1.8;

    const PatientRecord hist = basic_history();
    PredictConfig pcfg;
    pcfg.horizon = 730.0;

    long n_events = 0;
    for (int r = 0; r < 16; ++r) {
        Rng cond = Rng::substream(17, kChannelPredict, 3, static_cast<std::uint64_t>(r));
        const PatientEffects eff = condition_on_history(busy, hist, eig, model, 10, cond);
        Rng fwd = Rng::substream(17, kChannelForward, 3, static_cast<std::uint64_t>(r));
        const SimulatedTrajectory traj = simulate_forward(busy, eff, hist, eig, model, pcfg, fwd);
        for (const auto& e : traj.events) {
            ++n_events;
            const double before = true_hb_at(eig, hcfg, traj.record, traj.effects, e.time - 1e-12);
            const double after = true_hb_at(eig, hcfg, traj.record, traj.effects, e.time + 1e-12);
            CHECK(std::abs(after - before) < 1e-9);

            // The event knot is a sample point and the state there is
            // right-continuous.
            const auto it = std::lower_bound(traj.time.begin(), traj.time.end(), e.time);
            REQUIRE(it != traj.time.end());
            REQUIRE(*it == e.time);
            const auto at = static_cast<std::size_t>(it - traj.time.begin());
            CHECK(traj.state[at] == (e.type == 0 ? 1 : 0));
        }
    }
    CHECK(n_events > 40);
}

TEST_CASE("ensembles are reproducible and plausible") {
    const ModelConfig model = small_model();
    const Eigensystem& eig = small_eig();
    const GlobalParams g = example_globals(model.p, model.b);
    GlobalParams g2 = g;
    g2.gamma0[0] = 11.0;
    const std::vector<GlobalParams> posterior = {g, g2};

    const PatientRecord hist = basic_history();
    PredictConfig pcfg;
    pcfg.draws = 6;
    pcfg.inner_sweeps = 8;
    pcfg.horizon = 730.0;

    const auto a = generate_ensemble(posterior, hist, eig, model, pcfg, 123, 42, 1);
    const auto b = generate_ensemble(posterior, hist, eig, model, pcfg, 123, 42, 3);
    REQUIRE(a.size() == 6);
    REQUIRE(b.size() == 6);
    for (std::size_t r = 0; r < a.size(); ++r) {
        CHECK(a[r].time == b[r].time);
        CHECK(a[r].true_hb == b[r].true_hb);
        CHECK(a[r].state == b[r].state);
        REQUIRE(a[r].events.size() == b[r].events.size());
        for (std::size_t k = 0; k < a[r].events.size(); ++k) {
            CHECK(a[r].events[k].time == b[r].events[k].time);
            CHECK(a[r].events[k].type == b[r].events[k].type);
        }
        CHECK(a[r].effects.alpha == b[r].effects.alpha);
        for (double v : a[r].true_hb) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
            CHECK(v <= 25.0);
        }
    }

    PredictConfig single = pcfg;
    single.draws = 1;
    CHECK(generate_ensemble(posterior, hist, eig, model, single, 123, 42).size() == 1);
    CHECK_THROWS_AS(generate_ensemble({}, hist, eig, model, pcfg, 1, 1), contract_violation);
}

TEST_CASE("trajectory and event files are byte-stable") {
    const ModelConfig model = small_model();
    const GlobalParams g = example_globals(model.p, model.b);
    const PatientRecord hist = basic_history();
    PredictConfig pcfg;
    pcfg.draws = 3;
    pcfg.inner_sweeps = 5;
    pcfg.horizon = 430.0;

    const auto ens = generate_ensemble({g}, hist, small_eig(), model, pcfg, 8, 2);

    TempFile t1("traj1.csv"), t2("traj2.csv"), e1("ev1.csv"), e2("ev2.csv");
    write_trajectory_csv(t1.path, ens);
    write_trajectory_csv(t2.path, ens);
    write_event_csv(e1.path, ens);
    write_event_csv(e2.path, ens);

    const std::string traj_bytes = slurp(t1.path);
    CHECK(traj_bytes == slurp(t2.path));
    CHECK(slurp(e1.path) == slurp(e2.path));

    std::istringstream lines(traj_bytes);
    std::string line;
    REQUIRE(std::getline(lines, line));
    CHECK(line == "trajectory_id,day,true_hb,state");
    REQUIRE(std::getline(lines, line));
    // First mark of trajectory 0 sits at the conditioning time, on the
    // study-day axis.
    CHECK(line.rfind("0,370,", 0) == 0);

    std::size_t n_lines = 1;
    while (std::getline(lines, line)) ++n_lines;
    std::size_t n_marks = 0;
    for (const auto& tr : ens) n_marks += tr.time.size();
    CHECK(n_lines == n_marks);

    std::istringstream ev_lines(slurp(e1.path));
    REQUIRE(std::getline(ev_lines, line));
    CHECK(line == "trajectory_id,time,event_type");
    while (std::getline(ev_lines, line)) {
        const bool tagged = line.find(",admission") != std::string::npos ||
                            line.find(",discharge") != std::string::npos;
        CHECK(tagged);
    }
}

TEST_CASE("generated event counts match their integrated hazard") {
    ModelConfig model;
    model.p = 6;
    model.b = 3;
    model.grid_size = 128;
    const Eigensystem eig = build_eigensystem(model.p, model.grid_size);
    const GlobalParams g = example_globals(model.p, model.b);

    SimulateConfig scfg;
    scfg.n_patients = 500;
    const SynthCohort sc = synth_cohort(g, eig, model, scfg, 2024);

    for (int process : {0, 1}) {
        const double expected = sc.expected_events[static_cast<std::size_t>(process)];
        const double observed = static_cast<double>(sc.observed_events[static_cast<std::size_t>(process)]);
        REQUIRE(expected > 100.0);
        CHECK(std::abs(observed - expected) <= 3.0 * std::sqrt(expected));
    }

    // Structure of the generated records.
    REQUIRE(sc.complete.size() == 500);
    REQUIRE(sc.truth.size() == 500);
    for (std::size_t i = 0; i < sc.complete.size(); ++i) {
        const PatientRecord& rec = sc.complete[i];
        int n_index = 0;
        for (std::size_t j = 0; j < rec.hospitalizations.size(); ++j) {
            const auto& h = rec.hospitalizations[j];
            CHECK(h.admit < h.discharge);
            if (j > 0) CHECK(h.admit > rec.hospitalizations[j - 1].discharge);
            if (h.is_index) ++n_index;
        }
        CHECK(n_index == 1);
        CHECK(sc.truth[i].beta.size() == rec.hospitalizations.size());
        CHECK(sc.truth[i].lambda.size() == rec.hospitalizations.size());
        CHECK(sc.cohort.patients[i].end_of_followup <= kFollowupEnd);
        CHECK(!sc.cohort.patients[i].observations.empty());
    }
}

TEST_CASE("the hemoglobin feedback moves admission counts") {
    ModelConfig model;
    model.p = 6;
    model.b = 3;
    model.grid_size = 128;
    const Eigensystem eig = build_eigensystem(model.p, model.grid_size);

    // An anemic population, hazards equalized at a healthy reference level:
    // with the coefficient live, running low on hemoglobin raises the
    // admission hazard; with it off, nothing reacts.
    GlobalParams live = example_globals(model.p, model.b);
    live.gamma0[0] = 8.5;
    live.psi[0][0] = -3.0;
    live.psi[0][1] = -6.0;
    GlobalParams off = live;
    off.psi[0][0] = -3.0 - 6.0 * scale_hb(10.5);
    off.psi[0][1] = 0.0;

    SimulateConfig scfg;
    scfg.n_patients = 200;
    const SynthCohort with_feedback = synth_cohort(live, eig, model, scfg, 31);
    const SynthCohort without = synth_cohort(off, eig, model, scfg, 31);

    const double n_live = static_cast<double>(with_feedback.observed_events[0]);
    const double n_off = static_cast<double>(without.observed_events[0]);
    const double lo_live = n_live - 1.96 * std::sqrt(n_live);
    const double hi_off = n_off + 1.96 * std::sqrt(n_off);
    CHECK(n_live > n_off);
    CHECK(lo_live > hi_off);
}

TEST_CASE("zero measurement noise puts observations on the true path") {
    ModelConfig model;
    model.p = 5;
    model.b = 2;
    model.grid_size = 64;
    const Eigensystem eig = build_eigensystem(model.p, model.grid_size);
    const HospBasisConfig hcfg{model.b, model.m_max};
    GlobalParams g = example_globals(model.p, model.b);
    g.sigma2 = 0.0;

    SimulateConfig scfg;
    scfg.n_patients = 10;
    const SynthCohort sc = synth_cohort(g, eig, model, scfg, 11);

    long checked = 0;
    for (std::size_t i = 0; i < sc.cohort.patients.size(); ++i) {
        for (const auto& o : sc.cohort.patients[i].observations) {
            if (o.missing) continue;
            const double truth = true_hb_at(eig, hcfg, sc.complete[i], sc.truth[i], o.time);
            CHECK(o.value == truth);
            ++checked;
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("an empty synthetic cohort is valid") {
    const ModelConfig model = small_model();
    const GlobalParams g = example_globals(model.p, model.b);
    SimulateConfig scfg;
    scfg.n_patients = 0;
    const SynthCohort sc = synth_cohort(g, small_eig(), model, scfg, 1);
    CHECK(sc.cohort.patients.empty());
    CHECK(sc.complete.empty());
    CHECK(sc.observed_events[0] == 0);
    CHECK(sc.expected_events[0] == 0.0);
}

TEST_CASE("effect draws for new stays follow their regression models") {
    const ModelConfig model = small_model();
    const Eigensystem& eig = small_eig();
    const HospBasisConfig hcfg{model.b, model.m_max};

    GlobalParams g = decoupled_globals();
    g.eta[0] = 0.7;
    g.eta[1] = 1.1;
    g.eta[2] = -0.4;
    g.eta[3] = 0.5;
    g.omega2 = 0.09;
    g.zeta[0] = -1.5;
    g.zeta[7] = 0.6;
    g.zeta[8] = -0.4;
    g.zeta[9] = 0.2;
    g.sigma2_lambda = 0.04;

    const PatientRecord rec = basic_history();
    const PatientEffects eff = fixed_effects(model.p, model.b);
    const double admit_time = 3.0;
    const double hb = scale_hb(true_hb_at(eig, hcfg, rec, eff, admit_time));

    const int n = 4000;
    Rng rng(21);
    std::array<std::vector<double>, 2> beta_draws;
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd beta =
            draw_admission_coefficients(g, eig, model, rec, eff, admit_time, rng);
        beta_draws[0].push_back(beta[0]);
        beta_draws[1].push_back(beta[1]);
    }
    for (int k = 0; k < 2; ++k) {
        const double mean_k = g.eta[2 * k] + std::sqrt(eig.eigenvalue(k + 1)) * hb * g.eta[2 * k + 1];
        CHECK(std::abs(sample_mean(beta_draws[static_cast<std::size_t>(k)]) - mean_k) <
              4.0 * 0.3 / std::sqrt(static_cast<double>(n)));
        CHECK(std::abs(sample_var(beta_draws[static_cast<std::size_t>(k)]) - 0.09) < 0.01);
    }

    const std::size_t stay = 0; // the closed anchor stay
    const double hb_a = true_hb_at(eig, hcfg, rec, eff, rec.hospitalizations[0].admit);
    const double hb_d = true_hb_at(eig, hcfg, rec, eff, rec.hospitalizations[0].discharge);
    const double loc = recovery_design(rec.baseline, hb_a, hb_d).dot(g.zeta);
    std::vector<double> log_rates;
    for (int k = 0; k < n; ++k)
        log_rates.push_back(std::log(draw_recovery_rate(g, eig, model, rec, eff, stay, rng)));
    CHECK(std::abs(sample_mean(log_rates) - loc) < 4.0 * 0.2 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(sample_var(log_rates) - 0.04) < 0.005);

    PatientRecord open_rec = rec;
    open_rec.hospitalizations[0].discharge = kOpenDischarge;
    PatientEffects open_eff = eff;
    Rng r2(22);
    CHECK_THROWS_AS(draw_recovery_rate(g, eig, model, open_rec, open_eff, 0, r2),
                    contract_violation);
}
