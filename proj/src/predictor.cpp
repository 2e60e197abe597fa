#include "hbjm/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "hbjm/csv.hpp"
#include "hbjm/errors.hpp"
#include "hbjm/sampler.hpp"

namespace hbjm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

PatientRecord truncate_history(const PatientRecord& rec, double t_star) {
    const double cut = t_star - kStudyDayOffset;
    if (!std::isfinite(cut) || cut <= kFollowupStart || cut > kFollowupEnd)
        throw contract_violation("truncate_history: t_star outside the study window");
    if (cut > rec.end_of_followup)
        throw contract_violation("truncate_history: the record ends before the conditioning time");

    PatientRecord out;
    out.id = rec.id;
    out.baseline = rec.baseline;
    out.end_of_followup = cut;
    for (const auto& o : rec.observations)
        if (o.time <= cut) out.observations.push_back(o);
    for (const auto& h : rec.hospitalizations) {
        if (h.admit >= cut) continue;
        Hospitalization stay = h;
        // A stay running past the cut is known only to be ongoing; record it
        // as censored by the shortened follow-up without leaking when the
        // discharge actually happened.
        if (stay.discharge > cut) stay.discharge = cut + 1.0;
        out.hospitalizations.push_back(stay);
    }
    return out;
}

PatientEffects condition_on_history(const GlobalParams& globals, const PatientRecord& history,
                                    const Eigensystem& eig, const ModelConfig& model,
                                    int inner_sweeps, Rng& rng) {
    if (inner_sweeps < 1)
        throw contract_violation("condition_on_history: inner_sweeps must be positive");
    for (const auto& o : history.observations)
        if (o.time > history.end_of_followup)
            throw contract_violation("condition_on_history: observation past the conditioning time");
    for (const auto& h : history.hospitalizations)
        if (h.admit >= history.end_of_followup)
            throw contract_violation("condition_on_history: admission past the conditioning time");
    validate_history(history);

    PatientState ps = build_patient_state(history, eig, model);
    for (int s = 0; s < inner_sweeps; ++s) patient_sweep(ps, globals, eig, rng);
    return ps.effects;
}

Eigen::VectorXd draw_admission_coefficients(const GlobalParams& globals, const Eigensystem& eig,
                                            const ModelConfig& model,
                                            const PatientRecord& record,
                                            const PatientEffects& effects, double admit_time,
                                            Rng& rng) {
    const HospBasisConfig hcfg{model.b, model.m_max};
    const double hb = scale_hb(true_hb_at(eig, hcfg, record, effects, admit_time));
    const double sd = std::sqrt(globals.omega2);
    Eigen::VectorXd beta(model.b);
    for (int k = 0; k < model.b; ++k) {
        const double mean =
            globals.eta[2 * k] + std::sqrt(eig.eigenvalue(k + 1)) * hb * globals.eta[2 * k + 1];
        beta[k] = mean + sd * rng.normal();
    }
    return beta;
}

double draw_recovery_rate(const GlobalParams& globals, const Eigensystem& eig,
                          const ModelConfig& model, const PatientRecord& record,
                          const PatientEffects& effects, std::size_t stay_index, Rng& rng) {
    const Hospitalization& stay = record.hospitalizations.at(stay_index);
    if (stay.discharge >= kOpenDischarge)
        throw contract_violation("draw_recovery_rate: the stay is still open");
    const HospBasisConfig hcfg{model.b, model.m_max};
    // At t == discharge the post-stay branch evaluates with decay factor one,
    // so the rate being drawn never feeds its own regressors.
    const double hb_admit = true_hb_at(eig, hcfg, record, effects, stay.admit);
    const double hb_discharge = true_hb_at(eig, hcfg, record, effects, stay.discharge);
    const Eigen::VectorXd q = recovery_design(record.baseline, hb_admit, hb_discharge);
    return std::exp(q.dot(globals.zeta) + std::sqrt(globals.sigma2_lambda) * rng.normal());
}

void advance_process(const GlobalParams& globals, const Eigensystem& eig,
                     const ModelConfig& model, PatientRecord& record, PatientEffects& effects,
                     std::vector<SimulatedEvent>& events, double t_from, double t_to,
                     double delta, Rng& rng, std::array<double, 2>* cum_exposure) {
    if (!(delta > 0.0)) throw contract_violation("advance_process: delta must be positive");
    if (!(t_to >= t_from)) throw contract_violation("advance_process: period ends before it starts");
    if (effects.beta.size() != record.hospitalizations.size() ||
        effects.lambda.size() != record.hospitalizations.size())
        throw contract_violation("advance_process: effects do not match the record's stays");

    const HospBasisConfig hcfg{model.b, model.m_max};
    int open = -1;
    for (std::size_t j = 0; j < record.hospitalizations.size(); ++j)
        if (record.hospitalizations[j].discharge >= kOpenDischarge) open = static_cast<int>(j);

    double t = t_from;
    while (t < t_to) {
        const int state = open >= 0 ? 1 : 0;
        const double hb = true_hb_at(eig, hcfg, record, effects, t);
        Eigen::VectorXd row = hazard_design_static(
            record.baseline, state, t,
            open >= 0 ? record.hospitalizations[static_cast<std::size_t>(open)].admit : 0.0);
        row[kHazardHbEntry] = scale_hb(hb);
        const double h = hazard(effects.rho[static_cast<std::size_t>(state)], row,
                                globals.psi[static_cast<std::size_t>(state)]);
        if (!std::isfinite(h) || h < 0.0)
            throw numeric_error("advance_process: non-finite transition hazard");

        // The hazard is held constant over at most delta days, clipped at the
        // period end. A waiting time beyond the step (ties included) means no
        // event; the clock just moves on.
        const double step = std::min(delta, t_to - t);
        const double eps = h > 0.0 ? rng.exponential(h) : kInf;
        if (cum_exposure && h > 0.0)
            (*cum_exposure)[static_cast<std::size_t>(state)] += std::min(eps, step) * h;
        if (eps >= step) {
            t += step;
            continue;
        }

        const double t_evt = t + eps;
        if (open < 0) {
            const Eigen::VectorXd beta =
                draw_admission_coefficients(globals, eig, model, record, effects, t_evt, rng);
            record.hospitalizations.push_back({t_evt, kOpenDischarge, false});
            effects.beta.push_back(beta);
            effects.lambda.push_back(1.0); // placeholder until the stay closes
            open = static_cast<int>(record.hospitalizations.size()) - 1;
            events.push_back({t_evt, 0});
        } else {
            Hospitalization& stay = record.hospitalizations[static_cast<std::size_t>(open)];
            stay.discharge = t_evt;
            effects.lambda[static_cast<std::size_t>(open)] = draw_recovery_rate(
                globals, eig, model, record, effects, static_cast<std::size_t>(open), rng);
            events.push_back({t_evt, 1});
            open = -1;
        }
        t = t_evt;
    }
}

SimulatedTrajectory simulate_forward(const GlobalParams& globals, const PatientEffects& effects,
                                     const PatientRecord& history, const Eigensystem& eig,
                                     const ModelConfig& model, const PredictConfig& pcfg,
                                     Rng& rng) {
    const double t0 = history.end_of_followup;
    const double horizon = pcfg.horizon - kStudyDayOffset;
    if (!(horizon >= t0))
        throw contract_violation("simulate_forward: horizon precedes the history's end");
    if (effects.beta.size() != history.hospitalizations.size())
        throw contract_violation("simulate_forward: effects do not match the history's stays");

    SimulatedTrajectory out;
    out.record = history;
    out.effects = effects;
    // A stay censored by the history's end is still running; give it the
    // open-stay sentinel so the simulator can close it.
    for (auto& stay : out.record.hospitalizations)
        if (stay.discharge > t0) stay.discharge = kOpenDischarge;

    advance_process(globals, eig, model, out.record, out.effects, out.events, t0, horizon,
                    pcfg.delta, rng);

    std::vector<double> marks;
    for (double t = t0; t < horizon; t += 1.0) marks.push_back(t);
    marks.push_back(horizon);
    for (const auto& e : out.events) marks.push_back(e.time);
    std::sort(marks.begin(), marks.end());
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

    const HospBasisConfig hcfg{model.b, model.m_max};
    out.time = marks;
    out.true_hb.reserve(marks.size());
    out.state.reserve(marks.size());
    for (double t : marks) {
        out.true_hb.push_back(true_hb_at(eig, hcfg, out.record, out.effects, t));
        int s = 0;
        for (const auto& stay : out.record.hospitalizations)
            if (stay.admit <= t && t < stay.discharge) s = 1;
        out.state.push_back(s);
    }
    return out;
}

std::vector<SimulatedTrajectory> generate_ensemble(const std::vector<GlobalParams>& posterior,
                                                   const PatientRecord& history,
                                                   const Eigensystem& eig,
                                                   const ModelConfig& model,
                                                   const PredictConfig& pcfg, std::uint64_t seed,
                                                   std::uint64_t patient_key, int threads) {
    if (posterior.empty()) throw contract_violation("generate_ensemble: no posterior draws");
    if (pcfg.draws < 1) throw contract_violation("generate_ensemble: draws must be positive");

    const std::size_t n = static_cast<std::size_t>(pcfg.draws);
    std::vector<SimulatedTrajectory> out(n);

    auto run_one = [&](std::size_t r) {
        const GlobalParams& globals = posterior[r % posterior.size()];
        Rng cond_rng = Rng::substream(seed, kChannelPredict, patient_key, r);
        const PatientEffects effects =
            condition_on_history(globals, history, eig, model, pcfg.inner_sweeps, cond_rng);
        Rng fwd_rng = Rng::substream(seed, kChannelForward, patient_key, r);
        out[r] = simulate_forward(globals, effects, history, eig, model, pcfg, fwd_rng);
    };

    const int pool = std::max(1, threads);
    if (pool == 1 || n == 1) {
        for (std::size_t r = 0; r < n; ++r) run_one(r);
        return out;
    }

    std::vector<std::thread> workers;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int w = 0; w < pool; ++w) {
        workers.emplace_back([&, w]() {
            try {
                for (std::size_t r = static_cast<std::size_t>(w); r < n;
                     r += static_cast<std::size_t>(pool))
                    run_one(r);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& worker : workers) worker.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<SimulatedTrajectory>& ensemble) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("output", "cannot open " + path + " for writing");
    out << "trajectory_id,day,true_hb,state\n";
    for (std::size_t r = 0; r < ensemble.size(); ++r) {
        const SimulatedTrajectory& traj = ensemble[r];
        for (std::size_t i = 0; i < traj.time.size(); ++i)
            out << r << ',' << format_number(traj.time[i] + kStudyDayOffset) << ','
                << format_number(traj.true_hb[i]) << ',' << traj.state[i] << '\n';
    }
    if (!out) throw data_error("output", "failed writing " + path);
}

void write_event_csv(const std::string& path, const std::vector<SimulatedTrajectory>& ensemble) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("output", "cannot open " + path + " for writing");
    out << "trajectory_id,time,event_type\n";
    for (std::size_t r = 0; r < ensemble.size(); ++r)
        for (const auto& e : ensemble[r].events)
            out << r << ',' << format_number(e.time + kStudyDayOffset) << ','
                << (e.type == 0 ? "admission" : "discharge") << '\n';
    if (!out) throw data_error("output", "failed writing " + path);
}

} // namespace hbjm
