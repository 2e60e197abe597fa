// Command-line front end: fit, predict, validate, simulate, basis dump and
// configuration management. All persistent randomness flows through the
// seed in the configuration, so every command is reproducible byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "hbjm/basis.hpp"
#include "hbjm/cohort.hpp"
#include "hbjm/config.hpp"
#include "hbjm/csv.hpp"
#include "hbjm/errors.hpp"
#include "hbjm/evaluate.hpp"
#include "hbjm/posterior_io.hpp"
#include "hbjm/predictor.hpp"
#include "hbjm/sampler.hpp"
#include "hbjm/simulate.hpp"
#include "hbjm/stats.hpp"

namespace hbjm {
namespace {

// Substream channels for CLI-level randomness, disjoint from the sampler
// and simulator channels.
constexpr std::uint64_t kChannelFolds = 6;
constexpr std::uint64_t kChannelPitNoise = 7;

int resolved_threads(const RunConfig& cfg) {
    if (cfg.threads > 0) return cfg.threads;
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw data_error("write_failed", dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("write_failed", path);
    return out;
}

void finish_out(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw data_error("write_failed", path);
}

void cmd_fit(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    const Cohort cohort = load_cohort(data_dir);
    ensure_dir(out_dir);

    Sampler sampler(cohort, cfg);
    std::vector<GlobalParams> draws;
    std::vector<EffectsDraw> effects;
    sampler.run([&](int) {
        draws.push_back(sampler.globals());
        if (cfg.chain.save_effects) {
            EffectsDraw d;
            for (const PatientState& ps : sampler.patients()) {
                d.patient_id.push_back(ps.record->id);
                d.effects.push_back(ps.effects);
            }
            effects.push_back(std::move(d));
        }
    });

    save_posterior(out_dir + "/posterior.ndjson", sampler.config(), draws);
    if (cfg.chain.save_effects)
        save_effects(out_dir + "/effects.ndjson", cfg.chain.seed, effects);

    const SamplerDiagnostics diag = sampler.diagnostics();
    const std::string report_path = out_dir + "/fit_report.txt";
    std::ofstream report = open_out(report_path);
    report << "draws=" << draws.size() << "\n"
           << "patients=" << cohort.patients.size() << "\n"
           << "accept_alpha=" << format_number(diag.accept_alpha) << "\n"
           << "accept_beta=" << format_number(diag.accept_beta) << "\n"
           << "accept_lambda=" << format_number(diag.accept_lambda) << "\n"
           << "accept_psi=" << format_number(diag.accept_psi) << "\n"
           << "accept_rho_hyper=" << format_number(diag.accept_rho_hyper) << "\n"
           << "clamped=" << diag.clamped << "\n";
    finish_out(report, report_path);

    std::cout << "posterior: " << out_dir << "/posterior.ndjson (" << draws.size()
              << " draws, " << cohort.patients.size() << " patients)\n";
}

void cmd_predict(const RunConfig& cfg, const std::string& posterior_path,
                 const std::string& data_dir, const std::string& out_dir) {
    const PosteriorFile post = load_posterior(posterior_path);
    if (post.draws.empty()) throw format_error(posterior_path + ": posterior holds no draws");
    const Cohort cohort = load_cohort(data_dir);
    ensure_dir(out_dir);

    // Model geometry must match the posterior draws; prediction controls
    // come from the local configuration and flags.
    const ModelConfig model = post.config.model;
    const PredictConfig pcfg = cfg.predict;
    const Eigensystem eig = build_eigensystem(model.p, model.grid_size);
    const int threads = resolved_threads(cfg);
    const double cut = pcfg.t_star - kStudyDayOffset;

    const std::string summary_path = out_dir + "/summary.csv";
    std::ofstream summary = open_out(summary_path);
    summary << "patient_id,day,median,lo50,hi50,lo90,hi90\n";

    std::size_t predicted = 0;
    for (const PatientRecord& rec : cohort.patients) {
        if (rec.end_of_followup < cut) continue; // follow-up ended before the cutoff
        const PatientRecord hist = truncate_history(rec, pcfg.t_star);
        const std::vector<SimulatedTrajectory> ensemble =
            generate_ensemble(post.draws, hist, eig, model, pcfg, cfg.chain.seed,
                              static_cast<std::uint64_t>(rec.id), threads);

        const std::string tag = std::to_string(rec.id);
        write_trajectory_csv(out_dir + "/trajectories_" + tag + ".csv", ensemble);
        write_event_csv(out_dir + "/events_" + tag + ".csv", ensemble);

        std::vector<double> vals(ensemble.size());
        for (double day = std::ceil(pcfg.t_star); day <= pcfg.horizon; day += 1.0) {
            for (std::size_t r = 0; r < ensemble.size(); ++r)
                vals[r] = path_value(ensemble[r], day - kStudyDayOffset);
            summary << rec.id << ',' << format_number(day) << ','
                    << format_number(quantile(vals, 0.5)) << ','
                    << format_number(quantile(vals, 0.25)) << ','
                    << format_number(quantile(vals, 0.75)) << ','
                    << format_number(quantile(vals, 0.05)) << ','
                    << format_number(quantile(vals, 0.95)) << '\n';
        }
        ++predicted;
    }
    finish_out(summary, summary_path);

    std::cout << "summary: " << summary_path << " (" << predicted << " patients, R="
              << pcfg.draws << ")\n";
}

/// Shuffles patient positions with a dedicated substream and deals them
/// round-robin, so fold membership depends only on the seed and the cohort
/// order.
std::vector<int> fold_assignment(std::size_t n, int k, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng::substream(seed, kChannelFolds);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = std::min<std::size_t>(i - 1, static_cast<std::size_t>(rng.uniform() * i));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<int> fold(n);
    for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = static_cast<int>(pos % k);
    return fold;
}

void cmd_validate(const RunConfig& cfg, const std::string& data_dir,
                  const std::string& out_dir) {
    const Cohort cohort = load_cohort(data_dir);
    const std::size_t n = cohort.patients.size();
    const int k = cfg.validate.folds;
    if (n < static_cast<std::size_t>(k))
        throw config_error("validate.folds exceeds the cohort size");
    ensure_dir(out_dir);

    const std::vector<int> fold = fold_assignment(n, k, cfg.chain.seed);
    const Eigensystem eig = build_eigensystem(cfg.model.p, cfg.model.grid_size);
    const std::vector<Window> windows = evaluation_windows();
    const std::size_t n_windows = windows.size();
    const int threads = resolved_threads(cfg);

    std::vector<std::vector<ScoredLabel>> scored_rec(n_windows), scored_hosp(n_windows);
    std::vector<std::vector<SimulatedTrajectory>> year_ens;
    std::vector<std::vector<Observation>> year_obs;
    std::vector<double> pit_all;

    for (int f = 0; f < k; ++f) {
        Cohort train;
        for (std::size_t i = 0; i < n; ++i)
            if (fold[i] != f) train.patients.push_back(cohort.patients[i]);

        Sampler sampler(train, cfg);
        std::vector<GlobalParams> draws;
        sampler.run([&](int) { draws.push_back(sampler.globals()); });
        if (draws.empty())
            throw config_error("chain retains no draws; check n_iter, n_burnin and thin");
        double sigma2 = 0.0;
        for (const GlobalParams& g : draws) sigma2 += g.sigma2;
        sigma2 /= static_cast<double>(draws.size());

        for (std::size_t i = 0; i < n; ++i) {
            if (fold[i] != f) continue;
            const PatientRecord& rec = cohort.patients[i];
            std::vector<SimulatedTrajectory> year;

            for (std::size_t c = 0; c < n_windows; ++c) {
                const Window& w = windows[c];
                if (rec.end_of_followup < w.start - kStudyDayOffset) break;
                PredictConfig pc = cfg.predict;
                pc.t_star = w.start;
                pc.horizon = c == 0 ? kStudyLengthDays : w.end;
                const PatientRecord hist = truncate_history(rec, pc.t_star);
                std::vector<SimulatedTrajectory> ens =
                    generate_ensemble(draws, hist, eig, cfg.model, pc, cfg.chain.seed,
                                      static_cast<std::uint64_t>(rec.id), threads);

                const LabelResult lr = recovery_label(rec, w);
                ScoredLabel sr;
                sr.patient_id = rec.id;
                sr.window = static_cast<int>(c);
                sr.score = recovery_score(ens, w, rec.baseline.gender);
                sr.label = lr.label;
                sr.evaluable = lr.evaluable;
                scored_rec[c].push_back(sr);

                const LabelResult lh = hospitalization_label(rec, w);
                ScoredLabel sh = sr;
                sh.score = hospitalization_score(ens, w);
                sh.label = lh.label;
                sh.evaluable = lh.evaluable;
                scored_hosp[c].push_back(sh);

                if (c == 0) year = std::move(ens);
            }

            if (!year.empty()) {
                // Held-out measurements: everything after the first cutoff.
                const double cut = windows.front().start - kStudyDayOffset;
                std::vector<Observation> held;
                for (const Observation& o : rec.observations)
                    if (!o.missing && o.time > cut) held.push_back(o);
                Rng pit_rng = Rng::substream(cfg.chain.seed, kChannelPitNoise,
                                             static_cast<std::uint64_t>(rec.id));
                const std::vector<double> q = pit_quantiles(year, held, sigma2, pit_rng);
                pit_all.insert(pit_all.end(), q.begin(), q.end());
                year_ens.push_back(std::move(year));
                year_obs.push_back(std::move(held));
            }
        }
    }

    MetricsReport report;
    report.windows = windows;
    report.mad = mad(year_ens, year_obs, windows);
    std::vector<ScoredLabel> flat_rec, flat_hosp;
    for (std::size_t c = 0; c < n_windows; ++c) {
        const auto count_evaluable = [](const std::vector<ScoredLabel>& v) {
            long m = 0;
            for (const ScoredLabel& s : v)
                if (s.evaluable) ++m;
            return m;
        };
        const AucResult ar = auc(scored_rec[c]);
        report.auc_recovery.push_back(
            {windows[c], count_evaluable(scored_rec[c]),
             ar.evaluable ? ar.value : std::numeric_limits<double>::quiet_NaN()});
        const AucResult ah = auc(scored_hosp[c]);
        report.auc_hospitalization.push_back(
            {windows[c], count_evaluable(scored_hosp[c]),
             ah.evaluable ? ah.value : std::numeric_limits<double>::quiet_NaN()});
        flat_rec.insert(flat_rec.end(), scored_rec[c].begin(), scored_rec[c].end());
        flat_hosp.insert(flat_hosp.end(), scored_hosp[c].begin(), scored_hosp[c].end());
    }
    report.calibration_recovery = calibration_bins(flat_rec, 10);
    report.calibration_hospitalization = calibration_bins(flat_hosp, 10);
    report.pit = pit_all;

    write_metrics_json(out_dir + "/metrics.json", report);
    write_calibration_csv(out_dir + "/calibration_recovery.csv", report.calibration_recovery);
    write_calibration_csv(out_dir + "/calibration_hospitalization.csv",
                          report.calibration_hospitalization);
    write_qq_csv(out_dir + "/pit_qq.csv", report.pit);

    std::cout << "metrics: " << out_dir << "/metrics.json (" << k << " folds, " << n
              << " patients)\n";
}

void cmd_simulate(const RunConfig& cfg, const std::string& params_path,
                  const std::string& out_dir) {
    GlobalParams truth;
    RunConfig file_cfg = cfg;
    if (!params_path.empty()) {
        const PosteriorFile pf = load_posterior(params_path);
        if (pf.draws.empty())
            throw format_error(params_path + ": true-parameter file holds no draw");
        truth = pf.draws.front();
        file_cfg.model = pf.config.model;
    } else {
        truth = example_globals(cfg.model.p, cfg.model.b);
    }

    const Eigensystem eig = build_eigensystem(file_cfg.model.p, file_cfg.model.grid_size);
    const SynthCohort synth =
        synth_cohort(truth, eig, file_cfg.model, cfg.simulate, cfg.chain.seed);

    ensure_dir(out_dir);
    save_cohort(synth.cohort, out_dir);
    save_posterior(out_dir + "/true_params.ndjson", file_cfg, {truth});
    EffectsDraw d;
    for (std::size_t i = 0; i < synth.complete.size(); ++i) {
        d.patient_id.push_back(synth.complete[i].id);
        d.effects.push_back(synth.truth[i]);
    }
    save_effects(out_dir + "/true_effects.ndjson", cfg.chain.seed, {d});

    std::cout << "cohort: " << out_dir << " (" << synth.cohort.patients.size()
              << " patients)\n";
}

void cmd_basis(const RunConfig& cfg, const std::string& out_path) {
    const Eigensystem eig = build_eigensystem(cfg.model.p, cfg.model.grid_size);
    eig.write_csv(out_path);
    std::cout << "basis: " << out_path << " (" << eig.size() << " functions)\n";
}

void cmd_dump_config(const RunConfig& cfg, const std::string& out_path) {
    const std::string text = dump_config(cfg);
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out = open_out(out_path);
    out << text;
    finish_out(out, out_path);
    std::cout << "config: " << out_path << "\n";
}

std::string one_line(std::string s) {
    for (char& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

} // namespace
} // namespace hbjm

int main(int argc, char** argv) {
    using namespace hbjm;

    CLI::App app{"joint hemoglobin trajectory and hospitalization model"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_path, posterior_path, params_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads, n_draws, folds;
    std::optional<double> t_star, horizon;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "configuration file");
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { seed = v; }, "random seed");
        sub->add_option_function<int>(
            "--threads", [&](int v) { threads = v; },
            "worker threads, 0 = all hardware threads");
    };

    CLI::App* fit = app.add_subcommand("fit", "fit the model to a cohort");
    add_common(fit);
    fit->add_option("--data-dir", data_dir, "cohort directory")->required();
    fit->add_option("--out", out_path, "output directory")->required();

    CLI::App* predict = app.add_subcommand("predict", "simulate future trajectories");
    add_common(predict);
    predict->add_option("posterior", posterior_path, "posterior draws file")->required();
    predict->add_option("--data-dir", data_dir, "cohort directory")->required();
    predict->add_option("--out", out_path, "output directory")->required();
    predict->add_option_function<double>(
        "--t-star", [&](double v) { t_star = v; }, "conditioning day (study axis)");
    predict->add_option_function<double>(
        "--horizon", [&](double v) { horizon = v; }, "simulation end (study axis)");
    predict->add_option_function<int>(
        "--R", [&](int v) { n_draws = v; }, "trajectories per patient");

    CLI::App* validate = app.add_subcommand("validate", "k-fold cross validation");
    add_common(validate);
    validate->add_option("--data-dir", data_dir, "cohort directory")->required();
    validate->add_option("--out", out_path, "output directory")->required();
    validate->add_option_function<int>(
        "--folds", [&](int v) { folds = v; }, "number of folds");
    validate->add_option_function<int>(
        "--R", [&](int v) { n_draws = v; }, "trajectories per patient");

    CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic cohort");
    add_common(simulate);
    simulate->add_option("params", params_path, "true-parameter file (single-draw posterior)");
    simulate->add_option("--out", out_path, "output directory")->required();

    CLI::App* basis = app.add_subcommand("basis", "dump the functional basis");
    add_common(basis);
    basis->add_option("--out", out_path, "output CSV path")->required();

    CLI::App* dump = app.add_subcommand("dump-config", "print the resolved configuration");
    add_common(dump);
    dump->add_option("--out", out_path, "output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        apply_env_overrides(cfg);
        if (seed) cfg.chain.seed = *seed;
        if (threads) cfg.threads = *threads;
        if (t_star) cfg.predict.t_star = *t_star;
        if (horizon) cfg.predict.horizon = *horizon;
        if (n_draws) cfg.predict.draws = *n_draws;
        if (folds) cfg.validate.folds = *folds;
        validate_config(cfg);

        if (fit->parsed()) cmd_fit(cfg, data_dir, out_path);
        else if (predict->parsed()) cmd_predict(cfg, posterior_path, data_dir, out_path);
        else if (validate->parsed()) cmd_validate(cfg, data_dir, out_path);
        else if (simulate->parsed()) cmd_simulate(cfg, params_path, out_path);
        else if (basis->parsed()) cmd_basis(cfg, out_path);
        else cmd_dump_config(cfg, out_path);
        return 0;
    } catch (const data_error& e) {
        std::cerr << "error: data: " << one_line(e.what()) << "\n";
        return e.rule() == "missing_file" ? 2 : 1;
    } catch (const config_error& e) {
        std::cerr << "error: config: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const format_error& e) {
        std::cerr << "error: format: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const numeric_error& e) {
        std::cerr << "error: numeric: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << one_line(e.what()) << "\n";
        return 1;
    }
}
