#include "hbjm/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "hbjm/csv.hpp"
#include "hbjm/errors.hpp"
#include "hbjm/stats.hpp"

namespace hbjm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Patient-day bounds of a study-day window.
struct PatientSpan {
    double lo;
    double hi;
};

PatientSpan to_patient_days(const Window& w) {
    return {w.start - kStudyDayOffset, w.end - kStudyDayOffset};
}

bool in_window(double t_patient, const PatientSpan& s) {
    return t_patient >= s.lo && t_patient < s.hi;
}

} // namespace

std::vector<Window> evaluation_windows() {
    std::vector<Window> out;
    for (int w = 0; w < 11; ++w)
        out.push_back({365.0 + 30.0 * w, 365.0 + 30.0 * (w + 1)});
    out.push_back({695.0, 730.0});
    return out;
}

double recovery_threshold(int gender) {
    if (gender != 0 && gender != 1)
        throw contract_violation("recovery_threshold: gender code out of range");
    return gender == 0 ? 13.0 : 12.0;
}

std::vector<SimulatedTrajectory> truncate_at_death(std::vector<SimulatedTrajectory> ensemble,
                                                   double death_day) {
    const double cut = death_day - kStudyDayOffset;
    for (auto& traj : ensemble) {
        std::size_t keep = 0;
        while (keep < traj.time.size() && traj.time[keep] < cut) ++keep;
        traj.time.resize(keep);
        traj.true_hb.resize(keep);
        traj.state.resize(keep);
        std::vector<SimulatedEvent> kept;
        for (const auto& e : traj.events)
            if (e.time < cut) kept.push_back(e);
        traj.events = std::move(kept);
    }
    return ensemble;
}

double path_value(const SimulatedTrajectory& traj, double t) {
    if (traj.time.empty()) throw contract_violation("path_value: trajectory has no samples");
    if (t < traj.time.front() || t > traj.time.back())
        throw contract_violation("path_value: time outside the sampled span");
    const auto it = std::lower_bound(traj.time.begin(), traj.time.end(), t);
    const auto at = static_cast<std::size_t>(it - traj.time.begin());
    if (it != traj.time.end() && *it == t) return traj.true_hb[at];
    const double t0 = traj.time[at - 1];
    const double t1 = traj.time[at];
    const double w = (t - t0) / (t1 - t0);
    return (1.0 - w) * traj.true_hb[at - 1] + w * traj.true_hb[at];
}

namespace {

template <class Clears>
double clearing_fraction(const std::vector<SimulatedTrajectory>& ensemble, Clears&& clears) {
    if (ensemble.empty()) throw contract_violation("score: empty ensemble");
    long hits = 0;
    for (const auto& traj : ensemble)
        if (clears(traj)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ensemble.size());
}

} // namespace

double recovery_score(const std::vector<SimulatedTrajectory>& ensemble, const Window& w,
                      int gender) {
    const double threshold = recovery_threshold(gender);
    const PatientSpan s = to_patient_days(w);
    return clearing_fraction(ensemble, [&](const SimulatedTrajectory& traj) {
        for (std::size_t i = 0; i < traj.time.size(); ++i)
            if (in_window(traj.time[i], s) && traj.true_hb[i] >= threshold) return true;
        return false;
    });
}

double hospitalization_score(const std::vector<SimulatedTrajectory>& ensemble, const Window& w) {
    const PatientSpan s = to_patient_days(w);
    return clearing_fraction(ensemble, [&](const SimulatedTrajectory& traj) {
        for (std::size_t i = 0; i < traj.time.size(); ++i)
            if (in_window(traj.time[i], s) && traj.state[i] == 1) return true;
        return false;
    });
}

LabelResult recovery_label(const PatientRecord& rec, const Window& w) {
    const double threshold = recovery_threshold(rec.baseline.gender);
    const PatientSpan s = to_patient_days(w);
    LabelResult out;
    for (const auto& o : rec.observations) {
        if (o.missing || !in_window(o.time, s)) continue;
        out.evaluable = true;
        if (o.value >= threshold) out.label = true;
    }
    return out;
}

LabelResult hospitalization_label(const PatientRecord& rec, const Window& w) {
    const PatientSpan s = to_patient_days(w);
    const double lo = std::max(s.lo, kFollowupStart);
    const double hi = std::min(s.hi, rec.end_of_followup);
    LabelResult out;
    if (lo >= hi) return out; // follow-up never reaches the window
    out.evaluable = true;
    for (const auto& h : rec.hospitalizations)
        if (h.admit < hi && h.discharge > lo) out.label = true;
    return out;
}

AucResult auc(const std::vector<ScoredLabel>& scored) {
    std::vector<double> scores;
    std::vector<int> labels;
    long n_pos = 0;
    for (const auto& s : scored) {
        if (!s.evaluable) continue;
        scores.push_back(s.score);
        labels.push_back(s.label ? 1 : 0);
        if (s.label) ++n_pos;
    }
    AucResult out;
    if (n_pos == 0 || n_pos == static_cast<long>(labels.size())) return out;
    out.evaluable = true;
    out.value = mann_whitney_auc(scores, labels);
    return out;
}

std::vector<double> pit_quantiles(const std::vector<SimulatedTrajectory>& ensemble,
                                  const std::vector<Observation>& observations, double sigma2,
                                  Rng& rng) {
    if (ensemble.empty()) throw contract_violation("pit_quantiles: empty ensemble");
    if (!(sigma2 >= 0.0)) throw contract_violation("pit_quantiles: negative noise variance");
    const double sd = std::sqrt(sigma2);
    const double r_count = static_cast<double>(ensemble.size());

    std::vector<double> out;
    for (const auto& o : observations) {
        if (o.missing) continue;
        if (ensemble.front().time.empty() || o.time < ensemble.front().time.front() ||
            o.time > ensemble.front().time.back())
            continue;
        long below = 0;
        for (const auto& traj : ensemble) {
            const double draw = path_value(traj, o.time) + sd * rng.normal();
            if (draw <= o.value) ++below;
        }
        out.push_back((static_cast<double>(below) + 0.5) / (r_count + 0.5));
    }
    return out;
}

std::vector<CalibrationBin> calibration_bins(const std::vector<ScoredLabel>& scored, int n_bins) {
    if (n_bins < 2) throw contract_violation("calibration_bins: need at least two bins");
    std::vector<CalibrationBin> bins(static_cast<std::size_t>(n_bins));
    const double width = 1.0 / n_bins;
    for (int k = 0; k < n_bins; ++k) {
        bins[static_cast<std::size_t>(k)].lo = k * width;
        bins[static_cast<std::size_t>(k)].hi = (k + 1) * width;
    }

    std::vector<double> score_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<long> hits(static_cast<std::size_t>(n_bins), 0);
    for (const auto& s : scored) {
        if (!s.evaluable) continue;
        if (!(s.score >= 0.0 && s.score <= 1.0))
            throw contract_violation("calibration_bins: score outside [0, 1]");
        int k = static_cast<int>(s.score / width);
        if (k == n_bins) k = n_bins - 1; // score exactly 1 joins the top bin
        auto& bin = bins[static_cast<std::size_t>(k)];
        ++bin.n;
        score_sum[static_cast<std::size_t>(k)] += s.score;
        if (s.label) ++hits[static_cast<std::size_t>(k)];
    }

    for (int k = 0; k < n_bins; ++k) {
        auto& bin = bins[static_cast<std::size_t>(k)];
        if (bin.n == 0) {
            bin.mean_score = kNaN;
            bin.p_hat = kNaN;
            bin.se = kNaN;
            continue;
        }
        const double n = static_cast<double>(bin.n);
        bin.mean_score = score_sum[static_cast<std::size_t>(k)] / n;
        bin.p_hat = static_cast<double>(hits[static_cast<std::size_t>(k)]) / n;
        bin.se = std::sqrt(bin.p_hat * (1.0 - bin.p_hat) / n);
    }
    return bins;
}

std::vector<WindowMetric> mad(const std::vector<std::vector<SimulatedTrajectory>>& ensembles,
                              const std::vector<std::vector<Observation>>& observations,
                              const std::vector<Window>& windows) {
    if (ensembles.size() != observations.size())
        throw contract_violation("mad: ensembles and observations must pair up");

    std::vector<WindowMetric> out(windows.size());
    for (std::size_t w = 0; w < windows.size(); ++w) out[w].window = windows[w];

    std::vector<double> values;
    for (std::size_t i = 0; i < ensembles.size(); ++i) {
        const auto& ens = ensembles[i];
        if (ens.empty()) continue;
        const double span_lo = ens.front().time.empty() ? 0.0 : ens.front().time.front();
        const double span_hi = ens.front().time.empty() ? -1.0 : ens.front().time.back();
        for (const auto& o : observations[i]) {
            if (o.missing || o.time < span_lo || o.time > span_hi) continue;
            values.clear();
            for (const auto& traj : ens) values.push_back(path_value(traj, o.time));
            const double median = quantile(values, 0.5);
            const double dev = std::abs(o.value - median);
            for (std::size_t w = 0; w < windows.size(); ++w) {
                if (!in_window(o.time, to_patient_days(windows[w]))) continue;
                ++out[w].n;
                out[w].value += dev;
            }
        }
    }
    for (auto& m : out) m.value = m.n > 0 ? m.value / static_cast<double>(m.n) : kNaN;
    return out;
}

namespace {

nlohmann::ordered_json window_metrics_json(const std::vector<WindowMetric>& metrics) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& m : metrics) {
        nlohmann::ordered_json row;
        row["start"] = m.window.start;
        row["end"] = m.window.end;
        row["n"] = m.n;
        if (std::isfinite(m.value))
            row["value"] = m.value;
        else
            row["value"] = nullptr;
        arr.push_back(row);
    }
    return arr;
}

nlohmann::ordered_json calibration_json(const std::vector<CalibrationBin>& bins) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& b : bins) {
        nlohmann::ordered_json row;
        row["lo"] = b.lo;
        row["hi"] = b.hi;
        row["n"] = b.n;
        if (b.n > 0) {
            row["mean_score"] = b.mean_score;
            row["p_hat"] = b.p_hat;
            row["se"] = b.se;
        } else {
            row["mean_score"] = nullptr;
            row["p_hat"] = nullptr;
            row["se"] = nullptr;
        }
        arr.push_back(row);
    }
    return arr;
}

} // namespace

void write_metrics_json(const std::string& path, const MetricsReport& report) {
    nlohmann::ordered_json doc;
    nlohmann::ordered_json windows = nlohmann::ordered_json::array();
    for (const auto& w : report.windows) windows.push_back({{"start", w.start}, {"end", w.end}});
    doc["windows"] = windows;
    doc["mad"] = window_metrics_json(report.mad);
    doc["auc_recovery"] = window_metrics_json(report.auc_recovery);
    doc["auc_hospitalization"] = window_metrics_json(report.auc_hospitalization);
    doc["calibration_recovery"] = calibration_json(report.calibration_recovery);
    doc["calibration_hospitalization"] = calibration_json(report.calibration_hospitalization);
    doc["pit"] = report.pit;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("output", "cannot open " + path + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw data_error("output", "failed writing " + path);
}

void write_calibration_csv(const std::string& path, const std::vector<CalibrationBin>& bins) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("output", "cannot open " + path + " for writing");
    out << "lo,hi,n,mean_score,p_hat,se\n";
    for (const auto& b : bins) {
        out << format_number(b.lo) << ',' << format_number(b.hi) << ',' << b.n << ',';
        if (b.n > 0)
            out << format_number(b.mean_score) << ',' << format_number(b.p_hat) << ','
                << format_number(b.se);
        else
            out << ",,";
        out << '\n';
    }
    if (!out) throw data_error("output", "failed writing " + path);
}

void write_qq_csv(const std::string& path, std::vector<double> pit) {
    std::sort(pit.begin(), pit.end());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("output", "cannot open " + path + " for writing");
    out << "theoretical,observed\n";
    const double n = static_cast<double>(pit.size());
    for (std::size_t i = 0; i < pit.size(); ++i) {
        const double p = (static_cast<double>(i) + 0.5) / n;
        const double q = std::min(1.0 - 1e-12, std::max(1e-12, pit[i]));
        out << format_number(normal_quantile(p)) << ',' << format_number(normal_quantile(q))
            << '\n';
    }
    if (!out) throw data_error("output", "failed writing " + path);
}

} // namespace hbjm
