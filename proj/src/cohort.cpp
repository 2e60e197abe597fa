#include "hbjm/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "hbjm/basis.hpp"
#include "hbjm/csv.hpp"
#include "hbjm/errors.hpp"

namespace hbjm {

int PatientRecord::index_stay() const {
    for (std::size_t j = 0; j < hospitalizations.size(); ++j)
        if (hospitalizations[j].is_index) return static_cast<int>(j);
    return -1;
}

double study_time_unit(double t) {
    return scale_covariate(t - kFollowupStart, bounds::study_lo, bounds::study_hi);
}

double scale_hb(double hb) { return scale_covariate(hb, bounds::hb_lo, bounds::hb_hi); }

namespace {

std::string patient_tag(long id) { return "patient " + std::to_string(id); }

void append_baseline_terms(Eigen::VectorXd& v, int& at, const Baseline& b) {
    v[at++] = scale_covariate(b.age, bounds::age_lo, bounds::age_hi);
    const Eigen::VectorXd gender = categorical_expansion(b.gender, kGenderLevels);
    v.segment(at, kGenderLevels) = gender;
    at += kGenderLevels;
    v[at++] = scale_covariate(b.charlson, bounds::charlson_lo, bounds::charlson_hi);
    const Eigen::VectorXd iron = categorical_expansion(b.suppl_iron, 2);
    v.segment(at, 2) = iron;
    at += 2;
}

void append_history_terms(Eigen::VectorXd& v, int& at, const Baseline& b) {
    for (int flag : {b.renal_disease, b.metastatic_tumor, b.other_cancer, b.surgical}) {
        v.segment(at, 2) = categorical_expansion(flag, 2);
        at += 2;
    }
    v.segment(at, kRaceLevels) = categorical_expansion(b.race, kRaceLevels);
    at += kRaceLevels;
    v[at++] = scale_covariate(b.sofa, bounds::sofa_lo, bounds::sofa_hi);
    v[at++] = scale_covariate(b.rbc_day1, bounds::rbc_lo, bounds::rbc_hi);
    v[at++] = scale_covariate(b.index_icu_days, bounds::icu_lo, bounds::icu_hi);
    v[at++] = scale_covariate(b.index_hospital_days, bounds::index_hosp_lo, bounds::index_hosp_hi);
    v[at++] = scale_covariate(b.total_hospital_duration, bounds::total_hosp_dur_lo,
                              bounds::total_hosp_dur_hi);
    v[at++] = scale_covariate(b.total_ed_duration, bounds::total_ed_lo, bounds::total_ed_hi);
    v[at++] = scale_covariate(b.total_emergency_duration, bounds::total_emg_lo,
                              bounds::total_emg_hi);
    v[at++] = scale_covariate(b.total_hospital_days, bounds::total_hosp_days_lo,
                              bounds::total_hosp_days_hi);
}

} // namespace

int trend_design_size() { return 29; }

Eigen::VectorXd trend_design(const Baseline& b) {
    Eigen::VectorXd v(trend_design_size());
    int at = 0;
    v[at++] = 1.0;
    append_baseline_terms(v, at, b); // age, gender, charlson, iron
    append_history_terms(v, at, b);
    if (at != trend_design_size()) throw contract_violation("trend_design layout drifted");
    return v;
}

int recovery_design_size() { return 10; }

Eigen::VectorXd recovery_design(const Baseline& b, double hb_at_admit, double hb_at_discharge) {
    Eigen::VectorXd v(recovery_design_size());
    int at = 0;
    v[at++] = 1.0;
    append_baseline_terms(v, at, b);
    const double ha = scale_hb(hb_at_admit);
    const double hd = scale_hb(hb_at_discharge);
    v[at++] = ha;
    v[at++] = hd;
    v[at++] = ha * hd;
    if (at != recovery_design_size()) throw contract_violation("recovery_design layout drifted");
    return v;
}

const DesignLayout& recovery_layout() {
    static const DesignLayout layout = [] {
        DesignLayout l;
        auto add = [&](const std::string& name, int size) {
            l.block_names.push_back(name);
            l.block_offsets.push_back(l.total);
            l.block_sizes.push_back(size);
            l.total += size;
        };
        add("intercept", 1);
        add("age", 1);
        add("gender", kGenderLevels);
        add("charlson", 1);
        add("suppl_iron", 2);
        add("hb_admit", 1);
        add("hb_discharge", 1);
        add("hb_interaction", 1);
        if (l.total != recovery_design_size())
            throw contract_violation("recovery_layout layout drifted");
        return l;
    }();
    return layout;
}

const DesignLayout& hazard_layout(int state) {
    static const auto make = [](int s) {
        DesignLayout layout;
        auto add = [&](const std::string& name, int size) {
            layout.block_names.push_back(name);
            layout.block_offsets.push_back(layout.total);
            layout.block_sizes.push_back(size);
            layout.total += size;
        };
        add("intercept", 1);
        add("hemoglobin", 1);
        add("study_time", 1);
        if (s == 1) add("inpatient_time", 1);
        add("age", 1);
        add("gender", kGenderLevels);
        add("charlson", 1);
        add("suppl_iron", 2);
        add("renal_disease", 2);
        add("metastatic_tumor", 2);
        add("other_cancer", 2);
        add("surgical", 2);
        add("race", kRaceLevels);
        add("sofa", 1);
        add("rbc_day1", 1);
        add("index_icu_days", 1);
        add("index_hospital_days", 1);
        add("total_hospital_duration", 1);
        add("total_ed_duration", 1);
        add("total_emergency_duration", 1);
        add("total_hospital_days", 1);
        return layout;
    };
    static const DesignLayout admission = make(0);
    static const DesignLayout discharge = make(1);
    if (state != 0 && state != 1) throw contract_violation("hazard_layout: state must be 0 or 1");
    return state == 0 ? admission : discharge;
}

Eigen::VectorXd hazard_design_static(const Baseline& b, int state, double t, double admit_time) {
    const DesignLayout& layout = hazard_layout(state);
    Eigen::VectorXd v(layout.total);
    int at = 0;
    v[at++] = 1.0;
    v[at++] = 0.0; // hemoglobin entry, filled by the caller
    v[at++] = study_time_unit(t);
    if (state == 1)
        v[at++] = scale_covariate(t - admit_time, bounds::inpatient_lo, bounds::inpatient_hi);
    append_baseline_terms(v, at, b);
    append_history_terms(v, at, b);
    if (at != layout.total) throw contract_violation("hazard_design_static layout drifted");
    return v;
}

EventGrid build_event_grid(const PatientRecord& p, double max_interval) {
    if (!(max_interval > 0.0))
        throw contract_violation("build_event_grid: max_interval must be positive");
    const double start = kFollowupStart;
    const double end = p.end_of_followup;

    struct Cut {
        double t;
        bool is_admit;
        bool is_index;
    };
    std::vector<Cut> cuts;
    for (const auto& h : p.hospitalizations) {
        if (h.admit > start && h.admit < end) cuts.push_back({h.admit, true, h.is_index});
        if (h.discharge > start && h.discharge < end) cuts.push_back({h.discharge, false, false});
    }
    std::sort(cuts.begin(), cuts.end(), [](const Cut& a, const Cut& b) { return a.t < b.t; });

    auto covering_stay = [&](double t) -> const Hospitalization* {
        for (const auto& h : p.hospitalizations)
            if (h.admit <= t && t < h.discharge) return &h;
        return nullptr;
    };

    EventGrid grid;
    double prev = start;
    for (std::size_t c = 0; c <= cuts.size(); ++c) {
        const double next = c < cuts.size() ? cuts[c].t : end;
        const double len = next - prev;
        if (len <= 0.0) {
            prev = next;
            continue;
        }
        const Hospitalization* stay = covering_stay(prev);
        const int n_sub = std::max(1, static_cast<int>(std::ceil(len / max_interval - 1e-9)));
        const double sub = len / n_sub;
        for (int s = 0; s < n_sub; ++s) {
            EventInterval iv;
            iv.start = prev + s * sub;
            iv.length = sub;
            iv.state = stay != nullptr ? 1 : 0;
            iv.admit_time = stay != nullptr ? stay->admit : 0.0;
            if (s == n_sub - 1 && c < cuts.size()) {
                iv.count = 1;
                if (cuts[c].is_admit && cuts[c].is_index) {
                    iv.in_risk_set = false;
                    grid.index_admission_interval = static_cast<int>(grid.intervals.size());
                }
            }
            grid.intervals.push_back(iv);
        }
        prev = next;
    }
    return grid;
}

EventGrid index_conditioning(EventGrid grid) {
    if (grid.index_admission_interval < 0)
        throw data_error("index_conditioning", "event grid lacks an anchor admission");
    auto& iv = grid.intervals[static_cast<std::size_t>(grid.index_admission_interval)];
    iv.count = 0;
    iv.in_risk_set = false;
    return grid;
}

namespace {

void validate_patient_impl(const PatientRecord& p, bool require_index_obs) {
    const auto tag = patient_tag(p.id);
    if (!(p.end_of_followup > kFollowupStart) || !(p.end_of_followup <= kFollowupEnd))
        throw data_error("followup_range", tag + ": end of follow-up outside (-365, 365]");

    for (const auto& o : p.observations) {
        if (!std::isfinite(o.time) || o.time < kFollowupStart || o.time > p.end_of_followup)
            throw data_error("observation_time",
                             tag + ": observation outside the follow-up window");
        if (!o.missing && (!std::isfinite(o.value) || o.value <= 0.0))
            throw data_error("observation_value", tag + ": non-positive hemoglobin value");
    }

    int n_index = 0;
    for (std::size_t j = 0; j < p.hospitalizations.size(); ++j) {
        const auto& h = p.hospitalizations[j];
        if (!std::isfinite(h.admit) || !std::isfinite(h.discharge) || h.admit >= h.discharge)
            throw data_error("hospitalization_times", tag + ": admission must precede discharge");
        if (h.admit < kFollowupStart)
            throw data_error("hospitalization_times",
                             tag + ": admission before the follow-up window");
        if (h.admit >= p.end_of_followup)
            throw data_error("hospitalization_times", tag + ": admission after end of follow-up");
        if (j > 0 && h.admit <= p.hospitalizations[j - 1].discharge)
            throw data_error("hospitalization_overlap",
                             tag + ": hospitalizations overlap or touch");
        if (h.is_index) ++n_index;
    }
    if (n_index != 1)
        throw data_error("index_stay", tag + ": exactly one anchor stay is required");

    if (require_index_obs) {
        const auto& idx = p.hospitalizations[static_cast<std::size_t>(p.index_stay())];
        int obs_in_index = 0;
        for (const auto& o : p.observations)
            if (o.time >= idx.admit && o.time <= idx.discharge) ++obs_in_index;
        if (obs_in_index < 2)
            throw data_error("index_observations",
                             tag + ": at least two measurements during the anchor stay");
    }

    const auto& b = p.baseline;
    if (b.gender < 0 || b.gender >= kGenderLevels)
        throw data_error("categorical_code", tag + ": gender code out of range");
    if (b.race < 0 || b.race >= kRaceLevels)
        throw data_error("categorical_code", tag + ": race code out of range");
    for (int flag : {b.suppl_iron, b.renal_disease, b.metastatic_tumor, b.other_cancer,
                     b.surgical})
        if (flag != 0 && flag != 1)
            throw data_error("categorical_code", tag + ": binary flag must be 0 or 1");
    for (double x : {b.age, b.charlson, b.sofa, b.rbc_day1, b.index_icu_days,
                     b.index_hospital_days, b.total_hospital_duration, b.total_ed_duration,
                     b.total_emergency_duration, b.total_hospital_days})
        if (!std::isfinite(x))
            throw data_error("baseline_value", tag + ": non-finite baseline covariate");
}

} // namespace

void validate_cohort(const Cohort& cohort) {
    for (const auto& p : cohort.patients) validate_patient_impl(p, true);
}

void validate_history(const PatientRecord& p) { validate_patient_impl(p, false); }

Cohort load_cohort(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string obs_path = (fs::path(dir) / "observations.csv").string();
    const std::string hosp_path = (fs::path(dir) / "hospitalizations.csv").string();
    const std::string base_path = (fs::path(dir) / "baseline.csv").string();
    const std::string fup_path = (fs::path(dir) / "followup.csv").string();

    const CsvTable base = read_csv(base_path);
    const CsvTable obs = read_csv(obs_path);
    const CsvTable hosp = read_csv(hosp_path);
    const CsvTable fup = read_csv(fup_path);

    std::map<long, PatientRecord> patients;

    {
        const int c_id = base.column("patient_id", base_path);
        const int c_age = base.column("age", base_path);
        const int c_gender = base.column("gender", base_path);
        const int c_charlson = base.column("charlson", base_path);
        const int c_iron = base.column("suppl_iron", base_path);
        const int c_renal = base.column("renal_disease", base_path);
        const int c_mets = base.column("metastatic_tumor", base_path);
        const int c_cancer = base.column("other_cancer", base_path);
        const int c_surg = base.column("surgical", base_path);
        const int c_race = base.column("race", base_path);
        const int c_sofa = base.column("sofa", base_path);
        const int c_rbc = base.column("rbc_day1", base_path);
        const int c_icu = base.column("index_icu_days", base_path);
        const int c_ihd = base.column("index_hospital_days", base_path);
        const int c_thd = base.column("total_hospital_duration", base_path);
        const int c_ted = base.column("total_ed_duration", base_path);
        const int c_temg = base.column("total_emergency_duration", base_path);
        const int c_thdays = base.column("total_hospital_days", base_path);
        for (const auto& row : base.rows) {
            const long id = parse_long(row[c_id], base_path);
            if (patients.count(id))
                throw data_error("duplicate_baseline", patient_tag(id) + ": repeated row");
            PatientRecord p;
            p.id = id;
            Baseline& b = p.baseline;
            b.age = parse_double(row[c_age], base_path);
            b.gender = static_cast<int>(parse_long(row[c_gender], base_path));
            b.charlson = parse_double(row[c_charlson], base_path);
            b.suppl_iron = static_cast<int>(parse_long(row[c_iron], base_path));
            b.renal_disease = static_cast<int>(parse_long(row[c_renal], base_path));
            b.metastatic_tumor = static_cast<int>(parse_long(row[c_mets], base_path));
            b.other_cancer = static_cast<int>(parse_long(row[c_cancer], base_path));
            b.surgical = static_cast<int>(parse_long(row[c_surg], base_path));
            b.race = static_cast<int>(parse_long(row[c_race], base_path));
            b.sofa = parse_double(row[c_sofa], base_path);
            b.rbc_day1 = parse_double(row[c_rbc], base_path);
            b.index_icu_days = parse_double(row[c_icu], base_path);
            b.index_hospital_days = parse_double(row[c_ihd], base_path);
            b.total_hospital_duration = parse_double(row[c_thd], base_path);
            b.total_ed_duration = parse_double(row[c_ted], base_path);
            b.total_emergency_duration = parse_double(row[c_temg], base_path);
            b.total_hospital_days = parse_double(row[c_thdays], base_path);
            patients.emplace(id, std::move(p));
        }
    }

    auto find_patient = [&](long id, const std::string& where) -> PatientRecord& {
        auto it = patients.find(id);
        if (it == patients.end())
            throw data_error("missing_baseline",
                             patient_tag(id) + " referenced by " + where + " has no baseline row");
        return it->second;
    };

    {
        const int c_id = fup.column("patient_id", fup_path);
        const int c_end = fup.column("end_day", fup_path);
        std::map<long, bool> seen;
        for (const auto& row : fup.rows) {
            const long id = parse_long(row[c_id], fup_path);
            if (seen[id])
                throw data_error("duplicate_followup", patient_tag(id) + ": repeated row");
            seen[id] = true;
            find_patient(id, fup_path).end_of_followup = parse_double(row[c_end], fup_path);
        }
        for (const auto& [id, p] : patients) {
            (void)p;
            if (!seen.count(id))
                throw data_error("missing_followup", patient_tag(id) + ": no follow-up row");
        }
    }

    {
        const int c_id = obs.column("patient_id", obs_path);
        const int c_time = obs.column("time_days", obs_path);
        const int c_hb = obs.column("hb_g_dl", obs_path);
        for (const auto& row : obs.rows) {
            const long id = parse_long(row[c_id], obs_path);
            Observation o;
            o.time = parse_double(row[c_time], obs_path);
            if (is_missing_field(row[c_hb])) {
                o.missing = true;
            } else {
                o.value = parse_double(row[c_hb], obs_path);
            }
            find_patient(id, obs_path).observations.push_back(o);
        }
    }

    {
        const int c_id = hosp.column("patient_id", hosp_path);
        const int c_admit = hosp.column("admit_day", hosp_path);
        const int c_dis = hosp.column("discharge_day", hosp_path);
        const int c_index = hosp.column("is_index", hosp_path);
        for (const auto& row : hosp.rows) {
            const long id = parse_long(row[c_id], hosp_path);
            Hospitalization h;
            h.admit = parse_double(row[c_admit], hosp_path);
            h.discharge = parse_double(row[c_dis], hosp_path);
            h.is_index = parse_long(row[c_index], hosp_path) != 0;
            find_patient(id, hosp_path).hospitalizations.push_back(h);
        }
    }

    Cohort cohort;
    cohort.patients.reserve(patients.size());
    for (auto& [id, p] : patients) {
        (void)id;
        std::sort(p.observations.begin(), p.observations.end(),
                  [](const Observation& a, const Observation& b) { return a.time < b.time; });
        std::sort(p.hospitalizations.begin(), p.hospitalizations.end(),
                  [](const Hospitalization& a, const Hospitalization& b) {
                      return a.admit < b.admit;
                  });
        cohort.patients.push_back(std::move(p));
    }
    validate_cohort(cohort);
    return cohort;
}

void save_cohort(const Cohort& cohort, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(fs::path(dir) / name);
        if (!out) throw format_error(std::string("cannot write ") + name + " in " + dir);
        return out;
    };

    auto fmt = [](double x) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof(buf), x);
        return std::string(buf, res.ptr);
    };

    std::ofstream obs = open("observations.csv");
    obs << "patient_id,time_days,hb_g_dl\n";
    std::ofstream hosp = open("hospitalizations.csv");
    hosp << "patient_id,admit_day,discharge_day,is_index\n";
    std::ofstream base = open("baseline.csv");
    base << "patient_id,age,gender,charlson,suppl_iron,renal_disease,metastatic_tumor,"
            "other_cancer,surgical,race,sofa,rbc_day1,index_icu_days,index_hospital_days,"
            "total_hospital_duration,total_ed_duration,total_emergency_duration,"
            "total_hospital_days\n";
    std::ofstream fup = open("followup.csv");
    fup << "patient_id,end_day\n";

    for (const auto& p : cohort.patients) {
        for (const auto& o : p.observations) {
            obs << p.id << ',' << fmt(o.time) << ',';
            if (o.missing)
                obs << "NA\n";
            else
                obs << fmt(o.value) << '\n';
        }
        for (const auto& h : p.hospitalizations)
            hosp << p.id << ',' << fmt(h.admit) << ',' << fmt(h.discharge) << ','
                 << (h.is_index ? 1 : 0) << '\n';
        const Baseline& b = p.baseline;
        base << p.id << ',' << fmt(b.age) << ',' << b.gender << ',' << fmt(b.charlson) << ','
             << b.suppl_iron << ',' << b.renal_disease << ',' << b.metastatic_tumor << ','
             << b.other_cancer << ',' << b.surgical << ',' << b.race << ',' << fmt(b.sofa) << ','
             << fmt(b.rbc_day1) << ',' << fmt(b.index_icu_days) << ','
             << fmt(b.index_hospital_days) << ',' << fmt(b.total_hospital_duration) << ','
             << fmt(b.total_ed_duration) << ',' << fmt(b.total_emergency_duration) << ','
             << fmt(b.total_hospital_days) << '\n';
        fup << p.id << ',' << fmt(p.end_of_followup) << '\n';
    }
}

} // namespace hbjm
