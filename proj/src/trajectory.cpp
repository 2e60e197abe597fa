#include "hbjm/trajectory.hpp"

#include <cmath>

#include "hbjm/errors.hpp"

namespace hbjm {

Eigen::VectorXd hosp_effect_row(const Eigensystem& eig, const HospBasisConfig& cfg,
                                const Hospitalization& stay, double lambda, double t) {
    if (cfg.b < 1 || cfg.b >= eig.size())
        throw contract_violation("hosp_effect_row: b must lie in [1, p-1]");
    if (!(cfg.m_max > 0.0)) throw contract_violation("hosp_effect_row: m_max must be positive");

    Eigen::VectorXd row = Eigen::VectorXd::Zero(cfg.b);
    if (t < stay.admit) return row;

    auto ramp = [&](double u) {
        // Basis value at the saturating in-hospital clock, relative to the
        // admission point so the disturbance starts at zero.
        const double m = std::min(1.0, u / cfg.m_max);
        for (int k = 1; k <= cfg.b; ++k)
            row[k - 1] = eig.weighted_value(k, m) - eig.weighted_value(k, 0.0);
    };

    if (t < stay.discharge) {
        ramp(t - stay.admit);
    } else {
        if (!(lambda > 0.0))
            throw contract_violation("hosp_effect_row: lambda must be positive after discharge");
        ramp(stay.discharge - stay.admit);
        row *= std::exp(-lambda * (t - stay.discharge));
    }
    return row;
}

double true_hb_at(const Eigensystem& eig, const HospBasisConfig& cfg,
                  const PatientRecord& patient, const PatientEffects& effects, double t) {
    if (effects.alpha.size() != eig.size())
        throw contract_violation("true_hb_at: alpha length must match the basis size");
    if (effects.beta.size() != patient.hospitalizations.size() ||
        effects.lambda.size() != patient.hospitalizations.size())
        throw contract_violation("true_hb_at: one beta and lambda per hospitalization");

    double value = eig.weighted_row(study_time_unit(t)).dot(effects.alpha);
    for (std::size_t j = 0; j < patient.hospitalizations.size(); ++j) {
        const auto& stay = patient.hospitalizations[j];
        if (t < stay.admit) continue;
        value += hosp_effect_row(eig, cfg, stay, effects.lambda[j], t).dot(effects.beta[j]);
    }
    return value;
}

Eigen::VectorXd true_hb(const Eigensystem& eig, const HospBasisConfig& cfg,
                        const PatientRecord& patient, const PatientEffects& effects,
                        const std::vector<double>& times) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(times.size()));
    for (std::size_t i = 0; i < times.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = true_hb_at(eig, cfg, patient, effects, times[i]);
    return out;
}

} // namespace hbjm
