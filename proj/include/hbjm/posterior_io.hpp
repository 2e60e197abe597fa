#pragma once

// Persistence for retained posterior draws: line-delimited JSON with a
// manifest line up front, plus an optional per-patient effects sidecar.

#include <cstdint>
#include <string>
#include <vector>

#include "hbjm/config.hpp"
#include "hbjm/likelihood.hpp"
#include "hbjm/trajectory.hpp"

namespace hbjm {

inline constexpr int kPosteriorFormatVersion = 1;
inline constexpr const char* kCodeVersion = "0.1.0";

struct PosteriorFile {
    RunConfig config;
    std::vector<GlobalParams> draws;
};

/// Writes the manifest plus one line per retained draw. Every number
/// round-trips bitwise through load_posterior.
void save_posterior(const std::string& path, const RunConfig& cfg,
                    const std::vector<GlobalParams>& draws);

/// Parses a file produced by save_posterior. Raises format_error on a
/// version mismatch, a truncated file, or any malformed line, and
/// data_error("missing_file") when the file cannot be opened.
PosteriorFile load_posterior(const std::string& path);

/// One retained draw of every patient's effects, in cohort order.
struct EffectsDraw {
    std::vector<long> patient_id;
    std::vector<PatientEffects> effects;
};

/// Sidecar with per-patient draws, one line per retained iteration, keyed
/// by patient id within each line.
void save_effects(const std::string& path, std::uint64_t seed,
                  const std::vector<EffectsDraw>& draws);

std::vector<EffectsDraw> load_effects(const std::string& path);

} // namespace hbjm
