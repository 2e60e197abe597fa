#include "hbjm/posterior_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hbjm/cohort.hpp"
#include "hbjm/errors.hpp"

namespace hbjm {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_std(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ordered_json draw_to_json(const GlobalParams& g) {
    ordered_json j;
    j["sigma2"] = g.sigma2;
    j["gamma0"] = to_std(g.gamma0);
    j["tau2_0"] = g.tau2_0;
    j["sigma2_gamma0"] = g.sigma2_gamma0;
    j["gamma"] = to_std(g.gamma);
    j["tau2"] = g.tau2;
    j["sigma2_gamma"] = g.sigma2_gamma;
    j["eta"] = to_std(g.eta);
    j["omega2"] = g.omega2;
    j["sigma2_eta"] = g.sigma2_eta;
    j["zeta"] = to_std(g.zeta);
    j["sigma2_lambda"] = g.sigma2_lambda;
    j["sigma2_zeta"] = to_std(g.sigma2_zeta);
    j["psi"] = {to_std(g.psi[0]), to_std(g.psi[1])};
    j["nu2"] = {to_std(g.nu2[0]), to_std(g.nu2[1])};
    j["alpha_rho"] = g.alpha_rho;
    j["beta_rho"] = g.beta_rho;
    return j;
}

Eigen::VectorXd read_vector(const ordered_json& j, const char* key, Eigen::Index size,
                            std::size_t line) {
    const Eigen::VectorXd v = from_std(j.at(key).get<std::vector<double>>());
    if (v.size() != size)
        throw format_error("posterior line " + std::to_string(line) + ": field " + key +
                           " has size " + std::to_string(v.size()) + ", expected " +
                           std::to_string(size));
    return v;
}

GlobalParams draw_from_json(const ordered_json& j, int p, int b, std::size_t line) {
    GlobalParams g = GlobalParams::sized(p, b);
    g.sigma2 = j.at("sigma2").get<double>();
    g.gamma0 = read_vector(j, "gamma0", g.gamma0.size(), line);
    g.tau2_0 = j.at("tau2_0").get<double>();
    g.sigma2_gamma0 = j.at("sigma2_gamma0").get<double>();
    g.gamma = read_vector(j, "gamma", g.gamma.size(), line);
    g.tau2 = j.at("tau2").get<double>();
    g.sigma2_gamma = j.at("sigma2_gamma").get<double>();
    g.eta = read_vector(j, "eta", g.eta.size(), line);
    g.omega2 = j.at("omega2").get<double>();
    g.sigma2_eta = j.at("sigma2_eta").get<double>();
    g.zeta = read_vector(j, "zeta", g.zeta.size(), line);
    g.sigma2_lambda = j.at("sigma2_lambda").get<double>();
    g.sigma2_zeta = read_vector(j, "sigma2_zeta", g.sigma2_zeta.size(), line);
    const auto& psi = j.at("psi");
    const auto& nu2 = j.at("nu2");
    if (!psi.is_array() || psi.size() != 2 || !nu2.is_array() || nu2.size() != 2)
        throw format_error("posterior line " + std::to_string(line) +
                           ": psi and nu2 must hold one entry per process");
    for (int state : {0, 1}) {
        const Eigen::VectorXd ps = from_std(psi.at(state).get<std::vector<double>>());
        if (ps.size() != g.psi[state].size())
            throw format_error("posterior line " + std::to_string(line) +
                               ": psi has the wrong width for the configured layout");
        g.psi[state] = ps;
        const Eigen::VectorXd nu = from_std(nu2.at(state).get<std::vector<double>>());
        if (nu.size() != g.nu2[state].size())
            throw format_error("posterior line " + std::to_string(line) +
                               ": nu2 has the wrong width for the configured layout");
        g.nu2[state] = nu;
    }
    g.alpha_rho = j.at("alpha_rho").get<std::array<double, 2>>();
    g.beta_rho = j.at("beta_rho").get<std::array<double, 2>>();
    return g;
}

ordered_json parse_line(const std::string& line, std::size_t number) {
    try {
        return ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw format_error("posterior line " + std::to_string(number) + ": " + e.what());
    }
}

} // namespace

void save_posterior(const std::string& path, const RunConfig& cfg,
                    const std::vector<GlobalParams>& draws) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("output", "cannot open " + path + " for writing");
    // The worker count never affects the draws, so it is normalized out of
    // the manifest to keep files identical across thread counts.
    RunConfig stored = cfg;
    stored.threads = 0;
    ordered_json manifest;
    manifest["format_version"] = kPosteriorFormatVersion;
    manifest["kind"] = "posterior";
    manifest["version"] = kCodeVersion;
    manifest["seed"] = cfg.chain.seed;
    manifest["n_draws"] = draws.size();
    manifest["config"] = dump_config(stored);
    out << manifest.dump() << '\n';
    for (const GlobalParams& g : draws) out << draw_to_json(g).dump() << '\n';
    out.flush();
    if (!out) throw data_error("output", "short write to " + path);
}

PosteriorFile load_posterior(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("missing_file", path);
    std::string line;
    if (!std::getline(in, line)) throw format_error("posterior file " + path + " is empty");

    const ordered_json manifest = parse_line(line, 1);
    try {
        if (manifest.at("kind").get<std::string>() != "posterior")
            throw format_error("file " + path + " is not a posterior file");
        const int version = manifest.at("format_version").get<int>();
        if (version != kPosteriorFormatVersion)
            throw format_error("posterior format version " + std::to_string(version) +
                               " is not supported (expected " +
                               std::to_string(kPosteriorFormatVersion) + ")");
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("posterior manifest: ") + e.what());
    }

    PosteriorFile file;
    std::size_t expected = 0;
    try {
        file.config = parse_config(manifest.at("config").get<std::string>());
        expected = manifest.at("n_draws").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("posterior manifest: ") + e.what());
    }

    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        const ordered_json j = parse_line(line, number);
        try {
            file.draws.push_back(
                draw_from_json(j, file.config.model.p, file.config.model.b, number));
        } catch (const nlohmann::json::exception& e) {
            throw format_error("posterior line " + std::to_string(number) + ": " + e.what());
        }
    }
    if (file.draws.size() != expected)
        throw format_error("posterior file " + path + " is truncated: holds " +
                           std::to_string(file.draws.size()) + " of " +
                           std::to_string(expected) + " draws");
    return file;
}

void save_effects(const std::string& path, std::uint64_t seed,
                  const std::vector<EffectsDraw>& draws) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("output", "cannot open " + path + " for writing");
    ordered_json manifest;
    manifest["format_version"] = kPosteriorFormatVersion;
    manifest["kind"] = "effects";
    manifest["version"] = kCodeVersion;
    manifest["seed"] = seed;
    manifest["n_draws"] = draws.size();
    out << manifest.dump() << '\n';
    for (const EffectsDraw& d : draws) {
        ordered_json line;
        for (std::size_t i = 0; i < d.patient_id.size(); ++i) {
            const PatientEffects& eff = d.effects[i];
            ordered_json e;
            e["alpha"] = to_std(eff.alpha);
            ordered_json betas = ordered_json::array();
            for (const auto& beta : eff.beta) betas.push_back(to_std(beta));
            e["beta"] = betas;
            e["lambda"] = eff.lambda;
            e["rho"] = eff.rho;
            line[std::to_string(d.patient_id[i])] = e;
        }
        out << line.dump() << '\n';
    }
    out.flush();
    if (!out) throw data_error("output", "short write to " + path);
}

std::vector<EffectsDraw> load_effects(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("missing_file", path);
    std::string line;
    if (!std::getline(in, line)) throw format_error("effects file " + path + " is empty");
    const ordered_json manifest = parse_line(line, 1);
    std::size_t expected = 0;
    try {
        if (manifest.at("kind").get<std::string>() != "effects")
            throw format_error("file " + path + " is not an effects sidecar");
        const int version = manifest.at("format_version").get<int>();
        if (version != kPosteriorFormatVersion)
            throw format_error("effects format version " + std::to_string(version) +
                               " is not supported");
        expected = manifest.at("n_draws").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("effects manifest: ") + e.what());
    }

    std::vector<EffectsDraw> draws;
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        const ordered_json j = parse_line(line, number);
        EffectsDraw d;
        try {
            for (const auto& [key, e] : j.items()) {
                d.patient_id.push_back(std::stol(key));
                PatientEffects eff;
                eff.alpha = from_std(e.at("alpha").get<std::vector<double>>());
                for (const auto& beta : e.at("beta"))
                    eff.beta.push_back(from_std(beta.get<std::vector<double>>()));
                eff.lambda = e.at("lambda").get<std::vector<double>>();
                eff.rho = e.at("rho").get<std::array<double, 2>>();
                d.effects.push_back(std::move(eff));
            }
        } catch (const nlohmann::json::exception& e) {
            throw format_error("effects line " + std::to_string(number) + ": " + e.what());
        }
        draws.push_back(std::move(d));
    }
    if (draws.size() != expected)
        throw format_error("effects file " + path + " is truncated: holds " +
                           std::to_string(draws.size()) + " of " + std::to_string(expected) +
                           " draws");
    return draws;
}

} // namespace hbjm
