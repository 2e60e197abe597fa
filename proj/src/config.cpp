#include "hbjm/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "hbjm/cohort.hpp"
#include "hbjm/errors.hpp"

namespace hbjm {

namespace {

struct Field {
    std::string key;
    enum Kind { Int, U64, Double, Bool } kind;
    std::function<void*(RunConfig&)> ptr;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> t;
        auto add = [&](const char* key, Field::Kind k, std::function<void*(RunConfig&)> p) {
            t.push_back({key, k, std::move(p)});
        };
        auto d = Field::Double;
        auto i = Field::Int;
        add("run.threads", i, [](RunConfig& c) -> void* { return &c.threads; });
        add("model.p", i, [](RunConfig& c) -> void* { return &c.model.p; });
        add("model.b", i, [](RunConfig& c) -> void* { return &c.model.b; });
        add("model.m_max", d, [](RunConfig& c) -> void* { return &c.model.m_max; });
        add("model.grid_size", i, [](RunConfig& c) -> void* { return &c.model.grid_size; });
        add("model.max_interval", d,
            [](RunConfig& c) -> void* { return &c.model.max_interval; });
        add("prior.a_sigma", d, [](RunConfig& c) -> void* { return &c.prior.a_sigma; });
        add("prior.b_sigma", d, [](RunConfig& c) -> void* { return &c.prior.b_sigma; });
        add("prior.a_tau0", d, [](RunConfig& c) -> void* { return &c.prior.a_tau0; });
        add("prior.b_tau0", d, [](RunConfig& c) -> void* { return &c.prior.b_tau0; });
        add("prior.a_gamma0", d, [](RunConfig& c) -> void* { return &c.prior.a_gamma0; });
        add("prior.b_gamma0", d, [](RunConfig& c) -> void* { return &c.prior.b_gamma0; });
        add("prior.a_tau", d, [](RunConfig& c) -> void* { return &c.prior.a_tau; });
        add("prior.b_tau", d, [](RunConfig& c) -> void* { return &c.prior.b_tau; });
        add("prior.a_sigma_gamma", d,
            [](RunConfig& c) -> void* { return &c.prior.a_sigma_gamma; });
        add("prior.b_sigma_gamma", d,
            [](RunConfig& c) -> void* { return &c.prior.b_sigma_gamma; });
        add("prior.a_omega", d, [](RunConfig& c) -> void* { return &c.prior.a_omega; });
        add("prior.b_omega", d, [](RunConfig& c) -> void* { return &c.prior.b_omega; });
        add("prior.a_eta", d, [](RunConfig& c) -> void* { return &c.prior.a_eta; });
        add("prior.b_eta", d, [](RunConfig& c) -> void* { return &c.prior.b_eta; });
        add("prior.a_lambda", d, [](RunConfig& c) -> void* { return &c.prior.a_lambda; });
        add("prior.b_lambda", d, [](RunConfig& c) -> void* { return &c.prior.b_lambda; });
        add("prior.a_zeta", d, [](RunConfig& c) -> void* { return &c.prior.a_zeta; });
        add("prior.b_zeta", d, [](RunConfig& c) -> void* { return &c.prior.b_zeta; });
        add("prior.a_nu", d, [](RunConfig& c) -> void* { return &c.prior.a_nu; });
        add("prior.b_nu", d, [](RunConfig& c) -> void* { return &c.prior.b_nu; });
        add("prior.a_alpha_rho", d,
            [](RunConfig& c) -> void* { return &c.prior.a_alpha_rho; });
        add("prior.b_alpha_rho", d,
            [](RunConfig& c) -> void* { return &c.prior.b_alpha_rho; });
        add("prior.a_beta_rho", d, [](RunConfig& c) -> void* { return &c.prior.a_beta_rho; });
        add("prior.b_beta_rho", d, [](RunConfig& c) -> void* { return &c.prior.b_beta_rho; });
        add("chain.seed", Field::U64, [](RunConfig& c) -> void* { return &c.chain.seed; });
        add("chain.n_iter", i, [](RunConfig& c) -> void* { return &c.chain.n_iter; });
        add("chain.n_burnin", i, [](RunConfig& c) -> void* { return &c.chain.n_burnin; });
        add("chain.thin", i, [](RunConfig& c) -> void* { return &c.chain.thin; });
        add("chain.target_accept", d,
            [](RunConfig& c) -> void* { return &c.chain.target_accept; });
        add("chain.adapt_window", i,
            [](RunConfig& c) -> void* { return &c.chain.adapt_window; });
        add("chain.save_effects", Field::Bool,
            [](RunConfig& c) -> void* { return &c.chain.save_effects; });
        add("predict.t_star", d, [](RunConfig& c) -> void* { return &c.predict.t_star; });
        add("predict.horizon", d, [](RunConfig& c) -> void* { return &c.predict.horizon; });
        add("predict.delta", d, [](RunConfig& c) -> void* { return &c.predict.delta; });
        add("predict.draws", i, [](RunConfig& c) -> void* { return &c.predict.draws; });
        add("predict.inner_sweeps", i,
            [](RunConfig& c) -> void* { return &c.predict.inner_sweeps; });
        add("validate.folds", i, [](RunConfig& c) -> void* { return &c.validate.folds; });
        add("simulate.n_patients", i,
            [](RunConfig& c) -> void* { return &c.simulate.n_patients; });
        add("simulate.obs_prob_hospital", d,
            [](RunConfig& c) -> void* { return &c.simulate.obs_prob_hospital; });
        add("simulate.obs_rate_home", d,
            [](RunConfig& c) -> void* { return &c.simulate.obs_rate_home; });
        add("simulate.censor_prob", d,
            [](RunConfig& c) -> void* { return &c.simulate.censor_prob; });
        return t;
    }();
    return table;
}

std::string format_value(const Field& f, RunConfig& cfg) {
    char buf[64];
    std::to_chars_result r{buf, std::errc()};
    void* p = f.ptr(cfg);
    switch (f.kind) {
        case Field::Int: r = std::to_chars(buf, buf + sizeof buf, *static_cast<int*>(p)); break;
        case Field::U64:
            r = std::to_chars(buf, buf + sizeof buf, *static_cast<std::uint64_t*>(p));
            break;
        case Field::Double: {
            const double v = *static_cast<double*>(p);
            // Integral values print without an exponent so the dumped prior
            // table reads like the published one.
            if (v == std::floor(v) && std::abs(v) < 9.007199254740992e15)
                r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 0);
            else
                r = std::to_chars(buf, buf + sizeof buf, v);
            break;
        }
        case Field::Bool: return *static_cast<bool*>(p) ? "true" : "false";
    }
    return std::string(buf, r.ptr);
}

void assign_value(const Field& f, RunConfig& cfg, const std::string& value,
                  const std::string& where) {
    auto fail = [&] {
        throw config_error(where + ": invalid value '" + value + "' for " + f.key);
    };
    const char* b = value.data();
    const char* e = b + value.size();
    void* p = f.ptr(cfg);
    switch (f.kind) {
        case Field::Int: {
            int v = 0;
            auto r = std::from_chars(b, e, v);
            if (r.ec != std::errc() || r.ptr != e) fail();
            *static_cast<int*>(p) = v;
            break;
        }
        case Field::U64: {
            std::uint64_t v = 0;
            auto r = std::from_chars(b, e, v);
            if (r.ec != std::errc() || r.ptr != e) fail();
            *static_cast<std::uint64_t*>(p) = v;
            break;
        }
        case Field::Double: {
            double v = 0.0;
            auto r = std::from_chars(b, e, v);
            if (r.ec != std::errc() || r.ptr != e) fail();
            *static_cast<double*>(p) = v;
            break;
        }
        case Field::Bool: {
            if (value == "true" || value == "1")
                *static_cast<bool*>(p) = true;
            else if (value == "false" || value == "0")
                *static_cast<bool*>(p) = false;
            else
                fail();
            break;
        }
    }
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string section_of(const std::string& key) { return key.substr(0, key.find('.')); }

} // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = "line " + std::to_string(lineno);
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos) throw config_error(where + ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        const Field* field = nullptr;
        for (const Field& f : fields())
            if (f.key == key) {
                field = &f;
                break;
            }
        if (field == nullptr) throw config_error(where + ": unknown key '" + key + "'");
        if (!seen.insert(key).second)
            throw config_error(where + ": duplicate key '" + key + "'");
        assign_value(*field, cfg, value, where);
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("missing_file", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string dump_config(const RunConfig& cfg) {
    RunConfig copy = cfg;
    std::string out = "# hemoglobin joint model configuration\n";
    std::string section;
    for (const Field& f : fields()) {
        const std::string s = section_of(f.key);
        if (s != section) {
            section = s;
            out += "\n# " + section + "\n";
        }
        out += f.key + " = " + format_value(f, copy) + "\n";
    }
    return out;
}

void apply_env_overrides(RunConfig& cfg) {
    for (const Field& f : fields()) {
        std::string name = "HBJM_";
        for (char c : f.key) name += c == '.' ? '_' : static_cast<char>(std::toupper(c));
        const char* value = std::getenv(name.c_str());
        if (value != nullptr) assign_value(f, cfg, value, "environment " + name);
    }
}

void validate_config(const RunConfig& cfg) {
    auto fail = [](const std::string& msg) { throw config_error(msg); };
    if (cfg.threads < 0) fail("run.threads must be >= 0");
    if (cfg.model.p < 2) fail("model.p must be at least 2");
    if (cfg.model.b < 1) fail("model.b must be at least 1");
    if (cfg.model.b > cfg.model.p - 1)
        fail("model.b must not exceed model.p - 1 (shared eigensystem)");
    if (!(cfg.model.m_max > 0.0)) fail("model.m_max must be positive");
    if (cfg.model.grid_size < 8) fail("model.grid_size must be at least 8");
    if (!(cfg.model.max_interval > 0.0)) fail("model.max_interval must be positive");
    const struct {
        const char* name;
        double a, b;
    } pairs[] = {
        {"sigma", cfg.prior.a_sigma, cfg.prior.b_sigma},
        {"tau0", cfg.prior.a_tau0, cfg.prior.b_tau0},
        {"gamma0", cfg.prior.a_gamma0, cfg.prior.b_gamma0},
        {"tau", cfg.prior.a_tau, cfg.prior.b_tau},
        {"sigma_gamma", cfg.prior.a_sigma_gamma, cfg.prior.b_sigma_gamma},
        {"omega", cfg.prior.a_omega, cfg.prior.b_omega},
        {"eta", cfg.prior.a_eta, cfg.prior.b_eta},
        {"lambda", cfg.prior.a_lambda, cfg.prior.b_lambda},
        {"zeta", cfg.prior.a_zeta, cfg.prior.b_zeta},
        {"nu", cfg.prior.a_nu, cfg.prior.b_nu},
        {"alpha_rho", cfg.prior.a_alpha_rho, cfg.prior.b_alpha_rho},
        {"beta_rho", cfg.prior.a_beta_rho, cfg.prior.b_beta_rho},
    };
    for (const auto& pr : pairs)
        if (!(pr.a > 0.0) || !(pr.b > 0.0))
            fail(std::string("prior constants for ") + pr.name + " must be positive");
    if (cfg.chain.n_iter < 1) fail("chain.n_iter must be positive");
    if (cfg.chain.n_burnin < 0 || cfg.chain.n_burnin >= cfg.chain.n_iter)
        fail("chain.n_burnin must lie in [0, chain.n_iter)");
    if (cfg.chain.thin < 1) fail("chain.thin must be positive");
    if (!(cfg.chain.target_accept > 0.0 && cfg.chain.target_accept < 1.0))
        fail("chain.target_accept must lie in (0, 1)");
    if (cfg.chain.adapt_window < 1) fail("chain.adapt_window must be positive");
    if (!(cfg.predict.t_star >= 0.0 && cfg.predict.t_star <= kStudyLengthDays))
        fail("predict.t_star must lie in [0, 730]");
    if (!(cfg.predict.horizon > cfg.predict.t_star &&
          cfg.predict.horizon <= kStudyLengthDays))
        fail("predict.horizon must lie in (predict.t_star, 730]");
    if (!(cfg.predict.delta > 0.0)) fail("predict.delta must be positive");
    if (cfg.predict.draws < 1) fail("predict.draws must be positive");
    if (cfg.predict.inner_sweeps < 1) fail("predict.inner_sweeps must be positive");
    if (cfg.validate.folds < 2) fail("validate.folds must be at least 2");
    if (cfg.simulate.n_patients < 0) fail("simulate.n_patients must be non-negative");
    if (!(cfg.simulate.obs_prob_hospital > 0.0 && cfg.simulate.obs_prob_hospital <= 1.0))
        fail("simulate.obs_prob_hospital must lie in (0, 1]");
    if (!(cfg.simulate.obs_rate_home > 0.0)) fail("simulate.obs_rate_home must be positive");
    if (!(cfg.simulate.censor_prob >= 0.0 && cfg.simulate.censor_prob < 1.0))
        fail("simulate.censor_prob must lie in [0, 1)");
}

} // namespace hbjm
