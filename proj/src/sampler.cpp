#include "hbjm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include "hbjm/errors.hpp"

namespace hbjm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sq(double x) { return x * x; }

/// Entries of a hazard design row that vary across intervals: intercept,
/// hemoglobin and study time, plus inpatient time for the discharge process.
int varying_entries(int state) { return state == 0 ? 3 : 4; }

/// Linear predictor of one risk slice, frailty excluded. The intercept and
/// every baseline or history covariate live in the cached constant part.
double slice_lp(const RiskSlice& s, const GlobalParams& g, const std::array<double, 2>& cdot) {
    const Eigen::VectorXd& psi = g.psi[s.process];
    double lp = cdot[s.process] + psi[1] * s.hb_feat + psi[2] * s.study_feat;
    if (s.process == 1) lp += psi[3] * s.inpatient_feat;
    return lp;
}

double gamma_logpdf(double x, double shape, double rate) {
    if (!(x > 0.0)) return kNegInf;
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

/// Log ratio of everything downstream of a trajectory proposal: response
/// terms, event terms, and the disturbance and decay-rate priors whose means
/// move with the trajectory. scratch.t_new must hold the proposed values on
/// anchors [from, n); fills scratch.hb_new and scratch.d_expo for apply().
double trajectory_log_ratio(PatientState& ps, const GlobalParams& g, const Eigensystem& eig,
                            int from) {
    auto& sc = ps.scratch;
    sc.d_expo = {0.0, 0.0};
    double lr = 0.0;

    const double half_prec = 0.5 / g.sigma2;
    const auto ob = std::lower_bound(ps.obs_anchor.begin(), ps.obs_anchor.end(), from);
    for (auto it = ob; it != ps.obs_anchor.end(); ++it) {
        const auto o = static_cast<std::size_t>(it - ps.obs_anchor.begin());
        const double ec = ps.obs_value[o] - ps.t_cur[*it];
        const double en = ps.obs_value[o] - sc.t_new[*it];
        lr += (ec * ec - en * en) * half_prec;
    }

    const auto sb = std::lower_bound(ps.risk.begin(), ps.risk.end(), from,
                                     [](const RiskSlice& s, int a) { return s.anchor < a; });
    for (auto it = sb; it != ps.risk.end(); ++it) {
        const RiskSlice& s = *it;
        const double hb_new = scale_hb(sc.t_new[s.anchor]);
        const double lp = slice_lp(s, g, ps.constant_dot);
        const double dlp = g.psi[s.process][1] * (hb_new - s.hb_feat);
        const double expo_delta = s.length * (std::exp(lp + dlp) - std::exp(lp));
        lr += s.count * dlp - ps.effects.rho[s.process] * expo_delta;
        sc.d_expo[s.process] += expo_delta;
        sc.hb_new[static_cast<std::size_t>(it - ps.risk.begin())] = hb_new;
    }

    for (std::size_t j = 0; j < ps.stays.size(); ++j) {
        const auto& st = ps.stays[j];
        if (st.admit_anchor >= from) {
            const double hb_cur = scale_hb(ps.t_cur[st.admit_anchor]);
            const double hb_new = scale_hb(sc.t_new[st.admit_anchor]);
            if (hb_new != hb_cur)
                lr += beta_logprior(ps.effects.beta[j], hb_new, g.eta, g.omega2, eig) -
                      beta_logprior(ps.effects.beta[j], hb_cur, g.eta, g.omega2, eig);
        }
        if (st.discharge_anchor < 0) continue;
        if (st.admit_anchor < from && st.discharge_anchor < from) continue;
        const double ta_cur = ps.t_cur[st.admit_anchor];
        const double ta_new = st.admit_anchor >= from ? sc.t_new[st.admit_anchor] : ta_cur;
        const double td_cur = ps.t_cur[st.discharge_anchor];
        const double td_new = st.discharge_anchor >= from ? sc.t_new[st.discharge_anchor] : td_cur;
        if (ta_new == ta_cur && td_new == td_cur) continue;
        const auto& base = ps.record->baseline;
        lr += lambda_logprior(ps.effects.lambda[j], recovery_design(base, ta_new, td_new), g.zeta,
                              g.sigma2_lambda) -
              lambda_logprior(ps.effects.lambda[j], recovery_design(base, ta_cur, td_cur), g.zeta,
                              g.sigma2_lambda);
    }
    return lr;
}

/// Commits an accepted trajectory proposal: copies t_new and the hemoglobin
/// features over [from, n) and advances the exposure accumulators.
void apply_trajectory(PatientState& ps, int from) {
    auto& sc = ps.scratch;
    const auto n = static_cast<int>(ps.anchor_time.size());
    ps.t_cur.segment(from, n - from) = sc.t_new.segment(from, n - from);
    const auto sb = std::lower_bound(ps.risk.begin(), ps.risk.end(), from,
                                     [](const RiskSlice& s, int a) { return s.anchor < a; });
    for (auto it = sb; it != ps.risk.end(); ++it)
        it->hb_feat = sc.hb_new[static_cast<std::size_t>(it - ps.risk.begin())];
    ps.exposure[0] += sc.d_expo[0];
    ps.exposure[1] += sc.d_expo[1];
}

void check_log_ratio(double lr, const char* block, PatientState& ps) {
    if (std::isnan(lr)) throw numeric_error(std::string(block) + ": non-finite log ratio");
    if (lr == kNegInf) ++ps.clamped;
}

void update_alpha(PatientState& ps, const GlobalParams& g, const Eigensystem& eig, int k,
                  Rng& rng) {
    auto& sc = ps.scratch;
    const double delta = ps.step_alpha[k] * rng.normal();
    sc.t_new = ps.t_cur + delta * ps.trend_rows.row(k).transpose();
    double lr = trajectory_log_ratio(ps, g, eig, 0);
    const double cur = ps.effects.alpha[k];
    double mean, var;
    if (k == 0) {
        mean = ps.z0.dot(g.gamma0);
        var = g.tau2_0;
    } else {
        mean = std::sqrt(eig.eigenvalue(k)) * g.gamma[k - 1];
        var = g.tau2;
    }
    lr += (sq(cur - mean) - sq(cur + delta - mean)) / (2.0 * var);
    ++ps.att_alpha[k];
    check_log_ratio(lr, "trend coefficient update", ps);
    if (mh_accept(lr, rng)) {
        ps.effects.alpha[k] = cur + delta;
        apply_trajectory(ps, 0);
        ++ps.acc_alpha[k];
    }
}

void update_beta(PatientState& ps, const GlobalParams& g, const Eigensystem& eig, std::size_t j,
                 int k, Rng& rng) {
    auto& sc = ps.scratch;
    auto& st = ps.stays[j];
    const auto n = static_cast<int>(ps.anchor_time.size());
    const double delta = ps.step_beta[k] * rng.normal();
    const int from = st.lo;
    sc.t_new.segment(from, n - from) = ps.t_cur.segment(from, n - from);
    for (int a = st.lo; a < st.hi; ++a) sc.t_new[a] += delta * st.rows(k, a - st.lo);
    for (int a = st.hi; a < n; ++a) sc.t_new[a] += delta * st.discharge_row[k] * st.decay[a - st.hi];
    double lr = trajectory_log_ratio(ps, g, eig, from);
    const double hb_admit = scale_hb(ps.t_cur[st.admit_anchor]);
    const double mean = g.eta[2 * k] +
                        g.eta[2 * k + 1] * std::sqrt(eig.eigenvalue(k + 1)) * hb_admit;
    const double cur = ps.effects.beta[j][k];
    lr += (sq(cur - mean) - sq(cur + delta - mean)) / (2.0 * g.omega2);
    ++ps.att_beta[k];
    check_log_ratio(lr, "disturbance coefficient update", ps);
    if (mh_accept(lr, rng)) {
        ps.effects.beta[j][k] = cur + delta;
        st.level += delta * st.discharge_row[k];
        apply_trajectory(ps, from);
        ++ps.acc_beta[k];
    }
}

void update_lambda(PatientState& ps, const GlobalParams& g, const Eigensystem& eig, std::size_t j,
                   Rng& rng) {
    auto& sc = ps.scratch;
    auto& st = ps.stays[j];
    const auto n = static_cast<int>(ps.anchor_time.size());
    const double discharge = ps.record->hospitalizations[j].discharge;
    const double cur = ps.effects.lambda[j];
    const double log_cur = std::log(cur);
    const double log_new = log_cur + ps.step_lambda * rng.normal();
    const double prop = std::exp(log_new);
    ++ps.att_lambda;
    if (!std::isfinite(prop) || prop <= 0.0) {
        // Overflow or underflow of the proposed rate; reject while keeping
        // the stream aligned with the accept path.
        ++ps.clamped;
        mh_accept(kNegInf, rng);
        return;
    }
    const int from = st.hi;
    for (int a = from; a < n; ++a) {
        const double dn = std::exp(-prop * (ps.anchor_time[a] - discharge));
        sc.decay_new[a - from] = dn;
        sc.t_new[a] = ps.t_cur[a] + st.level * (dn - st.decay[a - from]);
    }
    double lr = trajectory_log_ratio(ps, g, eig, from);
    const Eigen::VectorXd q = recovery_design(ps.record->baseline, ps.t_cur[st.admit_anchor],
                                              ps.t_cur[st.discharge_anchor]);
    // Proposals walk on the log scale, hence the Jacobian term.
    lr += lambda_logprior(prop, q, g.zeta, g.sigma2_lambda) -
          lambda_logprior(cur, q, g.zeta, g.sigma2_lambda) + (log_new - log_cur);
    check_log_ratio(lr, "decay rate update", ps);
    if (mh_accept(lr, rng)) {
        ps.effects.lambda[j] = prop;
        for (int a = from; a < n; ++a) st.decay[a - from] = sc.decay_new[a - from];
        apply_trajectory(ps, from);
        ++ps.acc_lambda;
    }
}

} // namespace

Eigen::VectorXd draw_gaussian_conditional(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xy,
                                          const Eigen::VectorXd& prior_prec, double noise_var,
                                          Rng& rng) {
    const auto d = xy.size();
    if (gram.rows() != d || gram.cols() != d || prior_prec.size() != d)
        throw contract_violation("draw_gaussian_conditional: dimension mismatch");
    if (!(noise_var > 0.0))
        throw contract_violation("draw_gaussian_conditional: noise_var must be positive");
    if (!(prior_prec.minCoeff() > 0.0))
        throw contract_violation("draw_gaussian_conditional: prior precisions must be positive");
    Eigen::MatrixXd prec = gram / noise_var;
    prec.diagonal() += prior_prec;
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
        throw numeric_error("draw_gaussian_conditional: precision is not positive definite");
    const Eigen::VectorXd mean = llt.solve(xy / noise_var);
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
    // mean + U^-1 z has covariance (U^T U)^-1, the inverse of prec.
    return mean + llt.matrixU().solve(z);
}

double draw_variance_conjugate(double a, double b, double n_terms, double sum_sq, Rng& rng) {
    if (!(a > 0.0) || !(b > 0.0))
        throw contract_violation("draw_variance_conjugate: prior shape and scale must be positive");
    if (n_terms < 0.0 || sum_sq < 0.0)
        throw contract_violation("draw_variance_conjugate: negative sufficient statistic");
    return rng.inverse_gamma(a + 0.5 * n_terms, b + 0.5 * sum_sq);
}

double draw_frailty_conjugate(double shape, double rate, double events, double exposure,
                              Rng& rng) {
    if (!(shape > 0.0) || !(rate > 0.0))
        throw contract_violation("draw_frailty_conjugate: prior shape and rate must be positive");
    if (events < 0.0 || exposure < 0.0)
        throw contract_violation("draw_frailty_conjugate: negative sufficient statistic");
    return rng.gamma(shape + events, rate + exposure);
}

bool mh_accept(double log_ratio, Rng& rng) {
    const double u = rng.uniform();
    return std::log(u) < log_ratio;
}

double adapt_scale(double scale, double observed_rate, double target, int batch) {
    if (!(scale > 0.0)) throw contract_violation("adapt_scale: scale must be positive");
    if (batch < 0) throw contract_violation("adapt_scale: batch must be nonnegative");
    const double gain = 1.0 / std::sqrt(batch + 1.0);
    const double next = scale * std::exp(gain * (observed_rate - target));
    return std::clamp(next, 1e-8, 1e8);
}

void PatientState::refresh(const GlobalParams& g) {
    const auto n = static_cast<int>(anchor_time.size());
    t_cur.noalias() = trend_rows.transpose() * effects.alpha;
    for (std::size_t j = 0; j < stays.size(); ++j) {
        auto& st = stays[j];
        if (st.hi > st.lo)
            t_cur.segment(st.lo, st.hi - st.lo).noalias() += st.rows.transpose() * effects.beta[j];
        st.level = st.discharge_row.dot(effects.beta[j]);
        const double discharge = record->hospitalizations[j].discharge;
        for (int a = st.hi; a < n; ++a) {
            const double dc = std::exp(-effects.lambda[j] * (anchor_time[a] - discharge));
            st.decay[a - st.hi] = dc;
            t_cur[a] += st.level * dc;
        }
    }
    for (int state : {0, 1}) {
        const Eigen::VectorXd& psi = g.psi[state];
        const int head = varying_entries(state);
        constant_dot[state] = psi[0] + static_tail[state].dot(psi.tail(psi.size() - head));
        exposure[state] = 0.0;
    }
    for (auto& s : risk) {
        s.hb_feat = scale_hb(t_cur[s.anchor]);
        exposure[s.process] += s.length * std::exp(slice_lp(s, g, constant_dot));
    }
}

PatientState build_patient_state(const PatientRecord& rec, const Eigensystem& eig,
                                 const ModelConfig& model) {
    PatientState ps;
    ps.record = &rec;
    const int p = eig.size();
    const HospBasisConfig hcfg{model.b, model.m_max};
    const EventGrid grid = index_conditioning(build_event_grid(rec, model.max_interval));

    std::vector<double> times;
    for (const auto& o : rec.observations) times.push_back(o.time);
    for (const auto& iv : grid.intervals)
        if (iv.in_risk_set) times.push_back(iv.start);
    for (const auto& h : rec.hospitalizations) {
        times.push_back(h.admit);
        if (h.discharge <= rec.end_of_followup) times.push_back(h.discharge);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    ps.anchor_time = times;
    const auto n = static_cast<int>(times.size());

    auto anchor_of = [&](double t) {
        const auto it = std::lower_bound(times.begin(), times.end(), t);
        if (it == times.end() || *it != t)
            throw contract_violation("build_patient_state: anchor lookup failed");
        return static_cast<int>(it - times.begin());
    };

    // Observations sorted by time so anchor indices are nondecreasing.
    std::vector<const Observation*> ordered;
    for (const auto& o : rec.observations) ordered.push_back(&o);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Observation* a, const Observation* b) { return a->time < b->time; });
    double mean_obs = 0.0;
    int n_seen = 0;
    for (const auto* o : ordered)
        if (!o->missing) {
            mean_obs += o->value;
            ++n_seen;
        }
    mean_obs = n_seen > 0 ? mean_obs / n_seen : 12.0;
    for (const auto* o : ordered) {
        if (o->missing) ps.missing_obs.push_back(static_cast<int>(ps.obs_value.size()));
        ps.obs_value.push_back(o->missing ? mean_obs : o->value);
        ps.obs_anchor.push_back(anchor_of(o->time));
    }

    ps.trend_rows.resize(p, n);
    for (int a = 0; a < n; ++a) ps.trend_rows.col(a) = eig.weighted_row(study_time_unit(times[a]));

    ps.effects.alpha = Eigen::VectorXd::Zero(p);
    ps.effects.alpha[0] = mean_obs;
    for (const auto& h : rec.hospitalizations) {
        PatientState::StayCache st;
        st.lo = static_cast<int>(std::lower_bound(times.begin(), times.end(), h.admit) -
                                 times.begin());
        st.hi = static_cast<int>(std::upper_bound(times.begin(), times.end(), h.discharge) -
                                 times.begin());
        st.admit_anchor = anchor_of(h.admit);
        st.rows.resize(model.b, st.hi - st.lo);
        for (int a = st.lo; a < st.hi; ++a)
            st.rows.col(a - st.lo) = hosp_effect_row(eig, hcfg, h, 1.0, times[a]);
        if (h.discharge <= rec.end_of_followup) {
            st.discharge_anchor = anchor_of(h.discharge);
            st.discharge_row = hosp_effect_row(eig, hcfg, h, 1.0, h.discharge);
        } else {
            st.discharge_row = Eigen::VectorXd::Zero(model.b);
        }
        st.decay = Eigen::VectorXd::Zero(n - st.hi);
        ps.stays.push_back(std::move(st));
        ps.effects.beta.push_back(Eigen::VectorXd::Zero(model.b));
        ps.effects.lambda.push_back(1.0);
    }

    for (const auto& iv : grid.intervals) {
        if (!iv.in_risk_set) continue;
        RiskSlice s;
        s.start = iv.start;
        s.length = iv.length;
        s.process = iv.state;
        s.count = iv.count;
        s.study_feat = study_time_unit(iv.start);
        if (iv.state == 1)
            s.inpatient_feat = scale_covariate(iv.start - iv.admit_time, bounds::inpatient_lo,
                                               bounds::inpatient_hi);
        s.anchor = anchor_of(iv.start);
        ps.count_sum[s.process] += s.count;
        ps.risk.push_back(s);
    }

    for (int state : {0, 1}) {
        const Eigen::VectorXd row =
            hazard_design_static(rec.baseline, state, kFollowupStart, kFollowupStart);
        const int head = varying_entries(state);
        ps.static_tail[state] = row.tail(row.size() - head);
    }

    ps.z0 = trend_design(rec.baseline);
    ps.t_cur = Eigen::VectorXd::Zero(n);
    ps.step_alpha = Eigen::VectorXd::Constant(p, 0.5);
    ps.step_beta = Eigen::VectorXd::Constant(model.b, 0.5);
    ps.acc_alpha = Eigen::ArrayXi::Zero(p);
    ps.att_alpha = Eigen::ArrayXi::Zero(p);
    ps.acc_beta = Eigen::ArrayXi::Zero(model.b);
    ps.att_beta = Eigen::ArrayXi::Zero(model.b);
    ps.scratch.t_new = Eigen::VectorXd::Zero(n);
    ps.scratch.decay_new = Eigen::VectorXd::Zero(n);
    ps.scratch.hb_new.assign(ps.risk.size(), 0.0);
    return ps;
}

void patient_sweep(PatientState& ps, const GlobalParams& g, const Eigensystem& eig, Rng& rng) {
    ps.refresh(g);
    const double sd = std::sqrt(g.sigma2);
    for (int o : ps.missing_obs)
        ps.obs_value[static_cast<std::size_t>(o)] = ps.t_cur[ps.obs_anchor[o]] + sd * rng.normal();
    const auto p = static_cast<int>(ps.effects.alpha.size());
    for (int k = 0; k < p; ++k) update_alpha(ps, g, eig, k, rng);
    const auto b = static_cast<int>(ps.step_beta.size());
    for (std::size_t j = 0; j < ps.stays.size(); ++j)
        for (int k = 0; k < b; ++k) update_beta(ps, g, eig, j, k, rng);
    for (std::size_t j = 0; j < ps.stays.size(); ++j)
        if (ps.stays[j].discharge_anchor >= 0) update_lambda(ps, g, eig, j, rng);
    for (int state : {0, 1})
        ps.effects.rho[state] =
            draw_frailty_conjugate(g.alpha_rho[state], g.beta_rho[state], ps.count_sum[state],
                                   ps.exposure[state], rng);
}

Sampler::Sampler(const Cohort& cohort, const RunConfig& cfg)
    : cfg_(cfg), eig_(build_eigensystem(cfg.model.p, cfg.model.grid_size)), cohort_(cohort) {
    validate_config(cfg_);
    validate_cohort(cohort_);
    globals_ = GlobalParams::sized(cfg_.model.p, cfg_.model.b);
    const int z = trend_design_size();
    gram0_ = Eigen::MatrixXd::Zero(z, z);
    patients_.reserve(cohort_.patients.size());
    for (const auto& rec : cohort_.patients) {
        patients_.push_back(build_patient_state(rec, eig_, cfg_.model));
        const auto& z0 = patients_.back().z0;
        gram0_.noalias() += z0 * z0.transpose();
    }
    n_threads_ = cfg_.threads > 0
                     ? cfg_.threads
                     : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    for (int state : {0, 1}) {
        const int nb = hazard_layout(state).n_blocks();
        step_psi_[state].assign(static_cast<std::size_t>(nb), 0.1);
        acc_psi_[state].assign(static_cast<std::size_t>(nb), 0);
        att_psi_[state].assign(static_cast<std::size_t>(nb), 0);
    }
    expo_scratch_.assign(patients_.size(), 0.0);
}

void Sampler::patient_pass(int iter) {
    const std::size_t n = patients_.size();
    if (n == 0) return;
    auto work = [&](std::size_t i) {
        Rng rng = Rng::substream(cfg_.chain.seed, kChannelPatient, i,
                                 static_cast<std::uint64_t>(iter));
        patient_sweep(patients_[i], globals_, eig_, rng);
    };
    const auto pool_size = std::min<std::size_t>(static_cast<std::size_t>(n_threads_), n);
    if (pool_size <= 1) {
        for (std::size_t i = 0; i < n; ++i) work(i);
        return;
    }
    std::vector<std::thread> pool;
    std::mutex guard;
    std::exception_ptr first_error;
    for (std::size_t t = 0; t < pool_size; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += pool_size) work(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(guard);
                if (!first_error) first_error = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

void Sampler::update_globals(Rng& rng, bool prior_shot) {
    const auto& pr = cfg_.prior;
    const int p = cfg_.model.p;
    const int b = cfg_.model.b;
    const int z = trend_design_size();
    const auto n = static_cast<double>(patients_.size());

    // Trend-level regression and its variances.
    {
        Eigen::VectorXd xy = Eigen::VectorXd::Zero(z);
        for (const auto& ps : patients_) xy.noalias() += ps.z0 * ps.effects.alpha[0];
        globals_.gamma0 = draw_gaussian_conditional(
            gram0_, xy, Eigen::VectorXd::Constant(z, 1.0 / globals_.sigma2_gamma0),
            globals_.tau2_0, rng);
    }
    for (int k = 1; k < p; ++k) {
        const double pi_k = eig_.eigenvalue(k);
        Eigen::MatrixXd gram(1, 1);
        gram(0, 0) = n * pi_k;
        Eigen::VectorXd xy(1);
        xy[0] = 0.0;
        for (const auto& ps : patients_) xy[0] += std::sqrt(pi_k) * ps.effects.alpha[k];
        const Eigen::VectorXd prec =
            Eigen::VectorXd::Constant(1, 1.0 / (pi_k * globals_.sigma2_gamma));
        globals_.gamma[k - 1] = draw_gaussian_conditional(gram, xy, prec, globals_.tau2, rng)[0];
    }
    {
        double ssq0 = 0.0, ssq = 0.0;
        for (const auto& ps : patients_) {
            ssq0 += sq(ps.effects.alpha[0] - ps.z0.dot(globals_.gamma0));
            for (int k = 1; k < p; ++k)
                ssq += sq(ps.effects.alpha[k] -
                          std::sqrt(eig_.eigenvalue(k)) * globals_.gamma[k - 1]);
        }
        globals_.tau2_0 = draw_variance_conjugate(pr.a_tau0, pr.b_tau0, n, ssq0, rng);
        globals_.tau2 = draw_variance_conjugate(pr.a_tau, pr.b_tau, n * (p - 1), ssq, rng);
        globals_.sigma2_gamma0 = draw_variance_conjugate(pr.a_gamma0, pr.b_gamma0, z,
                                                         globals_.gamma0.squaredNorm(), rng);
        double gnorm = 0.0;
        for (int k = 1; k < p; ++k) gnorm += sq(globals_.gamma[k - 1]) / eig_.eigenvalue(k);
        globals_.sigma2_gamma =
            draw_variance_conjugate(pr.a_sigma_gamma, pr.b_sigma_gamma, p - 1, gnorm, rng);
    }

    // Disturbance-coefficient regression on admission hemoglobin.
    {
        const int d = 2 * b;
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd xy = Eigen::VectorXd::Zero(d);
        double n_beta = 0.0;
        for (const auto& ps : patients_)
            for (std::size_t j = 0; j < ps.stays.size(); ++j) {
                const double hb = scale_hb(ps.t_cur[ps.stays[j].admit_anchor]);
                for (int k = 0; k < b; ++k) {
                    const double x = std::sqrt(eig_.eigenvalue(k + 1)) * hb;
                    const int r = 2 * k;
                    gram(r, r) += 1.0;
                    gram(r, r + 1) += x;
                    gram(r + 1, r) += x;
                    gram(r + 1, r + 1) += x * x;
                    xy[r] += ps.effects.beta[j][k];
                    xy[r + 1] += x * ps.effects.beta[j][k];
                }
                n_beta += b;
            }
        globals_.eta = draw_gaussian_conditional(
            gram, xy, Eigen::VectorXd::Constant(d, 1.0 / globals_.sigma2_eta), globals_.omega2,
            rng);
        double ssq = 0.0;
        for (const auto& ps : patients_)
            for (std::size_t j = 0; j < ps.stays.size(); ++j) {
                const double hb = scale_hb(ps.t_cur[ps.stays[j].admit_anchor]);
                for (int k = 0; k < b; ++k) {
                    const double mean =
                        globals_.eta[2 * k] +
                        globals_.eta[2 * k + 1] * std::sqrt(eig_.eigenvalue(k + 1)) * hb;
                    ssq += sq(ps.effects.beta[j][k] - mean);
                }
            }
        globals_.omega2 = draw_variance_conjugate(pr.a_omega, pr.b_omega, n_beta, ssq, rng);
        globals_.sigma2_eta =
            draw_variance_conjugate(pr.a_eta, pr.b_eta, d, globals_.eta.squaredNorm(), rng);
    }

    // Recovery-rate regression; only stays discharged inside follow-up
    // carry an identified decay rate.
    {
        const DesignLayout& lay = recovery_layout();
        const int d = recovery_design_size();
        std::vector<std::pair<Eigen::VectorXd, double>> rows;
        for (const auto& ps : patients_)
            for (std::size_t j = 0; j < ps.stays.size(); ++j) {
                const auto& st = ps.stays[j];
                if (st.discharge_anchor < 0) continue;
                rows.emplace_back(recovery_design(ps.record->baseline, ps.t_cur[st.admit_anchor],
                                                  ps.t_cur[st.discharge_anchor]),
                                  std::log(ps.effects.lambda[j]));
            }
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd xy = Eigen::VectorXd::Zero(d);
        for (const auto& [q, ll] : rows) {
            gram.noalias() += q * q.transpose();
            xy.noalias() += q * ll;
        }
        Eigen::VectorXd prec(d);
        for (int blk = 0; blk < lay.n_blocks(); ++blk)
            prec.segment(lay.block_offsets[blk], lay.block_sizes[blk])
                .setConstant(1.0 / globals_.sigma2_zeta[blk]);
        globals_.zeta = draw_gaussian_conditional(gram, xy, prec, globals_.sigma2_lambda, rng);
        for (int blk = 0; blk < lay.n_blocks(); ++blk)
            globals_.sigma2_zeta[blk] = draw_variance_conjugate(
                pr.a_zeta, pr.b_zeta, lay.block_sizes[blk],
                globals_.zeta.segment(lay.block_offsets[blk], lay.block_sizes[blk]).squaredNorm(),
                rng);
        double ssq = 0.0;
        for (const auto& [q, ll] : rows) ssq += sq(ll - q.dot(globals_.zeta));
        globals_.sigma2_lambda = draw_variance_conjugate(
            pr.a_lambda, pr.b_lambda, static_cast<double>(rows.size()), ssq, rng);
    }

    update_psi(rng, prior_shot);
    for (int state : {0, 1}) {
        const DesignLayout& lay = hazard_layout(state);
        for (int blk = 0; blk < lay.n_blocks(); ++blk)
            globals_.nu2[state][blk] = draw_variance_conjugate(
                pr.a_nu, pr.b_nu, lay.block_sizes[blk],
                globals_.psi[state]
                    .segment(lay.block_offsets[blk], lay.block_sizes[blk])
                    .squaredNorm(),
                rng);
    }

    update_frailty_hyper(rng, prior_shot);

    // Response noise, over observed and imputed values alike.
    {
        double ssq = 0.0, count = 0.0;
        for (const auto& ps : patients_) {
            for (std::size_t o = 0; o < ps.obs_value.size(); ++o)
                ssq += sq(ps.obs_value[o] - ps.t_cur[ps.obs_anchor[o]]);
            count += static_cast<double>(ps.obs_value.size());
        }
        globals_.sigma2 = draw_variance_conjugate(pr.a_sigma, pr.b_sigma, count, ssq, rng);
    }
}

void Sampler::update_psi(Rng& rng, bool prior_shot) {
    for (int state : {0, 1}) {
        const DesignLayout& lay = hazard_layout(state);
        const int head = varying_entries(state);
        for (int blk = 0; blk < lay.n_blocks(); ++blk) {
            const int offset = lay.block_offsets[blk];
            const int size = lay.block_sizes[blk];
            Eigen::VectorXd prop(size);
            auto seg = globals_.psi[state].segment(offset, size);
            double lr;
            if (prior_shot) {
                // Independence proposal from the prior conditional. The
                // prior and proposal densities cancel, so only the event
                // terms remain in the ratio. This keeps the walk from
                // stranding in the heavy tails the block variances allow.
                const double sd = std::sqrt(globals_.nu2[state][blk]);
                for (int i = 0; i < size; ++i) prop[i] = sd * rng.normal() - seg[i];
                lr = 0.0;
            } else {
                for (int i = 0; i < size; ++i)
                    prop[i] = step_psi_[state][static_cast<std::size_t>(blk)] * rng.normal();
                lr = (seg.squaredNorm() - (seg + prop).squaredNorm()) /
                     (2.0 * globals_.nu2[state][blk]);
            }
            const bool varying = offset >= 1 && offset < head;
            for (std::size_t i = 0; i < patients_.size(); ++i) {
                auto& ps = patients_[i];
                if (!varying) {
                    const double di =
                        offset == 0
                            ? prop[0]
                            : prop.dot(ps.static_tail[state].segment(offset - head, size));
                    lr += ps.count_sum[state] * di -
                          ps.effects.rho[state] * ps.exposure[state] * (std::exp(di) - 1.0);
                    expo_scratch_[i] = di;
                } else {
                    double d_expo = 0.0;
                    for (const auto& s : ps.risk) {
                        if (s.process != state) continue;
                        const double feat = offset == 1   ? s.hb_feat
                                            : offset == 2 ? s.study_feat
                                                          : s.inpatient_feat;
                        const double dlp = prop[0] * feat;
                        const double expo_delta =
                            s.length * std::exp(slice_lp(s, globals_, ps.constant_dot)) *
                            (std::exp(dlp) - 1.0);
                        lr += s.count * dlp - ps.effects.rho[state] * expo_delta;
                        d_expo += expo_delta;
                    }
                    expo_scratch_[i] = d_expo;
                }
            }
            // Only walk proposals feed the adaptation tallies.
            if (!prior_shot) ++att_psi_[state][static_cast<std::size_t>(blk)];
            if (std::isnan(lr))
                throw numeric_error("hazard coefficient update: non-finite log ratio");
            if (lr == kNegInf) ++cum_clamped_;
            if (mh_accept(lr, rng)) {
                seg += prop;
                for (std::size_t i = 0; i < patients_.size(); ++i) {
                    auto& ps = patients_[i];
                    if (!varying) {
                        ps.constant_dot[state] += expo_scratch_[i];
                        ps.exposure[state] *= std::exp(expo_scratch_[i]);
                    } else {
                        ps.exposure[state] += expo_scratch_[i];
                    }
                }
                if (!prior_shot) ++acc_psi_[state][static_cast<std::size_t>(blk)];
            }
        }
    }
}

void Sampler::update_frailty_hyper(Rng& rng, bool prior_shot) {
    const auto& pr = cfg_.prior;
    const auto n = static_cast<double>(patients_.size());
    for (int state : {0, 1}) {
        double sum_log = 0.0, sum_rho = 0.0;
        for (const auto& ps : patients_) {
            sum_log += std::log(ps.effects.rho[state]);
            sum_rho += ps.effects.rho[state];
        }
        {
            const double cur = globals_.alpha_rho[state];
            // Prior shots propose straight from the prior, so the ratio
            // keeps the gamma-density sums only.
            const double prop = prior_shot ? rng.gamma(pr.a_alpha_rho, pr.b_alpha_rho)
                                           : cur + step_rho_shape_[state] * rng.normal();
            if (!prior_shot) ++att_rho_shape_[state];
            if (prop > 0.0) {
                double lr = prior_shot ? 0.0
                                       : gamma_logpdf(prop, pr.a_alpha_rho, pr.b_alpha_rho) -
                                             gamma_logpdf(cur, pr.a_alpha_rho, pr.b_alpha_rho);
                const double rate = globals_.beta_rho[state];
                if (n > 0.0)
                    lr += (prop - cur) * sum_log +
                          n * (prop * std::log(rate) - std::lgamma(prop) -
                               cur * std::log(rate) + std::lgamma(cur));
                if (std::isnan(lr))
                    throw numeric_error("frailty shape update: non-finite log ratio");
                if (lr == kNegInf) ++cum_clamped_;
                if (mh_accept(lr, rng)) {
                    globals_.alpha_rho[state] = prop;
                    if (!prior_shot) ++acc_rho_shape_[state];
                }
            }
        }
        {
            const double cur = globals_.beta_rho[state];
            const double prop = prior_shot ? rng.gamma(pr.a_beta_rho, pr.b_beta_rho)
                                           : cur + step_rho_rate_[state] * rng.normal();
            if (!prior_shot) ++att_rho_rate_[state];
            if (prop > 0.0) {
                double lr = prior_shot ? 0.0
                                       : gamma_logpdf(prop, pr.a_beta_rho, pr.b_beta_rho) -
                                             gamma_logpdf(cur, pr.a_beta_rho, pr.b_beta_rho);
                if (n > 0.0)
                    lr += n * globals_.alpha_rho[state] * (std::log(prop) - std::log(cur)) -
                          (prop - cur) * sum_rho;
                if (std::isnan(lr))
                    throw numeric_error("frailty rate update: non-finite log ratio");
                if (lr == kNegInf) ++cum_clamped_;
                if (mh_accept(lr, rng)) {
                    globals_.beta_rho[state] = prop;
                    if (!prior_shot) ++acc_rho_rate_[state];
                }
            }
        }
    }
}

void Sampler::adapt(int batch) {
    const double target = cfg_.chain.target_accept;
    auto tune = [&](double& scale, int& acc, int& att, long long& cum_acc, long long& cum_att) {
        const double rate = att > 0 ? static_cast<double>(acc) / att : target;
        scale = adapt_scale(scale, rate, target, batch);
        cum_acc += acc;
        cum_att += att;
        acc = 0;
        att = 0;
    };
    for (auto& ps : patients_) {
        for (int k = 0; k < ps.step_alpha.size(); ++k)
            tune(ps.step_alpha[k], ps.acc_alpha[k], ps.att_alpha[k], cum_acc_alpha_,
                 cum_att_alpha_);
        for (int k = 0; k < ps.step_beta.size(); ++k)
            tune(ps.step_beta[k], ps.acc_beta[k], ps.att_beta[k], cum_acc_beta_, cum_att_beta_);
        tune(ps.step_lambda, ps.acc_lambda, ps.att_lambda, cum_acc_lambda_, cum_att_lambda_);
        cum_clamped_ += ps.clamped;
        ps.clamped = 0;
    }
    for (int state : {0, 1}) {
        for (std::size_t blk = 0; blk < step_psi_[state].size(); ++blk)
            tune(step_psi_[state][blk], acc_psi_[state][blk], att_psi_[state][blk], cum_acc_psi_,
                 cum_att_psi_);
        tune(step_rho_shape_[state], acc_rho_shape_[state], att_rho_shape_[state], cum_acc_rho_,
             cum_att_rho_);
        tune(step_rho_rate_[state], acc_rho_rate_[state], att_rho_rate_[state], cum_acc_rho_,
             cum_att_rho_);
    }
}

void Sampler::sweep(int iter) {
    if (iter < 0) throw contract_violation("sweep: iteration must be nonnegative");
    patient_pass(iter);
    Rng rng = Rng::substream(cfg_.chain.seed, kChannelGlobal, 0, static_cast<std::uint64_t>(iter));
    // Every third sweep the non-conjugate global updates swap their walk for
    // an independence proposal from the prior conditional.
    update_globals(rng, iter % 3 == 2);
    const int window = cfg_.chain.adapt_window;
    if (iter + 1 <= cfg_.chain.n_burnin && (iter + 1) % window == 0)
        adapt((iter + 1) / window - 1);
}

void Sampler::run(const std::function<void(int)>& keep) {
    for (int iter = 0; iter < cfg_.chain.n_iter; ++iter) {
        sweep(iter);
        if (iter >= cfg_.chain.n_burnin && (iter - cfg_.chain.n_burnin) % cfg_.chain.thin == 0 &&
            keep)
            keep(iter);
    }
}

SamplerDiagnostics Sampler::diagnostics() const {
    long long aa = cum_acc_alpha_, ta = cum_att_alpha_;
    long long ab = cum_acc_beta_, tb = cum_att_beta_;
    long long al = cum_acc_lambda_, tl = cum_att_lambda_;
    long long ap = cum_acc_psi_, tp = cum_att_psi_;
    long long ar = cum_acc_rho_, tr = cum_att_rho_;
    long long clamped = cum_clamped_;
    for (const auto& ps : patients_) {
        aa += ps.acc_alpha.sum();
        ta += ps.att_alpha.sum();
        ab += ps.acc_beta.sum();
        tb += ps.att_beta.sum();
        al += ps.acc_lambda;
        tl += ps.att_lambda;
        clamped += ps.clamped;
    }
    for (int state : {0, 1}) {
        for (std::size_t blk = 0; blk < acc_psi_[state].size(); ++blk) {
            ap += acc_psi_[state][blk];
            tp += att_psi_[state][blk];
        }
        ar += acc_rho_shape_[state] + acc_rho_rate_[state];
        tr += att_rho_shape_[state] + att_rho_rate_[state];
    }
    SamplerDiagnostics d;
    d.clamped = clamped;
    d.accept_alpha = ta > 0 ? static_cast<double>(aa) / ta : 0.0;
    d.accept_beta = tb > 0 ? static_cast<double>(ab) / tb : 0.0;
    d.accept_lambda = tl > 0 ? static_cast<double>(al) / tl : 0.0;
    d.accept_psi = tp > 0 ? static_cast<double>(ap) / tp : 0.0;
    d.accept_rho_hyper = tr > 0 ? static_cast<double>(ar) / tr : 0.0;
    return d;
}

} // namespace hbjm
