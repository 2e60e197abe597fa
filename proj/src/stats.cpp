#include "hbjm/stats.hpp"

#include <algorithm>
#include <cmath>

#include "hbjm/errors.hpp"
#include "hbjm/rng.hpp"

namespace hbjm {

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

namespace {

/// Rational approximation for the normal quantile (relative error < 1.2e-9).
double normal_quantile_guess(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

} // namespace

double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0)) throw numeric_error("normal_quantile: p outside (0,1)");
    double x = normal_quantile_guess(p);
    // One Halley refinement step against the exact CDF.
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(6.283185307179586476925286766559) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

namespace {

constexpr int kGammaMaxIter = 2000000;
constexpr double kGammaEps = 1e-15;

/// Series expansion for P(a, x), effective for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 0; n < kGammaMaxIter; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * kGammaEps) {
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    throw numeric_error("gamma_p: series did not converge");
}

/// Continued fraction for Q(a, x), effective for x >= a + 1.
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kGammaMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kGammaEps) {
            return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    throw numeric_error("gamma_q: continued fraction did not converge");
}

} // namespace

double gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw numeric_error("gamma_p: invalid arguments");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw numeric_error("gamma_q: invalid arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double gamma_cdf(double x, double shape, double rate) {
    if (x <= 0.0) return 0.0;
    return gamma_p(shape, rate * x);
}

double inverse_gamma_cdf(double x, double a, double b) {
    if (x <= 0.0) return 0.0;
    return gamma_q(a, b / x);
}

double student_t2_cdf(double x) {
    return 0.5 + x / (2.0 * std::sqrt(2.0 + x * x));
}

double ks_statistic(std::vector<double> sample, double (*cdf)(double, const void*),
                    const void* ctx) {
    if (sample.empty()) throw contract_violation("ks_statistic: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i], ctx);
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - f);
        d = std::max(d, f - static_cast<double>(i) / n);
    }
    return d;
}

double ks_critical(double alpha, std::size_t n) {
    double c;
    if (alpha == 0.01) {
        c = 1.62762;
    } else if (alpha == 0.05) {
        c = 1.35810;
    } else if (alpha == 0.10) {
        c = 1.22385;
    } else {
        throw contract_violation("ks_critical: unsupported alpha");
    }
    const double rn = std::sqrt(static_cast<double>(n));
    return c / (rn + 0.12 + 0.11 / rn);
}

double mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw contract_violation("mann_whitney_auc: size mismatch");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        // Midrank shared by the tie group [i, j).
        const double midrank = 0.5 * (static_cast<double>(i) + 1.0 + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) {
                rank_sum_pos += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw numeric_error("mann_whitney_auc: need both classes present");
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

std::pair<double, double> bootstrap_auc_ci(const std::vector<double>& scores,
                                           const std::vector<int>& labels,
                                           int n_boot, double level, std::uint64_t seed) {
    if (n_boot <= 0) throw contract_violation("bootstrap_auc_ci: n_boot must be positive");
    Rng rng = Rng::substream(seed, 0x41554331u);
    const std::size_t n = scores.size();
    std::vector<double> aucs;
    aucs.reserve(static_cast<std::size_t>(n_boot));
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int b = 0; b < n_boot; ++b) {
        bool both = false;
        // Degenerate resamples (single class) are redrawn.
        do {
            int seen_pos = 0;
            int seen_neg = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t idx = static_cast<std::size_t>(rng.below(n));
                s[k] = scores[idx];
                l[k] = labels[idx];
                (l[k] != 0 ? seen_pos : seen_neg) = 1;
            }
            both = seen_pos != 0 && seen_neg != 0;
        } while (!both);
        aucs.push_back(mann_whitney_auc(s, l));
    }
    const double tail = 0.5 * (1.0 - level);
    return {quantile(aucs, tail), quantile(aucs, 1.0 - tail)};
}

double quantile(std::vector<double> sample, double q) {
    if (sample.empty()) throw contract_violation("quantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw contract_violation("quantile: q outside [0,1]");
    std::sort(sample.begin(), sample.end());
    const double h = q * (static_cast<double>(sample.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sample.size()) return sample.back();
    const double frac = h - static_cast<double>(lo);
    return sample[lo] + frac * (sample[lo + 1] - sample[lo]);
}

double mean(const std::vector<double>& sample) {
    if (sample.empty()) throw contract_violation("mean: empty sample");
    double s = 0.0;
    for (double x : sample) s += x;
    return s / static_cast<double>(sample.size());
}

double variance(const std::vector<double>& sample) {
    if (sample.size() < 2) throw contract_violation("variance: need at least 2 values");
    const double m = mean(sample);
    double s = 0.0;
    for (double x : sample) s += (x - m) * (x - m);
    return s / (static_cast<double>(sample.size()) - 1.0);
}

} // namespace hbjm
