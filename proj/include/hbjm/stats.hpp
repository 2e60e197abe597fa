#pragma once

#include <cstddef>
#include <cstdint>
#include <type_traits>
#include <utility>
#include <vector>

namespace hbjm {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile function. Accurate to close to machine precision
/// (rational initial guess refined by one Halley step). Throws numeric_error
/// for p outside (0, 1).
double normal_quantile(double p);

/// Regularized lower incomplete gamma P(a, x). Stable for shapes up to ~1e6.
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

/// Gamma CDF in the shape-rate convention.
double gamma_cdf(double x, double shape, double rate);

/// Inverse-gamma CDF in the convention with mean b / (a - 1).
double inverse_gamma_cdf(double x, double a, double b);

/// CDF of Student's t with 2 degrees of freedom (closed form).
double student_t2_cdf(double x);

/// Kolmogorov-Smirnov distance between a sample and a continuous reference
/// CDF. The sample need not be sorted.
double ks_statistic(std::vector<double> sample, double (*cdf)(double, const void*),
                    const void* ctx);

template <class F>
double ks_statistic(std::vector<double> sample, F&& cdf) {
    using Fn = std::remove_reference_t<F>;
    struct Thunk {
        static double call(double x, const void* ctx) {
            return (*static_cast<const Fn*>(ctx))(x);
        }
    };
    return ks_statistic(std::move(sample), Thunk::call, &cdf);
}

/// One-sample KS critical value at significance alpha (0.01 or 0.05) for a
/// sample of size n, using the small-sample correction
/// c(alpha) / (sqrt(n) + 0.12 + 0.11 / sqrt(n)).
double ks_critical(double alpha, std::size_t n);

/// Area under the ROC curve via the rank-based Mann-Whitney statistic, with
/// midranks for tied scores. labels[i] != 0 marks a positive. Throws
/// numeric_error when either class is empty.
double mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Percentile bootstrap confidence interval for the AUC, resampling
/// (score, label) pairs. Deterministic given the seed.
std::pair<double, double> bootstrap_auc_ci(const std::vector<double>& scores,
                                           const std::vector<int>& labels,
                                           int n_boot, double level, std::uint64_t seed);

/// Linear-interpolation sample quantile (the common "type 7" definition).
/// The input need not be sorted.
double quantile(std::vector<double> sample, double q);

double mean(const std::vector<double>& sample);
double variance(const std::vector<double>& sample);

} // namespace hbjm
