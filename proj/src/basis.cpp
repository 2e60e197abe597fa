#include "hbjm/basis.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "hbjm/errors.hpp"

namespace hbjm {

namespace {

double bernoulli1(double t) { return t - 0.5; }
double bernoulli2(double t) { return t * t - t + 1.0 / 6.0; }
double bernoulli4(double t) {
    const double t2 = t * t;
    return t2 * t2 - 2.0 * t2 * t + t2 - 1.0 / 30.0;
}

} // namespace

double bss_kernel(double s, double t) {
    return bernoulli1(s) * bernoulli1(t) + bernoulli2(s) * bernoulli2(t) / 4.0 -
           bernoulli4(std::abs(s - t)) / 24.0;
}

Eigen::VectorXd corrected_trapezoid_weights(int n) {
    if (n < 6) throw contract_violation("corrected_trapezoid_weights: need n >= 6");
    const double h = 1.0 / static_cast<double>(n);
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n + 1, h);
    w[0] = 0.5 * h;
    w[n] = 0.5 * h;
    // Gregory corrections of orders 1 and 2: subtract
    // h * sum_j c_j * (backward difference at n + (-1)^j forward difference
    // at 0) with c_1 = 1/12, c_2 = 1/24. Both ends receive the same
    // alternating-binomial increments.
    static const double c[] = {1.0 / 12.0, 1.0 / 24.0};
    for (int j = 1; j <= 2; ++j) {
        const double cj = c[j - 1];
        double binom = 1.0;
        for (int i = 0; i <= j; ++i) {
            if (i > 0) binom = binom * static_cast<double>(j - i + 1) / static_cast<double>(i);
            const double sign_i = (i % 2 == 0) ? 1.0 : -1.0;
            w[n - i] += -h * cj * sign_i * binom;
            w[i] += -h * cj * sign_i * binom;
        }
    }
    return w;
}

Eigensystem build_eigensystem(int p, int grid_size) {
    if (p < 2) throw contract_violation("build_eigensystem: p must be at least 2");
    if (grid_size < 4 * p)
        throw contract_violation("build_eigensystem: grid_size must be at least 4 * p");

    const int m = grid_size + 1;
    const Eigen::VectorXd w = corrected_trapezoid_weights(grid_size);
    const Eigen::VectorXd sw = w.array().sqrt();

    Eigen::MatrixXd gram(m, m);
    for (int i = 0; i < m; ++i) {
        const double ti = static_cast<double>(i) / grid_size;
        for (int j = 0; j <= i; ++j) {
            const double tj = static_cast<double>(j) / grid_size;
            const double v = sw[i] * bss_kernel(ti, tj) * sw[j];
            gram(i, j) = v;
            gram(j, i) = v;
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success)
        throw numeric_error("build_eigensystem: eigen-decomposition failed");

    Eigensystem sys;
    sys.eigenvalues_.resize(p);
    sys.values_.resize(m, p);
    sys.eigenvalues_[0] = 1.0;
    sys.values_.col(0).setOnes();

    // Eigenvalues come back in ascending order; take the top p-1.
    for (int k = 1; k < p; ++k) {
        const int idx = m - k;
        const double lambda = solver.eigenvalues()[idx];
        if (!(lambda > 0.0))
            throw numeric_error("build_eigensystem: non-positive leading eigenvalue");
        sys.eigenvalues_[k] = lambda;
        Eigen::VectorXd phi = solver.eigenvectors().col(idx).array() / sw.array();
        // Fix the sign so the first clearly nonzero grid value is positive.
        const double threshold = 1e-8 * phi.cwiseAbs().maxCoeff();
        for (int i = 0; i < m; ++i) {
            if (std::abs(phi[i]) > threshold) {
                if (phi[i] < 0.0) phi = -phi;
                break;
            }
        }
        sys.values_.col(k) = phi;
    }
    sys.sqrt_eigenvalues_ = sys.eigenvalues_.array().sqrt();
    return sys;
}

double Eigensystem::eval(int k, double t) const {
    if (k < 0 || k >= size()) throw contract_violation("Eigensystem::eval: index out of range");
    const int n = grid_size();
    const double u = std::clamp(t, 0.0, 1.0) * n;
    const int i = std::min(static_cast<int>(u), n - 1);
    const double frac = u - i;
    return values_(i, k) + frac * (values_(i + 1, k) - values_(i, k));
}

Eigen::VectorXd Eigensystem::weighted_row(double t) const {
    const int n = grid_size();
    const double u = std::clamp(t, 0.0, 1.0) * n;
    const int i = std::min(static_cast<int>(u), n - 1);
    const double frac = u - i;
    Eigen::VectorXd row =
        (values_.row(i) + frac * (values_.row(i + 1) - values_.row(i))).transpose();
    return row.cwiseProduct(sqrt_eigenvalues_);
}

double Eigensystem::weighted_value(int k, double t) const {
    return sqrt_eigenvalues_[k] * eval(k, t);
}

void Eigensystem::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw format_error("cannot open " + path + " for writing");
    out << "k,eigenvalue,t,value\n";
    char buf[32];
    auto fmt = [&buf](double x) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), x);
        return std::string(buf, res.ptr);
    };
    const int n = grid_size();
    for (int k = 0; k < size(); ++k) {
        for (int i = 0; i <= n; ++i) {
            out << k << ',' << fmt(eigenvalues_[k]) << ','
                << fmt(static_cast<double>(i) / n) << ',' << fmt(values_(i, k)) << '\n';
        }
    }
}

double scale_covariate(double x, double lo, double hi) {
    if (!(hi > lo)) throw contract_violation("scale_covariate: hi must exceed lo");
    return (std::clamp(x, lo, hi) - lo) / (hi - lo);
}

Eigen::VectorXd categorical_expansion(int level, int n_levels) {
    if (n_levels < 2) throw contract_violation("categorical_expansion: need at least 2 levels");
    if (level < 0 || level >= n_levels)
        throw contract_violation("categorical_expansion: level out of range");
    Eigen::VectorXd enc =
        Eigen::VectorXd::Constant(n_levels, -1.0 / static_cast<double>(n_levels - 1));
    enc[level] = 1.0;
    return enc;
}

} // namespace hbjm
