#pragma once

#include <string>

#include <Eigen/Dense>

namespace hbjm {

/// Covariance kernel on [0,1]^2 built from Bernoulli polynomials. It is the
/// sum of a first-order main-effect kernel and a smooth stationary part, so
/// its eigenfunctions resemble half-period trigonometric functions.
double bss_kernel(double s, double t);

/// Quadrature nodes i/n, i = 0..n, with trapezoid weights plus two
/// Gregory end corrections (total weight exactly 1, all weights positive).
/// The corrections lift the eigen-decomposition accuracy from O(h^2) to
/// O(h^4), which the grid self-consistency contract requires.
Eigen::VectorXd corrected_trapezoid_weights(int n);

/// Orthonormal functional basis on [0,1]: a constant leading function with
/// unit weight, followed by kernel eigenfunctions with decreasing
/// eigenvalues. Eigenfunctions are stored as tabulations on a uniform grid
/// and evaluated by linear interpolation.
class Eigensystem {
public:
    /// Number of basis functions, including the constant.
    int size() const { return static_cast<int>(eigenvalues_.size()); }

    int grid_size() const { return static_cast<int>(values_.rows()) - 1; }

    /// Eigenvalue of function k; index 0 is the constant with eigenvalue 1.
    double eigenvalue(int k) const { return eigenvalues_[k]; }

    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

    /// Evaluates eigenfunction k at t (clamped to [0,1]).
    double eval(int k, double t) const;

    /// Row of eigenvalue-weighted basis values sqrt(pi_k) * phi_k(t),
    /// k = 0..size()-1. Element 0 is always 1.
    Eigen::VectorXd weighted_row(double t) const;

    /// Single eigenvalue-weighted basis value sqrt(pi_k) * phi_k(t).
    double weighted_value(int k, double t) const;

    /// Dumps eigenvalues and tabulated eigenfunctions in long CSV format
    /// (columns k, eigenvalue, t, value) for inspection and plotting.
    void write_csv(const std::string& path) const;

    friend Eigensystem build_eigensystem(int p, int grid_size);

private:
    Eigen::VectorXd eigenvalues_; // size p, element 0 == 1
    Eigen::VectorXd sqrt_eigenvalues_;
    Eigen::MatrixXd values_; // (grid_size+1) x p tabulations, column 0 == 1
};

/// Builds the basis with p functions (constant plus p-1 eigenfunctions) from
/// a Nystrom eigen-decomposition on a uniform grid with grid_size
/// subintervals. Requires p >= 2 and grid_size >= 4 * p.
Eigensystem build_eigensystem(int p, int grid_size);

/// Affine map of x from [lo, hi] to [0, 1], clamping values outside the
/// range first.
double scale_covariate(double x, double lo, double hi);

/// Mean-zero contrast encoding of a categorical level: n_levels columns,
/// diagonal entry 1, off-diagonal entries -1/(n_levels - 1). Columns sum to
/// zero across levels, and for two levels the rows are (+1, -1) and (-1, +1).
Eigen::VectorXd categorical_expansion(int level, int n_levels);

} // namespace hbjm
