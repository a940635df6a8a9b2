#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spde/lattice.hpp"

namespace spde {

/// Largest lattice for which Laplacian::dense() materializes the matrix.
inline constexpr std::size_t kMaxDenseLattice = 4096;

/**
 * n^2 D_n^{(d)}: the scaled second-difference operator on the interior
 * lattice. Dirichlet rows see zero outside the lattice; Neumann end rows
 * use a single neighbour (D(1,1) = D(n,n) = -1) so every row sums to zero.
 */
class Laplacian {
public:
    explicit Laplacian(GridSpec grid);

    const GridSpec& grid() const { return grid_; }
    void apply(std::span<const double> x, std::span<double> out) const;
    std::vector<double> apply(std::span<const double> x) const;
    /// Explicit matrix; throws std::length_error past kMaxDenseLattice.
    Eigen::MatrixXd dense() const;

private:
    GridSpec grid_;
};

/**
 * Closed-form spectrum of n^2 D_n^{(d)}.
 *
 * Per axis the eigenvalues are -4 n^2 sin^2(j pi / 2n) with j = 1..n-1
 * (Dirichlet) or j = 0..n-1 (Neumann). Column q of axis_vectors is the
 * normalized eigenvector of mode modes[q] sampled on the lattice:
 * sqrt(2/n) sin(j pi k/n) or n^{-1/2} phi_j((2k-1)/2n). Multi-index
 * eigenvalues are sums of the per-axis ones.
 */
struct SpectralData {
    GridSpec grid;
    std::vector<int> modes;
    std::vector<double> axis_eigenvalues;
    /// sin^2(j pi/2n) (j pi/2n)^{-2}; 1 for the Neumann constant mode.
    std::vector<double> c_factors;
    Eigen::MatrixXd axis_vectors;

    /// Eigenvalue of the multi-index with 0-based per-axis mode positions.
    double eigenvalue(std::span<const int> positions) const;
    /// All eigenvalues in flattened multi-index order.
    std::vector<double> eigenvalues() const;
    /// Continuum eigenfunction of mode j: sqrt2 sin(j pi x), or 1 / sqrt2 cos(j pi x).
    double phi(int j, double x) const;
};

SpectralData spectral_data(const GridSpec& grid);

/// Applies the p x p matrix `matrix` along one axis of a p^d tensor stored
/// axis-0-fastest.
void apply_along_axis(const Eigen::MatrixXd& matrix, int axis, int d, std::span<double> data);

/**
 * One time step of the deterministic part of the schemes with tau = T/m:
 * implicit solves (Id - tau n^2 D) x = rhs, explicit applies (Id + tau n^2 D).
 *
 * d = 1 uses non-pivoting tridiagonal elimination (the system is strictly
 * diagonally dominant); d >= 2 diagonalizes with the per-axis eigenvector
 * tables and divides by 1 - tau lambda_k.
 */
class StepOperator {
public:
    explicit StepOperator(GridSpec grid);

    const GridSpec& grid() const { return grid_; }
    const Laplacian& laplacian() const { return laplacian_; }

    void implicit_solve(std::span<const double> rhs, std::span<double> out) const;
    void explicit_apply(std::span<const double> x, std::span<double> out) const;

private:
    GridSpec grid_;
    Laplacian laplacian_;
    double tau_;
    // d = 1 elimination: modified super-diagonal and reciprocal pivots
    std::vector<double> upper_;
    std::vector<double> inv_pivot_;
    double off_diagonal_ = 0.0;
    // d >= 2
    Eigen::MatrixXd vectors_;
    Eigen::MatrixXd vectors_t_;
    std::vector<double> inv_symbol_;
};

LatticeField implicit_step(const LatticeField& rhs, const GridSpec& grid);
LatticeField explicit_step(const LatticeField& field, const GridSpec& grid);

}  // namespace spde
