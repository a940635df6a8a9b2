#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spde/lattice.hpp"

namespace spde {

/**
 * Heat kernels on [0,1]^d. All kinds are spectral sums over the
 * Dirichlet (sine) or Neumann (cosine) eigenfunctions with weights
 *   exact      e^{-|k|^2 pi^2 t}          phi_k(x) phi_k(y), series truncated
 *   space_disc e^{lambda_k t}             phi^n_k(x) phi_k(node(y))
 *   implicit   (1 - tau lambda_k)^{-L(t)} same eigenfunctions
 *   explicit   (1 + tau lambda_k)^{L(t)}  same eigenfunctions
 * with tau = T/m and L(t) = floor(m t / T). phi^n_k is the piecewise-linear
 * interpolant of phi_k through the lattice, and node(y) is kappa_n(y)
 * (Dirichlet) or the centre of the cell containing y (Neumann).
 */
enum class KernelKind { Exact, SpaceDisc, Implicit, Explicit };

std::string to_string(KernelKind kind);
KernelKind parse_kernel_kind(const std::string& text);

struct KernelSpec {
    KernelKind kind = KernelKind::Exact;
    /// Exact kernels use only d and bc.
    GridSpec grid;
    /// Exact kernel modes per axis; 0 picks the count from a 1e-12 tail bound.
    int max_modes = 0;
};

/// Smallest J with sum_{j > J} e^{-j^2 pi^2 t} below 1e-12.
int exact_series_modes(double t);

/// One-dimensional exact kernel by its eigenfunction series.
double exact_kernel_1d(double t, double x, double y, Boundary bc, int max_modes = 0);

/// phi^n_j(x): piecewise-linear interpolant of phi_j through the lattice.
double discrete_eigenfunction(const GridSpec& grid, int j, double x);
/// Where discrete kernels evaluate phi_j in the y variable.
double kernel_y_node(const GridSpec& grid, double y);

/// Level L(t) = floor(m t / T), robust to rounding at the time levels.
int time_level(const GridSpec& grid, double t);
/// Spectral weight of eigenvalue `lambda` at time t for a discrete kind.
double discrete_weight(KernelKind kind, const GridSpec& grid, double lambda, int level);

/// G(t, x, y). Throws std::invalid_argument for t <= 0 (exact) or t < 0.
double eval_kernel(const KernelSpec& spec, double t, std::span<const double> x, std::span<const double> y);

/// int_Q G(t, x, y) u0(kappa_n(y)) dy for a discrete kind and lattice data u0.
double apply_kernel(const KernelSpec& spec, double t, std::span<const double> x, const LatticeField& u0);

enum class CellAverageMethod { Automatic, Series, Images };

/**
 * Averages of the one-dimensional exact kernel over the cells
 * [c/N, (c+1)/N], c = 0..N-1, in y. Images sums the reflected Gaussians
 * (variance 2t) in closed form with erf; Series integrates the truncated
 * eigenfunction series. Automatic uses images for t < 0.05.
 */
std::vector<double> exact_cell_averages(double t, double x, int cells, Boundary bc,
                                        CellAverageMethod method = CellAverageMethod::Automatic);

enum class NormVariant { Bilinear, Absolute };

/**
 * ||phi||^2_(alpha) for phi piecewise constant on the N^d equal cells of
 * [0,1]^d: sum_ab phi_a gamma_ab phi_b with gamma the Riesz cell integrals.
 * Absolute uses |phi_a| |phi_b|.
 */
class RieszQuadraticForm {
public:
    RieszQuadraticForm(int cells_per_axis, int d, double alpha);

    int cells_per_axis() const { return cells_; }
    int dimension() const { return d_; }
    double operator()(std::span<const double> values, NormVariant variant = NormVariant::Bilinear) const;
    /// gamma_ab for 0-based flat cells a, b.
    double entry(std::size_t a, std::size_t b) const;
    /// Dense matrix of all gamma_ab (at most kMaxCovarianceCells cells).
    Eigen::MatrixXd dense() const;

private:
    int cells_;
    int d_;
    double alpha_;
    std::vector<double> table_;  // gamma by per-axis |offset|, axis 0 fastest
};

double h_alpha_norm_squared(std::span<const double> values, int cells_per_axis, int d, double alpha,
                            NormVariant variant = NormVariant::Bilinear);

struct RateCheckOptions {
    Boundary bc = Boundary::Dirichlet;
    double T = 1.0;
    /// Space check: quadrature cells per lattice cell.
    int fine_cells_per_cell = 8;
    /// Space check: sup over x taken at i / (x_points_per_cell * n).
    int x_points_per_cell = 2;
    /// Space check: log-spaced time nodes per decade, starting at t_min.
    int steps_per_decade = 24;
    double t_min = 1e-10;
    /// Time check: Gauss-Legendre nodes per time subinterval.
    int gauss_points = 8;
    /// Time check: evaluate the implicit kernel one step ahead.
    bool implicit_shift = true;
};

struct RateCheckResult {
    std::string kind;
    double alpha = 0.0;
    std::vector<int> meshes;
    std::vector<double> values;
    /// Raw log-log slope of value against mesh (negative when converging).
    double slope = 0.0;
    double target_slope = 0.0;
    /// Largest relative change between the quadrature and a coarser rerun.
    double achieved_tolerance = 0.0;
};

/// int_0^inf sup_x ||G(t,x,.) - G^n(t,x,.)||^2_(alpha) dt for one n (d = 1).
double space_distance_integral(double alpha, int n, const RateCheckOptions& options = {},
                               double* achieved_tolerance = nullptr);

/**
 * int_0^T sup_x ||G_a(t,x,.) - G_b(t,x,.)||^2_(alpha) dt for two discrete
 * kernels on the same one-dimensional lattice; sup over lattice points and
 * midpoints.
 */
double time_integrated_distance(const KernelSpec& a, const KernelSpec& b, double alpha,
                                const RateCheckOptions& options = {}, double* achieved_tolerance = nullptr);

/// Slope target -(2 - alpha).
RateCheckResult rate_check_space(double alpha, std::span<const int> n_ladder, const RateCheckOptions& options = {});
/// Distance between space_disc and `kind` (implicit or explicit); slope target -(1 - alpha/2).
RateCheckResult rate_check_time(double alpha, int n, std::span<const int> m_ladder, KernelKind kind,
                                const RateCheckOptions& options = {});

/// Columns: kind,alpha,mesh,integral_value,slope,target_slope.
void write_rate_check_csv(std::ostream& out, std::span<const RateCheckResult> results);

}  // namespace spde
