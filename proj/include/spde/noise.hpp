#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spde/lattice.hpp"

namespace spde {

enum class NoiseKind { SpaceTimeWhite, Riesz };

/**
 * Gaussian noise white in time. Riesz noise has spatial covariance density
 * |z|^{-alpha}, 0 < alpha < min(2, d); space-time white noise only exists
 * as a function-valued driver for d = 1.
 */
struct NoiseModel {
    NoiseKind kind = NoiseKind::Riesz;
    double alpha = 0.5;
    int d = 1;

    static NoiseModel white() { return {NoiseKind::SpaceTimeWhite, 0.0, 1}; }
    static NoiseModel riesz(double alpha, int d = 1) { return {NoiseKind::Riesz, alpha, d}; }

    /// Throws std::invalid_argument naming the violated constraint.
    void validate() const;
    std::string label() const;
};

/// Upper bound on the number of lattice cells for which a dense
/// covariance factor is assembled (two K x K double matrices).
inline constexpr std::size_t kMaxCovarianceCells = 4096;

/// F(r) with F'' = r^{-alpha}, F(0) = 0; the log branch at alpha = 1.
double riesz_antiderivative(double r, double alpha);

/**
 * Integral of |y - z|^{-alpha} over two axis-aligned cubes of side h whose
 * integer lattice positions differ by `offset`.
 *
 * d = 1 uses the closed form F(|a+h|) - 2F(|a|) + F(|a-h|), a = offset * h.
 * d >= 2 reduces to the difference variable u in [-h,h]^d with the
 * triangular weight prod(h - |u_j|) and integrates the singular corner
 * pieces exactly by homogeneity (see riesz_cell_integral_quadrature).
 */
double riesz_cell_integral(std::span<const int> offset, double h, double alpha);

/// Quadrature route of riesz_cell_integral, valid for every d >= 1.
double riesz_cell_integral_quadrature(std::span<const int> offset, double h, double alpha);

/// Exponents alpha_j of the product bound |z|^{-alpha} <= C prod |z_j|^{-alpha_j}.
std::vector<double> riesz_product_exponents(double alpha, int d);
/// The constant C = 2^{-alpha (1 - 2^{1-d})} of that bound.
double riesz_product_constant(double alpha, int d);

/// Covariance of the unscaled measure increments over cells a and b
/// (0-based flat offsets) per unit time.
double cell_covariance(const NoiseModel& model, const GridSpec& grid, std::size_t a, std::size_t b);

/// Realized scaled box increments at one time level, one value per cell.
struct NoiseSlab {
    int level = 0;
    std::vector<double> values;
};

/// Private normal stream for one Monte-Carlo replica.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream);

    double normal() { return normal_(engine_); }
    void fill_normal(std::span<double> out);

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

/**
 * Covariance of the scaled box increments on one grid and a pivoted
 * Cholesky factor of it.
 *
 * C_ab = n^{2d} (m/T) gamma_ab for Riesz noise, (n^d m / T) delta_ab for
 * white noise. The factor is stored in pivot order: C[perm[i], perm[j]] is
 * reproduced by (L L^T)(i, j) with L lower triangular of width rank().
 */
class CovarianceFactor {
public:
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    CovarianceFactor(GridSpec grid, NoiseModel model, Eigen::MatrixXd covariance);

    const GridSpec& grid() const { return grid_; }
    const NoiseModel& model() const { return model_; }
    const Eigen::MatrixXd& covariance() const { return covariance_; }
    std::size_t cells() const { return perm_.size(); }
    std::size_t rank() const { return static_cast<std::size_t>(factor_.cols()); }
    const std::vector<std::size_t>& permutation() const { return perm_; }
    const RowMatrix& factor() const { return factor_; }

    /// L L^T in the original cell order.
    Eigen::MatrixXd reconstruct() const;

    /// values = L xi with xi standard normal.
    NoiseSlab sample(RngStream& rng, int level = 0) const;

    /// Binary dump: header, permutation, row-major factor; little-endian.
    void save(const std::filesystem::path& path) const;
    /// Loads a dump and checks it was produced for (grid, model).
    static CovarianceFactor load(const std::filesystem::path& path, const GridSpec& grid, const NoiseModel& model);

private:
    CovarianceFactor(GridSpec grid, NoiseModel model, Eigen::MatrixXd covariance, std::vector<std::size_t> perm,
                     RowMatrix factor);
    void factorize();

    GridSpec grid_;
    NoiseModel model_;
    Eigen::MatrixXd covariance_;
    std::vector<std::size_t> perm_;
    RowMatrix factor_;
};

/// Thrown when the covariance has a pivot below -tolerance.
class IndefiniteCovariance : public std::runtime_error {
public:
    IndefiniteCovariance(std::size_t cell, double pivot);
    std::size_t cell;
    double pivot;
};

CovarianceFactor build_covariance(const NoiseModel& model, const GridSpec& grid);

NoiseSlab sample_slab(const CovarianceFactor& factor, RngStream& rng);

/// m slabs for levels 0..m-1 of the factor's grid.
std::vector<NoiseSlab> sample_path(const CovarianceFactor& factor, RngStream& rng);

/**
 * Coarsens fine-mesh slabs to a coarser mesh driven by the same noise
 * trajectory: unscaled increments add over merged cells and time steps.
 * Coarse n must divide fine n and coarse m must divide fine m.
 */
std::vector<NoiseSlab> aggregate(std::span<const NoiseSlab> fine, const GridSpec& fine_grid,
                                 const GridSpec& coarse_grid);

/// The linear map of aggregate() on stacked slabs (level-major).
Eigen::MatrixXd aggregation_matrix(const GridSpec& fine_grid, const GridSpec& coarse_grid);

/// Sample covariance of one slab against the analytic C.
struct CovarianceCheck {
    Eigen::MatrixXd analytic;
    Eigen::MatrixXd empirical;
    /// |empirical - analytic| / sqrt((C_aa C_bb + C_ab^2) / samples), entrywise.
    Eigen::MatrixXd deviation;
    double max_deviation = 0.0;
    std::size_t samples = 0;
};

/// Draws `samples` slabs from stream (seed, 0); the empirical covariance
/// uses the known zero mean.
CovarianceCheck check_covariance(const NoiseModel& model, const GridSpec& grid, std::size_t samples,
                                 std::uint64_t seed);

}  // namespace spde
