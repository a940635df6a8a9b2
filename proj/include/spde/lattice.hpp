#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace spde {

enum class Boundary { Dirichlet, Neumann };

std::string to_string(Boundary bc);
Boundary parse_boundary(const std::string& text);

/**
 * Space-time mesh on [0,T] x [0,1]^d.
 *
 * Dirichlet lattices hold the (n-1)^d interior nodes k/n, k = 1..n-1 per
 * axis. Neumann lattices hold the n^d cell centres (2k-1)/(2n), k = 1..n.
 * Axis indices are 1-based throughout the public API; axis 1 varies
 * fastest in the flattened order.
 */
struct GridSpec {
    int d = 1;
    int n = 2;
    int m = 1;
    double T = 1.0;
    Boundary bc = Boundary::Dirichlet;

    /// Throws std::invalid_argument on d < 1, n < 2, m < 1 or T <= 0.
    void validate() const;

    int points_per_axis() const { return bc == Boundary::Dirichlet ? n - 1 : n; }
    std::size_t lattice_size() const;
    double time_step() const { return T / m; }
    double time_at(int level) const { return level * T / m; }
    /// Coordinate of the 1-based axis index k.
    double coordinate(int k) const;
    /// Coordinates of the lattice point with 0-based flat offset.
    std::vector<double> point(std::size_t offset) const;

    bool operator==(const GridSpec&) const = default;
};

/// (k_d-1)(p)^{d-1} + ... + (k_2-1) p + k_1 with p = points_per_axis().
/// Indices and result are 1-based.
std::size_t flatten_index(std::span<const int> k, const GridSpec& grid);
std::vector<int> unflatten_index(std::size_t flat, const GridSpec& grid);

/// floor(n y) / n, with y = 1 mapped to the start of the last cell.
double kappa(double y, int n);
std::vector<double> kappa(std::span<const double> y, int n);

/// Values on the interior lattice at one time level, flattened order.
struct LatticeField {
    GridSpec grid;
    int level = 0;
    std::vector<double> values;

    LatticeField() = default;
    LatticeField(GridSpec g, int lvl, std::vector<double> v);
    /// Zero field of the right size.
    explicit LatticeField(GridSpec g, int lvl = 0);

    /// Multilinear interpolation at x in [0,1]^d.
    double at(std::span<const double> x) const;
    double sup_norm() const;
};

/**
 * Multilinear interpolation of lattice values to a point of [0,1]^d.
 *
 * Dirichlet values are extended by zero on the boundary; Neumann values are
 * extended with zero slope past the outermost cell centres.
 */
double interpolate(const GridSpec& grid, std::span<const double> values, std::span<const double> x);
double interpolate(const LatticeField& field, std::span<const double> x);

}  // namespace spde
