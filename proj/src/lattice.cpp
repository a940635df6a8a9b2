#include "spde/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spde {

std::string to_string(Boundary bc)
{
    return bc == Boundary::Dirichlet ? "dirichlet" : "neumann";
}

Boundary parse_boundary(const std::string& text)
{
    if (text == "dirichlet") return Boundary::Dirichlet;
    if (text == "neumann") return Boundary::Neumann;
    throw std::invalid_argument("unknown boundary condition '" + text + "' (dirichlet|neumann)");
}

void GridSpec::validate() const
{
    if (d < 1) throw std::invalid_argument("grid: dimension d must be >= 1");
    if (n < 2) throw std::invalid_argument("grid: space subdivisions n must be >= 2");
    if (m < 1) throw std::invalid_argument("grid: time steps m must be >= 1");
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("grid: horizon T must be > 0");
}

std::size_t GridSpec::lattice_size() const
{
    std::size_t size = 1;
    for (int j = 0; j < d; ++j) size *= static_cast<std::size_t>(points_per_axis());
    return size;
}

double GridSpec::coordinate(int k) const
{
    if (bc == Boundary::Dirichlet) return static_cast<double>(k) / n;
    return (2.0 * k - 1.0) / (2.0 * n);
}

std::vector<double> GridSpec::point(std::size_t offset) const
{
    const auto p = static_cast<std::size_t>(points_per_axis());
    std::vector<double> x(d);
    for (int j = 0; j < d; ++j) {
        x[j] = coordinate(static_cast<int>(offset % p) + 1);
        offset /= p;
    }
    return x;
}

std::size_t flatten_index(std::span<const int> k, const GridSpec& grid)
{
    if (static_cast<int>(k.size()) != grid.d)
        throw std::out_of_range("flatten_index: expected " + std::to_string(grid.d) + " axis indices");
    const int p = grid.points_per_axis();
    std::size_t flat = 0;
    for (int j = grid.d - 1; j >= 0; --j) {
        if (k[j] < 1 || k[j] > p)
            throw std::out_of_range("flatten_index: axis " + std::to_string(j + 1) + " index "
                                    + std::to_string(k[j]) + " outside 1.." + std::to_string(p));
        flat = flat * static_cast<std::size_t>(p) + static_cast<std::size_t>(k[j] - 1);
    }
    return flat + 1;
}

std::vector<int> unflatten_index(std::size_t flat, const GridSpec& grid)
{
    if (flat < 1 || flat > grid.lattice_size())
        throw std::out_of_range("unflatten_index: flat index " + std::to_string(flat) + " outside 1.."
                                + std::to_string(grid.lattice_size()));
    const auto p = static_cast<std::size_t>(grid.points_per_axis());
    std::size_t offset = flat - 1;
    std::vector<int> k(grid.d);
    for (int j = 0; j < grid.d; ++j) {
        k[j] = static_cast<int>(offset % p) + 1;
        offset /= p;
    }
    return k;
}

double kappa(double y, int n)
{
    const double cell = std::floor(n * y);
    return std::min(cell, static_cast<double>(n - 1)) / n;
}

std::vector<double> kappa(std::span<const double> y, int n)
{
    std::vector<double> out(y.size());
    std::transform(y.begin(), y.end(), out.begin(), [n](double v) { return kappa(v, n); });
    return out;
}

LatticeField::LatticeField(GridSpec g, int lvl, std::vector<double> v)
    : grid(g), level(lvl), values(std::move(v))
{
    if (values.size() != grid.lattice_size())
        throw std::invalid_argument("LatticeField: " + std::to_string(values.size())
                                    + " values for a lattice of size " + std::to_string(grid.lattice_size()));
    for (double value : values)
        if (!std::isfinite(value)) throw std::invalid_argument("LatticeField: non-finite value");
}

LatticeField::LatticeField(GridSpec g, int lvl) : grid(g), level(lvl), values(g.lattice_size(), 0.0) {}

double LatticeField::at(std::span<const double> x) const { return interpolate(grid, values, x); }

double LatticeField::sup_norm() const
{
    double sup = 0.0;
    for (double v : values) sup = std::max(sup, std::abs(v));
    return sup;
}

namespace {

// Bracketing axis indices (1-based, 0 = outside the lattice) and the
// weight of the upper one.
struct AxisBracket {
    int lower;
    int upper;
    double theta;
};

AxisBracket bracket(const GridSpec& grid, double x)
{
    const int n = grid.n;
    if (grid.bc == Boundary::Dirichlet) {
        // nodes i/n, i = 0..n; nodes 0 and n carry the boundary value 0
        const int i = std::min(static_cast<int>(std::floor(n * x)), n - 1);
        const double theta = n * x - i;
        return {i, i + 1, theta};
    }
    // cell centres (2k-1)/(2n) sit at s = k
    const double s = n * x + 0.5;
    int k = static_cast<int>(std::floor(s));
    if (k < 1) return {1, 1, 0.0};
    if (k >= n) return {n, n, 0.0};
    return {k, k + 1, s - k};
}

}  // namespace

double interpolate(const GridSpec& grid, std::span<const double> values, std::span<const double> x)
{
    if (static_cast<int>(x.size()) != grid.d)
        throw std::invalid_argument("interpolate: point has wrong dimension");
    if (values.size() != grid.lattice_size())
        throw std::invalid_argument("interpolate: value count does not match lattice");
    for (double xi : x)
        if (!(xi >= 0.0 && xi <= 1.0)) throw std::out_of_range("interpolate: point outside [0,1]^d");

    const int d = grid.d;
    const int p = grid.points_per_axis();
    const int dirichlet_edge = grid.n;
    std::vector<AxisBracket> brackets(d);
    for (int j = 0; j < d; ++j) brackets[j] = bracket(grid, x[j]);

    double sum = 0.0;
    for (unsigned corner = 0; corner < (1u << d); ++corner) {
        double weight = 1.0;
        std::size_t flat = 0;
        bool on_boundary = false;
        for (int j = d - 1; j >= 0; --j) {
            const bool upper = (corner >> j) & 1u;
            const auto& b = brackets[j];
            weight *= upper ? b.theta : 1.0 - b.theta;
            const int k = upper ? b.upper : b.lower;
            if (grid.bc == Boundary::Dirichlet && (k == 0 || k == dirichlet_edge)) on_boundary = true;
            flat = flat * static_cast<std::size_t>(p) + static_cast<std::size_t>(std::max(k, 1) - 1);
        }
        if (weight == 0.0 || on_boundary) continue;
        sum += weight * values[flat];
    }
    return sum;
}

double interpolate(const LatticeField& field, std::span<const double> x)
{
    return interpolate(field.grid, field.values, x);
}

}  // namespace spde
