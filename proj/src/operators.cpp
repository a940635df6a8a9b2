#include "spde/operators.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spde {

Laplacian::Laplacian(GridSpec grid) : grid_(grid) { grid_.validate(); }

void Laplacian::apply(std::span<const double> x, std::span<double> out) const
{
    const std::size_t size = grid_.lattice_size();
    if (x.size() != size || out.size() != size) throw std::invalid_argument("Laplacian::apply: size mismatch");
    const auto p = static_cast<std::size_t>(grid_.points_per_axis());
    const double n2 = static_cast<double>(grid_.n) * grid_.n;
    const bool neumann = grid_.bc == Boundary::Neumann;

    for (std::size_t i = 0; i < size; ++i) out[i] = 0.0;
    std::size_t stride = 1;
    for (int axis = 0; axis < grid_.d; ++axis) {
        for (std::size_t i = 0; i < size; ++i) {
            const std::size_t k = (i / stride) % p;
            const double centre = x[i];
            double sum = 0.0;
            if (k > 0) sum += x[i - stride] - centre;
            else if (!neumann) sum -= centre;
            if (k + 1 < p) sum += x[i + stride] - centre;
            else if (!neumann) sum -= centre;
            out[i] += n2 * sum;
        }
        stride *= p;
    }
}

std::vector<double> Laplacian::apply(std::span<const double> x) const
{
    std::vector<double> out(x.size());
    apply(x, out);
    return out;
}

Eigen::MatrixXd Laplacian::dense() const
{
    const std::size_t size = grid_.lattice_size();
    if (size > kMaxDenseLattice)
        throw std::length_error("Laplacian::dense: lattice of " + std::to_string(size) + " points is too large");
    const auto k = static_cast<Eigen::Index>(size);
    Eigen::MatrixXd D(k, k);
    std::vector<double> unit(size, 0.0);
    std::vector<double> column(size);
    for (Eigen::Index j = 0; j < k; ++j) {
        unit[j] = 1.0;
        apply(unit, column);
        unit[j] = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) D(i, j) = column[i];
    }
    return D;
}

double SpectralData::eigenvalue(std::span<const int> positions) const
{
    double sum = 0.0;
    for (int q : positions) sum += axis_eigenvalues.at(q);
    return sum;
}

std::vector<double> SpectralData::eigenvalues() const
{
    const std::size_t size = grid.lattice_size();
    const auto p = static_cast<std::size_t>(grid.points_per_axis());
    std::vector<double> out(size);
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t rest = i;
        double sum = 0.0;
        for (int j = 0; j < grid.d; ++j) {
            sum += axis_eigenvalues[rest % p];
            rest /= p;
        }
        out[i] = sum;
    }
    return out;
}

double SpectralData::phi(int j, double x) const
{
    using std::numbers::pi;
    using std::numbers::sqrt2;
    if (grid.bc == Boundary::Dirichlet) return sqrt2 * std::sin(j * pi * x);
    return j == 0 ? 1.0 : sqrt2 * std::cos(j * pi * x);
}

SpectralData spectral_data(const GridSpec& grid)
{
    using std::numbers::pi;
    grid.validate();
    SpectralData s;
    s.grid = grid;
    const int n = grid.n;
    const int p = grid.points_per_axis();
    const int first = grid.bc == Boundary::Dirichlet ? 1 : 0;
    s.axis_vectors.resize(p, p);
    for (int q = 0; q < p; ++q) {
        const int j = first + q;
        const double half_angle = j * pi / (2.0 * n);
        const double sine = std::sin(half_angle);
        s.modes.push_back(j);
        s.axis_eigenvalues.push_back(-4.0 * n * n * sine * sine);
        s.c_factors.push_back(j == 0 ? 1.0 : sine * sine / (half_angle * half_angle));
        for (int k = 1; k <= p; ++k) s.axis_vectors(k - 1, q) = s.phi(j, grid.coordinate(k)) / std::sqrt(n);
    }
    return s;
}

void apply_along_axis(const Eigen::MatrixXd& matrix, int axis, int d, std::span<double> data)
{
    const auto p = static_cast<std::size_t>(matrix.rows());
    std::size_t stride = 1;
    for (int j = 0; j < axis; ++j) stride *= p;
    std::size_t total = 1;
    for (int j = 0; j < d; ++j) total *= p;
    if (data.size() != total) throw std::invalid_argument("apply_along_axis: tensor size mismatch");
    const std::size_t block = stride * p;

    Eigen::VectorXd line(static_cast<Eigen::Index>(p));
    Eigen::VectorXd image(static_cast<Eigen::Index>(p));
    for (std::size_t outer = 0; outer < total; outer += block) {
        for (std::size_t inner = 0; inner < stride; ++inner) {
            const std::size_t base = outer + inner;
            for (std::size_t k = 0; k < p; ++k) line[k] = data[base + k * stride];
            image.noalias() = matrix * line;
            for (std::size_t k = 0; k < p; ++k) data[base + k * stride] = image[k];
        }
    }
}

StepOperator::StepOperator(GridSpec grid) : grid_(grid), laplacian_(grid), tau_(grid.time_step())
{
    const double n2 = static_cast<double>(grid_.n) * grid_.n;
    const int p = grid_.points_per_axis();
    if (grid_.d == 1) {
        const double r = tau_ * n2;
        off_diagonal_ = -r;
        upper_.resize(p);
        inv_pivot_.resize(p);
        double prev_upper = 0.0;
        for (int i = 0; i < p; ++i) {
            double diag = 1.0 + 2.0 * r;
            if (grid_.bc == Boundary::Neumann && (i == 0 || i == p - 1)) diag = 1.0 + r;
            const double pivot = diag - (i > 0 ? off_diagonal_ * prev_upper : 0.0);
            inv_pivot_[i] = 1.0 / pivot;
            upper_[i] = (i + 1 < p ? off_diagonal_ : 0.0) * inv_pivot_[i];
            prev_upper = upper_[i];
        }
        return;
    }
    const auto spectral = spectral_data(grid_);
    vectors_ = spectral.axis_vectors;
    vectors_t_ = vectors_.transpose();
    const auto lambdas = spectral.eigenvalues();
    inv_symbol_.resize(lambdas.size());
    for (std::size_t i = 0; i < lambdas.size(); ++i) inv_symbol_[i] = 1.0 / (1.0 - tau_ * lambdas[i]);
}

void StepOperator::implicit_solve(std::span<const double> rhs, std::span<double> out) const
{
    const std::size_t size = grid_.lattice_size();
    if (rhs.size() != size || out.size() != size) throw std::invalid_argument("implicit_solve: size mismatch");
    if (grid_.d == 1) {
        // forward sweep, then back substitution
        double prev = 0.0;
        for (std::size_t i = 0; i < size; ++i) {
            prev = (rhs[i] - (i > 0 ? off_diagonal_ * prev : 0.0)) * inv_pivot_[i];
            out[i] = prev;
        }
        for (std::size_t i = size - 1; i-- > 0;) out[i] -= upper_[i] * out[i + 1];
        return;
    }
    std::copy(rhs.begin(), rhs.end(), out.begin());
    for (int axis = 0; axis < grid_.d; ++axis) apply_along_axis(vectors_t_, axis, grid_.d, out);
    for (std::size_t i = 0; i < size; ++i) out[i] *= inv_symbol_[i];
    for (int axis = 0; axis < grid_.d; ++axis) apply_along_axis(vectors_, axis, grid_.d, out);
}

void StepOperator::explicit_apply(std::span<const double> x, std::span<double> out) const
{
    laplacian_.apply(x, out);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + tau_ * out[i];
}

LatticeField implicit_step(const LatticeField& rhs, const GridSpec& grid)
{
    const StepOperator op(grid);
    LatticeField out(grid, rhs.level + 1);
    op.implicit_solve(rhs.values, out.values);
    return out;
}

LatticeField explicit_step(const LatticeField& field, const GridSpec& grid)
{
    const StepOperator op(grid);
    LatticeField out(grid, field.level + 1);
    op.explicit_apply(field.values, out.values);
    return out;
}

}  // namespace spde
