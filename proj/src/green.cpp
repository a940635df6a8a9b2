#include "spde/green.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>

#include "spde/noise.hpp"
#include "spde/operators.hpp"
#include "spde/regression.hpp"
#include "spde/schemes.hpp"

namespace spde {

using std::numbers::pi;
using std::numbers::sqrt2;

std::string to_string(KernelKind kind)
{
    switch (kind) {
    case KernelKind::Exact: return "exact";
    case KernelKind::SpaceDisc: return "space_disc";
    case KernelKind::Implicit: return "implicit";
    case KernelKind::Explicit: return "explicit";
    }
    return "?";
}

KernelKind parse_kernel_kind(const std::string& text)
{
    if (text == "exact") return KernelKind::Exact;
    if (text == "space_disc") return KernelKind::SpaceDisc;
    if (text == "implicit") return KernelKind::Implicit;
    if (text == "explicit") return KernelKind::Explicit;
    throw std::invalid_argument("unknown kernel kind '" + text + "' (exact|space_disc|implicit|explicit)");
}

int exact_series_modes(double t)
{
    if (!(t > 0.0)) throw std::invalid_argument("exact kernel needs t > 0");
    // sum_{j>J} e^{-j^2 a} <= e^{-J^2 a} / (2 J a)
    const double a = pi * pi * t;
    int J = std::max(1, static_cast<int>(std::sqrt(27.7 / a)));
    while (std::exp(-static_cast<double>(J) * J * a) / (2.0 * J * a) >= 1e-12) ++J;
    return J;
}

namespace {

double axis_phi(Boundary bc, int j, double x)
{
    if (bc == Boundary::Dirichlet) return sqrt2 * std::sin(j * pi * x);
    return j == 0 ? 1.0 : sqrt2 * std::cos(j * pi * x);
}

}  // namespace

double exact_kernel_1d(double t, double x, double y, Boundary bc, int max_modes)
{
    const int J = max_modes > 0 ? max_modes : exact_series_modes(t);
    double sum = bc == Boundary::Neumann ? 1.0 : 0.0;
    for (int j = 1; j <= J; ++j) sum += std::exp(-j * j * pi * pi * t) * axis_phi(bc, j, x) * axis_phi(bc, j, y);
    return sum;
}

double discrete_eigenfunction(const GridSpec& grid, int j, double x)
{
    const int n = grid.n;
    if (grid.bc == Boundary::Dirichlet) {
        const double s = std::clamp(x, 0.0, 1.0) * n;
        const int i = std::min(static_cast<int>(std::floor(s)), n - 1);
        const double theta = s - i;
        return (1.0 - theta) * axis_phi(grid.bc, j, static_cast<double>(i) / n)
               + theta * axis_phi(grid.bc, j, static_cast<double>(i + 1) / n);
    }
    // nodes at the cell centres (2k-1)/2n, flat past the outermost ones
    const double s = std::clamp(x * n + 0.5, 1.0, static_cast<double>(n));
    const int k = std::min(static_cast<int>(std::floor(s)), n - 1);
    const double theta = s - k;
    return (1.0 - theta) * axis_phi(grid.bc, j, (k - 0.5) / n) + theta * axis_phi(grid.bc, j, (k + 0.5) / n);
}

double kernel_y_node(const GridSpec& grid, double y)
{
    const double start = kappa(y, grid.n);
    return grid.bc == Boundary::Dirichlet ? start : start + 0.5 / grid.n;
}

int time_level(const GridSpec& grid, double t) { return static_cast<int>(std::floor(grid.m * t / grid.T + 1e-9)); }

double discrete_weight(KernelKind kind, const GridSpec& grid, double lambda, int level)
{
    const double tau = grid.time_step();
    switch (kind) {
    case KernelKind::Implicit: return std::pow(1.0 - tau * lambda, -level);
    case KernelKind::Explicit: return std::pow(1.0 + tau * lambda, level);
    default: throw std::invalid_argument("discrete_weight: kind has no time discretization");
    }
}

namespace {

void check_point(std::span<const double> x, int d, const char* what)
{
    if (static_cast<int>(x.size()) != d) throw std::invalid_argument(std::string("kernel: ") + what + " has wrong dimension");
    for (double v : x)
        if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range(std::string("kernel: ") + what + " outside [0,1]^d");
}

/// sum_k w(lambda_k) prod_a factors[a][k_a] over the multi-index k.
template <typename Weight>
double spectral_sum(const SpectralData& s, const std::vector<std::vector<double>>& factors, Weight weight)
{
    const int d = s.grid.d;
    const auto p = s.modes.size();
    std::vector<std::size_t> idx(d, 0);
    double total = 0.0;
    while (true) {
        double lambda = 0.0;
        double product = 1.0;
        for (int a = 0; a < d; ++a) {
            lambda += s.axis_eigenvalues[idx[a]];
            product *= factors[a][idx[a]];
        }
        total += weight(lambda) * product;
        int a = 0;
        while (a < d && ++idx[a] == p) idx[a++] = 0;
        if (a == d) break;
    }
    return total;
}

double discrete_kernel(const KernelSpec& spec, const SpectralData& s, double t, std::span<const double> x,
                       std::span<const double> y)
{
    const auto& g = spec.grid;
    std::vector<std::vector<double>> factors(g.d, std::vector<double>(s.modes.size()));
    for (int a = 0; a < g.d; ++a) {
        const double node = kernel_y_node(g, y[a]);
        for (std::size_t q = 0; q < s.modes.size(); ++q)
            factors[a][q] = discrete_eigenfunction(g, s.modes[q], x[a]) * s.phi(s.modes[q], node);
    }
    if (spec.kind == KernelKind::SpaceDisc)
        return spectral_sum(s, factors, [t](double lambda) { return std::exp(lambda * t); });
    const int level = time_level(g, t);
    return spectral_sum(s, factors, [&](double lambda) { return discrete_weight(spec.kind, g, lambda, level); });
}

}  // namespace

double eval_kernel(const KernelSpec& spec, double t, std::span<const double> x, std::span<const double> y)
{
    const int d = spec.grid.d;
    check_point(x, d, "x");
    check_point(y, d, "y");
    if (spec.kind == KernelKind::Exact) {
        if (!(t > 0.0)) throw std::invalid_argument("exact kernel needs t > 0");
        double product = 1.0;
        for (int a = 0; a < d; ++a) product *= exact_kernel_1d(t, x[a], y[a], spec.grid.bc, spec.max_modes);
        return product;
    }
    if (!(t >= 0.0)) throw std::invalid_argument("discrete kernel needs t >= 0");
    spec.grid.validate();
    return discrete_kernel(spec, spectral_data(spec.grid), t, x, y);
}

double apply_kernel(const KernelSpec& spec, double t, std::span<const double> x, const LatticeField& u0)
{
    if (spec.kind == KernelKind::Exact) throw std::invalid_argument("apply_kernel: needs a discrete kernel");
    if (!(u0.grid.n == spec.grid.n && u0.grid.d == spec.grid.d && u0.grid.bc == spec.grid.bc))
        throw std::invalid_argument("apply_kernel: data lives on a different lattice");
    check_point(x, spec.grid.d, "x");
    if (!(t >= 0.0)) throw std::invalid_argument("discrete kernel needs t >= 0");
    const auto s = spectral_data(spec.grid);
    const auto& g = spec.grid;
    // one representative y per cell: the cell midpoint, whose node is the lattice point
    const double shift = g.bc == Boundary::Dirichlet ? 0.5 / g.n : 0.0;
    const double volume = std::pow(static_cast<double>(g.n), -g.d);
    double total = 0.0;
    for (std::size_t l = 0; l < u0.values.size(); ++l) {
        auto y = g.point(l);
        for (double& v : y) v += shift;
        total += discrete_kernel(spec, s, t, x, y) * u0.values[l];
    }
    return total * volume;
}

std::vector<double> exact_cell_averages(double t, double x, int cells, Boundary bc, CellAverageMethod method)
{
    if (!(t > 0.0)) throw std::invalid_argument("exact kernel needs t > 0");
    if (cells < 1) throw std::invalid_argument("exact_cell_averages: need at least one cell");
    if (method == CellAverageMethod::Automatic)
        method = t < 0.05 ? CellAverageMethod::Images : CellAverageMethod::Series;

    // primitive in y at the cell edges
    std::vector<double> edge(cells + 1, 0.0);
    if (method == CellAverageMethod::Images) {
        const double scale = 1.0 / std::sqrt(4.0 * t);
        const auto Phi = [scale](double z) { return 0.5 * std::erf(z * scale); };
        const int K = 2 + static_cast<int>(std::ceil(6.0 * std::sqrt(t)));
        const double sign = bc == Boundary::Dirichlet ? -1.0 : 1.0;
        for (int c = 0; c <= cells; ++c) {
            const double e = static_cast<double>(c) / cells;
            double sum = 0.0;
            for (int k = -K; k <= K; ++k) sum += -Phi(x - e + 2 * k) + sign * Phi(x + e + 2 * k);
            edge[c] = sum;
        }
    } else {
        const int J = exact_series_modes(t);
        for (int c = 0; c <= cells; ++c) {
            const double e = static_cast<double>(c) / cells;
            double sum = bc == Boundary::Neumann ? e : 0.0;
            for (int j = 1; j <= J; ++j) {
                const double w = std::exp(-j * j * pi * pi * t) * axis_phi(bc, j, x) * sqrt2 / (j * pi);
                sum += bc == Boundary::Dirichlet ? -w * std::cos(j * pi * e) : w * std::sin(j * pi * e);
            }
            edge[c] = sum;
        }
    }
    std::vector<double> out(cells);
    for (int c = 0; c < cells; ++c) out[c] = (edge[c + 1] - edge[c]) * cells;
    return out;
}

RieszQuadraticForm::RieszQuadraticForm(int cells_per_axis, int d, double alpha)
    : cells_(cells_per_axis), d_(d), alpha_(alpha)
{
    NoiseModel::riesz(alpha, d).validate();
    if (cells_ < 1) throw std::invalid_argument("RieszQuadraticForm: need at least one cell per axis");
    std::size_t size = 1;
    for (int a = 0; a < d; ++a) size *= cells_;
    table_.resize(size);
    std::vector<int> offset(d);
    const double h = 1.0 / cells_;
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t rest = i;
        for (int a = 0; a < d; ++a) {
            offset[a] = static_cast<int>(rest % cells_);
            rest /= cells_;
        }
        table_[i] = riesz_cell_integral(offset, h, alpha_);
    }
}

double RieszQuadraticForm::entry(std::size_t a, std::size_t b) const
{
    std::size_t index = 0;
    std::size_t stride = 1;
    for (int axis = 0; axis < d_; ++axis) {
        const auto ia = static_cast<long>(a % cells_);
        const auto ib = static_cast<long>(b % cells_);
        index += static_cast<std::size_t>(std::labs(ia - ib)) * stride;
        stride *= cells_;
        a /= cells_;
        b /= cells_;
    }
    return table_[index];
}

Eigen::MatrixXd RieszQuadraticForm::dense() const
{
    const std::size_t size = table_.size();
    if (size > kMaxCovarianceCells) throw std::length_error("RieszQuadraticForm::dense: too many cells");
    const auto k = static_cast<Eigen::Index>(size);
    Eigen::MatrixXd G(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b <= a; ++b) G(a, b) = G(b, a) = entry(a, b);
    return G;
}

double RieszQuadraticForm::operator()(std::span<const double> values, NormVariant variant) const
{
    if (values.size() != table_.size())
        throw std::invalid_argument("h_alpha_norm: expected " + std::to_string(table_.size()) + " cell values");
    std::vector<double> v(values.begin(), values.end());
    if (variant == NormVariant::Absolute)
        for (double& x : v) x = std::abs(x);
    double total = 0.0;
    for (std::size_t a = 0; a < v.size(); ++a) {
        if (v[a] == 0.0) continue;
        double row = 0.5 * entry(a, a) * v[a];
        for (std::size_t b = 0; b < a; ++b) row += entry(a, b) * v[b];
        total += 2.0 * v[a] * row;
    }
    return total;
}

double h_alpha_norm_squared(std::span<const double> values, int cells_per_axis, int d, double alpha,
                            NormVariant variant)
{
    return RieszQuadraticForm(cells_per_axis, d, alpha)(values, variant);
}

namespace {

void check_rate_alpha(double alpha) { NoiseModel::riesz(alpha, 1).validate(); }

/// Rows x_i = i / (r n) for i <= r n / 2: both kernels are symmetric under
/// (x, y) -> (1 - x, 1 - y), and so is the Riesz form.
std::vector<double> sup_points(int n, int per_cell)
{
    std::vector<double> xs;
    const int total = per_cell * n;
    for (int i = 0; 2 * i <= total; ++i) xs.push_back(static_cast<double>(i) / total);
    return xs;
}

double max_quadratic(const Eigen::MatrixXd& form, const Eigen::MatrixXd& columns)
{
    const Eigen::MatrixXd image = form * columns;
    return (image.array() * columns.array()).colwise().sum().maxCoeff();
}

double relative_change(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), 1e-300); }

}  // namespace

double space_distance_integral(double alpha, int n, const RateCheckOptions& options, double* achieved_tolerance)
{
    check_rate_alpha(alpha);
    const GridSpec grid{1, n, 1, options.T, options.bc};
    grid.validate();
    const int N = options.fine_cells_per_cell * n;
    const Eigen::MatrixXd form = RieszQuadraticForm(N, 1, alpha).dense();
    const auto xs = sup_points(n, options.x_points_per_cell);
    const auto s = spectral_data(grid);
    const auto modes = static_cast<Eigen::Index>(s.modes.size());
    const auto nx = static_cast<Eigen::Index>(xs.size());

    // discrete kernel on fine cells: Psi diag(e^{lambda t}) Phi^T
    Eigen::MatrixXd Psi(N, modes);
    Eigen::MatrixXd Phi(nx, modes);
    for (Eigen::Index q = 0; q < modes; ++q) {
        for (int c = 0; c < N; ++c) Psi(c, q) = s.phi(s.modes[q], kernel_y_node(grid, (c + 0.5) / N));
        for (Eigen::Index i = 0; i < nx; ++i) Phi(i, q) = discrete_eigenfunction(grid, s.modes[q], xs[i]);
    }
    Eigen::VectorXd lambda(modes);
    for (Eigen::Index q = 0; q < modes; ++q) lambda[q] = s.axis_eigenvalues[q];

    const auto integrand = [&](double t) {
        const Eigen::VectorXd weights = (lambda * t).array().exp();
        Eigen::MatrixXd diff = -Psi * weights.asDiagonal() * Phi.transpose();
        for (Eigen::Index i = 0; i < nx; ++i) {
            const auto avg = exact_cell_averages(t, xs[i], N, options.bc);
            for (int c = 0; c < N; ++c) diff(c, i) += avg[c];
        }
        return max_quadratic(form, diff);
    };

    // trapezoid in ln t; below t_min the integrand is taken as constant
    const double step = std::log(10.0) / options.steps_per_decade;
    std::vector<double> g;  // f(t) t at t = t_min e^{k step}
    double peak = 0.0;
    const double head = integrand(options.t_min) * options.t_min;
    for (int k = 0;; ++k) {
        const double t = options.t_min * std::exp(k * step);
        const double f = integrand(t);
        peak = std::max(peak, f);
        g.push_back(f * t);
        if ((t > 1e-2 && f < 1e-12 * peak) || t > 100.0) break;
    }
    if (g.size() % 2 == 0) g.push_back(0.0);
    double fine = 0.0;
    double coarse = 0.0;
    for (std::size_t k = 0; k + 1 < g.size(); ++k) fine += 0.5 * step * (g[k] + g[k + 1]);
    for (std::size_t k = 0; k + 2 < g.size(); k += 2) coarse += step * (g[k] + g[k + 2]);
    if (achieved_tolerance) *achieved_tolerance = relative_change(fine + head, coarse + head);
    return fine + head;
}

namespace {

struct TimeKernel {
    KernelKind kind;
    int m = 0;
    bool shift = false;

    double weight(double lambda, double t, const GridSpec& grid, int level) const
    {
        if (kind == KernelKind::SpaceDisc) return std::exp(lambda * t);
        GridSpec g = grid;
        g.m = m;
        return discrete_weight(kind, g, lambda, level + (shift ? 1 : 0));
    }
};

TimeKernel time_kernel(const KernelSpec& spec, const GridSpec& base, const RateCheckOptions& options)
{
    if (spec.kind == KernelKind::Exact) throw std::invalid_argument("time distance: needs discrete kernels");
    if (spec.grid.n != base.n || spec.grid.bc != base.bc || spec.grid.d != 1 || spec.grid.T != base.T)
        throw std::invalid_argument("time distance: kernels must share a one-dimensional lattice and T");
    if (spec.kind == KernelKind::Explicit) check_explicit_stability(spec.grid);
    return {spec.kind, spec.grid.m, spec.kind == KernelKind::Implicit && options.implicit_shift};
}

template <int Points>
double gauss_time_integral(const std::vector<double>& breaks, const TimeKernel& ka, const TimeKernel& kb,
                           const GridSpec& grid, const Eigen::VectorXd& lambda, const Eigen::MatrixXd& P,
                           const Eigen::MatrixXd& Phi)
{
    using rule = boost::math::quadrature::gauss<double, Points>;
    const auto& abscissa = rule::abscissa();
    const auto& weights = rule::weights();
    // symmetric rule stores non-negative nodes only
    std::vector<std::pair<double, double>> nodes;
    for (std::size_t i = 0; i < abscissa.size(); ++i) {
        nodes.emplace_back(abscissa[i], weights[i]);
        if (abscissa[i] != 0.0) nodes.emplace_back(-abscissa[i], weights[i]);
    }
    const auto modes = lambda.size();
    Eigen::VectorXd c(modes);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double lo = breaks[k];
        const double hi = breaks[k + 1];
        const double mid = 0.5 * (lo + hi);
        const int level_a = ka.m > 0 ? static_cast<int>(std::floor(mid * ka.m / grid.T)) : 0;
        const int level_b = kb.m > 0 ? static_cast<int>(std::floor(mid * kb.m / grid.T)) : 0;
        for (const auto& [u, w] : nodes) {
            const double t = mid + 0.5 * (hi - lo) * u;
            for (Eigen::Index q = 0; q < modes; ++q)
                c[q] = ka.weight(lambda[q], t, grid, level_a) - kb.weight(lambda[q], t, grid, level_b);
            const Eigen::MatrixXd V = Phi * c.asDiagonal();
            const double value = ((V * P).array() * V.array()).rowwise().sum().maxCoeff();
            total += 0.5 * (hi - lo) * w * value;
        }
    }
    return total;
}

}  // namespace

double time_integrated_distance(const KernelSpec& a, const KernelSpec& b, double alpha,
                                const RateCheckOptions& options, double* achieved_tolerance)
{
    check_rate_alpha(alpha);
    GridSpec grid = a.grid;
    grid.validate();
    const auto ka = time_kernel(a, grid, options);
    const auto kb = time_kernel(b, grid, options);

    std::vector<double> breaks{0.0, grid.T};
    for (int m : {ka.m, kb.m})
        for (int i = 1; i < m; ++i) breaks.push_back(grid.T * i / m);
    std::sort(breaks.begin(), breaks.end());
    // e^{lambda t} varies on the scale 1 / |lambda| near t = 0
    const double stiffest = 4.0 * grid.n * grid.n;
    for (double edge = breaks[1] / 2; edge * stiffest > 1e-4; edge /= 2) breaks.push_back(edge);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end(),
                             [&](double x, double y) { return std::abs(x - y) < 1e-14 * grid.T; }),
                 breaks.end());

    grid.m = 1;
    const auto s = spectral_data(grid);
    const int n = grid.n;
    const auto modes = static_cast<Eigen::Index>(s.modes.size());
    // exact form of the y variable: phi_j(node) is constant on each lattice cell
    const Eigen::MatrixXd gamma = RieszQuadraticForm(n, 1, alpha).dense();
    Eigen::MatrixXd Psi(n, modes);
    for (Eigen::Index q = 0; q < modes; ++q)
        for (int c = 0; c < n; ++c) Psi(c, q) = s.phi(s.modes[q], kernel_y_node(grid, (c + 0.5) / n));
    const Eigen::MatrixXd P = Psi.transpose() * gamma * Psi;

    const auto xs = sup_points(n, 2);
    Eigen::MatrixXd Phi(static_cast<Eigen::Index>(xs.size()), modes);
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (Eigen::Index q = 0; q < modes; ++q) Phi(i, q) = discrete_eigenfunction(grid, s.modes[q], xs[i]);
    Eigen::VectorXd lambda(modes);
    for (Eigen::Index q = 0; q < modes; ++q) lambda[q] = s.axis_eigenvalues[q];

    const double value = options.gauss_points >= 8
                             ? gauss_time_integral<8>(breaks, ka, kb, grid, lambda, P, Phi)
                             : gauss_time_integral<4>(breaks, ka, kb, grid, lambda, P, Phi);
    if (achieved_tolerance) {
        const double coarse = gauss_time_integral<3>(breaks, ka, kb, grid, lambda, P, Phi);
        *achieved_tolerance = value == 0.0 ? std::abs(coarse) : relative_change(value, coarse);
    }
    return value;
}

namespace {

void fit_result(RateCheckResult& r)
{
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < r.meshes.size(); ++i) {
        if (!(r.values[i] > 0.0)) throw std::runtime_error("rate check: non-positive integral at mesh "
                                                           + std::to_string(r.meshes[i]));
        lx.push_back(std::log(static_cast<double>(r.meshes[i])));
        ly.push_back(std::log(r.values[i]));
    }
    r.slope = least_squares_line(lx, ly).slope;
}

}  // namespace

RateCheckResult rate_check_space(double alpha, std::span<const int> n_ladder, const RateCheckOptions& options)
{
    if (n_ladder.size() < 2) throw std::invalid_argument("rate check: ladder needs at least 2 entries");
    RateCheckResult r;
    r.kind = "space";
    r.alpha = alpha;
    r.target_slope = -(2.0 - alpha);
    for (int n : n_ladder) {
        double tol = 0.0;
        r.meshes.push_back(n);
        r.values.push_back(space_distance_integral(alpha, n, options, &tol));
        r.achieved_tolerance = std::max(r.achieved_tolerance, tol);
    }
    fit_result(r);
    return r;
}

RateCheckResult rate_check_time(double alpha, int n, std::span<const int> m_ladder, KernelKind kind,
                                const RateCheckOptions& options)
{
    if (kind != KernelKind::Implicit && kind != KernelKind::Explicit)
        throw std::invalid_argument("rate_check_time: kind must be implicit or explicit");
    if (m_ladder.size() < 2) throw std::invalid_argument("rate check: ladder needs at least 2 entries");
    RateCheckResult r;
    r.kind = "time_" + to_string(kind);
    r.alpha = alpha;
    r.target_slope = -(1.0 - alpha / 2.0);
    const KernelSpec reference{KernelKind::SpaceDisc, GridSpec{1, n, 1, options.T, options.bc}};
    for (int m : m_ladder) {
        double tol = 0.0;
        const KernelSpec discrete{kind, GridSpec{1, n, m, options.T, options.bc}};
        r.meshes.push_back(m);
        r.values.push_back(time_integrated_distance(reference, discrete, alpha, options, &tol));
        r.achieved_tolerance = std::max(r.achieved_tolerance, tol);
    }
    fit_result(r);
    return r;
}

void write_rate_check_csv(std::ostream& out, std::span<const RateCheckResult> results)
{
    out << "kind,alpha,mesh,integral_value,slope,target_slope\n";
    char buffer[160];
    for (const auto& r : results)
        for (std::size_t i = 0; i < r.meshes.size(); ++i) {
            std::snprintf(buffer, sizeof(buffer), "%s,%.17g,%d,%.17g,%.17g,%.17g\n", r.kind.c_str(), r.alpha,
                          r.meshes[i], r.values[i], r.slope, r.target_slope);
            out << buffer;
        }
}

}  // namespace spde
