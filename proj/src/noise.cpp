#include "spde/noise.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>

namespace spde {

void NoiseModel::validate() const
{
    if (d < 1) throw std::invalid_argument("noise: dimension d must be >= 1");
    if (kind == NoiseKind::SpaceTimeWhite) {
        if (d != 1) throw std::invalid_argument("noise: space-time white noise requires d = 1");
        return;
    }
    const double upper = std::min(2.0, static_cast<double>(d));
    if (!(alpha > 0.0 && alpha < upper)) {
        std::ostringstream msg;
        msg << "noise: alpha = " << alpha << " violates 0 < alpha < min(2,d) = " << upper;
        throw std::invalid_argument(msg.str());
    }
}

std::string NoiseModel::label() const
{
    if (kind == NoiseKind::SpaceTimeWhite) return "white";
    std::ostringstream out;
    out << alpha;
    return out.str();
}

double riesz_antiderivative(double r, double alpha)
{
    if (r <= 0.0) return 0.0;
    if (alpha == 1.0) return r * std::log(r) - r;
    return std::pow(r, 2.0 - alpha) / ((1.0 - alpha) * (2.0 - alpha));
}

namespace {

constexpr int kGaussPoints = 20;

struct GaussRule {
    std::array<double, kGaussPoints> nodes{};
    std::array<double, kGaussPoints> weights{};
};

// Gauss-Legendre on [0,1].
const GaussRule& unit_gauss()
{
    static const GaussRule rule = [] {
        using Rule = boost::math::quadrature::gauss<double, kGaussPoints>;
        const auto& abscissa = Rule::abscissa();
        const auto& weights = Rule::weights();
        GaussRule r;
        const int half = kGaussPoints / 2;
        for (int i = 0; i < half; ++i) {
            r.nodes[half - 1 - i] = 0.5 * (1.0 - abscissa[i]);
            r.weights[half - 1 - i] = 0.5 * weights[i];
            r.nodes[half + i] = 0.5 * (1.0 + abscissa[i]);
            r.weights[half + i] = 0.5 * weights[i];
        }
        return r;
    }();
    return rule;
}

// Tensor Gauss over the box prod [lo_j, lo_j + width].
template <typename F>
double tensor_gauss(std::span<const double> lo, double width, F&& f)
{
    const auto& rule = unit_gauss();
    const std::size_t d = lo.size();
    std::vector<int> idx(d, 0);
    std::vector<double> point(d);
    double sum = 0.0;
    while (true) {
        double weight = 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            point[j] = lo[j] + width * rule.nodes[idx[j]];
            weight *= rule.weights[idx[j]];
        }
        sum += weight * f(std::span<const double>(point));
        std::size_t j = 0;
        while (j < d && ++idx[j] == kGaussPoints) idx[j++] = 0;
        if (j == d) break;
    }
    return sum * std::pow(width, static_cast<double>(d));
}

// J_s = int_{[0,1]^d} w_1 ... w_s |w|^{-alpha} dw. The integrand is
// homogeneous of degree s - alpha, so the corner cube [0,1/2]^d carries
// 2^{-(d+s-alpha)} J_s and J_s = shell / (1 - 2^{-(d+s-alpha)}).
double corner_moment(int d, int s, double alpha)
{
    double shell = 0.0;
    std::vector<double> lo(d);
    for (unsigned sub = 1; sub < (1u << d); ++sub) {
        for (int j = 0; j < d; ++j) lo[j] = ((sub >> j) & 1u) ? 0.5 : 0.0;
        shell += tensor_gauss(lo, 0.5, [&](std::span<const double> w) {
            double norm2 = 0.0;
            double mono = 1.0;
            for (int j = 0; j < d; ++j) {
                norm2 += w[j] * w[j];
                if (j < s) mono *= w[j];
            }
            return mono * std::pow(norm2, -0.5 * alpha);
        });
    }
    return shell / (1.0 - std::pow(2.0, -(d + s - alpha)));
}

void check_cell_alpha(std::span<const int> offset, double alpha)
{
    const int d = static_cast<int>(offset.size());
    if (d < 1) throw std::invalid_argument("riesz_cell_integral: empty offset");
    const bool coincident = std::all_of(offset.begin(), offset.end(), [](int g) { return g == 0; });
    const double upper = coincident ? std::min(2.0, static_cast<double>(d)) : 2.0;
    if (!(alpha > 0.0 && alpha < upper)) {
        std::ostringstream msg;
        msg << "riesz_cell_integral: alpha = " << alpha << " outside (0, " << upper << ")";
        throw std::invalid_argument(msg.str());
    }
}

}  // namespace

double riesz_cell_integral_quadrature(std::span<const int> offset, double h, double alpha)
{
    check_cell_alpha(offset, alpha);
    const int d = static_cast<int>(offset.size());

    // I(g) = int_{[-1,1]^d} prod(1 - |v_j|) |g + v|^{-alpha} dv, split into
    // orthants where the weight is smooth.
    std::vector<double> moments(d + 1, -1.0);
    double total = 0.0;
    std::vector<double> lo(d);
    for (unsigned orthant = 0; orthant < (1u << d); ++orthant) {
        bool singular = true;
        for (int j = 0; j < d; ++j) {
            const bool positive = (orthant >> j) & 1u;
            lo[j] = positive ? 0.0 : -1.0;
            const int g = offset[j];
            singular = singular && (positive ? (g == 0 || g == -1) : (g == 0 || g == 1));
        }
        if (!singular) {
            total += tensor_gauss(lo, 1.0, [&](std::span<const double> v) {
                double weight = 1.0;
                double norm2 = 0.0;
                for (int j = 0; j < d; ++j) {
                    weight *= 1.0 - std::abs(v[j]);
                    const double z = offset[j] + v[j];
                    norm2 += z * z;
                }
                return weight * std::pow(norm2, -0.5 * alpha);
            });
            continue;
        }
        // In w_j = |v_j + g_j| the weight is (1 - w_j) when g_j = 0 and w_j
        // when |g_j| = 1. Expand the product over subsets of axes carrying w_j.
        int fixed_linear = 0;  // axes with weight w_j
        int mixed = 0;         // axes with weight 1 - w_j
        for (int j = 0; j < d; ++j) (offset[j] == 0 ? mixed : fixed_linear)++;
        for (int extra = 0; extra <= mixed; ++extra) {
            const int s = fixed_linear + extra;
            if (moments[s] < 0.0) moments[s] = corner_moment(d, s, alpha);
            double binom = 1.0;
            for (int i = 0; i < extra; ++i) binom = binom * (mixed - i) / (i + 1);
            total += binom * ((extra % 2) ? -1.0 : 1.0) * moments[s];
        }
    }
    return std::pow(h, 2.0 * d - alpha) * total;
}

double riesz_cell_integral(std::span<const int> offset, double h, double alpha)
{
    check_cell_alpha(offset, alpha);
    if (offset.size() == 1) {
        const double a = offset[0] * h;
        return riesz_antiderivative(std::abs(a + h), alpha) - 2.0 * riesz_antiderivative(std::abs(a), alpha)
               + riesz_antiderivative(std::abs(a - h), alpha);
    }
    return riesz_cell_integral_quadrature(offset, h, alpha);
}

std::vector<double> riesz_product_exponents(double alpha, int d)
{
    std::vector<double> out(d);
    for (int j = 1; j < d; ++j) out[j - 1] = alpha * std::ldexp(1.0, -j);
    out[d - 1] = alpha * std::ldexp(1.0, -d + 1);
    return out;
}

double riesz_product_constant(double alpha, int d)
{
    return std::pow(2.0, -alpha * (1.0 - std::ldexp(1.0, 1 - d)));
}

namespace {

std::vector<int> cell_offset(const GridSpec& grid, std::size_t a, std::size_t b)
{
    const auto p = static_cast<std::size_t>(grid.points_per_axis());
    std::vector<int> g(grid.d);
    for (int j = 0; j < grid.d; ++j) {
        g[j] = static_cast<int>(b % p) - static_cast<int>(a % p);
        a /= p;
        b /= p;
    }
    return g;
}

}  // namespace

double cell_covariance(const NoiseModel& model, const GridSpec& grid, std::size_t a, std::size_t b)
{
    model.validate();
    if (model.d != grid.d) throw std::invalid_argument("cell_covariance: noise and grid dimensions differ");
    const std::size_t cells = grid.lattice_size();
    if (a >= cells || b >= cells) throw std::out_of_range("cell_covariance: cell index outside lattice");
    if (model.kind == NoiseKind::SpaceTimeWhite) return a == b ? std::pow(grid.n, -grid.d) : 0.0;
    const auto g = cell_offset(grid, a, b);
    return riesz_cell_integral(g, 1.0 / grid.n, model.alpha);
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    engine_.seed(seq);
}

void RngStream::fill_normal(std::span<double> out)
{
    for (double& v : out) v = normal_(engine_);
}

IndefiniteCovariance::IndefiniteCovariance(std::size_t c, double p)
    : std::runtime_error("covariance is indefinite: pivot " + std::to_string(p) + " at cell " + std::to_string(c)),
      cell(c), pivot(p)
{
}

CovarianceFactor::CovarianceFactor(GridSpec grid, NoiseModel model, Eigen::MatrixXd covariance)
    : grid_(grid), model_(model), covariance_(std::move(covariance))
{
    if (covariance_.rows() != covariance_.cols() || static_cast<std::size_t>(covariance_.rows()) != grid_.lattice_size())
        throw std::invalid_argument("CovarianceFactor: covariance shape does not match the lattice");
    factorize();
}

CovarianceFactor::CovarianceFactor(GridSpec grid, NoiseModel model, Eigen::MatrixXd covariance,
                                   std::vector<std::size_t> perm, RowMatrix factor)
    : grid_(grid), model_(model), covariance_(std::move(covariance)), perm_(std::move(perm)), factor_(std::move(factor))
{
}

// Pivoted Cholesky; stops once the largest remaining pivot falls below
// 1e-10 * trace.
void CovarianceFactor::factorize()
{
    const Eigen::Index k_cells = covariance_.rows();
    perm_.resize(k_cells);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    RowMatrix L = RowMatrix::Zero(k_cells, k_cells);
    std::vector<double> residual(k_cells);
    for (Eigen::Index i = 0; i < k_cells; ++i) residual[i] = covariance_(i, i);
    const double trace = covariance_.trace();
    const double tol = 1e-10 * std::abs(trace);

    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < k_cells; ++k) {
        Eigen::Index best = k;
        for (Eigen::Index i = k + 1; i < k_cells; ++i)
            if (residual[perm_[i]] > residual[perm_[best]]) best = i;
        if (residual[perm_[best]] <= tol) break;
        if (best != k) {
            std::swap(perm_[k], perm_[best]);
            L.row(k).head(k).swap(L.row(best).head(k));
        }
        const double pivot = std::sqrt(residual[perm_[k]]);
        L(k, k) = pivot;
        for (Eigen::Index i = k + 1; i < k_cells; ++i) {
            double v = covariance_(perm_[i], perm_[k]);
            for (Eigen::Index j = 0; j < k; ++j) v -= L(i, j) * L(k, j);
            L(i, k) = v / pivot;
            residual[perm_[i]] -= L(i, k) * L(i, k);
        }
        rank = k + 1;
    }
    for (Eigen::Index i = rank; i < k_cells; ++i)
        if (residual[perm_[i]] < -tol) throw IndefiniteCovariance(perm_[i], residual[perm_[i]]);
    factor_ = L.leftCols(rank);
}

Eigen::MatrixXd CovarianceFactor::reconstruct() const
{
    const Eigen::MatrixXd permuted = factor_ * factor_.transpose();
    const auto k_cells = static_cast<Eigen::Index>(perm_.size());
    Eigen::MatrixXd out(k_cells, k_cells);
    for (Eigen::Index i = 0; i < k_cells; ++i)
        for (Eigen::Index j = 0; j < k_cells; ++j) out(perm_[i], perm_[j]) = permuted(i, j);
    return out;
}

NoiseSlab CovarianceFactor::sample(RngStream& rng, int level) const
{
    const auto k_cells = static_cast<Eigen::Index>(perm_.size());
    const Eigen::Index r = factor_.cols();
    std::vector<double> xi(r);
    rng.fill_normal(xi);
    NoiseSlab slab{level, std::vector<double>(k_cells, 0.0)};
    for (Eigen::Index i = 0; i < k_cells; ++i) {
        const Eigen::Index width = std::min(i + 1, r);
        const double* row = factor_.data() + i * r;
        double v = 0.0;
        for (Eigen::Index j = 0; j < width; ++j) v += row[j] * xi[j];
        slab.values[perm_[i]] = v;
    }
    return slab;
}

namespace {

static_assert(std::endian::native == std::endian::little, "covariance dumps assume a little-endian host");

constexpr char kMagic[8] = {'S', 'P', 'D', 'E', 'C', 'O', 'V', '1'};

template <typename T>
void put(std::ostream& out, T value)
{
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in)
{
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("covariance dump truncated");
    return value;
}

}  // namespace

void CovarianceFactor::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    put<std::int32_t>(out, grid_.d);
    put<std::int32_t>(out, grid_.n);
    put<std::int32_t>(out, grid_.m);
    put<std::int32_t>(out, grid_.bc == Boundary::Dirichlet ? 0 : 1);
    put<std::int32_t>(out, model_.kind == NoiseKind::Riesz ? 0 : 1);
    put<double>(out, grid_.T);
    put<double>(out, model_.alpha);
    put<std::uint64_t>(out, perm_.size());
    put<std::uint64_t>(out, rank());
    for (auto p : perm_) put<std::int64_t>(out, static_cast<std::int64_t>(p));
    out.write(reinterpret_cast<const char*>(factor_.data()),
              static_cast<std::streamsize>(factor_.size() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

CovarianceFactor CovarianceFactor::load(const std::filesystem::path& path, const GridSpec& grid,
                                        const NoiseModel& model)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(path.string() + " is not a covariance dump");
    GridSpec g;
    g.d = get<std::int32_t>(in);
    g.n = get<std::int32_t>(in);
    g.m = get<std::int32_t>(in);
    g.bc = get<std::int32_t>(in) == 0 ? Boundary::Dirichlet : Boundary::Neumann;
    NoiseModel nm;
    nm.kind = get<std::int32_t>(in) == 0 ? NoiseKind::Riesz : NoiseKind::SpaceTimeWhite;
    g.T = get<double>(in);
    nm.alpha = get<double>(in);
    nm.d = g.d;
    const auto cells = get<std::uint64_t>(in);
    const auto rank = get<std::uint64_t>(in);
    const bool same_model = nm.kind == model.kind && (nm.kind == NoiseKind::SpaceTimeWhite || nm.alpha == model.alpha);
    if (!(g == grid) || !same_model || cells != grid.lattice_size() || rank > cells)
        throw std::runtime_error(path.string() + " was written for a different grid or noise model");
    std::vector<std::size_t> perm(cells);
    for (auto& p : perm) p = static_cast<std::size_t>(get<std::int64_t>(in));
    RowMatrix factor(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(rank));
    in.read(reinterpret_cast<char*>(factor.data()), static_cast<std::streamsize>(factor.size() * sizeof(double)));
    if (!in) throw std::runtime_error("covariance dump truncated");
    CovarianceFactor out(grid, model, Eigen::MatrixXd(), std::move(perm), std::move(factor));
    out.covariance_ = out.reconstruct();
    return out;
}

CovarianceFactor build_covariance(const NoiseModel& model, const GridSpec& grid)
{
    model.validate();
    grid.validate();
    if (model.d != grid.d) throw std::invalid_argument("build_covariance: noise and grid dimensions differ");
    const std::size_t cells = grid.lattice_size();
    if (cells > kMaxCovarianceCells)
        throw std::invalid_argument("build_covariance: " + std::to_string(cells) + " cells exceeds the dense limit of "
                                    + std::to_string(kMaxCovarianceCells));
    const auto k_cells = static_cast<Eigen::Index>(cells);
    const double rate = static_cast<double>(grid.m) / grid.T;
    const double nd = std::pow(static_cast<double>(grid.n), grid.d);

    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(k_cells, k_cells);
    if (model.kind == NoiseKind::SpaceTimeWhite) {
        C.diagonal().setConstant(nd * rate);
        return CovarianceFactor(grid, model, std::move(C));
    }
    // gamma depends only on |offset| up to axis permutation
    std::map<std::vector<int>, double> cache;
    const double scale = nd * nd * rate;
    const double h = 1.0 / grid.n;
    for (Eigen::Index a = 0; a < k_cells; ++a) {
        for (Eigen::Index b = a; b < k_cells; ++b) {
            auto g = cell_offset(grid, static_cast<std::size_t>(a), static_cast<std::size_t>(b));
            for (int& v : g) v = std::abs(v);
            std::sort(g.begin(), g.end());
            auto it = cache.find(g);
            if (it == cache.end()) it = cache.emplace(g, riesz_cell_integral(g, h, model.alpha)).first;
            C(a, b) = C(b, a) = scale * it->second;
        }
    }
    return CovarianceFactor(grid, model, std::move(C));
}

NoiseSlab sample_slab(const CovarianceFactor& factor, RngStream& rng) { return factor.sample(rng); }

std::vector<NoiseSlab> sample_path(const CovarianceFactor& factor, RngStream& rng)
{
    std::vector<NoiseSlab> path;
    path.reserve(factor.grid().m);
    for (int i = 0; i < factor.grid().m; ++i) path.push_back(factor.sample(rng, i));
    return path;
}

namespace {

void check_pair(const GridSpec& fine, const GridSpec& coarse)
{
    if (fine.d != coarse.d || fine.bc != coarse.bc || fine.T != coarse.T)
        throw std::invalid_argument("aggregate: grids differ in dimension, boundary condition or horizon");
    if (fine.n % coarse.n != 0 || fine.m % coarse.m != 0) {
        std::ostringstream msg;
        msg << "aggregate: mesh pair (n,m) = (" << fine.n << "," << fine.m << ") -> (" << coarse.n << ","
            << coarse.m << ") is not divisible";
        throw std::invalid_argument(msg.str());
    }
}

// Coarse 0-based axis position of a fine 0-based axis position, or -1 when
// the fine cell lies in the Dirichlet cell [0, 1/n_coarse) that carries no
// lattice point.
int coarse_axis(const GridSpec& fine, const GridSpec& coarse, int fine_pos)
{
    const int ratio = fine.n / coarse.n;
    if (fine.bc == Boundary::Neumann) return fine_pos / ratio;
    const int k = fine_pos + 1;  // cell [k/n, (k+1)/n]
    const int K = k / ratio;
    return K >= 1 ? K - 1 : -1;
}

std::vector<long> cell_map(const GridSpec& fine, const GridSpec& coarse)
{
    const int pf = fine.points_per_axis();
    const int pc = coarse.points_per_axis();
    std::vector<long> map(fine.lattice_size());
    for (std::size_t cell = 0; cell < map.size(); ++cell) {
        std::size_t rest = cell;
        long target = 0;
        long stride = 1;
        bool dropped = false;
        for (int j = 0; j < fine.d; ++j) {
            const int c = coarse_axis(fine, coarse, static_cast<int>(rest % pf));
            rest /= pf;
            if (c < 0) dropped = true;
            target += c * stride;
            stride *= pc;
        }
        map[cell] = dropped ? -1 : target;
    }
    return map;
}

}  // namespace

std::vector<NoiseSlab> aggregate(std::span<const NoiseSlab> fine, const GridSpec& fine_grid,
                                 const GridSpec& coarse_grid)
{
    check_pair(fine_grid, coarse_grid);
    if (static_cast<int>(fine.size()) != fine_grid.m)
        throw std::invalid_argument("aggregate: expected one slab per fine time step");
    const int time_ratio = fine_grid.m / coarse_grid.m;
    const double factor = std::pow(static_cast<double>(coarse_grid.n) / fine_grid.n, coarse_grid.d)
                          * static_cast<double>(coarse_grid.m) / fine_grid.m;
    const auto map = cell_map(fine_grid, coarse_grid);
    std::vector<NoiseSlab> coarse(coarse_grid.m);
    for (int i = 0; i < coarse_grid.m; ++i) coarse[i] = {i, std::vector<double>(coarse_grid.lattice_size(), 0.0)};
    for (int i = 0; i < fine_grid.m; ++i) {
        auto& target = coarse[i / time_ratio].values;
        const auto& src = fine[i].values;
        for (std::size_t c = 0; c < src.size(); ++c)
            if (map[c] >= 0) target[map[c]] += src[c];
    }
    for (auto& slab : coarse)
        for (double& v : slab.values) v *= factor;
    return coarse;
}

Eigen::MatrixXd aggregation_matrix(const GridSpec& fine_grid, const GridSpec& coarse_grid)
{
    check_pair(fine_grid, coarse_grid);
    const auto kf = static_cast<Eigen::Index>(fine_grid.lattice_size());
    const auto kc = static_cast<Eigen::Index>(coarse_grid.lattice_size());
    const int time_ratio = fine_grid.m / coarse_grid.m;
    const double factor = std::pow(static_cast<double>(coarse_grid.n) / fine_grid.n, coarse_grid.d)
                          * static_cast<double>(coarse_grid.m) / fine_grid.m;
    const auto map = cell_map(fine_grid, coarse_grid);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(coarse_grid.m * kc, fine_grid.m * kf);
    for (int i = 0; i < fine_grid.m; ++i)
        for (Eigen::Index c = 0; c < kf; ++c)
            if (map[c] >= 0) A((i / time_ratio) * kc + map[c], i * kf + c) = factor;
    return A;
}

CovarianceCheck check_covariance(const NoiseModel& model, const GridSpec& grid, std::size_t samples,
                                 std::uint64_t seed)
{
    if (samples < 2) throw std::invalid_argument("covariance check: need at least 2 samples");
    const auto factor = build_covariance(model, grid);
    const auto cells = static_cast<Eigen::Index>(factor.cells());
    RngStream rng(seed, 0);

    CovarianceCheck check;
    check.samples = samples;
    check.analytic = factor.covariance();
    check.empirical = Eigen::MatrixXd::Zero(cells, cells);
    Eigen::VectorXd v(cells);
    for (std::size_t s = 0; s < samples; ++s) {
        const auto slab = factor.sample(rng);
        for (Eigen::Index i = 0; i < cells; ++i) v[i] = slab.values[i];
        check.empirical.selfadjointView<Eigen::Lower>().rankUpdate(v);
    }
    check.empirical = check.empirical.selfadjointView<Eigen::Lower>();
    check.empirical /= static_cast<double>(samples);

    const auto& C = check.analytic;
    check.deviation.resize(cells, cells);
    for (Eigen::Index a = 0; a < cells; ++a)
        for (Eigen::Index b = 0; b < cells; ++b) {
            const double se = std::sqrt((C(a, a) * C(b, b) + C(a, b) * C(a, b)) / samples);
            check.deviation(a, b) = std::abs(check.empirical(a, b) - C(a, b)) / se;
        }
    check.max_deviation = check.deviation.maxCoeff();
    return check;
}

}  // namespace spde
