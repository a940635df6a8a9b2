#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "spde/noise.hpp"

using namespace spde;
using boost::math::quadrature::gauss_kronrod;
using boost::math::quadrature::tanh_sinh;

namespace {

/// int_{-1}^{1} (1 - |v|) |g + v|^{-alpha} dv, split at the kinks.
double oracle_1d(int g, double alpha)
{
    const auto f = [&](double v) { return (1.0 - std::abs(v)) * std::pow(std::abs(g + v), -alpha); };
    if (g == 0) {
        tanh_sinh<double> ts;
        return 2.0 * ts.integrate([&](double v) { return f(v); }, 0.0, 1.0);
    }
    return gauss_kronrod<double, 61>::integrate(f, -1.0, 0.0, 15, 1e-13)
           + gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-13);
}

/// Coincident cells in d = 2 in polar coordinates: the integrand over
/// [0,1]^2 is symmetric in the diagonal, and the radial integral of
/// (1 - r c)(1 - r s) r^{1-alpha} is a polynomial in r^{...}.
double oracle_2d_same_cell(double alpha)
{
    const auto radial = [alpha](double theta) {
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        const double R = 1.0 / c;
        const double p2 = 2.0 - alpha;
        const double p3 = 3.0 - alpha;
        const double p4 = 4.0 - alpha;
        return std::pow(R, p2) / p2 - (c + s) * std::pow(R, p3) / p3 + c * s * std::pow(R, p4) / p4;
    };
    return 8.0 * gauss_kronrod<double, 61>::integrate(radial, 0.0, std::numbers::pi / 4, 15, 1e-13);
}

/// Non-coincident cells in d = 2, nested adaptive quadrature per quadrant.
double oracle_2d(int g1, int g2, double alpha)
{
    double total = 0.0;
    for (double a0 : {-1.0, 0.0})
        for (double b0 : {-1.0, 0.0}) {
            total += gauss_kronrod<double, 31>::integrate(
                [&](double v1) {
                    return gauss_kronrod<double, 31>::integrate(
                        [&](double v2) {
                            const double z1 = g1 + v1;
                            const double z2 = g2 + v2;
                            return (1 - std::abs(v1)) * (1 - std::abs(v2)) * std::pow(z1 * z1 + z2 * z2, -alpha / 2);
                        },
                        b0, b0 + 1.0, 10, 1e-12);
                },
                a0, a0 + 1.0, 10, 1e-12);
        }
    return total;
}

}  // namespace

TEST_CASE("noise model validation")
{
    CHECK_NOTHROW(NoiseModel::riesz(0.5, 1).validate());
    CHECK_NOTHROW(NoiseModel::riesz(1.5, 2).validate());
    CHECK_THROWS_AS(NoiseModel::riesz(1.0, 1).validate(), std::invalid_argument);
    CHECK_THROWS_AS(NoiseModel::riesz(2.5, 3).validate(), std::invalid_argument);
    CHECK_THROWS_AS(NoiseModel::riesz(0.0, 1).validate(), std::invalid_argument);
    NoiseModel white = NoiseModel::white();
    CHECK_NOTHROW(white.validate());
    white.d = 2;
    CHECK_THROWS_AS(white.validate(), std::invalid_argument);
}

TEST_CASE("one-dimensional cell integrals")
{
    const std::array<int, 1> same{0};
    const std::array<int, 1> gap{2};
    CHECK(riesz_cell_integral(same, 1.0, 0.5) == doctest::Approx(8.0 / 3.0).epsilon(1e-14));
    CHECK(riesz_cell_integral(gap, 1.0, 0.5) == doctest::Approx(0.71906).epsilon(1e-5));
    CHECK(riesz_cell_integral(same, 1.0, 0.5) == doctest::Approx(oracle_1d(0, 0.5)).epsilon(1e-10));
    CHECK(riesz_cell_integral(gap, 1.0, 0.5) == doctest::Approx(oracle_1d(2, 0.5)).epsilon(1e-10));

    // kernel -> 1: h^2
    const double h = 0.125;
    CHECK(riesz_cell_integral(same, h, 1e-9) == doctest::Approx(h * h).epsilon(1e-7));

    // scaling h^{2-alpha}
    for (int g : {0, 1, 3, 7}) {
        const std::array<int, 1> off{g};
        CHECK(riesz_cell_integral(off, 0.25, 0.3)
              == doctest::Approx(std::pow(0.25, 1.7) * riesz_cell_integral(off, 1.0, 0.3)).epsilon(1e-12));
    }

    // alpha = 1 uses the logarithmic primitive; allowed away from the diagonal
    const std::array<int, 1> far{3};
    CHECK(riesz_cell_integral(far, 1.0, 1.0) == doctest::Approx(oracle_1d(3, 1.0)).epsilon(1e-10));
    CHECK_THROWS_AS(riesz_cell_integral(same, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(riesz_cell_integral(far, 1.0, 2.0), std::invalid_argument);
}

TEST_CASE("closed form and quadrature route agree in d = 1")
{
    for (double alpha : {0.1, 0.5, 0.9})
        for (int g : {0, 1, -1, 2, 5}) {
            const std::array<int, 1> off{g};
            CHECK(riesz_cell_integral_quadrature(off, 0.1, alpha)
                  == doctest::Approx(riesz_cell_integral(off, 0.1, alpha)).epsilon(1e-9));
        }
}

TEST_CASE("two-dimensional cell integrals against independent oracles")
{
    for (double alpha : {0.5, 1.0, 1.5}) {
        const std::array<int, 2> same{0, 0};
        CHECK(riesz_cell_integral(same, 1.0, alpha) == doctest::Approx(oracle_2d_same_cell(alpha)).epsilon(1e-8));
        for (auto [g1, g2] : {std::pair{1, 0}, std::pair{1, 1}, std::pair{2, 3}, std::pair{0, 4}}) {
            const std::array<int, 2> off{g1, g2};
            CHECK(riesz_cell_integral(off, 1.0, alpha) == doctest::Approx(oracle_2d(g1, g2, alpha)).epsilon(1e-8));
        }
    }
}

TEST_CASE("three-dimensional cell integrals")
{
    // kernel close to 1
    const std::array<int, 3> same{0, 0, 0};
    CHECK(riesz_cell_integral(same, 1.0, 1e-8) == doctest::Approx(1.0).epsilon(1e-6));
    // far cells: the kernel is nearly constant, |g|^{-alpha}
    const std::array<int, 3> far{20, 0, 0};
    CHECK(riesz_cell_integral(far, 1.0, 1.2) == doctest::Approx(std::pow(20.0, -1.2)).epsilon(5e-3));
    // symmetric under sign and axis permutation
    const std::array<int, 3> a{1, -2, 0};
    const std::array<int, 3> b{0, 1, 2};
    CHECK(riesz_cell_integral(a, 0.5, 1.5) == doctest::Approx(riesz_cell_integral(b, 0.5, 1.5)).epsilon(1e-12));
}

TEST_CASE("kernel product bound")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int d = 2; d <= 3; ++d)
        for (double alpha : {0.3, 1.0, 1.9}) {
            if (alpha >= d) continue;
            const auto exponents = riesz_product_exponents(alpha, d);
            double sum = 0.0;
            for (double e : exponents) sum += e;
            CHECK(sum == doctest::Approx(alpha));
            const double C = riesz_product_constant(alpha, d);
            for (int trial = 0; trial < 2000; ++trial) {
                double norm2 = 0.0;
                double product = C;
                for (int j = 0; j < d; ++j) {
                    const double z = u(rng);
                    norm2 += z * z;
                    product *= std::pow(std::abs(z), -exponents[j]);
                }
                REQUIRE(std::pow(norm2, -alpha / 2) <= product * (1 + 1e-12));
            }
        }
}

TEST_CASE("white-noise covariance")
{
    const GridSpec g{1, 4, 2, 1.0};
    const auto f = build_covariance(NoiseModel::white(), g);
    CHECK((f.covariance() - 8.0 * Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
    CHECK(cell_covariance(NoiseModel::white(), g, 1, 1) == doctest::Approx(0.25));
    CHECK(cell_covariance(NoiseModel::white(), g, 0, 1) == 0.0);
}

TEST_CASE("Riesz covariance structure")
{
    const GridSpec g{1, 8, 3, 2.0};
    const auto model = NoiseModel::riesz(0.5, 1);
    const auto f = build_covariance(model, g);
    const auto& C = f.covariance();
    const Eigen::Index k = C.rows();
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) {
            CHECK(C(a, b) == C(b, a));
            if (a > 0 && b > 0) CHECK(C(a, b) == doctest::Approx(C(a - 1, b - 1)).epsilon(1e-14));
            CHECK(C(a, a) >= C(a, b));
            // n^{2d} (m / T) gamma
            CHECK(C(a, b) == doctest::Approx(64.0 * 1.5 * cell_covariance(model, g, a, b)).epsilon(1e-14));
        }
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * C.cwiseAbs().maxCoeff());
    CHECK((f.reconstruct() - C).cwiseAbs().maxCoeff() <= 1e-10 * C.cwiseAbs().maxCoeff());
}

TEST_CASE("two-dimensional covariance factorizes")
{
    const GridSpec g{2, 6, 1, 1.0, Boundary::Neumann};
    const auto f = build_covariance(NoiseModel::riesz(1.2, 2), g);
    CHECK(f.cells() == 36);
    const auto& C = f.covariance();
    CHECK((f.reconstruct() - C).cwiseAbs().maxCoeff() <= 1e-10 * C.cwiseAbs().maxCoeff());
}

TEST_CASE("indefinite input is reported")
{
    Eigen::MatrixXd C(2, 2);
    C << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(CovarianceFactor(GridSpec{1, 3, 1, 1.0}, NoiseModel::riesz(0.5, 1), C), IndefiniteCovariance);
}

TEST_CASE("sampling")
{
    const GridSpec g{1, 4, 2, 1.0};
    SUBCASE("zero covariance gives zero slabs")
    {
        const CovarianceFactor f(g, NoiseModel::white(), Eigen::MatrixXd::Zero(3, 3));
        RngStream rng(1, 0);
        const auto slab = sample_slab(f, rng);
        for (double v : slab.values) CHECK(v == 0.0);
    }
    SUBCASE("white variance")
    {
        const auto f = build_covariance(NoiseModel::white(), g);
        RngStream rng(2024, 0);
        const int N = 100000;
        double sum = 0.0;
        for (int i = 0; i < N; ++i) {
            const auto s = sample_slab(f, rng);
            sum += s.values[1] * s.values[1];
        }
        const double se = std::sqrt(2.0 * 64.0 / N);
        CHECK(std::abs(sum / N - 8.0) < 3.0 * se);
    }
    SUBCASE("Riesz covariance within 4 standard errors")
    {
        const auto check = check_covariance(NoiseModel::riesz(0.5, 1), GridSpec{1, 8, 1, 1.0}, 50000, 99);
        CHECK(check.max_deviation < 4.0);
    }
    SUBCASE("determinism")
    {
        const auto f = build_covariance(NoiseModel::riesz(0.5, 1), GridSpec{1, 8, 4, 1.0});
        RngStream a(42, 3);
        RngStream b(42, 3);
        RngStream c(42, 4);
        const auto pa = sample_path(f, a);
        const auto pb = sample_path(f, b);
        const auto pc = sample_path(f, c);
        REQUIRE(pa.size() == 4);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            CHECK(pa[i].level == static_cast<int>(i));
            CHECK(pa[i].values == pb[i].values);
            CHECK(pa[i].values != pc[i].values);
        }
    }
}

TEST_CASE("factor dump round trip")
{
    const GridSpec g{1, 8, 2, 1.0};
    const auto model = NoiseModel::riesz(0.5, 1);
    const auto f = build_covariance(model, g);
    const auto path = std::filesystem::temp_directory_path() / "spde_factor_test.bin";
    f.save(path);
    const auto back = CovarianceFactor::load(path, g, model);
    CHECK(back.permutation() == f.permutation());
    CHECK((back.factor() - f.factor()).norm() == 0.0);
    CHECK((back.covariance() - f.covariance()).cwiseAbs().maxCoeff() < 1e-10 * f.covariance().maxCoeff());
    CHECK_THROWS(CovarianceFactor::load(path, GridSpec{1, 8, 3, 1.0}, model));
    CHECK_THROWS(CovarianceFactor::load(path, g, NoiseModel::riesz(0.4, 1)));
    std::filesystem::remove(path);
}

namespace {

Eigen::MatrixXd stacked(const CovarianceFactor& f)
{
    const int m = f.grid().m;
    const auto k = f.covariance().rows();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m * k, m * k);
    for (int i = 0; i < m; ++i) S.block(i * k, i * k, k, k) = f.covariance();
    return S;
}

double aggregation_defect(const NoiseModel& model, const GridSpec& fine, const GridSpec& coarse)
{
    const auto A = aggregation_matrix(fine, coarse);
    const Eigen::MatrixXd lhs = A * stacked(build_covariance(model, fine)) * A.transpose();
    const Eigen::MatrixXd rhs = stacked(build_covariance(model, coarse));
    return (lhs - rhs).cwiseAbs().maxCoeff() / rhs.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("aggregation identity")
{
    const auto riesz = NoiseModel::riesz(0.5, 1);
    const GridSpec g{1, 8, 8, 1.0};
    const auto A = aggregation_matrix(g, g);
    CHECK((A - Eigen::MatrixXd::Identity(A.rows(), A.cols())).norm() == 0.0);

    CHECK(aggregation_defect(NoiseModel::white(), GridSpec{1, 8, 4, 1.0}, GridSpec{1, 4, 2, 1.0}) < 1e-12);
    CHECK(aggregation_defect(riesz, GridSpec{1, 8, 1, 1.0}, GridSpec{1, 4, 1, 1.0}) < 1e-10);
    CHECK(aggregation_defect(riesz, GridSpec{1, 8, 8, 1.0}, GridSpec{1, 4, 4, 1.0}) < 1e-10);
    CHECK(aggregation_defect(riesz, GridSpec{1, 12, 6, 2.0, Boundary::Neumann}, GridSpec{1, 4, 3, 2.0, Boundary::Neumann})
          < 1e-10);
    CHECK(aggregation_defect(NoiseModel::riesz(1.0, 2), GridSpec{2, 8, 2, 1.0}, GridSpec{2, 4, 1, 1.0}) < 1e-9);
    CHECK(aggregation_defect(NoiseModel::riesz(1.0, 2), GridSpec{2, 4, 2, 1.0, Boundary::Neumann},
                             GridSpec{2, 2, 1, 1.0, Boundary::Neumann})
          < 1e-9);

    CHECK_THROWS_AS(aggregation_matrix(GridSpec{1, 8, 4, 1.0}, GridSpec{1, 3, 4, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(aggregation_matrix(GridSpec{1, 8, 4, 1.0}, GridSpec{1, 4, 3, 1.0}), std::invalid_argument);
}

TEST_CASE("aggregate applies the aggregation matrix")
{
    const GridSpec fine{2, 4, 4, 1.0};
    const GridSpec coarse{2, 2, 2, 1.0};
    const auto f = build_covariance(NoiseModel::riesz(0.7, 2), fine);
    RngStream rng(8, 1);
    const auto path = sample_path(f, rng);
    const auto out = aggregate(path, fine, coarse);
    Eigen::VectorXd x(fine.m * fine.lattice_size());
    for (int i = 0; i < fine.m; ++i)
        for (std::size_t c = 0; c < fine.lattice_size(); ++c) x[i * fine.lattice_size() + c] = path[i].values[c];
    const Eigen::VectorXd y = aggregation_matrix(fine, coarse) * x;
    REQUIRE(out.size() == 2);
    for (int i = 0; i < coarse.m; ++i)
        for (std::size_t c = 0; c < coarse.lattice_size(); ++c)
            CHECK(out[i].values[c] == doctest::Approx(y[i * coarse.lattice_size() + c]).epsilon(1e-14));
}
