#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "spde/schemes.hpp"

using namespace spde;
using std::numbers::pi;

namespace {

Eigen::VectorXd as_eigen(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

std::vector<NoiseSlab> random_slabs(const GridSpec& g, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<NoiseSlab> out(g.m);
    for (int i = 0; i < g.m; ++i) {
        out[i].level = i;
        out[i].values.resize(g.lattice_size());
        for (double& v : out[i].values) v = scale * normal(rng);
    }
    return out;
}

SchemeRun make_run(GridSpec g, SchemeKind kind, Coefficient sigma, Coefficient drift, InitialCondition u0)
{
    SchemeRun run;
    run.grid = g;
    run.kind = kind;
    run.coefficients = {sigma, drift};
    run.initial = std::move(u0);
    run.noise = NoiseModel::riesz(0.5, g.d);
    return run;
}

/// Both schemes written out with dense matrices.
Eigen::VectorXd dense_oracle(const SchemeRun& run, std::span<const NoiseSlab> slabs)
{
    const auto& g = run.grid;
    const double tau = g.time_step();
    const Eigen::MatrixXd A = Laplacian(g).dense();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(A.rows(), A.cols());
    const auto lu = (I - tau * A).partialPivLu();
    Eigen::VectorXd u = as_eigen(run.initial.sample(g).values);
    for (int i = 0; i < g.m; ++i) {
        Eigen::VectorXd forcing(u.size());
        for (Eigen::Index k = 0; k < u.size(); ++k)
            forcing[k] = run.coefficients.sigma(u[k]) * slabs[i].values[k] + run.coefficients.drift(u[k]);
        if (run.kind == SchemeKind::Implicit)
            u = lu.solve(u + tau * forcing);
        else
            u = (I + tau * A) * u + tau * forcing;
    }
    return u;
}

}  // namespace

TEST_CASE("coefficients")
{
    CHECK(Coefficient::parse("constant 2.5")(7.0) == 2.5);
    CHECK(Coefficient::parse("affine 2 3")(1.5) == doctest::Approx(6.0));
    CHECK(Coefficient::parse("cosine 1 0.5")(0.0) == doctest::Approx(1.5));
    CHECK_THROWS_AS(Coefficient::parse("quadratic 1 2"), std::invalid_argument);
    CHECK_THROWS_AS(Coefficient::parse("affine 1"), std::invalid_argument);

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (const auto& c : {Coefficient::constant(3.0), Coefficient::affine(-2.0, 1.0), Coefficient::cosine(1.0, -0.7)}) {
        const double L = c.lipschitz_bound();
        for (int i = 0; i < 2000; ++i) {
            const double a = u(rng);
            const double b = u(rng);
            REQUIRE(std::abs(c(a) - c(b)) <= L * std::abs(a - b) + 1e-12);
        }
    }
}

TEST_CASE("initial conditions")
{
    const GridSpec g{2, 4, 1, 1.0};
    const auto field = InitialCondition::sine_product(2.0).sample(g);
    const auto x = g.point(0);
    CHECK(field.values[0] == doctest::Approx(2.0 * std::sin(pi * x[0]) * std::sin(pi * x[1])));
    CHECK(InitialCondition::zero().sample(g).sup_norm() == 0.0);
    CHECK(InitialCondition::bump(1.0).sample(GridSpec{1, 2, 1, 1.0}).values[0] == doctest::Approx(0.25));
    CHECK(InitialCondition::parse_family("table") == InitialCondition::Family::Table);
    CHECK_THROWS_AS(InitialCondition::parse_family("gauss"), std::invalid_argument);
}

TEST_CASE("run validation")
{
    auto run = make_run(GridSpec{1, 4, 4, 1.0}, SchemeKind::Implicit, Coefficient::constant(1.0),
                        Coefficient::constant(0.0), InitialCondition::from_table({1.0, 2.0}));
    CHECK_THROWS_AS(run.validate(), std::invalid_argument);
    run.initial = InitialCondition::zero();
    CHECK_NOTHROW(run.validate());
    run.recorded_levels = {5};
    CHECK_THROWS_AS(run.validate(), std::invalid_argument);
    run.recorded_levels = {};
    run.noise = NoiseModel::riesz(0.5, 2);
    CHECK_THROWS_AS(run.validate(), std::invalid_argument);
}

TEST_CASE("explicit stability guard")
{
    auto run = make_run(GridSpec{1, 10, 100, 1.0}, SchemeKind::Explicit, Coefficient::constant(1.0),
                        Coefficient::constant(0.0), InitialCondition::zero());
    CHECK(run.stability_ratio() == doctest::Approx(1.0));
    CHECK_THROWS_AS(Scheme{run}, StabilityError);
    try {
        Scheme{run};
    } catch (const StabilityError& e) {
        CHECK(e.ratio == doctest::Approx(1.0));
        CHECK(std::string(e.what()).find("n^2 T / m") != std::string::npos);
    }
    // boundary of the guard: 9 / 20 = 0.45 is accepted
    run.grid = GridSpec{1, 3, 20, 1.0};
    CHECK_NOTHROW(Scheme{run});
    run.q = 0.5;
    CHECK_THROWS_AS(Scheme{run}, StabilityError);
    // the implicit scheme is unconditionally stable
    run.kind = SchemeKind::Implicit;
    run.grid = GridSpec{1, 10, 100, 1.0};
    CHECK_NOTHROW(Scheme{run});
}

TEST_CASE("schemes match dense-matrix oracles")
{
    const auto sigma = Coefficient::affine(0.5, 1.0);
    const auto drift = Coefficient::cosine(1.0, 0.3);
    for (int d = 1; d <= 2; ++d) {
        SUBCASE("implicit")
        {
            const auto run = make_run(GridSpec{d, 4, 2, 1.0}, SchemeKind::Implicit, sigma, drift,
                                      InitialCondition::sine_product());
            const auto slabs = random_slabs(run.grid, 21 + d);
            const auto u = Scheme(run).run_final(slabs);
            CHECK((as_eigen(u.values) - dense_oracle(run, slabs)).cwiseAbs().maxCoeff() < 1e-10);
        }
        SUBCASE("explicit")
        {
            const auto run = make_run(GridSpec{d, 4, 64, 1.0}, SchemeKind::Explicit, sigma, drift,
                                      InitialCondition::bump(3.0));
            const auto slabs = random_slabs(run.grid, 31 + d);
            const auto u = Scheme(run).run_final(slabs);
            CHECK((as_eigen(u.values) - dense_oracle(run, slabs)).cwiseAbs().maxCoeff() < 1e-10);
        }
        SUBCASE("Neumann implicit")
        {
            auto run = make_run(GridSpec{d, 3, 5, 0.5, Boundary::Neumann}, SchemeKind::Implicit, sigma, drift,
                                InitialCondition::sine_product());
            const auto slabs = random_slabs(run.grid, 41 + d);
            const auto u = Scheme(run).run_final(slabs);
            CHECK((as_eigen(u.values) - dense_oracle(run, slabs)).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("deterministic decay of the first mode")
{
    const GridSpec g{1, 8, 16, 1.0};
    const auto run = make_run(g, SchemeKind::Implicit, Coefficient::constant(0.0), Coefficient::constant(0.0),
                              InitialCondition::sine_product());
    const auto trajectory = Scheme(run).run(zero_path(g));
    REQUIRE(trajectory.levels.size() == 17);
    const double factor = 1.0 + g.time_step() * 4.0 * 64.0 * std::pow(std::sin(pi / 16.0), 2);
    for (int i = 0; i <= g.m; ++i) {
        const auto& field = trajectory.at_level(i);
        for (std::size_t k = 0; k < field.values.size(); ++k)
            REQUIRE(field.values[k] == doctest::Approx(std::sin(pi * (k + 1) / 8.0) * std::pow(factor, -i)));
    }

    auto explicit_run = run;
    explicit_run.kind = SchemeKind::Explicit;
    explicit_run.grid.m = 256;
    const auto u = Scheme(explicit_run).run_final(zero_path(explicit_run.grid));
    const double efactor = 1.0 - explicit_run.grid.time_step() * 4.0 * 64.0 * std::pow(std::sin(pi / 16.0), 2);
    CHECK(u.values[3] == doctest::Approx(std::pow(efactor, 256)));
}

TEST_CASE("noise-free sup norm does not increase")
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (auto kind : {SchemeKind::Implicit, SchemeKind::Explicit})
        for (auto bc : {Boundary::Dirichlet, Boundary::Neumann}) {
            const GridSpec g{2, 6, 200, 1.0, bc};
            std::vector<double> table(g.lattice_size());
            for (double& v : table) v = unif(rng);
            const auto run = make_run(g, kind, Coefficient::constant(0.0), Coefficient::constant(0.0),
                                      InitialCondition::from_table(table));
            const auto trajectory = Scheme(run).run(zero_path(g));
            for (int i = 0; i < g.m; ++i)
                REQUIRE(trajectory.at_level(i + 1).sup_norm() <= trajectory.at_level(i).sup_norm() + 1e-14);
        }
}

TEST_CASE("one-step covariance under additive noise")
{
    // u_1 = tau (I - tau A)^{-1} xi, so Cov u_1 = tau^2 M C M^T
    const GridSpec g{1, 6, 4, 1.0};
    const auto run = make_run(g, SchemeKind::Implicit, Coefficient::constant(1.0), Coefficient::constant(0.0),
                              InitialCondition::zero());
    const auto factor = build_covariance(run.noise, g);
    const Scheme scheme(run);
    const double tau = g.time_step();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(g.lattice_size(), g.lattice_size());
    const Eigen::MatrixXd M = (I - tau * Laplacian(g).dense()).inverse();
    const Eigen::MatrixXd expected = tau * tau * M * factor.covariance() * M.transpose();

    const int samples = 20000;
    RngStream rng(99, 0);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(I.rows(), I.cols());
    const LatticeField zero(g, 0);
    for (int s = 0; s < samples; ++s) {
        const auto u = scheme.step(zero, sample_slab(factor, rng));
        const Eigen::VectorXd v = as_eigen(u.values);
        second.noalias() += v * v.transpose();
    }
    second /= samples;
    for (Eigen::Index a = 0; a < I.rows(); ++a)
        for (Eigen::Index b = 0; b < I.cols(); ++b) {
            const double se = std::sqrt((expected(a, a) * expected(b, b) + expected(a, b) * expected(a, b)) / samples);
            REQUIRE(std::abs(second(a, b) - expected(a, b)) < 4.5 * se);
        }
}

TEST_CASE("non-finite values abort with the level")
{
    const GridSpec g{1, 4, 8, 1.0};
    auto run = make_run(g, SchemeKind::Implicit, Coefficient::constant(1.0), Coefficient::constant(0.0),
                        InitialCondition::zero());
    auto slabs = random_slabs(g, 1);
    slabs[4].values[1] = std::numeric_limits<double>::infinity();
    try {
        Scheme(run).run(slabs);
        FAIL("expected NumericalAbort");
    } catch (const NumericalAbort& e) {
        CHECK(e.level == 5);
    }
}

TEST_CASE("recorded levels and time interpolation")
{
    const GridSpec g{1, 4, 8, 2.0};
    auto run = make_run(g, SchemeKind::Implicit, Coefficient::constant(1.0), Coefficient::affine(-1.0, 0.0),
                        InitialCondition::sine_product());
    const auto slabs = random_slabs(g, 5);
    const auto full = Scheme(run).run(slabs);
    run.recorded_levels = {0, 3, 8};
    const auto partial = Scheme(run).run(slabs);
    REQUIRE(partial.levels.size() == 3);
    CHECK(partial.at_level(3).values == full.at_level(3).values);
    CHECK_THROWS_AS(partial.at_level(4), std::out_of_range);
    CHECK(Scheme(run).run_until(slabs, 3).values == full.at_level(3).values);

    const std::array<double, 1> x{0.375};
    const double mid = full.value_at(0.625, x);  // between levels 2 and 3
    CHECK(mid == doctest::Approx(0.5 * (full.at_level(2).at(x) + full.at_level(3).at(x))));
}

TEST_CASE("trajectory serialization round trips")
{
    const GridSpec g{2, 4, 3, 0.5, Boundary::Neumann};
    const auto run = make_run(g, SchemeKind::Implicit, Coefficient::cosine(1.0, 0.2), Coefficient::constant(0.0),
                              InitialCondition::sine_product());
    const auto trajectory = Scheme(run).run(random_slabs(g, 8));

    std::stringstream binary;
    write_trajectory_binary(binary, trajectory);
    const auto back = read_trajectory_binary(binary);
    CHECK(back.grid == g);
    REQUIRE(back.levels.size() == trajectory.levels.size());
    for (std::size_t i = 0; i < back.levels.size(); ++i) {
        CHECK(back.levels[i].level == trajectory.levels[i].level);
        CHECK(back.levels[i].values == trajectory.levels[i].values);
    }

    std::stringstream csv;
    write_trajectory_csv(csv, trajectory);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "level,t,flat_index,value");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        int level = 0;
        double t = 0.0;
        std::size_t flat = 0;
        double value = 0.0;
        REQUIRE(std::sscanf(line.c_str(), "%d,%lf,%zu,%lf", &level, &t, &flat, &value) == 4);
        REQUIRE(value == trajectory.at_level(level).values[flat - 1]);
        REQUIRE(t == doctest::Approx(g.time_at(level)));
        ++rows;
    }
    CHECK(rows == trajectory.levels.size() * g.lattice_size());

    std::stringstream junk("not a trajectory");
    CHECK_THROWS(read_trajectory_binary(junk));
}

TEST_CASE("sampled noise is reproducible")
{
    auto run = make_run(GridSpec{1, 8, 4, 1.0}, SchemeKind::Implicit, Coefficient::constant(1.0),
                        Coefficient::constant(0.0), InitialCondition::zero());
    run.seed = 42;
    const auto a = sample_noise(run);
    const auto b = sample_noise(run);
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].values == b[i].values);
    run.seed = 43;
    CHECK(sample_noise(run)[0].values != a[0].values);
}
