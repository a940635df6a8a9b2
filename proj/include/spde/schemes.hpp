#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spde/lattice.hpp"
#include "spde/noise.hpp"
#include "spde/operators.hpp"

namespace spde {

/// sigma or b as a function of u: constant c, affine a u + b, or a + b cos(u).
struct Coefficient {
    enum class Family { Constant, Affine, Cosine };

    Family family = Family::Constant;
    double a = 0.0;
    double b = 0.0;

    static Coefficient constant(double c) { return {Family::Constant, c, 0.0}; }
    static Coefficient affine(double slope, double intercept) { return {Family::Affine, slope, intercept}; }
    static Coefficient cosine(double base, double amplitude) { return {Family::Cosine, base, amplitude}; }
    /// "constant C", "affine A B" or "cosine A B".
    static Coefficient parse(const std::string& text);

    double operator()(double u) const;
    /// Global Lipschitz constant max(|a|, |b|) (0 for constants).
    double lipschitz_bound() const;
    std::string describe() const;
};

struct CoefficientSet {
    Coefficient sigma = Coefficient::constant(0.0);
    Coefficient drift = Coefficient::constant(0.0);
};

struct InitialCondition {
    enum class Family { Zero, SineProduct, Bump, Table };

    Family family = Family::Zero;
    /// Multiplies prod sin(pi x_j) or prod x_j (1 - x_j).
    double amplitude = 1.0;
    /// Lattice values in flattened order (Table only).
    std::vector<double> table;

    static InitialCondition zero() { return {}; }
    static InitialCondition sine_product(double amplitude = 1.0) { return {Family::SineProduct, amplitude, {}}; }
    static InitialCondition bump(double amplitude = 1.0) { return {Family::Bump, amplitude, {}}; }
    static InitialCondition from_table(std::vector<double> values) { return {Family::Table, 1.0, std::move(values)}; }
    static Family parse_family(const std::string& text);

    /// Pointwise value; not defined for tables.
    double operator()(std::span<const double> x) const;
    LatticeField sample(const GridSpec& grid) const;
};

enum class SchemeKind { Implicit, Explicit };

std::string to_string(SchemeKind kind);
SchemeKind parse_scheme_kind(const std::string& text);

inline constexpr double kDefaultStabilityQ = 0.45;

/// Explicit run rejected because n^2 T / m exceeds q (or q >= 1/2).
class StabilityError : public std::domain_error {
public:
    StabilityError(double ratio, double q);
    double ratio;
    double q;
};

/// Non-finite solution values; the offending level is reported.
class NumericalAbort : public std::runtime_error {
public:
    explicit NumericalAbort(int level);
    int level;
};

/// Throws StabilityError unless n^2 T / m <= q < 1/2.
void check_explicit_stability(const GridSpec& grid, double q = kDefaultStabilityQ);

struct SchemeRun {
    GridSpec grid;
    CoefficientSet coefficients;
    InitialCondition initial;
    NoiseModel noise;
    SchemeKind kind = SchemeKind::Implicit;
    std::uint64_t seed = 0;
    /// Levels kept in the trajectory; empty keeps all of 0..m.
    std::vector<int> recorded_levels;
    double q = kDefaultStabilityQ;

    double stability_ratio() const;
    /// Cheap checks only; runs before any operator or covariance is built.
    void validate() const;
};

/// Recorded time levels of one run.
struct Trajectory {
    GridSpec grid;
    std::vector<LatticeField> levels;

    const LatticeField& at_level(int level) const;
    /// Linear in time between adjacent recorded levels, multilinear in space.
    double value_at(double t, std::span<const double> x) const;
};

class Scheme {
public:
    explicit Scheme(SchemeRun run);

    const SchemeRun& config() const { return run_; }
    const StepOperator& op() const { return op_; }

    /// u_{i+1} from u_i and the level-i noise slab.
    LatticeField step(const LatticeField& u, const NoiseSlab& slab) const;
    /// In-place variant for hot loops; `scratch` is resized as needed.
    void advance(std::vector<double>& u, std::span<const double> slab, int level, std::vector<double>& scratch) const;

    Trajectory run(std::span<const NoiseSlab> slabs) const;
    /// Solution at the final level only.
    LatticeField run_final(std::span<const NoiseSlab> slabs) const;
    /// Solution at `level` using the first `level` slabs.
    LatticeField run_until(std::span<const NoiseSlab> slabs, int level) const;

private:
    SchemeRun run_;
    StepOperator op_;
};

LatticeField step_implicit(const LatticeField& u, const NoiseSlab& slab, const SchemeRun& run);
LatticeField step_explicit(const LatticeField& u, const NoiseSlab& slab, const SchemeRun& run);
Trajectory run_scheme(const SchemeRun& run, std::span<const NoiseSlab> slabs);

/// m slabs of zeros, for deterministic runs.
std::vector<NoiseSlab> zero_path(const GridSpec& grid);
/// Samples the run's noise from (seed, stream 0).
std::vector<NoiseSlab> sample_noise(const SchemeRun& run);

/// CSV columns: level,t,flat_index,value (flat_index 1-based).
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);
/// "SPDETRJ1", int32 d,n,m,bc, float64 T, uint64 levels, uint64 size,
/// int32 level ids, float64 values level-major; little-endian.
void write_trajectory_binary(std::ostream& out, const Trajectory& trajectory);
Trajectory read_trajectory_binary(std::istream& in);

}  // namespace spde
