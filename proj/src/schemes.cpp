#include "spde/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace spde {

Coefficient Coefficient::parse(const std::string& text)
{
    std::istringstream in(text);
    std::string family;
    in >> family;
    double a = 0.0;
    double b = 0.0;
    if (family == "constant") {
        if (!(in >> a)) throw std::invalid_argument("coefficient 'constant' needs one value: " + text);
        return constant(a);
    }
    if (family == "affine" || family == "cosine") {
        if (!(in >> a >> b)) throw std::invalid_argument("coefficient '" + family + "' needs two values: " + text);
        return family == "affine" ? affine(a, b) : cosine(a, b);
    }
    throw std::invalid_argument("unknown coefficient family in '" + text + "' (constant|affine|cosine)");
}

double Coefficient::operator()(double u) const
{
    switch (family) {
    case Family::Constant: return a;
    case Family::Affine: return a * u + b;
    case Family::Cosine: return a + b * std::cos(u);
    }
    return 0.0;
}

double Coefficient::lipschitz_bound() const
{
    return family == Family::Constant ? 0.0 : std::max(std::abs(a), std::abs(b));
}

std::string Coefficient::describe() const
{
    std::ostringstream out;
    switch (family) {
    case Family::Constant: out << "constant " << a; break;
    case Family::Affine: out << "affine " << a << ' ' << b; break;
    case Family::Cosine: out << "cosine " << a << ' ' << b; break;
    }
    return out.str();
}

InitialCondition::Family InitialCondition::parse_family(const std::string& text)
{
    if (text == "zero") return Family::Zero;
    if (text == "sine_product") return Family::SineProduct;
    if (text == "bump") return Family::Bump;
    if (text == "table") return Family::Table;
    throw std::invalid_argument("unknown initial condition '" + text + "' (zero|sine_product|bump|table)");
}

double InitialCondition::operator()(std::span<const double> x) const
{
    double value = amplitude;
    switch (family) {
    case Family::Zero: return 0.0;
    case Family::SineProduct:
        for (double xi : x) value *= std::sin(std::numbers::pi * xi);
        return value;
    case Family::Bump:
        for (double xi : x) value *= xi * (1.0 - xi);
        return value;
    case Family::Table: break;
    }
    throw std::logic_error("tabulated initial condition has no pointwise value");
}

LatticeField InitialCondition::sample(const GridSpec& grid) const
{
    if (family == Family::Table) return LatticeField(grid, 0, table);
    LatticeField field(grid, 0);
    for (std::size_t i = 0; i < field.values.size(); ++i) field.values[i] = (*this)(grid.point(i));
    return field;
}

std::string to_string(SchemeKind kind) { return kind == SchemeKind::Implicit ? "implicit" : "explicit"; }

SchemeKind parse_scheme_kind(const std::string& text)
{
    if (text == "implicit") return SchemeKind::Implicit;
    if (text == "explicit") return SchemeKind::Explicit;
    throw std::invalid_argument("unknown scheme '" + text + "' (implicit|explicit)");
}

namespace {

std::string stability_message(double ratio, double q)
{
    std::ostringstream msg;
    msg << "explicit scheme unstable: n^2 T / m = " << ratio << " but n^2 T / m <= q < 1/2 is required (q = " << q
        << ")";
    return msg.str();
}

}  // namespace

StabilityError::StabilityError(double r, double qq) : std::domain_error(stability_message(r, qq)), ratio(r), q(qq) {}

NumericalAbort::NumericalAbort(int lvl)
    : std::runtime_error("non-finite solution value at time level " + std::to_string(lvl)), level(lvl)
{
}

void check_explicit_stability(const GridSpec& grid, double q)
{
    const double ratio = static_cast<double>(grid.n) * grid.n * grid.T / grid.m;
    if (!(q < 0.5) || !(ratio <= q)) throw StabilityError(ratio, q);
}

double SchemeRun::stability_ratio() const { return static_cast<double>(grid.n) * grid.n * grid.T / grid.m; }

void SchemeRun::validate() const
{
    grid.validate();
    if (kind == SchemeKind::Explicit) check_explicit_stability(grid, q);
    noise.validate();
    if (noise.d != grid.d) throw std::invalid_argument("run: noise dimension differs from grid dimension");
    if (initial.family == InitialCondition::Family::Table && initial.table.size() != grid.lattice_size())
        throw std::invalid_argument("run: initial table has " + std::to_string(initial.table.size())
                                    + " values, lattice needs " + std::to_string(grid.lattice_size()));
    for (int level : recorded_levels)
        if (level < 0 || level > grid.m)
            throw std::invalid_argument("run: recorded level " + std::to_string(level) + " outside 0..m");
    if (grid.bc == Boundary::Dirichlet && initial.family != InitialCondition::Family::Table) {
        // u_0 must vanish on the boundary; test the corners of the unit cube
        std::vector<double> corner(grid.d);
        for (unsigned c = 0; c < (1u << grid.d); ++c) {
            for (int j = 0; j < grid.d; ++j) corner[j] = (c >> j) & 1u;
            if (std::abs(initial(corner)) > 1e-12)
                throw std::invalid_argument("run: initial condition does not vanish on the boundary");
        }
    }
}

const LatticeField& Trajectory::at_level(int level) const
{
    for (const auto& f : levels)
        if (f.level == level) return f;
    throw std::out_of_range("trajectory: level " + std::to_string(level) + " was not recorded");
}

double Trajectory::value_at(double t, std::span<const double> x) const
{
    if (!(t >= 0.0 && t <= grid.T)) throw std::out_of_range("trajectory: time outside [0,T]");
    const double s = t * grid.m / grid.T;
    const int lower = std::min(static_cast<int>(std::floor(s)), grid.m);
    const double theta = s - lower;
    const double v0 = at_level(lower).at(x);
    if (theta == 0.0 || lower == grid.m) return v0;
    return (1.0 - theta) * v0 + theta * at_level(lower + 1).at(x);
}

Scheme::Scheme(SchemeRun run) : run_((run.validate(), std::move(run))), op_(run_.grid) {}

void Scheme::advance(std::vector<double>& u, std::span<const double> slab, int level,
                     std::vector<double>& scratch) const
{
    const std::size_t size = u.size();
    if (slab.size() != size) throw std::invalid_argument("scheme: noise slab does not match the lattice");
    const double tau = run_.grid.time_step();
    const auto& sigma = run_.coefficients.sigma;
    const auto& drift = run_.coefficients.drift;
    scratch.resize(size);
    if (run_.kind == SchemeKind::Implicit) {
        for (std::size_t i = 0; i < size; ++i) scratch[i] = u[i] + tau * (sigma(u[i]) * slab[i] + drift(u[i]));
        op_.implicit_solve(scratch, u);
    } else {
        op_.explicit_apply(u, scratch);
        for (std::size_t i = 0; i < size; ++i) scratch[i] += tau * (sigma(u[i]) * slab[i] + drift(u[i]));
        u.swap(scratch);
    }
    for (double v : u)
        if (!std::isfinite(v)) throw NumericalAbort(level + 1);
}

LatticeField Scheme::step(const LatticeField& u, const NoiseSlab& slab) const
{
    LatticeField next(run_.grid, u.level + 1);
    next.values = u.values;
    std::vector<double> scratch;
    advance(next.values, slab.values, u.level, scratch);
    return next;
}

Trajectory Scheme::run(std::span<const NoiseSlab> slabs) const
{
    const int m = run_.grid.m;
    if (static_cast<int>(slabs.size()) != m)
        throw std::invalid_argument("scheme: expected " + std::to_string(m) + " noise slabs");
    std::vector<bool> keep(m + 1, run_.recorded_levels.empty());
    for (int level : run_.recorded_levels) keep[level] = true;

    Trajectory out{run_.grid, {}};
    auto u = run_.initial.sample(run_.grid).values;
    if (keep[0]) out.levels.emplace_back(run_.grid, 0, u);
    std::vector<double> scratch;
    for (int i = 0; i < m; ++i) {
        advance(u, slabs[i].values, i, scratch);
        if (keep[i + 1]) out.levels.emplace_back(run_.grid, i + 1, u);
    }
    return out;
}

LatticeField Scheme::run_until(std::span<const NoiseSlab> slabs, int level) const
{
    if (level < 0 || level > run_.grid.m || static_cast<int>(slabs.size()) < level)
        throw std::invalid_argument("scheme: not enough noise slabs for level " + std::to_string(level));
    auto u = run_.initial.sample(run_.grid).values;
    std::vector<double> scratch;
    for (int i = 0; i < level; ++i) advance(u, slabs[i].values, i, scratch);
    return LatticeField(run_.grid, level, std::move(u));
}

LatticeField Scheme::run_final(std::span<const NoiseSlab> slabs) const
{
    if (static_cast<int>(slabs.size()) != run_.grid.m)
        throw std::invalid_argument("scheme: expected " + std::to_string(run_.grid.m) + " noise slabs");
    return run_until(slabs, run_.grid.m);
}

LatticeField step_implicit(const LatticeField& u, const NoiseSlab& slab, const SchemeRun& run)
{
    SchemeRun r = run;
    r.kind = SchemeKind::Implicit;
    return Scheme(r).step(u, slab);
}

LatticeField step_explicit(const LatticeField& u, const NoiseSlab& slab, const SchemeRun& run)
{
    SchemeRun r = run;
    r.kind = SchemeKind::Explicit;
    return Scheme(r).step(u, slab);
}

Trajectory run_scheme(const SchemeRun& run, std::span<const NoiseSlab> slabs) { return Scheme(run).run(slabs); }

std::vector<NoiseSlab> zero_path(const GridSpec& grid)
{
    std::vector<NoiseSlab> path(grid.m);
    for (int i = 0; i < grid.m; ++i) path[i] = {i, std::vector<double>(grid.lattice_size(), 0.0)};
    return path;
}

std::vector<NoiseSlab> sample_noise(const SchemeRun& run)
{
    const auto factor = build_covariance(run.noise, run.grid);
    RngStream rng(run.seed, 0);
    return sample_path(factor, rng);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory)
{
    out << "level,t,flat_index,value\n";
    char buffer[96];
    for (const auto& field : trajectory.levels) {
        const double t = trajectory.grid.time_at(field.level);
        for (std::size_t i = 0; i < field.values.size(); ++i) {
            std::snprintf(buffer, sizeof(buffer), "%d,%.17g,%zu,%.17g\n", field.level, t, i + 1, field.values[i]);
            out << buffer;
        }
    }
}

namespace {

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
    if (!in) throw std::runtime_error("trajectory file truncated");
    return value;
}

constexpr char kTrajectoryMagic[8] = {'S', 'P', 'D', 'E', 'T', 'R', 'J', '1'};

}  // namespace

void write_trajectory_binary(std::ostream& out, const Trajectory& trajectory)
{
    const auto& g = trajectory.grid;
    out.write(kTrajectoryMagic, sizeof(kTrajectoryMagic));
    put<std::int32_t>(out, g.d);
    put<std::int32_t>(out, g.n);
    put<std::int32_t>(out, g.m);
    put<std::int32_t>(out, g.bc == Boundary::Dirichlet ? 0 : 1);
    put<double>(out, g.T);
    put<std::uint64_t>(out, trajectory.levels.size());
    put<std::uint64_t>(out, g.lattice_size());
    for (const auto& f : trajectory.levels) put<std::int32_t>(out, f.level);
    for (const auto& f : trajectory.levels)
        out.write(reinterpret_cast<const char*>(f.values.data()),
                  static_cast<std::streamsize>(f.values.size() * sizeof(double)));
}

Trajectory read_trajectory_binary(std::istream& in)
{
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kTrajectoryMagic, sizeof(magic)) != 0)
        throw std::runtime_error("not a trajectory file");
    Trajectory t;
    t.grid.d = get<std::int32_t>(in);
    t.grid.n = get<std::int32_t>(in);
    t.grid.m = get<std::int32_t>(in);
    t.grid.bc = get<std::int32_t>(in) == 0 ? Boundary::Dirichlet : Boundary::Neumann;
    t.grid.T = get<double>(in);
    const auto count = get<std::uint64_t>(in);
    const auto size = get<std::uint64_t>(in);
    if (size != t.grid.lattice_size()) throw std::runtime_error("trajectory header is inconsistent");
    std::vector<int> ids(count);
    for (auto& id : ids) id = get<std::int32_t>(in);
    for (int id : ids) {
        std::vector<double> values(size);
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(size * sizeof(double)));
        if (!in) throw std::runtime_error("trajectory file truncated");
        t.levels.emplace_back(t.grid, id, std::move(values));
    }
    return t;
}

}  // namespace spde
