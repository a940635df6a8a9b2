#include "spde/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include <spdlog/spdlog.h>

namespace spde {

std::string to_string(StudyAxis axis) { return axis == StudyAxis::Time ? "time" : "space"; }

StudyAxis parse_study_axis(const std::string& text)
{
    if (text == "time") return StudyAxis::Time;
    if (text == "space") return StudyAxis::Space;
    throw std::invalid_argument("unknown study axis '" + text + "' (time|space)");
}

double theoretical_exponent(const NoiseModel& noise, StudyAxis axis, int d)
{
    if (noise.kind == NoiseKind::SpaceTimeWhite) {
        if (d != 1) throw std::invalid_argument("space-time white noise needs d = 1");
        return axis == StudyAxis::Time ? 0.5 : 1.0;
    }
    NoiseModel::riesz(noise.alpha, d).validate();
    return axis == StudyAxis::Time ? 1.0 - noise.alpha / 2.0 : 2.0 - noise.alpha;
}

LineFit loglog_regression(std::span<const double> mesh, std::span<const double> error)
{
    if (mesh.size() != error.size()) throw std::invalid_argument("regression: mesh and error differ in length");
    if (mesh.size() < 2) throw std::invalid_argument("regression: need at least 2 points");
    std::vector<double> x(mesh.size());
    std::vector<double> y(mesh.size());
    for (std::size_t i = 0; i < mesh.size(); ++i) {
        if (!(error[i] > 0.0)) throw std::invalid_argument("regression: errors must be positive");
        if (!(mesh[i] > 0.0)) throw std::invalid_argument("regression: mesh values must be positive");
        x[i] = -std::log(mesh[i]);
        y[i] = std::log(error[i]);
    }
    return least_squares_line(x, y);
}

GridSpec StudyPlan::finest_grid() const { return grid_for(finest); }

GridSpec StudyPlan::grid_for(int mesh) const
{
    return axis == StudyAxis::Time ? GridSpec{d, fixed, mesh, T, bc} : GridSpec{d, mesh, fixed, T, bc};
}

namespace {

int level_of(const GridSpec& grid, double t)
{
    const double s = t * grid.m / grid.T;
    const double rounded = std::round(s);
    if (std::abs(s - rounded) > 1e-9 * std::max(1.0, s))
        throw std::invalid_argument("study: t* = " + std::to_string(t) + " is not a time level of m = "
                                    + std::to_string(grid.m));
    return static_cast<int>(rounded);
}

}  // namespace

void StudyPlan::validate() const
{
    if (finest < 1 || fixed < 1) throw std::invalid_argument("study: finest and fixed meshes must be positive");
    if (replicas < 1) throw std::invalid_argument("study: need at least one replica");
    if (threads < 0) throw std::invalid_argument("study: threads must be >= 0");
    if (!(t_star > 0.0 && t_star <= T)) throw std::invalid_argument("study: t* must lie in (0, T]");
    if (!x_star.empty()) {
        if (static_cast<int>(x_star.size()) != d) throw std::invalid_argument("study: x* has wrong dimension");
        for (double v : x_star)
            if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("study: x* outside [0,1]^d");
    }
    noise.validate();
    if (noise.d != d) throw std::invalid_argument("study: noise dimension differs from d");
    int fitted = 0;
    for (int mesh : ladder) {
        if (mesh < 1 || finest % mesh != 0)
            throw std::invalid_argument("study: ladder entry " + std::to_string(mesh) + " does not divide "
                                        + std::to_string(finest));
        if (mesh != finest) ++fitted;
    }
    if (fitted < 2) throw std::invalid_argument("study: regression needs at least 2 ladder entries below the finest mesh");

    std::vector<int> meshes(ladder);
    meshes.push_back(finest);
    for (int mesh : meshes) {
        SchemeRun run;
        run.grid = grid_for(mesh);
        run.coefficients = coefficients;
        run.initial = initial;
        run.noise = noise;
        run.kind = scheme;
        run.q = q;
        run.validate();
        level_of(run.grid, t_star);
    }
}

StudyAborted::StudyAborted(int a, int r)
    : std::runtime_error(std::to_string(a) + " of " + std::to_string(r) + " replicas aborted (limit 1%)"),
      aborted(a), replicas(r)
{
}

namespace {

/// Everything a replica needs, shared read-only across workers.
struct StudySetup {
    GridSpec finest;
    std::vector<GridSpec> grids;  // one per ladder entry
    std::vector<Scheme> schemes;  // ladder entries, then the finest mesh
    std::vector<int> levels;      // t* level, same order as schemes
    std::vector<double> x_star;
    std::vector<std::vector<double>> sup_points;
    bool deterministic = false;
    // offsets into the per-replica record
    std::size_t points = 0;
    std::vector<std::size_t> moment_offset;  // per scheme
    std::size_t record_size = 0;
};

SchemeRun make_run(const StudyPlan& plan, const GridSpec& grid)
{
    SchemeRun run;
    run.grid = grid;
    run.coefficients = plan.coefficients;
    run.initial = plan.initial;
    run.noise = plan.noise;
    run.kind = plan.scheme;
    run.q = plan.q;
    run.seed = plan.seed;
    return run;
}

StudySetup make_setup(const StudyPlan& plan)
{
    StudySetup s;
    s.finest = plan.finest_grid();
    for (int mesh : plan.ladder) s.grids.push_back(plan.grid_for(mesh));
    for (const auto& g : s.grids) s.schemes.emplace_back(make_run(plan, g));
    s.schemes.emplace_back(make_run(plan, s.finest));
    for (const auto& scheme : s.schemes) s.levels.push_back(level_of(scheme.config().grid, plan.t_star));
    s.x_star = plan.x_star.empty() ? std::vector<double>(plan.d, 0.5) : plan.x_star;

    // sup-over-x points: the lattice of the coarsest ladder entry
    GridSpec coarsest = s.grids.front();
    for (const auto& g : s.grids)
        if (g.lattice_size() < coarsest.lattice_size()) coarsest = g;
    for (std::size_t i = 0; i < coarsest.lattice_size(); ++i) s.sup_points.push_back(coarsest.point(i));
    s.points = s.sup_points.size();

    const auto& sigma = plan.coefficients.sigma;
    s.deterministic = sigma.family == Coefficient::Family::Constant && sigma.a == 0.0;

    // record: per entry [mid, points...], then per scheme its lattice of u^2
    std::size_t offset = s.grids.size() * (1 + s.points);
    for (const auto& scheme : s.schemes) {
        s.moment_offset.push_back(offset);
        offset += scheme.config().grid.lattice_size();
    }
    s.record_size = offset;
    return s;
}

/// Fills one replica's record; returns false on a numerical abort.
bool run_replica(const StudyPlan& plan, const StudySetup& s, const CovarianceFactor* factor, int replica,
                 std::vector<double>& record)
{
    std::vector<NoiseSlab> fine;
    if (s.deterministic) {
        fine = zero_path(s.finest);
    } else {
        RngStream rng(plan.seed, static_cast<std::uint64_t>(replica));
        fine = sample_path(*factor, rng);
    }
    try {
        const std::size_t entries = s.grids.size();
        const Scheme& reference = s.schemes.back();
        const auto u_ref = reference.run_until(fine, s.levels.back());
        const double ref_mid = u_ref.at(s.x_star);
        std::vector<double> ref_points(s.points);
        for (std::size_t p = 0; p < s.points; ++p) ref_points[p] = u_ref.at(s.sup_points[p]);

        for (std::size_t e = 0; e < entries; ++e) {
            const auto& grid = s.grids[e];
            LatticeField u;
            if (grid == s.finest) {
                u = u_ref;
            } else {
                const auto coarse = aggregate(fine, s.finest, grid);
                u = s.schemes[e].run_until(coarse, s.levels[e]);
            }
            double* slot = record.data() + e * (1 + s.points);
            const double mid = u.at(s.x_star) - ref_mid;
            slot[0] = mid * mid;
            for (std::size_t p = 0; p < s.points; ++p) {
                const double diff = u.at(s.sup_points[p]) - ref_points[p];
                slot[1 + p] = diff * diff;
            }
            for (std::size_t i = 0; i < u.values.size(); ++i)
                record[s.moment_offset[e] + i] = u.values[i] * u.values[i];
        }
        for (std::size_t i = 0; i < u_ref.values.size(); ++i)
            record[s.moment_offset.back() + i] = u_ref.values[i] * u_ref.values[i];
    } catch (const NumericalAbort& abort) {
        spdlog::debug("replica {} aborted at level {}", replica, abort.level);
        return false;
    }
    return true;
}

struct Moments {
    double mean = 0.0;
    double stderr_ = 0.0;
};

Moments column_moments(const std::vector<std::vector<double>>& records, const std::vector<char>& ok,
                       std::size_t column)
{
    double sum = 0.0;
    int count = 0;
    for (std::size_t r = 0; r < records.size(); ++r)
        if (ok[r]) {
            sum += records[r][column];
            ++count;
        }
    Moments out;
    if (count == 0) return out;
    out.mean = sum / count;
    if (count > 1) {
        double ss = 0.0;
        for (std::size_t r = 0; r < records.size(); ++r)
            if (ok[r]) ss += (records[r][column] - out.mean) * (records[r][column] - out.mean);
        out.stderr_ = std::sqrt(ss / (count - 1) / count);
    }
    return out;
}

}  // namespace

ConvergenceReport run_study(const StudyPlan& plan)
{
    plan.validate();
    const StudySetup setup = make_setup(plan);
    std::optional<CovarianceFactor> factor;
    if (!setup.deterministic) factor.emplace(build_covariance(plan.noise, setup.finest));

    const int K = plan.replicas;
    std::vector<std::vector<double>> records(K, std::vector<double>(setup.record_size, 0.0));
    std::vector<char> ok(K, 0);

    int workers = plan.threads > 0 ? plan.threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, K);
    spdlog::info("study: axis={} replicas={} threads={}", to_string(plan.axis), K, workers);

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto work = [&] {
        for (int r = next++; r < K; r = next++) {
            try {
                ok[r] = run_replica(plan, setup, factor ? &*factor : nullptr, r, records[r]) ? 1 : 0;
            } catch (...) {
                const std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = K;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    ConvergenceReport report;
    report.axis = plan.axis;
    report.noise = plan.noise;
    report.replicas = K;
    report.seed = plan.seed;
    report.aborted = static_cast<int>(std::count(ok.begin(), ok.end(), 0));
    if (report.aborted * 100 > K) throw StudyAborted(report.aborted, K);
    report.theory = theoretical_exponent(plan.noise, plan.axis, plan.d);

    const auto second_moment_sup = [&](std::size_t scheme_index) {
        const std::size_t size = setup.schemes[scheme_index].config().grid.lattice_size();
        double best = 0.0;
        for (std::size_t i = 0; i < size; ++i)
            best = std::max(best, column_moments(records, ok, setup.moment_offset[scheme_index] + i).mean);
        return best;
    };

    std::vector<double> mesh;
    std::vector<double> mid;
    std::vector<double> sup;
    for (std::size_t e = 0; e < setup.grids.size(); ++e) {
        LadderEntry entry;
        entry.mesh = plan.ladder[e];
        entry.in_fit = entry.mesh != plan.finest;
        const std::size_t base = e * (1 + setup.points);
        const auto m = column_moments(records, ok, base);
        entry.error_mid = m.mean;
        entry.stderr_mid = m.stderr_;
        for (std::size_t p = 0; p < setup.points; ++p) {
            const auto s = column_moments(records, ok, base + 1 + p);
            if (p == 0 || s.mean > entry.error_sup) {
                entry.error_sup = s.mean;
                entry.stderr_sup = s.stderr_;
            }
        }
        entry.second_moment_sup = second_moment_sup(e);
        if (entry.in_fit) {
            mesh.push_back(entry.mesh);
            mid.push_back(entry.error_mid);
            sup.push_back(entry.error_sup);
        }
        report.entries.push_back(entry);
    }
    report.finest_second_moment_sup = second_moment_sup(setup.schemes.size() - 1);
    report.fit_mid = loglog_regression(mesh, mid);
    report.fit_sup = loglog_regression(mesh, sup);
    return report;
}

void write_report_csv(std::ostream& out, const ConvergenceReport& report)
{
    out << "axis,alpha_or_white,mesh,error_mid,stderr_mid,error_sup,stderr_sup,slope_mid,slope_sup,slope_stddev,"
           "theory_exponent,replicas,aborted,seed\n";
    const std::string axis = to_string(report.axis);
    char noise[32];
    if (report.noise.kind == NoiseKind::SpaceTimeWhite)
        std::snprintf(noise, sizeof(noise), "white");
    else
        std::snprintf(noise, sizeof(noise), "%.17g", report.noise.alpha);
    char buffer[512];
    for (const auto& e : report.entries) {
        std::snprintf(buffer, sizeof(buffer),
                      "%s,%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%llu\n", axis.c_str(), noise,
                      e.mesh, e.error_mid, e.stderr_mid, e.error_sup, e.stderr_sup, report.fit_mid.slope,
                      report.fit_sup.slope, report.fit_mid.slope_stddev, report.theory, report.replicas,
                      report.aborted, static_cast<unsigned long long>(report.seed));
        out << buffer;
    }
    std::snprintf(buffer, sizeof(buffer), "%s,%s,summary,,,,,%.17g,%.17g,%.17g,%.17g,%d,%d,%llu\n", axis.c_str(),
                  noise, report.fit_mid.slope, report.fit_sup.slope, report.fit_mid.slope_stddev, report.theory,
                  report.replicas, report.aborted, static_cast<unsigned long long>(report.seed));
    out << buffer;
}

void write_plot_data(std::ostream& out, const ConvergenceReport& report)
{
    out << "mesh,ln_mesh,ln_error_mid,ln_error_sup\n";
    char buffer[160];
    for (const auto& e : report.entries) {
        if (!e.in_fit) continue;
        std::snprintf(buffer, sizeof(buffer), "%d,%.17g,%.17g,%.17g\n", e.mesh, std::log(e.mesh),
                      std::log(e.error_mid), std::log(e.error_sup));
        out << buffer;
    }
}

}  // namespace spde
