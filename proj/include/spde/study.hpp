#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spde/lattice.hpp"
#include "spde/noise.hpp"
#include "spde/regression.hpp"
#include "spde/schemes.hpp"

namespace spde {

enum class StudyAxis { Time, Space };

std::string to_string(StudyAxis axis);
StudyAxis parse_study_axis(const std::string& text);

/// Mean-square rate: 1 - alpha/2 (time) or 2 - alpha (space) for Riesz
/// noise, 1/2 and 1 for space-time white noise (d = 1 only).
double theoretical_exponent(const NoiseModel& noise, StudyAxis axis, int d);

/**
 * Least squares of ln(error) against -ln(mesh), so a positive slope means
 * the error decreases as the mesh count grows; errors = C mesh^{-p} gives
 * slope p. Throws std::invalid_argument on fewer than 2 points or a
 * non-positive error.
 */
LineFit loglog_regression(std::span<const double> mesh, std::span<const double> error);

/**
 * Coupled-mesh Monte-Carlo study along one axis.
 *
 * Time axis: fixed n = `fixed`, finest m_0 = `finest`, ladder of m_i.
 * Space axis: fixed m = `fixed`, finest n_0 = `finest`, ladder of n_i.
 * Every ladder entry divides `finest`.
 */
struct StudyPlan {
    StudyAxis axis = StudyAxis::Time;
    int d = 1;
    Boundary bc = Boundary::Dirichlet;
    double T = 1.0;
    int finest = 0;
    int fixed = 0;
    std::vector<int> ladder;
    int replicas = 100;
    /// Evaluation time; must be a time level of every mesh involved.
    double t_star = 1.0;
    /// Evaluation point; empty means the centre of the cube.
    std::vector<double> x_star;
    NoiseModel noise;
    CoefficientSet coefficients;
    InitialCondition initial;
    SchemeKind scheme = SchemeKind::Implicit;
    double q = kDefaultStabilityQ;
    std::uint64_t seed = 0;
    /// Worker threads; 0 uses the hardware concurrency.
    int threads = 0;

    GridSpec finest_grid() const;
    GridSpec grid_for(int mesh) const;
    /// Throws std::invalid_argument or StabilityError before any sampling.
    void validate() const;
};

struct LadderEntry {
    int mesh = 0;
    double error_mid = 0.0;
    double stderr_mid = 0.0;
    double error_sup = 0.0;
    double stderr_sup = 0.0;
    /// max over the lattice of the estimated E|u(t*, x)|^2 on this mesh.
    double second_moment_sup = 0.0;
    /// false for entries equal to the finest mesh (error exactly 0).
    bool in_fit = true;
};

struct ConvergenceReport {
    StudyAxis axis = StudyAxis::Time;
    NoiseModel noise;
    std::vector<LadderEntry> entries;
    /// Same statistic on the reference (finest) mesh.
    double finest_second_moment_sup = 0.0;
    LineFit fit_mid;
    LineFit fit_sup;
    double theory = 0.0;
    int replicas = 0;
    int aborted = 0;
    std::uint64_t seed = 0;
};

/// More than 1% of the replicas hit a NumericalAbort.
class StudyAborted : public std::runtime_error {
public:
    StudyAborted(int aborted, int replicas);
    int aborted;
    int replicas;
};

ConvergenceReport run_study(const StudyPlan& plan);

/// One row per ladder entry plus a final summary row (mesh = "summary").
void write_report_csv(std::ostream& out, const ConvergenceReport& report);
/// Columns: mesh,ln_mesh,ln_error_mid,ln_error_sup for the fitted entries.
void write_plot_data(std::ostream& out, const ConvergenceReport& report);

}  // namespace spde
