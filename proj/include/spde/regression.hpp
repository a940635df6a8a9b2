#pragma once

#include <span>

namespace spde {

/// Ordinary least-squares line y = slope x + intercept.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    /// Standard error of the slope; 0 for two points or an exact fit.
    double slope_stddev = 0.0;
};

/// Throws std::invalid_argument for fewer than two points, mismatched sizes
/// or identical abscissae.
LineFit least_squares_line(std::span<const double> x, std::span<const double> y);

}  // namespace spde
