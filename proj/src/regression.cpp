#include "spde/regression.hpp"

#include <cmath>
#include <stdexcept>

namespace spde {

LineFit least_squares_line(std::span<const double> x, std::span<const double> y)
{
    const std::size_t count = x.size();
    if (count != y.size()) throw std::invalid_argument("regression: x and y differ in length");
    if (count < 2) throw std::invalid_argument("regression: need at least 2 points");

    double mean_x = 0.0;
    double mean_y = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        mean_x += x[i];
        mean_y += y[i];
    }
    mean_x /= count;
    mean_y /= count;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        sxx += (x[i] - mean_x) * (x[i] - mean_x);
        sxy += (x[i] - mean_x) * (y[i] - mean_y);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("regression: abscissae are all equal");

    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = mean_y - fit.slope * mean_x;
    if (count > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            rss += r * r;
        }
        fit.slope_stddev = std::sqrt(rss / (count - 2) / sxx);
    }
    return fit;
}

}  // namespace spde
