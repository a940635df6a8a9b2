#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "spde/green.hpp"
#include "spde/noise.hpp"
#include "spde/schemes.hpp"
#include "spde/study.hpp"

namespace spde {

/// Malformed, unknown or out-of-range configuration entries.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class TrajectoryFormat { Csv, Binary };

struct GreenCheckConfig {
    std::string check = "space";  // space | time
    std::vector<int> ladder{8, 16, 32, 64};
    int n = 64;                   // time check only
    KernelKind kernel = KernelKind::Implicit;
    RateCheckOptions options;
};

/**
 * INI document with the sections [grid] [noise] [coefficients] [initial]
 * [scheme] [study] [green] [noise_check] [run]. Every key is optional and
 * falls back to the documented default; unknown sections or keys are
 * rejected when the document is loaded or overridden.
 */
class RunConfig {
public:
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);

    /// Applies "section.key=value".
    void set(const std::string& assignment);

    GridSpec grid() const;
    NoiseModel noise() const;
    CoefficientSet coefficients() const;
    InitialCondition initial() const;
    SchemeRun scheme_run() const;
    TrajectoryFormat trajectory_format() const;
    StudyPlan study_plan() const;
    GreenCheckConfig green_check() const;
    std::size_t noise_check_samples() const;

    std::uint64_t seed() const;
    int threads() const;
    std::filesystem::path out_dir() const;

private:
    void check_keys() const;
    std::string text(const std::string& key, const std::string& fallback) const;
    double real(const std::string& key, double fallback) const;
    long integer(const std::string& key, long fallback) const;

    boost::property_tree::ptree tree_;
};

}  // namespace spde
