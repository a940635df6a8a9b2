#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <iostream>
#include <string>
#include <unistd.h>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "spde/config.hpp"
#include "spde/green.hpp"
#include "spde/noise.hpp"
#include "spde/schemes.hpp"
#include "spde/study.hpp"

namespace spde {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out;
};

void setup_logging()
{
    const char* env = std::getenv("SPDE_LAB_LOG");
    const std::string level = env ? env : "error";
    auto logger = spdlog::get("spde_lab");
    if (!logger) logger = spdlog::stderr_color_mt("spde_lab");
    spdlog::set_default_logger(logger);
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else throw ConfigError("SPDE_LAB_LOG must be error, info or debug, got '" + level + "'");
}

RunConfig load_config(const Options& opt)
{
    RunConfig config = opt.config_path.empty() ? RunConfig::parse("") : RunConfig::load(opt.config_path);
    for (const auto& assignment : opt.overrides) config.set(assignment);
    if (opt.seed) config.set("run.seed=" + std::to_string(*opt.seed));
    if (opt.threads) config.set("run.threads=" + std::to_string(*opt.threads));
    if (!opt.out.empty()) config.set("run.out=" + opt.out);
    return config;
}

/// Output files are written next to their target and renamed once every
/// file of the command has been written.
class OutputBatch {
public:
    explicit OutputBatch(fs::path dir) : dir_(std::move(dir)) {}
    OutputBatch(const OutputBatch&) = delete;
    OutputBatch& operator=(const OutputBatch&) = delete;

    ~OutputBatch()
    {
        std::error_code ec;
        for (const auto& [tmp, target] : files_) fs::remove(tmp, ec);
    }

    void add(const std::string& name, const std::function<void(std::ostream&)>& write, bool binary = false)
    {
        fs::create_directories(dir_);
        const fs::path target = dir_ / name;
        const fs::path tmp = dir_ / ("." + name + ".tmp" + std::to_string(::getpid()));
        files_.emplace_back(tmp, target);
        std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        write(out);
        out.close();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }

    void commit()
    {
        for (const auto& [tmp, target] : files_) fs::rename(tmp, target);
        files_.clear();
    }

private:
    fs::path dir_;
    std::vector<std::pair<fs::path, fs::path>> files_;
};

int cmd_solve(const RunConfig& config)
{
    const auto run = config.scheme_run();
    const auto format = config.trajectory_format();
    const Scheme scheme(run);
    const auto slabs = sample_noise(run);
    const auto trajectory = scheme.run(slabs);

    OutputBatch batch(config.out_dir());
    if (format == TrajectoryFormat::Csv)
        batch.add("trajectory.csv", [&](std::ostream& out) { write_trajectory_csv(out, trajectory); });
    else
        batch.add("trajectory.bin", [&](std::ostream& out) { write_trajectory_binary(out, trajectory); }, true);
    batch.commit();

    std::printf("level,t,sup_norm\n");
    for (const auto& field : trajectory.levels)
        std::printf("%d,%.10g,%.10g\n", field.level, run.grid.time_at(field.level), field.sup_norm());
    return kExitOk;
}

int cmd_study(const RunConfig& config)
{
    const auto plan = config.study_plan();
    const auto report = run_study(plan);
    OutputBatch batch(config.out_dir());
    batch.add("study_report.csv", [&](std::ostream& out) { write_report_csv(out, report); });
    batch.add("study_plot.csv", [&](std::ostream& out) { write_plot_data(out, report); });
    batch.commit();
    std::printf("slope_mid %.6f +- %.6f, slope_sup %.6f, theory %.6f, replicas %d, aborted %d\n",
                report.fit_mid.slope, report.fit_mid.slope_stddev, report.fit_sup.slope, report.theory,
                report.replicas, report.aborted);
    return kExitOk;
}

int cmd_green_check(const RunConfig& config)
{
    const auto check = config.green_check();
    const double alpha = config.noise().alpha;
    const auto result = check.check == "space"
                            ? rate_check_space(alpha, check.ladder, check.options)
                            : rate_check_time(alpha, check.n, check.ladder, check.kernel, check.options);
    OutputBatch batch(config.out_dir());
    batch.add("green_check.csv", [&](std::ostream& out) {
        write_rate_check_csv(out, std::span<const RateCheckResult>(&result, 1));
    });
    batch.commit();
    std::printf("%s check: slope %.6f, target %.6f, quadrature tolerance %.2e\n", result.kind.c_str(), result.slope,
                result.target_slope, result.achieved_tolerance);
    return kExitOk;
}

int cmd_noise_check(const RunConfig& config)
{
    const auto grid = config.grid();
    const auto model = config.noise();
    const auto check = check_covariance(model, grid, config.noise_check_samples(), config.seed());
    OutputBatch batch(config.out_dir());
    batch.add("noise_check.csv", [&](std::ostream& out) {
        out << "a,b,analytic,empirical,deviation_se\n";
        char line[160];
        for (Eigen::Index a = 0; a < check.analytic.rows(); ++a)
            for (Eigen::Index b = 0; b < check.analytic.cols(); ++b) {
                std::snprintf(line, sizeof(line), "%ld,%ld,%.17g,%.17g,%.17g\n", static_cast<long>(a + 1),
                              static_cast<long>(b + 1), check.analytic(a, b), check.empirical(a, b),
                              check.deviation(a, b));
                out << line;
            }
    });
    batch.commit();
    std::printf("target variance %.10g, max deviation %.4f standard errors over %zu samples\n",
                check.analytic(0, 0), check.max_deviation, check.samples);
    return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv)
{
    CLI::App app{"Finite-difference solver and convergence studies for stochastic heat equations", "spde_lab"};
    app.require_subcommand(1);
    Options opt;
    app.add_option("--config", opt.config_path, "INI configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", opt.overrides, "Override one entry, section.key=value (repeatable)");
    app.add_option("--seed", opt.seed, "Master seed (overrides run.seed)");
    app.add_option("--threads", opt.threads, "Replica threads, 0 = all cores (overrides run.threads)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--out", opt.out, "Output directory (overrides run.out)");

    std::function<int(const RunConfig&)> command;
    const auto add = [&](const char* name, const char* help, int (*fn)(const RunConfig&)) {
        app.add_subcommand(name, help)->fallthrough()->callback([&command, fn] { command = fn; });
    };
    add("solve", "Run one scheme and write the trajectory", cmd_solve);
    add("study", "Coupled-mesh Monte-Carlo convergence study", cmd_study);
    add("green-check", "Time-integrated kernel distance rates", cmd_green_check);
    add("noise-check", "Empirical covariance of sampled noise against the analytic one", cmd_noise_check);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        setup_logging();
        const auto config = load_config(opt);
        return command(config);
    } catch (const StabilityError& e) {
        std::fprintf(stderr, "stability: %s\n", e.what());
        return kExitStability;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const NumericalAbort& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return kExitNumerical;
    } catch (const StudyAborted& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return kExitNumerical;
    } catch (const IndefiniteCovariance& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
}

}  // namespace spde
