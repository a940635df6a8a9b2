#include "spde/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

namespace spde {

namespace {

const std::map<std::string, std::set<std::string>>& schema()
{
    static const std::map<std::string, std::set<std::string>> keys{
        {"grid", {"d", "n", "m", "T", "bc"}},
        {"noise", {"kind", "alpha"}},
        {"coefficients", {"sigma", "b"}},
        {"initial", {"kind", "amplitude", "table"}},
        {"scheme", {"kind", "q", "record", "format"}},
        {"study", {"axis", "finest", "fixed", "ladder", "replicas", "t_star", "x_star"}},
        {"green",
         {"check", "ladder", "n", "kernel", "fine_cells_per_cell", "x_points_per_cell", "steps_per_decade",
          "gauss_points"}},
        {"noise_check", {"samples"}},
        {"run", {"seed", "threads", "out"}},
    };
    return keys;
}

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

/// Splits on commas and/or whitespace.
std::vector<std::string> split_list(const std::string& text)
{
    std::string spaced = text;
    std::replace(spaced.begin(), spaced.end(), ',', ' ');
    std::istringstream in(spaced);
    std::vector<std::string> out;
    for (std::string item; in >> item;) out.push_back(item);
    return out;
}

double to_real(const std::string& key, const std::string& value)
{
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size()) throw ConfigError("config: " + key + " = '" + value + "' is not a number");
    return out;
}

long to_integer(const std::string& key, const std::string& value)
{
    std::size_t used = 0;
    long out = 0;
    try {
        out = std::stol(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size())
        throw ConfigError("config: " + key + " = '" + value + "' is not an integer");
    return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& value)
{
    std::vector<int> out;
    for (const auto& item : split_list(value)) out.push_back(static_cast<int>(to_integer(key, item)));
    return out;
}

/// Re-throws library validation failures as configuration errors.
template <typename F>
auto translate(F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const StabilityError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text)
{
    RunConfig config;
    std::istringstream in(text);
    try {
        boost::property_tree::read_ini(in, config.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    config.check_keys();
    return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

void RunConfig::set(const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    const auto key = trim(assignment.substr(0, eq));
    if (key.find('.') == std::string::npos) throw ConfigError("--set key must be section.key, got '" + key + "'");
    tree_.put(boost::property_tree::ptree::path_type(key, '.'), trim(assignment.substr(eq + 1)));
    check_keys();
}

void RunConfig::check_keys() const
{
    for (const auto& [section, body] : tree_) {
        const auto it = schema().find(section);
        if (it == schema().end()) throw ConfigError("config: unknown section [" + section + "]");
        if (!body.data().empty()) throw ConfigError("config: value outside a section: " + section);
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) throw ConfigError("config: unknown key " + section + "." + key);
            if (!value.empty()) throw ConfigError("config: nested key under " + section + "." + key);
        }
    }
}

std::string RunConfig::text(const std::string& key, const std::string& fallback) const
{
    const auto value = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    return value ? trim(*value) : fallback;
}

double RunConfig::real(const std::string& key, double fallback) const
{
    const auto value = text(key, "");
    return value.empty() ? fallback : to_real(key, value);
}

long RunConfig::integer(const std::string& key, long fallback) const
{
    const auto value = text(key, "");
    return value.empty() ? fallback : to_integer(key, value);
}

GridSpec RunConfig::grid() const
{
    GridSpec g;
    g.d = static_cast<int>(integer("grid.d", 1));
    g.n = static_cast<int>(integer("grid.n", 16));
    g.m = static_cast<int>(integer("grid.m", 64));
    g.T = real("grid.T", 1.0);
    g.bc = translate([&] { return parse_boundary(text("grid.bc", "dirichlet")); });
    translate([&] { g.validate(); });
    return g;
}

NoiseModel RunConfig::noise() const
{
    const int d = static_cast<int>(integer("grid.d", 1));
    const auto kind = text("noise.kind", "riesz");
    NoiseModel model;
    if (kind == "white") {
        model = NoiseModel::white();
        model.d = d;
    } else if (kind == "riesz") {
        model = NoiseModel::riesz(real("noise.alpha", 0.5), d);
    } else {
        throw ConfigError("config: noise.kind must be white or riesz, got '" + kind + "'");
    }
    translate([&] { model.validate(); });
    return model;
}

CoefficientSet RunConfig::coefficients() const
{
    CoefficientSet c;
    c.sigma = translate([&] { return Coefficient::parse(text("coefficients.sigma", "constant 0")); });
    c.drift = translate([&] { return Coefficient::parse(text("coefficients.b", "constant 0")); });
    return c;
}

InitialCondition RunConfig::initial() const
{
    InitialCondition ic;
    ic.family = translate([&] { return InitialCondition::parse_family(text("initial.kind", "zero")); });
    ic.amplitude = real("initial.amplitude", 1.0);
    if (ic.family == InitialCondition::Family::Table) {
        for (const auto& item : split_list(text("initial.table", ""))) ic.table.push_back(to_real("initial.table", item));
    } else if (!text("initial.table", "").empty()) {
        throw ConfigError("config: initial.table is only used with initial.kind = table");
    }
    return ic;
}

SchemeRun RunConfig::scheme_run() const
{
    SchemeRun run;
    run.grid = grid();
    run.noise = noise();
    run.coefficients = coefficients();
    run.initial = initial();
    run.kind = translate([&] { return parse_scheme_kind(text("scheme.kind", "implicit")); });
    run.q = real("scheme.q", kDefaultStabilityQ);
    run.seed = seed();
    const auto record = text("scheme.record", "all");
    if (record == "final") {
        run.recorded_levels = {run.grid.m};
    } else if (record != "all") {
        run.recorded_levels = to_int_list("scheme.record", record);
    }
    translate([&] { run.validate(); });
    return run;
}

TrajectoryFormat RunConfig::trajectory_format() const
{
    const auto format = text("scheme.format", "csv");
    if (format == "csv") return TrajectoryFormat::Csv;
    if (format == "binary") return TrajectoryFormat::Binary;
    throw ConfigError("config: scheme.format must be csv or binary, got '" + format + "'");
}

StudyPlan RunConfig::study_plan() const
{
    StudyPlan plan;
    const auto g = grid();
    plan.d = g.d;
    plan.bc = g.bc;
    plan.T = g.T;
    plan.axis = translate([&] { return parse_study_axis(text("study.axis", "time")); });
    plan.finest = static_cast<int>(integer("study.finest", 0));
    plan.fixed = static_cast<int>(integer("study.fixed", 0));
    plan.ladder = to_int_list("study.ladder", text("study.ladder", ""));
    plan.replicas = static_cast<int>(integer("study.replicas", 100));
    plan.t_star = real("study.t_star", g.T);
    for (const auto& item : split_list(text("study.x_star", ""))) plan.x_star.push_back(to_real("study.x_star", item));
    plan.noise = noise();
    plan.coefficients = coefficients();
    plan.initial = initial();
    plan.scheme = translate([&] { return parse_scheme_kind(text("scheme.kind", "implicit")); });
    plan.q = real("scheme.q", kDefaultStabilityQ);
    plan.seed = seed();
    plan.threads = threads();
    translate([&] { plan.validate(); });
    return plan;
}

GreenCheckConfig RunConfig::green_check() const
{
    GreenCheckConfig c;
    c.check = text("green.check", "space");
    if (c.check != "space" && c.check != "time")
        throw ConfigError("config: green.check must be space or time, got '" + c.check + "'");
    const auto ladder = text("green.ladder", "");
    if (!ladder.empty()) c.ladder = to_int_list("green.ladder", ladder);
    if (c.ladder.size() < 2) throw ConfigError("config: green.ladder needs at least 2 entries");
    c.n = static_cast<int>(integer("green.n", 64));
    c.kernel = translate([&] { return parse_kernel_kind(text("green.kernel", "implicit")); });
    if (c.kernel != KernelKind::Implicit && c.kernel != KernelKind::Explicit)
        throw ConfigError("config: green.kernel must be implicit or explicit");
    const auto g = grid();
    c.options.bc = g.bc;
    c.options.T = g.T;
    c.options.fine_cells_per_cell = static_cast<int>(integer("green.fine_cells_per_cell", 8));
    c.options.x_points_per_cell = static_cast<int>(integer("green.x_points_per_cell", 2));
    c.options.steps_per_decade = static_cast<int>(integer("green.steps_per_decade", 24));
    c.options.gauss_points = static_cast<int>(integer("green.gauss_points", 8));
    if (c.options.fine_cells_per_cell < 1 || c.options.x_points_per_cell < 1 || c.options.steps_per_decade < 1)
        throw ConfigError("config: green resolution settings must be positive");
    if (g.d != 1) throw ConfigError("config: green checks need grid.d = 1");
    const auto model = noise();
    if (model.kind != NoiseKind::Riesz) throw ConfigError("config: green checks need noise.kind = riesz");
    return c;
}

std::size_t RunConfig::noise_check_samples() const
{
    const long samples = integer("noise_check.samples", 50000);
    if (samples < 2) throw ConfigError("config: noise_check.samples must be >= 2");
    return static_cast<std::size_t>(samples);
}

std::uint64_t RunConfig::seed() const
{
    const auto value = text("run.seed", "0");
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size() || value.front() == '-')
        throw ConfigError("config: run.seed = '" + value + "' is not a non-negative integer");
    return out;
}

int RunConfig::threads() const
{
    const long threads = integer("run.threads", 0);
    if (threads < 0) throw ConfigError("config: run.threads must be >= 0");
    return static_cast<int>(threads);
}

std::filesystem::path RunConfig::out_dir() const { return text("run.out", "."); }

}  // namespace spde
