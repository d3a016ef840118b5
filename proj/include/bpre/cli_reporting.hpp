// Configuration parsing, run manifests, structured output, logging.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpre/limit_harness.hpp"

namespace bpre {

// "%.17g" formatting used for all CSV numeric output.
std::string num17(double v);

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };
LogLevel log_threshold(); // from env var BPRE_LOG
void log_msg(LogLevel level, const std::string& msg);

// Command-line options are invalid (exit code 2).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RunConfig {
    std::string subcommand;
    std::string env_path;
    std::uint64_t seed = 0;
    bool seed_explicit = false; // auto-generated seeds are still recorded
    int workers = 2;
    std::string out = "-";
    std::string format = "json";
    std::uint64_t reps = 1'000'000;

    std::uint64_t n = 10;
    std::vector<std::uint64_t> n_list; // strictly increasing
    std::string method = "tilted-is";
    double theta = 1.0;
    bool theta_explicit = false;
    std::vector<double> x_grid;
    unsigned K = 64;
    double xmax = 10.0;
    std::string side = "u";
    double tol = 1e-12;
    double r_exponent = 0.25;
    std::string suite = "all";
    std::string quantity = "survival";
    double stab_theorem1 = 0.10;
    double stab_corollary = 0.15;
    double stab_prop21 = 0.15;

    nlohmann::ordered_json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
};

// Accepts plain integers and scientific notation ("1e6" -> 1000000).
std::uint64_t parse_reps(const std::string& text);

// Parses argv-style arguments (without the program name).  Throws UsageError
// with a field-level message on invalid input.
RunConfig parse_config(const std::vector<std::string>& args);

struct RunManifest {
    std::string version;
    RunConfig config;
    double wall_ms = 0.0; // volatile; excluded from reproducibility checks
    std::vector<Check> checks;
    nlohmann::ordered_json to_json() const;
};

std::string manifest_path_for(const std::string& out_path);

nlohmann::ordered_json check_to_json(const Check& c);
nlohmann::ordered_json table_to_json(const ConvergenceTable& t);
std::string table_to_csv(const ConvergenceTable& t);
void write_text_file(const std::string& path, const std::string& content);

// Executes a parsed config.  Exit codes: 0 all verdicts pass, 1 verdict
// failure, 2 usage, 3 runtime error.  The manifest is always written.
int run_config(const RunConfig& cfg);

} // namespace bpre
