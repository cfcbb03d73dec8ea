#ifndef JFLOW_TOOLS_RUN_CONFIG_HPP
#define JFLOW_TOOLS_RUN_CONFIG_HPP

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace jflow::cli {

struct Tolerances {
    double tol_static = 1e-4;
    double delta_conv = 1e-3;
    double delta_deg = 1e-3;
    int converge_window = 50;
    int degenerate_window = 100;
    double immediate_tol = 1e-10;
    double stability_tol = 1e-9;
    int max_halvings = 10;

    bool operator==(const Tolerances&) const = default;
};

struct CalabiParams {
    int n = 2;
    double a = 2.0;
    double b = 2.0;
    int grid = 2048;
    double t_end = 10.0;
    double snapshot_every = 1.0;
    std::string scheme = "implicit";  // or "rk2"

    bool operator==(const CalabiParams&) const = default;
};

struct Outputs {
    std::string report = "stability.json";
    std::string diagnostics = "diagnostics.csv";
    std::string final_state = "final_state.json";
    std::string outcome = "outcome.json";
    std::string calabi_csv = "calabi.csv";
    std::string calabi_summary = "calabi_summary.json";

    bool operator==(const Outputs&) const = default;
};

/// Everything a command needs. Paths are stored as written; they are
/// resolved against `base_dir` (the config file's directory) when used.
struct RunConfig {
    std::string command = "flow";
    std::string P;
    std::string Q;
    std::string u0;  // correction expression, empty for the canonical potential
    std::string g;
    double h = 0.0625;
    double cfl = 0.2;
    double t_end = 1.0;
    double diag_every = 0.1;
    std::vector<std::vector<double>> tracked_z;
    std::vector<std::vector<double>> samples;  // points for transition records in `report`
    std::optional<long long> seed;             // reserved
    Tolerances tolerances;
    CalabiParams calabi;
    Outputs output;
    std::string base_dir = ".";

    bool operator==(const RunConfig& o) const {
        return command == o.command && P == o.P && Q == o.Q && u0 == o.u0 && g == o.g && h == o.h && cfl == o.cfl &&
               t_end == o.t_end && diag_every == o.diag_every && tracked_z == o.tracked_z && samples == o.samples &&
               seed == o.seed && tolerances == o.tolerances && calabi == o.calabi && output == o.output;
    }

    std::string resolve(const std::string& path) const;
};

/// Throws jflow::Error(InvalidArgument / ParseError) on unknown keys,
/// wrong types or out-of-range values.
RunConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& c);
void validate(const RunConfig& c);

}  // namespace jflow::cli

#endif
