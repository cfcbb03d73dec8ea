#include "run_config.hpp"

#include "jflow/errors.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace jflow::cli {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorKind::ParseError, where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw Error(ErrorKind::ParseError, "unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::ParseError, std::string("key '") + key + "' in " + where + " has the wrong type");
    }
}

void positive(double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error(ErrorKind::InvalidArgument, std::string(name) + " must be positive");
}

}  // namespace

std::string RunConfig::resolve(const std::string& path) const {
    if (path.empty()) return path;
    const std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

RunConfig config_from_json(const json& j, const std::string& base_dir) {
    check_keys(j, {"command", "P", "Q", "u0", "g", "h", "cfl", "t_end", "diag_every", "tracked_z", "samples", "seed",
                   "tolerances", "calabi", "output"},
               "config");
    RunConfig c;
    c.base_dir = base_dir;
    read(j, "command", c.command, "config");
    read(j, "P", c.P, "config");
    read(j, "Q", c.Q, "config");
    read(j, "u0", c.u0, "config");
    read(j, "g", c.g, "config");
    read(j, "h", c.h, "config");
    read(j, "cfl", c.cfl, "config");
    read(j, "t_end", c.t_end, "config");
    read(j, "diag_every", c.diag_every, "config");
    read(j, "tracked_z", c.tracked_z, "config");
    read(j, "samples", c.samples, "config");
    if (j.contains("seed") && !j.at("seed").is_null()) {
        long long s = 0;
        read(j, "seed", s, "config");
        c.seed = s;
    }
    if (j.contains("tolerances")) {
        const json& t = j.at("tolerances");
        check_keys(t, {"tol_static", "delta_conv", "delta_deg", "converge_window", "degenerate_window", "immediate_tol",
                       "stability_tol", "max_halvings"},
                   "tolerances");
        read(t, "tol_static", c.tolerances.tol_static, "tolerances");
        read(t, "delta_conv", c.tolerances.delta_conv, "tolerances");
        read(t, "delta_deg", c.tolerances.delta_deg, "tolerances");
        read(t, "converge_window", c.tolerances.converge_window, "tolerances");
        read(t, "degenerate_window", c.tolerances.degenerate_window, "tolerances");
        read(t, "immediate_tol", c.tolerances.immediate_tol, "tolerances");
        read(t, "stability_tol", c.tolerances.stability_tol, "tolerances");
        read(t, "max_halvings", c.tolerances.max_halvings, "tolerances");
    }
    if (j.contains("calabi")) {
        const json& k = j.at("calabi");
        check_keys(k, {"n", "a", "b", "grid", "t_end", "snapshot_every", "scheme"}, "calabi");
        read(k, "n", c.calabi.n, "calabi");
        read(k, "a", c.calabi.a, "calabi");
        read(k, "b", c.calabi.b, "calabi");
        read(k, "grid", c.calabi.grid, "calabi");
        read(k, "t_end", c.calabi.t_end, "calabi");
        read(k, "snapshot_every", c.calabi.snapshot_every, "calabi");
        read(k, "scheme", c.calabi.scheme, "calabi");
    }
    if (j.contains("output")) {
        const json& o = j.at("output");
        check_keys(o, {"report", "diagnostics", "final_state", "outcome", "calabi_csv", "calabi_summary"}, "output");
        read(o, "report", c.output.report, "output");
        read(o, "diagnostics", c.output.diagnostics, "output");
        read(o, "final_state", c.output.final_state, "output");
        read(o, "outcome", c.output.outcome, "output");
        read(o, "calabi_csv", c.output.calabi_csv, "output");
        read(o, "calabi_summary", c.output.calabi_summary, "output");
    }
    validate(c);
    return c;
}

void validate(const RunConfig& c) {
    static const std::set<std::string> commands = {"stability", "flow", "calabi", "report"};
    if (!commands.count(c.command)) throw Error(ErrorKind::InvalidArgument, "unknown command '" + c.command + "'");
    positive(c.h, "h");
    positive(c.t_end, "t_end");
    positive(c.diag_every, "diag_every");
    if (!(c.cfl > 0.0 && c.cfl <= 1.0)) throw Error(ErrorKind::InvalidArgument, "cfl must lie in (0, 1]");
    positive(c.tolerances.tol_static, "tol_static");
    positive(c.tolerances.delta_conv, "delta_conv");
    positive(c.tolerances.delta_deg, "delta_deg");
    positive(c.tolerances.immediate_tol, "immediate_tol");
    positive(c.tolerances.stability_tol, "stability_tol");
    if (c.tolerances.converge_window < 1 || c.tolerances.degenerate_window < 1)
        throw Error(ErrorKind::InvalidArgument, "windows must be at least 1");
    if (c.tolerances.max_halvings < 0) throw Error(ErrorKind::InvalidArgument, "max_halvings must be non-negative");
    if (c.calabi.n < 2) throw Error(ErrorKind::InvalidArgument, "calabi.n must be at least 2");
    if (!(c.calabi.a > 1.0) || !(c.calabi.b > 1.0))
        throw Error(ErrorKind::InvalidArgument, "calabi.a and calabi.b must exceed 1");
    if (c.calabi.grid < 4) throw Error(ErrorKind::InvalidArgument, "calabi.grid must be at least 4");
    positive(c.calabi.t_end, "calabi.t_end");
    positive(c.calabi.snapshot_every, "calabi.snapshot_every");
    if (c.calabi.scheme != "implicit" && c.calabi.scheme != "rk2")
        throw Error(ErrorKind::InvalidArgument, "calabi.scheme must be 'implicit' or 'rk2'");
    for (const auto& z : c.tracked_z)
        if (z.empty()) throw Error(ErrorKind::InvalidArgument, "tracked_z entries must be points");
    for (const auto& y : c.samples)
        if (y.empty()) throw Error(ErrorKind::InvalidArgument, "samples entries must be points");
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
    const auto dir = std::filesystem::path(path).parent_path();
    return config_from_json(j, dir.empty() ? "." : dir.string());
}

json config_to_json(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["P"] = c.P;
    j["Q"] = c.Q;
    j["u0"] = c.u0;
    j["g"] = c.g;
    j["h"] = c.h;
    j["cfl"] = c.cfl;
    j["t_end"] = c.t_end;
    j["diag_every"] = c.diag_every;
    j["tracked_z"] = c.tracked_z;
    j["samples"] = c.samples;
    j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
    j["tolerances"] = {{"tol_static", c.tolerances.tol_static},
                       {"delta_conv", c.tolerances.delta_conv},
                       {"delta_deg", c.tolerances.delta_deg},
                       {"converge_window", c.tolerances.converge_window},
                       {"degenerate_window", c.tolerances.degenerate_window},
                       {"immediate_tol", c.tolerances.immediate_tol},
                       {"stability_tol", c.tolerances.stability_tol},
                       {"max_halvings", c.tolerances.max_halvings}};
    j["calabi"] = {{"n", c.calabi.n},         {"a", c.calabi.a},
                   {"b", c.calabi.b},         {"grid", c.calabi.grid},
                   {"t_end", c.calabi.t_end}, {"snapshot_every", c.calabi.snapshot_every},
                   {"scheme", c.calabi.scheme}};
    j["output"] = {{"report", c.output.report},
                   {"diagnostics", c.output.diagnostics},
                   {"final_state", c.output.final_state},
                   {"outcome", c.output.outcome},
                   {"calabi_csv", c.output.calabi_csv},
                   {"calabi_summary", c.output.calabi_summary}};
    return j;
}

}  // namespace jflow::cli
