#include "commands.hpp"

#include "jflow/calabi.hpp"
#include "jflow/errors.hpp"
#include "jflow/flow.hpp"
#include "jflow/polytope.hpp"
#include "jflow/transition.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace jflow::cli {

using nlohmann::json;

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
    return out;
}

void write_json(const std::string& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

json vec_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Vec to_vec(const std::vector<double>& xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) v(static_cast<Eigen::Index>(i)) = xs[i];
    return v;
}

DelzantPolytope load(const RunConfig& c, const std::string& path, const char* what) {
    if (path.empty()) throw Error(ErrorKind::InvalidArgument, std::string("config names no polytope ") + what);
    return load_polytope(c.resolve(path));
}

json face_json(const DelzantPolytope& P, const FaceStability& f) {
    json eqs = json::array();
    for (int id : f.face.facet_ids) eqs.push_back(P.facet_equation(id));
    return {{"facets", f.face.facet_ids},
            {"equations", eqs},
            {"dim", f.p},
            {"lhs", f.lhs},
            {"lhs_exact", rational_to_string(f.lhs_exact)},
            {"verdict", std::string(to_string(f.verdict))}};
}

FlowOptions flow_options(const RunConfig& c) {
    FlowOptions o;
    o.cfl = c.cfl;
    o.max_halvings = c.tolerances.max_halvings;
    o.tol_static = c.tolerances.tol_static;
    o.converge_window = c.tolerances.converge_window;
    o.delta_conv = c.tolerances.delta_conv;
    o.delta_deg = c.tolerances.delta_deg;
    o.degenerate_window = c.tolerances.degenerate_window;
    o.immediate_tol = c.tolerances.immediate_tol;
    return o;
}

void write_diagnostics(const std::string& path, const DiagnosticsTrace& trace) {
    auto out = open_out(path);
    out << "t,energy,max_trace,min_trace,min_det,max_det,max_compat,max_partial_bound,max_du_norm,"
           "static_residual,dissipation,parabolic_residual,min_tracked_distance,vertex_error,dt\n";
    for (const auto& d : trace.rows) {
        const double cols[] = {d.t,           d.energy,           d.max_trace,       d.min_trace,
                               d.min_det,     d.max_det,          d.max_compat,      d.max_partial_bound,
                               d.max_du_norm, d.static_residual,  d.dissipation,     d.parabolic_residual,
                               d.min_tracked_distance, d.vertex_error, d.dt};
        for (std::size_t i = 0; i < std::size(cols); ++i) out << (i ? "," : "") << num(cols[i]);
        out << "\n";
    }
}

void write_final_state(const std::string& path, const GridFlowState& s) {
    json nodes = json::array(), U = json::array(), tr = json::array(), det = json::array();
    for (int k = 0; k < s.grid->size(); ++k) {
        nodes.push_back(vec_json(s.grid->node(k)));
        U.push_back(vec_json(s.samples[k].U));
        tr.push_back(s.samples[k].trace);
        det.push_back(s.samples[k].det);
    }
    write_json(path, {{"t", s.t}, {"h", s.grid->h()}, {"nc", s.nc}, {"nodes", nodes}, {"v", s.v}, {"U", U},
                      {"trace", tr}, {"det", det}});
}

}  // namespace

int cmd_stability(const RunConfig& c, std::ostream& log) {
    const auto P = load(c, c.P, "P");
    const auto Q = load(c, c.Q, "Q");
    const auto report = check_face_stability(P, Q, c.tolerances.stability_tol);
    json faces = json::array();
    for (const auto& f : report.per_face) faces.push_back(face_json(P, f));
    int code = kOk;
    std::string summary = "pass";
    if (report.any(Verdict::Violated)) {
        code = kViolated;
        summary = "violated";
    } else if (report.any(Verdict::Marginal)) {
        code = kMarginal;
        summary = "marginal";
    }
    write_json(c.resolve(c.output.report), {{"nc", report.nc},
                                            {"nc_exact", rational_to_string(report.nc_exact)},
                                            {"tol", report.tol},
                                            {"summary", summary},
                                            {"faces", faces}});
    log << "nc = " << num(report.nc) << " (" << rational_to_string(report.nc_exact) << "), " << summary << "\n";
    for (const auto& f : report.per_face)
        if (f.verdict != Verdict::Pass) {
            log << "  " << to_string(f.verdict) << " face {";
            for (std::size_t i = 0; i < f.face.facet_ids.size(); ++i)
                log << (i ? ", " : "") << P.facet_equation(f.face.facet_ids[i]);
            log << "}: lhs " << num(f.lhs) << " vs nc " << num(report.nc) << "\n";
        }
    return code;
}

int cmd_flow(const RunConfig& c, std::ostream& log) {
    const auto P = load(c, c.P, "P");
    const auto Q = load(c, c.Q, "Q");
    const int n = P.dim();
    const SymplecticPotential u0(P, make_correction(c.u0, n));
    const SymplecticPotential g(Q, make_correction(c.g, n));
    std::vector<Vec> tracked;
    for (const auto& z : c.tracked_z) tracked.push_back(to_vec(z));
    auto state = init_flow(u0, g, c.h);
    try {
        const auto result = run(std::move(state), c.t_end, c.diag_every, tracked, flow_options(c));
        write_diagnostics(c.resolve(c.output.diagnostics), result.trace);
        write_final_state(c.resolve(c.output.final_state), result.state);
        const auto& o = result.outcome;
        json range = nullptr;
        if (o.degenerate_sum_range) range = {o.degenerate_sum_range->first, o.degenerate_sum_range->second};
        write_json(c.resolve(c.output.outcome), {{"outcome", std::string(to_string(o.tag))},
                                                 {"t", result.state.t},
                                                 {"nc", result.state.nc},
                                                 {"static_residual", o.static_residual},
                                                 {"min_det", o.min_det},
                                                 {"degenerate_nodes", o.degenerate_nodes.size()},
                                                 {"degenerate_components", o.degenerate_components},
                                                 {"degenerate_sum_range", range}});
        log << to_string(o.tag) << " at t = " << num(result.state.t) << ", static residual "
            << num(o.static_residual) << ", min det " << num(o.min_det) << "\n";
        switch (o.tag) {
            case OutcomeTag::Converged: return kOk;
            case OutcomeTag::Degenerating: return kDegenerating;
            case OutcomeTag::Undecided: return kUndecided;
        }
        return kUndecided;
    } catch (const StepFailureError& e) {
        write_diagnostics(c.resolve(c.output.diagnostics), e.partial());
        write_json(c.resolve(c.output.outcome), {{"outcome", "StepFailure"}, {"message", e.what()}});
        log << e.what() << "\n";
        return kStepFailure;
    }
}

int cmd_calabi(const RunConfig& c, std::ostream& log) {
    const auto& k = c.calabi;
    const CaseTag tag = classify(k.n, k.a, k.b);
    RadialOptions opts;
    opts.scheme = k.scheme == "rk2" ? RadialScheme::ExplicitRK2 : RadialScheme::LinearlyImplicit;
    opts.record_every = std::min(k.snapshot_every, k.t_end);
    for (int i = 1;; ++i) {
        const double t = i * k.snapshot_every;
        if (t > k.t_end * (1 + 1e-12)) break;
        opts.snapshot_times.push_back(std::min(t, k.t_end));
    }
    const RadialProfile initial = linear_profile(k.n, k.a, k.b, k.grid);
    const RadialRun r = radial_run(initial, k.t_end, opts);

    auto out = open_out(c.resolve(c.output.calabi_csv));
    out << "t,B,f,trace,det\n";
    auto dump = [&](double t, const RadialProfile& p) {
        const auto tr = p.trace();
        const auto det = p.det();
        for (int i = 0; i < p.size(); ++i)
            out << num(t) << "," << num(p.B[i]) << "," << num(p.f(i)) << "," << num(tr[i]) << "," << num(det[i]) << "\n";
    };
    dump(0.0, initial);
    for (const auto& [t, p] : r.snapshots) dump(t, p);

    json summary = {{"case", std::string(to_string(tag.tag))},
                    {"nc", tag.nc},
                    {"lambda", nullptr},
                    {"nc_prime", nullptr},
                    {"squeeze_point", nullptr},
                    {"t_end", k.t_end},
                    {"static_residual", r.series.empty() ? 0.0 : r.series.back().static_residual},
                    {"steps", r.steps}};
    if (tag.lambda) {
        summary["lambda"] = *tag.lambda;
        summary["nc_prime"] = *tag.nc_prime;
        if (const auto sq = squeeze_point(r.final_profile, *tag.nc_prime)) summary["squeeze_point"] = *sq;
    }
    write_json(c.resolve(c.output.calabi_summary), summary);
    log << to_string(tag.tag) << ", nc = " << num(tag.nc);
    if (tag.lambda) log << ", lambda = " << num(*tag.lambda);
    log << "\n";
    return kOk;
}

int cmd_report(const RunConfig& c, const std::string& out_path, const std::string& records_path, std::ostream& log) {
    const json echo = config_to_json(c);
    if (out_path.empty())
        log << echo.dump(2) << "\n";
    else
        write_json(out_path, echo);
    if (records_path.empty()) return kOk;
    const auto P = load(c, c.P, "P");
    const auto Q = load(c, c.Q, "Q");
    const GeometryPair pair(SymplecticPotential(P, make_correction(c.u0, P.dim())),
                            SymplecticPotential(Q, make_correction(c.g, Q.dim())));
    json records = json::array();
    for (const auto& y : c.samples) {
        const auto s = transition_at(pair, to_vec(y));
        records.push_back({{"y", vec_json(s.y)},
                           {"U", vec_json(s.U)},
                           {"trace", s.trace},
                           {"det", s.det},
                           {"eigenvalues", vec_json(s.eigenvalues)},
                           {"compat_residual", s.compat_residual},
                           {"partial_bound", s.partial_bound}});
    }
    write_json(records_path, records);
    return kOk;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"J-flow on toric polytopes"};
    app.require_subcommand(1);
    long long seed = 0;
    app.add_option("--seed", seed, "Reserved; nothing is random");

    std::string config_path;
    RunConfig flags;

    auto* stability = app.add_subcommand("stability", "Face stability of the pair (P, Q)");
    stability->add_option("--config", config_path, "JSON run config");
    stability->add_option("--p", flags.P, "Polytope P (text format)");
    stability->add_option("--q", flags.Q, "Polytope Q (text format)");
    stability->add_option("--out", flags.output.report, "Report JSON");
    stability->add_option("--tol", flags.tolerances.stability_tol, "Marginal tolerance");

    auto* flow = app.add_subcommand("flow", "Run the J-flow on a grid");
    flow->add_option("--config", config_path, "JSON run config")->required();

    auto* calabi = app.add_subcommand("calabi", "Radial flow on the blowup of P^n");
    calabi->add_option("--config", config_path, "JSON run config");
    calabi->add_option("--n", flags.calabi.n, "Dimension");
    calabi->add_option("--a", flags.calabi.a, "Q = {y >= 0, 1 <= sum y <= a}");
    calabi->add_option("--b", flags.calabi.b, "P = {y >= 0, 1 <= sum y <= b}");
    calabi->add_option("--grid", flags.calabi.grid, "Nodes on [1, b]");
    calabi->add_option("--t-end", flags.calabi.t_end, "Final time");
    calabi->add_option("--snapshot-every", flags.calabi.snapshot_every, "Time between CSV snapshots");
    calabi->add_option("--scheme", flags.calabi.scheme, "implicit or rk2");
    calabi->add_option("--out", flags.output.calabi_csv, "Profile CSV");
    std::string summary_path;
    calabi->add_option("--summary", summary_path, "Summary JSON (default: CSV path with .json)");

    auto* report = app.add_subcommand("report", "Echo a config; optionally sample the transition map");
    report->add_option("--config", config_path, "JSON run config")->required();
    std::string echo_path, records_path;
    report->add_option("--out", echo_path, "Where to write the echoed config (default stdout)");
    report->add_option("--records", records_path, "Transition records for the config's samples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return kError;
    }

    try {
        RunConfig c;
        if (!config_path.empty()) {
            c = load_config(config_path);
        } else {
            c = flags;
            validate(c);
        }
        if (*stability) {
            if (config_path.empty() == false) {
                if (stability->count("--out")) c.output.report = flags.output.report;
            }
            return cmd_stability(c, out);
        }
        if (*flow) return cmd_flow(c, out);
        if (*calabi) {
            if (config_path.empty()) {
                c.command = "calabi";
                c.output.calabi_summary = summary_path.empty()
                                              ? std::filesystem::path(c.output.calabi_csv).replace_extension(".json").string()
                                              : summary_path;
            } else if (!summary_path.empty()) {
                c.output.calabi_summary = summary_path;
            }
            return cmd_calabi(c, out);
        }
        if (*report) return cmd_report(c, echo_path, records_path, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kError;
    }
    return kError;
}

}  // namespace jflow::cli
