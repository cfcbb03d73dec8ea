#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "commands.hpp"
#include "run_config.hpp"

#include "jflow/errors.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

using namespace jflow;
using namespace jflow::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kData = JFLOW_DATA_DIR;

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "jflow_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Result {
    int code;
    std::string out, err;
};

Result run(std::initializer_list<std::string> args) {
    std::vector<std::string> store{"jflow"};
    store.insert(store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : store) argv.push_back(s.data());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

std::string poly(const char* name) { return kData + "/" + name; }

// Copy of a shipped config with its polytope paths made absolute, so the
// outputs land in `dir`.
fs::path relocate(const char* name, const fs::path& dir) {
    json j = read_json(fs::path(kData) / "configs" / name);
    for (const char* key : {"P", "Q"})
        if (j.contains(key)) j[key] = (fs::path(kData) / "configs" / j[key].get<std::string>()).lexically_normal().string();
    return write_config(dir, j);
}

}  // namespace

TEST_CASE("stability exit codes and report") {
    const auto dir = scratch("stability");
    const std::string b2 = poly("trapezoid_b2.txt");

    auto r = run({"stability", "--p", b2, "--q", b2, "--out", (dir / "pass.json").string()});
    CHECK(r.code == kOk);
    auto rep = read_json(dir / "pass.json");
    CHECK(rep["nc"].get<double>() == doctest::Approx(2.0));
    CHECK(rep["faces"].size() == 4);
    for (const auto& f : rep["faces"]) {
        CHECK(f["lhs_exact"] == "1");
        CHECK(f["verdict"] == "pass");
    }

    r = run({"stability", "--p", b2, "--q", poly("trapezoid_a1.1.txt"), "--out", (dir / "v.json").string()});
    CHECK(r.code == kViolated);
    rep = read_json(dir / "v.json");
    CHECK(rep["nc_exact"] == "4/5");
    int violated = 0;
    for (const auto& f : rep["faces"])
        if (f["verdict"] == "violated") {
            ++violated;
            CHECK(f["equations"][0] == "y1+y2=1");
            CHECK(f["lhs_exact"] == "1");
        }
    CHECK(violated == 1);
    CHECK(r.out.find("y1+y2=1") != std::string::npos);

    r = run({"stability", "--p", b2, "--q", poly("trapezoid_a1.25.txt"), "--out", (dir / "m.json").string()});
    CHECK(r.code == kMarginal);
    CHECK(read_json(dir / "m.json")["summary"] == "marginal");

    // Through a config file, paths relative to it.
    r = run({"stability", "--config", relocate("stability_case3.json", dir).string(), "--out", (dir / "c.json").string()});
    CHECK(r.code == kViolated);
    CHECK(fs::exists(dir / "c.json"));
}

TEST_CASE("malformed input exits 1 with a message") {
    const auto dir = scratch("bad");
    auto r = run({"stability", "--p", poly("bad_not_delzant.txt"), "--q", poly("trapezoid_b2.txt"), "--out",
                  (dir / "x.json").string()});
    CHECK(r.code == kError);
    CHECK(r.err.find("NotDelzant") != std::string::npos);
    CHECK(r.err.find("vertex") != std::string::npos);

    r = run({"stability", "--p", (dir / "missing.txt").string(), "--q", poly("trapezoid_b2.txt")});
    CHECK(r.code == kError);

    const auto cfg = write_config(dir, {{"command", "flow"},
                                        {"P", poly("bad_not_delzant.txt")},
                                        {"Q", poly("trapezoid_b2.txt")},
                                        {"output", {{"diagnostics", (dir / "d.csv").string()}}}});
    r = run({"flow", "--config", cfg.string()});
    CHECK(r.code == kError);
    CHECK(!fs::exists(dir / "d.csv"));

    CHECK(run({"flow"}).code == kError);
    CHECK(run({"nonsense"}).code == kError);
    CHECK(run({"--help"}).code == kOk);
}

TEST_CASE("config validation") {
    const auto dir = scratch("config");
    const json base = {{"command", "flow"}, {"P", poly("trapezoid_b2.txt")}, {"Q", poly("trapezoid_b2.txt")}};
    CHECK_NOTHROW(config_from_json(base));

    auto bad = base;
    bad["cfl"] = 0.0;
    CHECK_THROWS_AS(config_from_json(bad), Error);
    bad = base;
    bad["cfl"] = 1.5;
    CHECK_THROWS_AS(config_from_json(bad), Error);
    bad = base;
    bad["h"] = -0.1;
    CHECK_THROWS_AS(config_from_json(bad), Error);
    bad = base;
    bad["t_end"] = 0.0;
    CHECK_THROWS_AS(config_from_json(bad), Error);
    bad = base;
    bad["stepsize"] = 0.1;
    CHECK_THROWS_AS(config_from_json(bad), Error);
    bad = base;
    bad["h"] = "small";
    try {
        config_from_json(bad);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ParseError);
    }
    bad = base;
    bad["tolerances"] = {{"tol_static", 1e-5}, {"typo", 1}};
    CHECK_THROWS_AS(config_from_json(bad), Error);

    const auto cfg = write_config(dir, [&] {
        auto j = base;
        j["cfl"] = 2.0;
        return j;
    }());
    CHECK(run({"flow", "--config", cfg.string()}).code == kError);
}

TEST_CASE("report echo round-trips") {
    const auto dir = scratch("report");
    json j = {{"command", "report"},
              {"P", "../trapezoid_b2.txt"},
              {"Q", "../trapezoid_a1.1.txt"},
              {"u0", "0.05*sin(y1)*cos(y2)"},
              {"h", 0.03125},
              {"cfl", 0.15},
              {"t_end", 2.5},
              {"diag_every", 0.01},
              {"seed", 7},
              {"tracked_z", {{0.5, 0.5}}},
              {"samples", {{0.5, 0.7}, {1.0, 0.0}}},
              {"tolerances", {{"tol_static", 1e-5}, {"max_halvings", 4}}},
              {"calabi", {{"a", 1.1}, {"grid", 512}, {"scheme", "rk2"}}}};
    const RunConfig c = config_from_json(j);
    const RunConfig again = config_from_json(config_to_json(c));
    CHECK(again == c);
    CHECK(config_to_json(again) == config_to_json(c));

    // Through the command: echo to a file, then load it back.
    const auto cfg_dir = fs::path(kData) / "configs";
    const auto r = run({"report", "--config", (cfg_dir / "report_samples.json").string(), "--out",
                        (dir / "echo.json").string(), "--records", (dir / "records.json").string()});
    REQUIRE(r.code == kOk);
    const RunConfig original = load_config((cfg_dir / "report_samples.json").string());
    const RunConfig echoed = config_from_json(read_json(dir / "echo.json"), original.base_dir);
    CHECK(echoed == original);

    const auto records = read_json(dir / "records.json");
    REQUIRE(records.size() == original.samples.size());
    for (const auto& rec : records) {
        for (const char* key : {"y", "U", "trace", "det", "eigenvalues", "compat_residual", "partial_bound"})
            CHECK(rec.contains(key));
        CHECK(rec["det"].get<double>() > 0.0);
        CHECK(rec["compat_residual"].get<double>() < 1e-8);
    }
    // The vertex (1, 0) of P goes to the vertex (1, 0) of Q.
    CHECK(records[1]["U"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(records[1]["U"][1].get<double>()) < 1e-12);
}

TEST_CASE("calabi command") {
    const auto dir = scratch("calabi");
    auto r = run({"calabi", "--n", "2", "--a", "1.1", "--b", "2", "--grid", "257", "--t-end", "2", "--snapshot-every",
                  "1", "--out", (dir / "c3.csv").string()});
    REQUIRE(r.code == kOk);
    auto s = read_json(dir / "c3.json");
    CHECK(s["case"] == "Case3");
    CHECK(s["nc"].get<double>() == doctest::Approx(0.8));
    CHECK(std::abs(s["lambda"].get<double>() - 1.2834849) < 1e-6);
    CHECK(s["nc_prime"].get<double>() == doctest::Approx(1.0 / s["lambda"].get<double>()));

    std::ifstream csv(dir / "c3.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "t,B,f,trace,det");
    int rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    CHECK(rows == 3 * 257);  // t = 0, 1, 2

    r = run({"calabi", "--n", "2", "--a", "2", "--b", "2", "--grid", "65", "--t-end", "0.5", "--out",
             (dir / "c1.csv").string(), "--summary", (dir / "c1_summary.json").string()});
    REQUIRE(r.code == kOk);
    s = read_json(dir / "c1_summary.json");
    CHECK(s["case"] == "Case1");
    CHECK(s["lambda"].is_null());
    CHECK(s["squeeze_point"].is_null());

    r = run({"calabi", "--n", "2", "--a", "1.25", "--b", "2", "--grid", "65", "--t-end", "0.5", "--out",
             (dir / "c2.csv").string()});
    REQUIRE(r.code == kOk);
    CHECK(read_json(dir / "c2.json")["case"] == "Case2");

    CHECK(run({"calabi", "--n", "2", "--a", "1", "--b", "2", "--out", (dir / "x.csv").string()}).code == kError);
    CHECK(run({"calabi", "--n", "2", "--a", "0.5", "--b", "2", "--out", (dir / "x.csv").string()}).code == kError);
    CHECK(run({"calabi", "--n", "1", "--a", "1.5", "--b", "2", "--out", (dir / "x.csv").string()}).code == kError);
    CHECK(run({"calabi", "--scheme", "euler", "--out", (dir / "x.csv").string()}).code == kError);
}

TEST_CASE("outputs are deterministic") {
    const auto dir = scratch("determinism");
    for (const char* name : {"a.csv", "b.csv"})
        REQUIRE(run({"calabi", "--n", "2", "--a", "1.5", "--b", "2", "--grid", "129", "--t-end", "1", "--snapshot-every",
                     "0.5", "--out", (dir / name).string()})
                    .code == kOk);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

    for (const char* name : {"a", "b"}) {
        const auto cfg = write_config(dir,
                                      {{"command", "flow"},
                                       {"P", poly("trapezoid_b2.txt")},
                                       {"Q", poly("trapezoid_a1.5.txt")},
                                       {"u0", "0.05*y1*y2*(2-y1-y2)"},
                                       {"h", 0.125},
                                       {"t_end", 0.2},
                                       {"diag_every", 0.05},
                                       {"tracked_z", {{0.6, 0.5}}},
                                       {"output",
                                        {{"diagnostics", std::string(name) + "_diag.csv"},
                                         {"final_state", std::string(name) + "_state.json"},
                                         {"outcome", std::string(name) + "_outcome.json"}}}});
        REQUIRE(run({"flow", "--config", cfg.string()}).code == kUndecided);
    }
    CHECK(slurp(dir / "a_diag.csv") == slurp(dir / "b_diag.csv"));
    CHECK(slurp(dir / "a_state.json") == slurp(dir / "b_state.json"));
    const auto diag = slurp(dir / "a_diag.csv");
    CHECK(diag.rfind("t,energy,", 0) == 0);
    // 17 significant digits
    CHECK(diag.find("0.050000000000000003") != std::string::npos);
}

TEST_CASE("flow exit codes") {
    const auto dir = scratch("flow");
    auto r = run({"flow", "--config", relocate("identity.json", scratch("identity")).string()});
    CHECK(r.code == kOk);

    // Partial diagnostics are written before exiting on a step failure.
    const auto cfg = write_config(dir, {{"command", "flow"},
                                        {"P", poly("trapezoid_b2.txt")},
                                        {"Q", poly("trapezoid_a1.1.txt")},
                                        {"h", 0.125},
                                        {"cfl", 1.0},
                                        {"t_end", 2.0},
                                        {"diag_every", 0.5},
                                        {"tolerances", {{"max_halvings", 0}}}});
    r = run({"flow", "--config", cfg.string()});
    CHECK(r.code == kStepFailure);
    CHECK(read_json(dir / "outcome.json")["outcome"] == "StepFailure");
    CHECK(slurp(dir / "diagnostics.csv").find('\n') != std::string::npos);

    const auto d1 = scratch("case1");
    r = run({"flow", "--config", relocate("case1_flow.json", d1).string()});
    CHECK(r.code == kOk);
    const auto out = read_json(d1 / "out/case1_outcome.json");
    CHECK(out["outcome"] == "Converged");
    CHECK(out["static_residual"].get<double>() < 1e-4);

    const auto d3 = scratch("case3");
    r = run({"flow", "--config", relocate("case3_flow.json", d3).string()});
    CHECK(r.code == kDegenerating);
    const auto o3 = read_json(d3 / "out/case3_outcome.json");
    CHECK(o3["outcome"] == "Degenerating");
    CHECK(o3["min_det"].get<double>() < 1e-3);
    // the squeezed nodes sit in 1 <= sum y < lambda
    CHECK(o3["degenerate_sum_range"][0].get<double>() >= 1.0 - 1e-12);
    CHECK(o3["degenerate_sum_range"][1].get<double>() < 1.2835);
}
