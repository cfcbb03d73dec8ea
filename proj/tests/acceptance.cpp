// Acceptance checks, one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include "jflow/calabi.hpp"
#include "jflow/flow.hpp"
#include "jflow/polytope.hpp"
#include "jflow/potential.hpp"
#include "jflow/transition.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace jflow;

namespace {

struct Check {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DelzantPolytope trapezoid(const char* b) { return blowup_polytope(2, parse_rational(b)); }

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

double sup_f_error(const RadialProfile& p, const RadialProfile& q) {
    double e = 0.0;
    for (int i = 0; i < p.size(); ++i) e = std::max(e, std::abs(p.f(i) - q.f(i)));
    return e;
}

// 1
void case1_radial(Check& v) {
    const auto t0 = std::chrono::steady_clock::now();
    const int nodes = 2048;
    const auto target = static_case1(2, 1.5, 2.0, nodes);
    for (int i = 0; i < nodes; ++i) {
        const double B = target.B[i];
        v.require(std::abs(target.f(i) - (2.0 / 3.0 * B + 1.0 / 3.0 / B)) < 1e-13, "closed-form static profile");
    }
    // march in unit intervals until the profile is within tolerance
    RadialProfile p = linear_profile(2, 1.5, 2.0, nodes);
    double t = 0.0, err = sup_f_error(p, target);
    while (err >= 1e-4 && t < 60.0) {
        p = radial_run(p, 1.0).final_profile;
        t += 1.0;
        err = sup_f_error(p, target);
    }
    const double elapsed = seconds_since(t0);
    v.detail << "nc = " << fmt(blowup_nc(2, 1.5, 2.0)) << ", sup|f - f_static| = " << fmt(err) << " at t = " << t
             << ", " << fmt(elapsed) << " s";
    v.require(classify(2, 1.5, 2.0).tag == RadialCase::Case1, "Case1");
    v.require(err < 1e-4, "sup error < 1e-4");
    v.require(elapsed < 30.0, "runtime < 30 s");
}

// 2
void case3_radial(Check& v) {
    const double lambda = solve_lambda(2, 1.1, 2.0);
    v.require(std::abs(lambda - 1.2834849) < 1e-6, "lambda = 1.2834849");
    v.require(std::abs(4.0 + lambda * lambda - 4.4 * lambda) < 1e-12, "4 + l^2 = 4.4 l");
    const auto tag = classify(2, 1.1, 2.0);
    v.require(tag.tag == RadialCase::Case3, "Case3");
    const auto r = radial_run(linear_profile(2, 1.1, 2.0, 2048), 50.0);
    const auto& p = r.final_profile;
    const auto sq = squeeze_point(p, *tag.nc_prime);
    const auto tr = p.trace();
    const auto det = p.det();
    double tr_err = 0.0, det_min = 1e300;
    for (int i = 0; i < p.size(); ++i) {
        if (p.B[i] <= lambda - 0.05) tr_err = std::max(tr_err, std::abs(tr[i] - 1.0 / p.B[i]));
        if (p.B[i] >= lambda + 0.05) det_min = std::min(det_min, det[i]);
    }
    v.detail << "lambda = " << lambda << ", squeeze point " << (sq ? fmt(*sq) : "none")
             << ", sup|tr - 1/B| on [1, lambda-0.05] = " << fmt(tr_err) << ", min det on [lambda+0.05, 2] = "
             << fmt(det_min);
    v.require(sq && std::abs(*sq - lambda) < 0.02, "squeeze point within 0.02");
    v.require(tr_err < 1e-2, "trace on squeeze region");
    v.require(det_min > 1e-3, "det outside squeeze region");
}

const FaceStability* face_with_equation(const DelzantPolytope& P, const StabilityReport& r, const std::string& eq) {
    for (const auto& f : r.per_face)
        if (f.face.facet_ids.size() == 1 && P.facet_equation(f.face.facet_ids[0]) == eq) return &f;
    return nullptr;
}

// 3
void case2_threshold(Check& v) {
    const Rational a = parse_rational("1.25");
    const Rational nc = blowup_nc_exact(2, a, Rational(2));
    const auto P = trapezoid("2");
    const auto Q = trapezoid("1.25");
    const Rational nc_poly = compute_nc_exact(P, Q);
    v.require(nc == 1 && nc_poly == 1, "nc = 1 exactly");
    v.require(classify_exact(2, a, Rational(2)).tag == RadialCase::Case2, "exact classifier");
    v.require(classify(2, 1.25, 2.0).tag == RadialCase::Case2, "floating classifier");
    const auto rep = check_face_stability(P, Q);
    const auto* f = face_with_equation(P, rep, "y1+y2=1");
    int marginal = 0;
    for (const auto& g : rep.per_face) marginal += g.verdict == Verdict::Marginal;
    v.require(f && f->verdict == Verdict::Marginal, "face {y1+y2=1} marginal");
    v.require(marginal == 1 && !rep.any(Verdict::Violated), "no other marginal or violated face");
    v.detail << "nc = " << rational_to_string(nc) << " (mixed volume " << rational_to_string(nc_poly)
             << "), classifier Case2, face {y1+y2=1} " << (f ? to_string(f->verdict) : "missing");
}

// 4
void stability_oracle(Check& v) {
    const auto P = trapezoid("2");
    const auto rep = check_face_stability(P, trapezoid("1.1"), 1e-9);
    v.require(rep.nc_exact == Rational(4, 5), "nc = 4/5");
    int violated = 0;
    for (const auto& f : rep.per_face)
        if (f.verdict == Verdict::Violated) {
            ++violated;
            v.require(f.face.facet_ids.size() == 1 && P.facet_equation(f.face.facet_ids[0]) == "y1+y2=1",
                      "violated face is {y1+y2=1}");
            v.require(f.lhs_exact == 1, "lhs = 1");
        }
    v.require(violated == 1, "exactly one violated face");

    const auto rep2 = check_face_stability(P, P, 1e-9);
    v.require(rep2.nc_exact == 2, "nc = 2");
    v.require(rep2.per_face.size() == 4, "four faces");
    std::ostringstream lhs;
    for (const auto& f : rep2.per_face) {
        v.require(f.verdict == Verdict::Pass && f.lhs_exact == 1, "lhs = 1 and pass");
        lhs << (lhs.tellp() ? "," : "") << rational_to_string(f.lhs_exact);
    }
    v.detail << "(1.1,2): nc = 4/5, " << violated << " violated face {y1+y2=1} with lhs 1; (2,2): lhs {" << lhs.str()
             << "} vs nc 2";
}

// 5
void class_invariance(Check& v) {
    const auto P = trapezoid("2");
    const auto Q = trapezoid("1.1");
    const double exact = trace_class_integral(P, Q);
    v.require(trace_class_integral_exact(P, Q) == Rational(6, 5), "class integral = 6/5");
    const double h = P.diameter() / 64;
    double worst = 0.0;
    for (const char* corr : {"", "0.05*sin(2*y1)*cos(y2)", "0.1*y1*y2 + 0.02*(y1-y2)^3"}) {
        const GeometryPair pair(SymplecticPotential(P, make_correction(corr, 2)),
                                SymplecticPotential(Q, make_correction("", 2)));
        const double got = trace_integral(pair, 3, h);
        worst = std::max(worst, std::abs(got - exact) / exact);
    }
    v.detail << "trace_class_integral = " << exact << ", worst relative quadrature error " << fmt(worst);
    v.require(worst < 1e-3, "relative error < 1e-3");
}

// 6 and the vertex part of 9
double g_vertex_error = 0.0;

void monotonicity(Check& v) {
    const auto P = trapezoid("2");
    auto state = init_flow(SymplecticPotential(P, make_correction("0.1*sin(2*y1)*sin(3*y2) + 0.05*y1*y2*(2-y1-y2)", 2)),
                           SymplecticPotential::canonical(P), 1.0 / 32);
    const double t_end = 0.5, every = 0.005;
    Diagnostics prev = diagnose(state);
    std::vector<Diagnostics> lattice{prev};
    long steps = 0;
    double worst_energy = -1e300, worst_max = -1e300, worst_min = -1e300;
    double next = every;
    while (state.t < t_end - 1e-12) {
        const double dt = step(state, {}, next - state.t);
        const Diagnostics d = diagnose(state);
        ++steps;
        worst_energy = std::max(worst_energy, (d.energy - prev.energy) / dt);
        worst_max = std::max(worst_max, d.max_trace - prev.max_trace);
        worst_min = std::max(worst_min, prev.min_trace - d.min_trace);
        g_vertex_error = std::max(g_vertex_error, d.vertex_error);
        prev = d;
        if (state.t >= next - 1e-12) {
            lattice.push_back(d);
            next += every;
        }
    }
    // dE/dt by central differences on the diagnostics lattice
    double worst_ratio = 0.0;
    int compared = 0;
    for (std::size_t i = 1; i + 1 < lattice.size(); ++i) {
        const double dEdt = (lattice[i + 1].energy - lattice[i - 1].energy) / (lattice[i + 1].t - lattice[i - 1].t);
        if (std::abs(dEdt) <= 1e-6) continue;
        ++compared;
        worst_ratio = std::max(worst_ratio, std::abs(-lattice[i].dissipation / dEdt - 1.0));
    }
    v.detail << steps << " steps to t = " << t_end << "; worst (E_{n+1} - E_n)/dt = " << fmt(worst_energy)
             << ", max tr increase " << fmt(worst_max) << ", min tr decrease " << fmt(worst_min)
             << ", dissipation mismatch " << fmt(100 * worst_ratio) << "% over " << compared << " points";
    v.require(worst_energy <= 1e-8, "energy non-increasing");
    v.require(worst_max <= 1e-3, "max trace non-increasing");
    v.require(worst_min <= 1e-3, "min trace non-decreasing");
    v.require(compared > 10, "enough points with |dE/dt| > 1e-6");
    v.require(worst_ratio < 0.05, "dissipation identity within 5%");
    v.detail << ", max vertex error " << fmt(g_vertex_error);
    v.require(g_vertex_error < 1e-9, "vertices fixed < 1e-9");
}

// 7
void spectral_invariants(Check& v) {
    const auto square = parse_polytope("dim 2\n1 0 0\n0 1 0\n-1 0 1\n0 -1 1\n");
    const auto rect = parse_polytope("dim 2\n1 0 0\n0 1 0\n-1 0 2\n0 -1 1\n");
    std::vector<GeometryPair> pairs;
    pairs.emplace_back(SymplecticPotential::canonical(trapezoid("2")), SymplecticPotential::canonical(trapezoid("1.1")));
    pairs.emplace_back(SymplecticPotential(trapezoid("2"), make_correction("0.05*sin(2*y1)*cos(y2)", 2)),
                       SymplecticPotential(trapezoid("1.5"), make_correction("-(y1+y2)*log(y1+y2)", 2)));
    pairs.emplace_back(SymplecticPotential(square, make_correction("0.1*(y1^2 + y1*y2 + y2^2)", 2)),
                       SymplecticPotential(rect, make_correction("0.05*exp(y1)*y2", 2)));

    std::mt19937_64 rng(20240611);
    const int per_pair = 334;
    int total = 0, fd_points = 0;
    double min_eig = 1e300, worst_amgm = -1e300, worst_partial = -1e300, worst_compat = 0.0;
    double fd_err1 = 0.0, fd_err2 = 0.0, fd_compat1 = 0.0, fd_compat2 = 0.0;
    const double h = 4e-3;
    for (const auto& pair : pairs) {
        const auto& u = pair.source();
        const Vec lo = u.polytope().lower_corner(), hi = u.polytope().upper_corner();
        std::uniform_real_distribution<double> U0(lo(0), hi(0)), U1(lo(1), hi(1));
        for (int i = 0; i < per_pair;) {
            const Vec y = make_vec({U0(rng), U1(rng)});
            if (!(u.min_slack(y) > 0.0)) continue;
            ++i;
            ++total;
            const auto s = transition_at(pair, y);
            min_eig = std::min(min_eig, s.eigenvalues.minCoeff());
            worst_amgm = std::max(worst_amgm, s.det - std::pow(s.trace / 2.0, 2) * (1.0 + 1e-12));
            worst_partial = std::max(worst_partial, s.partial_bound - s.trace * s.trace);
            worst_compat = std::max(worst_compat, s.compat_residual);
            if (u.min_slack(y) > 0.05 && i % 10 == 0) {
                ++fd_points;
                const Mat J1 = finite_difference_jacobian(pair, y, h);
                const Mat J2 = finite_difference_jacobian(pair, y, h / 2);
                fd_err1 = std::max(fd_err1, (J1 - s.DU).cwiseAbs().maxCoeff());
                fd_err2 = std::max(fd_err2, (J2 - s.DU).cwiseAbs().maxCoeff());
                fd_compat1 = std::max(fd_compat1, compatibility_residual(s.target_inverse_hess, J1));
                fd_compat2 = std::max(fd_compat2, compatibility_residual(s.target_inverse_hess, J2));
            }
        }
    }
    const double order = std::log2(fd_compat1 / fd_compat2);
    v.detail << total << " samples: min eigenvalue " << fmt(min_eig) << ", max det - (tr/2)^2 " << fmt(worst_amgm)
             << ", max partial_bound - tr^2 " << fmt(worst_partial) << ", max compat " << fmt(worst_compat)
             << "; finite-difference compat " << fmt(fd_compat1) << " -> " << fmt(fd_compat2) << " (order "
             << fmt(order) << ", Jacobian error " << fmt(fd_err1) << " -> " << fmt(fd_err2) << ", " << fd_points
             << " points)";
    v.require(total >= 1000, "1000 samples");
    v.require(min_eig > 0.0, "eigenvalues positive");
    v.require(worst_amgm <= 0.0, "det <= (tr/n)^n");
    v.require(worst_partial < 0.0, "partial_bound < tr^2");
    v.require(worst_compat < 1e-8, "compatibility residual < 1e-8");
    v.require(order > 1.7 && order < 2.3, "finite-difference residual O(h^2)");
    v.require(std::log2(fd_err1 / fd_err2) > 1.7, "finite-difference Jacobian O(h^2)");
}

// 8
void grid_vs_radial(Check& v) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto P = trapezoid("2");
    const auto Q = trapezoid("1.5");
    const char* sym = "-(y1+y2)*log(y1+y2)";
    RadialOptions ro;
    ro.snapshot_times = {0.1, 1.0};
    const auto radial = radial_run(linear_profile(2, 1.5, 2.0, 2048), 1.0, ro);
    auto state = init_flow(SymplecticPotential(P, make_correction(sym, 2)), SymplecticPotential(Q, make_correction(sym, 2)),
                           2.0 / 96);
    auto compare = [&](const RadialProfile& p) {
        double e = 0.0;
        for (int k = 0; k < state.grid->size(); ++k)
            e = std::max(e, (embed_radial(p, state.grid->node(k)).U - state.samples[k].U).cwiseAbs().maxCoeff());
        return e;
    };
    const double e0 = compare(linear_profile(2, 1.5, 2.0, 2048));
    FlowOptions opts;
    auto r = run(std::move(state), 0.1, 0.1, {}, opts);
    for (const auto& d : r.trace.rows) g_vertex_error = std::max(g_vertex_error, d.vertex_error);
    state = std::move(r.state);
    const double e1 = compare(radial.snapshots[0].second);
    r = run(std::move(state), 1.0, 0.1, {}, opts);
    for (const auto& d : r.trace.rows) g_vertex_error = std::max(g_vertex_error, d.vertex_error);
    state = std::move(r.state);
    const double e2 = compare(radial.snapshots[1].second);
    const double elapsed = seconds_since(t0);
    v.detail << state.grid->size() << " nodes: sup|U_grid - U_radial| = " << fmt(e0) << " (t=0), " << fmt(e1)
             << " (t=0.1), " << fmt(e2) << " (t=1), " << fmt(elapsed) << " s";
    v.require(std::abs(radial.snapshots[0].first - 0.1) < 1e-12 && std::abs(radial.snapshots[1].first - 1.0) < 1e-12,
              "snapshot times");
    v.require(std::abs(state.t - 1.0) < 1e-12, "grid reached t = 1");
    v.require(e1 < 5e-3 && e2 < 5e-3, "sup difference < 5e-3");
    v.require(elapsed < 300.0, "runtime < 300 s");
    v.detail << ", max vertex error " << fmt(g_vertex_error);
    v.require(g_vertex_error < 1e-9, "vertices fixed < 1e-9");
}

// 9
void structural(Check& v, bool flows_ran) {
    // Legendre involution on several potentials
    std::mt19937_64 rng(7);
    double worst_leg = 0.0;
    for (const auto& u : {SymplecticPotential::canonical(trapezoid("2")),
                          SymplecticPotential(trapezoid("1.1"), make_correction("0.05*sin(2*y1)*cos(y2)", 2)),
                          SymplecticPotential(parse_polytope("dim 2\n1 0 0\n0 1 0\n-1 0 1\n0 -1 1\n"),
                                              make_correction("0.1*(y1^2 + y1*y2 + y2^2)", 2))}) {
        const Vec lo = u.polytope().lower_corner(), hi = u.polytope().upper_corner();
        std::uniform_real_distribution<double> U0(lo(0), hi(0)), U1(lo(1), hi(1));
        for (int i = 0; i < 200;) {
            const Vec y = make_vec({U0(rng), U1(rng)});
            if (!(u.min_slack(y) > 1e-6)) continue;
            ++i;
            worst_leg = std::max(worst_leg, (legendre_dual_grad(u, u.grad(y)) - y).norm());
        }
    }
    v.require(worst_leg < 1e-8, "Legendre round trip < 1e-8");

    // identity pair
    const auto P = trapezoid("2");
    const auto id = SymplecticPotential::canonical(P);
    auto state = init_flow(id, id, 1.0 / 16);
    double worst_id = 0.0;
    for (int k = 0; k < state.grid->size(); ++k)
        worst_id = std::max(worst_id, (state.samples[k].U - state.grid->node(k)).cwiseAbs().maxCoeff());
    const double vol = lattice_volume(P);
    const Diagnostics d = diagnose(state);
    const double quad_energy = energy(GeometryPair(id, id), 3, P.diameter() / 64);
    const auto r = run(std::move(state), 1.0, 0.1);
    v.require(worst_id < 1e-12, "U = id");
    v.require(std::abs(d.energy - 0.5 * 4 * vol) < 1e-12 && std::abs(quad_energy - 0.5 * 4 * vol) < 1e-10,
              "E = n^2 vol / 2");
    v.require(r.outcome.tag == OutcomeTag::Converged && r.state.t == 0.0, "Converged at t = 0");
    for (const auto& row : r.trace.rows) g_vertex_error = std::max(g_vertex_error, row.vertex_error);

    // vertices fixed along a case-3 run as well
    auto c3 = init_flow(SymplecticPotential::canonical(P), SymplecticPotential::canonical(trapezoid("1.1")), 1.0 / 16);
    const auto r3 = run(std::move(c3), 1.0, 0.05);
    for (const auto& row : r3.trace.rows) g_vertex_error = std::max(g_vertex_error, row.vertex_error);
    v.require(g_vertex_error < 1e-9, "vertices fixed < 1e-9");

    v.detail << "Legendre round trip " << fmt(worst_leg) << ", identity |U - y| " << fmt(worst_id) << ", E = "
             << d.energy << " (n^2 vol/2 = " << 0.5 * 4 * vol << "), " << to_string(r.outcome.tag) << " at t = "
             << r.state.t << ", max vertex error " << fmt(g_vertex_error)
             << (flows_ran ? " (all runs)" : " (runs of this criterion; 6 and 8 check their own)");
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    auto wanted = [&](int c) { return only.empty() || only.count(c); };

    const std::vector<std::pair<int, std::function<void(Check&)>>> criteria = {
        {1, case1_radial},
        {2, case3_radial},
        {3, case2_threshold},
        {4, stability_oracle},
        {5, class_invariance},
        {6, monotonicity},
        {7, spectral_invariants},
        {8, grid_vs_radial},
        {9, [&](Check& v) { structural(v, wanted(6) && wanted(8)); }},
    };
    int failed = 0;
    for (const auto& [id, fn] : criteria) {
        if (!wanted(id)) continue;
        Check v;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn(v);
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail << " [exception: " << e.what() << "]";
        }
        std::printf("%s criterion %d: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, v.detail.str().c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        failed += !v.pass;
    }
    return failed == 0 ? 0 : 1;
}
