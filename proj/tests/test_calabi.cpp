#include <doctest.h>

#include "jflow/calabi.hpp"
#include "jflow/errors.hpp"
#include "jflow/polytope.hpp"
#include "jflow/transition.hpp"

#include <cmath>

using namespace jflow;

TEST_CASE("case classification") {
    auto c = classify(2, 2.0, 2.0);
    CHECK(c.tag == RadialCase::Case1);
    CHECK(c.nc == doctest::Approx(2.0));
    CHECK(!c.lambda);

    c = classify(2, 1.25, 2.0);
    CHECK(c.tag == RadialCase::Case2);
    CHECK(c.nc == doctest::Approx(1.0));
    const auto exact = classify_exact(2, parse_rational("5/4"), Rational(2));
    CHECK(exact.tag == RadialCase::Case2);
    CHECK(blowup_nc_exact(2, parse_rational("5/4"), Rational(2)) == Rational(1));

    c = classify(2, 1.1, 2.0);
    CHECK(c.tag == RadialCase::Case3);
    CHECK(c.nc == doctest::Approx(0.8));
    REQUIRE(c.lambda);
    // 4 + l^2 = 4.4 l
    const double root = (4.4 - std::sqrt(4.4 * 4.4 - 16.0)) / 2.0;
    CHECK(*c.lambda == doctest::Approx(root).epsilon(1e-12));
    CHECK(*c.nc_prime == doctest::Approx(1.0 / root).epsilon(1e-12));
    CHECK(std::abs(*c.lambda - 1.2834849) < 1e-6);

    CHECK(to_string(RadialCase::Case3) == "Case3");
    CHECK_THROWS_AS(classify(2, 1.0, 2.0), Error);
    CHECK_THROWS_AS(classify(1, 1.5, 2.0), Error);
}

TEST_CASE("nc agrees with the mixed-volume formula") {
    for (const char* a : {"1.1", "1.25", "3/2", "2", "3"})
        for (const char* b : {"2", "5/2"}) {
            const Rational ra = parse_rational(a), rb = parse_rational(b);
            const double direct = compute_nc(blowup_polytope(2, rb), blowup_polytope(2, ra));
            CHECK(blowup_nc(2, ra.convert_to<double>(), rb.convert_to<double>()) == doctest::Approx(direct).epsilon(1e-10));
        }
    const double n3 = compute_nc(blowup_polytope(3, Rational(2)), blowup_polytope(3, parse_rational("3/2")));
    CHECK(blowup_nc(3, 1.5, 2.0) == doctest::Approx(n3).epsilon(1e-10));
}

TEST_CASE("lambda root") {
    const double l = solve_lambda(2, 1.1, 2.0);
    CHECK(std::abs(2.0 / l + l / 2.0 - 2.2) < 1e-12);
    CHECK(l > 1.0);
    CHECK(l < 2.0);
    // n = 3: 2 b / l + l^2 / b^2 = 3 a
    const double l3 = solve_lambda(3, 1.05, 2.0);
    CHECK(std::abs(4.0 / l3 + l3 * l3 / 4.0 - 3.15) < 1e-12);
    try {
        solve_lambda(2, 1.25, 2.0);
        FAIL("expected NoRoot");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NoRoot);
    }
    CHECK_THROWS_AS(solve_lambda(2, 2.0, 2.0), Error);
}

TEST_CASE("static case-1 profiles") {
    const auto id = static_case1(2, 2.0, 2.0, 65);
    for (int i = 0; i < id.size(); ++i) CHECK(id.f(i) == doctest::Approx(id.B[i]).epsilon(1e-14));

    const auto p = static_case1(2, 1.5, 2.0, 257);
    for (int i = 0; i < p.size(); ++i) {
        const double B = p.B[i];
        CHECK(p.f(i) == doctest::Approx(2.0 / 3.0 * B + 1.0 / 3.0 / B).epsilon(1e-14));
    }
    CHECK(p.f(p.size() - 1) == doctest::Approx(1.5).epsilon(1e-12));
    const auto tr = p.trace();
    for (double t : tr) CHECK(t == doctest::Approx(4.0 / 3.0).epsilon(1e-4));
    // f'(1) = nc - (n - 1)
    CHECK(p.derivative()[0] == doctest::Approx(4.0 / 3.0 - 1.0).epsilon(1e-4));
    CHECK_THROWS_AS(static_case1(2, 1.1, 2.0, 65), Error);
}

TEST_CASE("case-3 limit profile") {
    const auto p = limit_case3(2, 1.1, 2.0, 2049);
    const double l = solve_lambda(2, 1.1, 2.0);
    CHECK(p.f_at(1.1) == doctest::Approx(1.0));
    CHECK(p.f_at(l - 1e-3) == doctest::Approx(1.0));
    CHECK(p.f(p.size() - 1) == doctest::Approx(1.1).epsilon(1e-10));
    const auto tr = p.trace();
    for (int i = 1; i < p.size() - 1; ++i)
        if (p.B[i] < l - 0.01) CHECK(tr[i] == doctest::Approx(1.0 / p.B[i]).epsilon(1e-9));
    // C1 at lambda: both one-sided slopes vanish.
    const double c = 1.0 / (2.0 * l);
    const double K = l / 2.0;
    const double right_slope = c - K / (l * l);
    CHECK(std::abs(right_slope) < 1e-12);
    CHECK(std::abs(p.derivative_at(l + 1e-3)) < 1e-2);
    CHECK_THROWS_AS(limit_case3(2, 2.0, 2.0, 65), Error);
}

TEST_CASE("radial flow: static data stays put and energy decreases") {
    const auto st = static_case1(2, 1.5, 2.0, 513);
    const auto r = radial_run(st, 1.0);
    for (int i = 0; i < st.size(); ++i) CHECK(std::abs(r.final_profile.q[i] - st.q[i]) < 1e-10);

    RadialOptions opts;
    opts.record_every = 0.05;
    for (auto scheme : {RadialScheme::LinearlyImplicit, RadialScheme::ExplicitRK2}) {
        opts.scheme = scheme;
        const auto run = radial_run(linear_profile(2, 1.5, 2.0, 129), 2.0, opts);
        REQUIRE(run.series.size() >= 2);
        for (std::size_t i = 1; i < run.series.size(); ++i)
            CHECK(run.series[i].energy <= run.series[i - 1].energy + 1e-12);
        CHECK(run.series.back().static_residual < run.series.front().static_residual);
    }
}

TEST_CASE("radial flow converges in case 1 and squeezes in case 3") {
    const auto r1 = radial_run(linear_profile(2, 1.5, 2.0, 257), 20.0);
    const auto st = static_case1(2, 1.5, 2.0, 257);
    double err = 0.0;
    for (int i = 0; i < st.size(); ++i) err = std::max(err, std::abs(r1.final_profile.f(i) - st.f(i)));
    CHECK(err < 1e-4);

    const auto r3 = radial_run(linear_profile(2, 1.1, 2.0, 513), 40.0);
    const auto tag = classify(2, 1.1, 2.0);
    const auto sq = squeeze_point(r3.final_profile, *tag.nc_prime);
    REQUIRE(sq);
    CHECK(std::abs(*sq - *tag.lambda) < 0.02);
    const auto det = r3.final_profile.det();
    for (int i = 0; i < r3.final_profile.size(); ++i) {
        const double B = r3.final_profile.B[i];
        if (B > 1.0 && B < *tag.lambda - 0.05) CHECK(det[i] < 1e-3);
        if (B > *tag.lambda + 0.05) CHECK(det[i] > 1e-3);
    }
}

TEST_CASE("snapshots land on requested times") {
    RadialOptions opts;
    opts.snapshot_times = {0.1, 0.25};
    const auto r = radial_run(linear_profile(2, 1.5, 2.0, 65), 0.3, opts);
    REQUIRE(r.snapshots.size() == 2);
    CHECK(r.snapshots[0].first == doctest::Approx(0.1));
    CHECK(r.snapshots[1].first == doctest::Approx(0.25));
}

TEST_CASE("embedding of a radial profile") {
    const auto id = static_case1(2, 2.0, 2.0, 65);
    for (const Vec& y : {make_vec({0.5, 0.7}), make_vec({1.0, 0.0}), make_vec({0.3, 1.2})}) {
        const auto s = embed_radial(id, y);
        CHECK((s.U - y).norm() < 1e-12);
        CHECK((s.DU - Mat::Identity(2, 2)).norm() < 1e-6);
    }
    const auto p = static_case1(2, 1.5, 2.0, 1025);
    const Vec y = make_vec({0.4, 0.9});
    const double B = 1.3;
    const auto s = embed_radial(p, y);
    const double f = 2.0 / 3.0 * B + 1.0 / 3.0 / B, fp = 2.0 / 3.0 - 1.0 / 3.0 / (B * B);
    CHECK(s.U(0) == doctest::Approx(f * 0.4 / B).epsilon(1e-6));
    CHECK(s.DU.trace() == doctest::Approx(fp + f / B).epsilon(1e-5));
    CHECK(s.DU.determinant() == doctest::Approx(fp * f / B).epsilon(1e-5));

    // Against the full transition map of the symmetric pair.
    const auto lin = linear_profile(2, 1.5, 2.0, 2049);
    const GeometryPair pair(SymplecticPotential(blowup_polytope(2, Rational(2)), make_correction("-(y1+y2)*log(y1+y2)", 2)),
                            SymplecticPotential(blowup_polytope(2, parse_rational("3/2")),
                                                make_correction("-(y1+y2)*log(y1+y2)", 2)));
    for (const Vec& z : {make_vec({0.4, 0.9}), make_vec({1.5, 0.2}), make_vec({0.0, 1.7})}) {
        const auto e = embed_radial(lin, z);
        const auto t = transition_at(pair, z);
        CHECK((e.U - t.U).norm() < 1e-9);
        CHECK(e.DU.trace() == doctest::Approx(t.trace).epsilon(1e-6));
    }
}
