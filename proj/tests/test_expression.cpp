#include <doctest.h>

#include "jflow/errors.hpp"
#include "jflow/expression.hpp"

#include <cmath>

using namespace jflow;

namespace {

// Central differences of the value, for checking analytic jets.
void check_jet_against_differences(const Expression& e, const Vec& y) {
    const Jet j = e.eval(y);
    const int n = static_cast<int>(y.size());
    const double h = 1e-4;
    for (int a = 0; a < n; ++a) {
        Vec yp = y, ym = y;
        yp(a) += h;
        ym(a) -= h;
        const double g = (e.value(yp) - e.value(ym)) / (2 * h);
        CHECK(j.grad(a) == doctest::Approx(g).epsilon(1e-6));
        for (int b = 0; b < n; ++b) {
            Vec pp = y, pm = y, mp = y, mm = y;
            pp(a) += h; pp(b) += h;
            pm(a) += h; pm(b) -= h;
            mp(a) -= h; mp(b) += h;
            mm(a) -= h; mm(b) -= h;
            const double H = (e.value(pp) - e.value(pm) - e.value(mp) + e.value(mm)) / (4 * h * h);
            CHECK(j.hess(a, b) == doctest::Approx(H).epsilon(1e-5).scale(1.0));
        }
    }
}

}  // namespace

TEST_CASE("expressions evaluate values") {
    const auto e = Expression::parse("2*y1^2 - y2/4 + 3", 2);
    CHECK(e.value(make_vec({1.0, 2.0})) == doctest::Approx(4.5));
    CHECK(Expression::parse("-y1^2", 1).value(make_vec({3.0})) == doctest::Approx(-9.0));
    CHECK(Expression::parse("2^3^2", 1).value(make_vec({0.0})) == doctest::Approx(512.0));
    CHECK(Expression::parse("pi", 1).value(make_vec({0.0})) == doctest::Approx(M_PI));
    CHECK(Expression::parse("1e-2*y1", 1).value(make_vec({3.0})) == doctest::Approx(0.03));
    CHECK(Expression::parse("pow(y1, 3)", 1).value(make_vec({2.0})) == doctest::Approx(8.0));
}

TEST_CASE("expression jets agree with finite differences") {
    const Vec y = make_vec({0.3, 0.45});
    check_jet_against_differences(Expression::parse("-(y1+y2)*log(y1+y2)", 2), y);
    check_jet_against_differences(Expression::parse("exp(y1*y2) + sin(y1) * cos(y2)", 2), y);
    check_jet_against_differences(Expression::parse("sqrt(1 + y1^2 + y2^2) / (2 + y1)", 2), y);
    check_jet_against_differences(Expression::parse("pow(1 + y1, y2)", 2), y);
}

TEST_CASE("malformed expressions are rejected") {
    for (const char* bad : {"", "y3", "y1 +", "(y1", "foo(y1)", "y1 y2", "y0"}) {
        try {
            Expression::parse(bad, 2);
            FAIL("accepted " << bad);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ParseError);
        }
    }
}
