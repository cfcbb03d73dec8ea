#ifndef JFLOW_CALABI_HPP
#define JFLOW_CALABI_HPP

#include "jflow/linalg.hpp"
#include "jflow/polytope.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace jflow {

// Radial reduction on the blowup polytope {y >= 0, 1 <= B <= b}, B = sum y^i,
// against Q = {y >= 0, 1 <= B <= a}. A transition map of the symmetric form
// U(y) = f(B) y / B is described by its profile f : [1, b] -> [1, a].

enum class RadialCase { Case1, Case2, Case3 };
std::string_view to_string(RadialCase c);

struct CaseTag {
    RadialCase tag = RadialCase::Case1;
    double nc = 0.0;
    std::optional<double> lambda;    // Case3 only
    std::optional<double> nc_prime;  // Case3 only
};

/// nc = n (a b^{n-1} - 1) / (b^n - 1).
double blowup_nc(int n, double a, double b);
Rational blowup_nc_exact(int n, const Rational& a, const Rational& b);

/// Compares nc with n - 1 (Case2 within 1e-12).
CaseTag classify(int n, double a, double b);
/// Same comparison in exact arithmetic.
CaseTag classify_exact(int n, const Rational& a, const Rational& b);

/// Root in (1, b) of (n-1) b / lambda + lambda^{n-1} / b^{n-1} = n a.
/// Throws NoRoot unless the left side exceeds n a at lambda = 1.
double solve_lambda(int n, double a, double b);

struct RadialProfile {
    int n = 2;
    double a = 2.0;
    double b = 2.0;
    std::vector<double> B;  // uniform nodes on [1, b]
    std::vector<double> q;  // f - 1, kept separately so that f -> 1 keeps relative precision

    int size() const { return static_cast<int>(B.size()); }
    double spacing() const { return B[1] - B[0]; }
    double f(int i) const { return 1.0 + q[i]; }
    std::vector<double> f_values() const;
    /// f' at the nodes (second-order differences, one-sided at the ends).
    std::vector<double> derivative() const;
    /// f' + (n-1) f / B, the trace of DU.
    std::vector<double> trace() const;
    /// f' (f / B)^{n-1}, the determinant of DU.
    std::vector<double> det() const;
    /// Piecewise-linear interpolation of f and f' at B in [1, b].
    double f_at(double B) const;
    double derivative_at(double B) const;
    /// 1/2 integral over P of (tr DU)^2, as a 1-D integral with weight B^{n-1}/(n-1)!.
    double energy() const;
};

RadialProfile make_profile(int n, double a, double b, int nodes);
/// f(B) = 1 + (a - 1)(B - 1)/(b - 1). This is also the profile of the pair
/// u = canonical(P) - B log B, g = canonical(Q) - B log B: theta'(f) = h'(B)
/// reads (f - 1)/(a - f) = (B - 1)/(b - B).
RadialProfile linear_profile(int n, double a, double b, int nodes);
/// f = c B + (1 - c) B^{1-n}, c = (a b^{n-1} - 1)/(b^n - 1); requires Case1.
RadialProfile static_case1(int n, double a, double b, int nodes);
/// f = 1 on [1, lambda], f = c' B + K B^{1-n} on [lambda, b]; requires Case3.
RadialProfile limit_case3(int n, double a, double b, int nodes);

enum class RadialScheme { LinearlyImplicit, ExplicitRK2 };

struct RadialOptions {
    RadialScheme scheme = RadialScheme::LinearlyImplicit;
    double dt = 0.0;             // 0: automatic
    double record_every = 0.1;   // time between series entries
    std::vector<double> snapshot_times;
};

struct RadialSample {
    double t = 0.0;
    double static_residual = 0.0;  // sup |tr - nc|
    double energy = 0.0;
    double min_det = 0.0;
};

struct RadialRun {
    RadialProfile final_profile;
    std::vector<RadialSample> series;
    std::vector<std::pair<double, RadialProfile>> snapshots;
    long steps = 0;
    double dt = 0.0;
};

/// Evolves df/dt = (1/theta''(f)) d/dB (f' + (n-1) f / B) with f(1) = 1,
/// f(b) = a held fixed and theta the canonical radial potential of Q.
/// Throws StepFailure if f stops being strictly increasing.
RadialRun radial_run(const RadialProfile& initial, double t_end, const RadialOptions& opts = {});

/// Leftmost B where |tr - nc'| < tol, linearly interpolated between nodes.
std::optional<double> squeeze_point(const RadialProfile& p, double nc_prime, double tol = 1e-2);

/// U(y) = f(B) y / B and its Jacobian.
struct EmbeddedSample {
    Vec U;
    Mat DU;
};
EmbeddedSample embed_radial(const RadialProfile& p, const Vec& y);

}  // namespace jflow

#endif
