#include "jflow/calabi.hpp"

#include "jflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace jflow {

std::string_view to_string(RadialCase c) {
    switch (c) {
        case RadialCase::Case1: return "Case1";
        case RadialCase::Case2: return "Case2";
        case RadialCase::Case3: return "Case3";
    }
    return "?";
}

namespace {

void check_parameters(int n, double a, double b) {
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "n must be at least 2");
    if (!(a > 1.0) || !std::isfinite(a)) throw Error(ErrorKind::InvalidArgument, "a must exceed 1");
    if (!(b > 1.0) || !std::isfinite(b)) throw Error(ErrorKind::InvalidArgument, "b must exceed 1");
}

double lambda_equation(int n, double a, double b, double lambda) {
    return (n - 1) * b / lambda + std::pow(lambda / b, n - 1) - n * a;
}

}  // namespace

double blowup_nc(int n, double a, double b) {
    return n * (a * std::pow(b, n - 1) - 1.0) / (std::pow(b, n) - 1.0);
}

Rational blowup_nc_exact(int n, const Rational& a, const Rational& b) {
    Rational bp(1);
    for (int k = 0; k < n - 1; ++k) bp *= b;
    return n * (a * bp - 1) / (bp * b - 1);
}

CaseTag classify(int n, double a, double b) {
    check_parameters(n, a, b);
    CaseTag out;
    out.nc = blowup_nc(n, a, b);
    const double gap = out.nc - (n - 1);
    if (std::abs(gap) <= 1e-12) {
        out.tag = RadialCase::Case2;
    } else if (gap > 0) {
        out.tag = RadialCase::Case1;
    } else {
        out.tag = RadialCase::Case3;
        out.lambda = solve_lambda(n, a, b);
        out.nc_prime = (n - 1) / *out.lambda;
    }
    return out;
}

CaseTag classify_exact(int n, const Rational& a, const Rational& b) {
    check_parameters(n, to_double(a), to_double(b));
    const Rational nc = blowup_nc_exact(n, a, b);
    CaseTag out;
    out.nc = to_double(nc);
    if (nc == n - 1) {
        out.tag = RadialCase::Case2;
    } else if (nc > n - 1) {
        out.tag = RadialCase::Case1;
    } else {
        out.tag = RadialCase::Case3;
        out.lambda = solve_lambda(n, to_double(a), to_double(b));
        out.nc_prime = (n - 1) / *out.lambda;
    }
    return out;
}

double solve_lambda(int n, double a, double b) {
    check_parameters(n, a, b);
    // The left side decreases on (1, b) and equals n < n a at lambda = b.
    if (!(lambda_equation(n, a, b, 1.0) > 0.0))
        throw Error(ErrorKind::NoRoot, "no root in (1, b): nc is not below n - 1");
    double lo = 1.0, hi = b;
    while (hi - lo > 1e-15 * b) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (lambda_equation(n, a, b, mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double lambda = 0.5 * (lo + hi);
    const double via_volumes =
        n * (a * std::pow(b, n - 1) - std::pow(lambda, n - 1)) / (std::pow(b, n) - std::pow(lambda, n));
    if (std::abs(via_volumes - (n - 1) / lambda) > 1e-10)
        throw Error(ErrorKind::NoRoot, "lambda does not reproduce nc' = (n-1)/lambda");
    return lambda;
}

std::vector<double> RadialProfile::f_values() const {
    std::vector<double> out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = 1.0 + q[i];
    return out;
}

std::vector<double> RadialProfile::derivative() const {
    const int m = size();
    const double h = spacing();
    std::vector<double> d(m);
    for (int i = 1; i + 1 < m; ++i) d[i] = (q[i + 1] - q[i - 1]) / (2 * h);
    d[0] = (-3 * q[0] + 4 * q[1] - q[2]) / (2 * h);
    d[m - 1] = (3 * q[m - 1] - 4 * q[m - 2] + q[m - 3]) / (2 * h);
    return d;
}

std::vector<double> RadialProfile::trace() const {
    std::vector<double> t = derivative();
    for (int i = 0; i < size(); ++i) t[i] += (n - 1) * f(i) / B[i];
    return t;
}

std::vector<double> RadialProfile::det() const {
    std::vector<double> d = derivative();
    for (int i = 0; i < size(); ++i) d[i] *= std::pow(f(i) / B[i], n - 1);
    return d;
}

namespace {

// Index of the cell containing B and the local coordinate in it.
std::pair<int, double> locate(const RadialProfile& p, double B) {
    const double h = p.spacing();
    const double x = std::clamp((B - p.B.front()) / h, 0.0, static_cast<double>(p.size() - 1));
    const int i = std::min(static_cast<int>(x), p.size() - 2);
    return {i, x - i};
}

}  // namespace

double RadialProfile::f_at(double Bv) const {
    const auto [i, s] = locate(*this, Bv);
    return 1.0 + (1 - s) * q[i] + s * q[i + 1];
}

double RadialProfile::derivative_at(double Bv) const {
    const auto d = derivative();
    const auto [i, s] = locate(*this, Bv);
    return (1 - s) * d[i] + s * d[i + 1];
}

double RadialProfile::energy() const {
    const auto tr = trace();
    double fact = 1.0;
    for (int k = 2; k < n; ++k) fact *= k;
    const double h = spacing();
    double sum = 0.0;
    for (int i = 0; i < size(); ++i) {
        const double w = (i == 0 || i + 1 == size()) ? 0.5 : 1.0;
        sum += w * tr[i] * tr[i] * std::pow(B[i], n - 1);
    }
    return 0.5 * sum * h / fact;
}

RadialProfile make_profile(int n, double a, double b, int nodes) {
    check_parameters(n, a, b);
    if (nodes < 4) throw Error(ErrorKind::InvalidArgument, "radial grid needs at least 4 nodes");
    RadialProfile p;
    p.n = n;
    p.a = a;
    p.b = b;
    p.B.resize(nodes);
    p.q.assign(nodes, 0.0);
    for (int i = 0; i < nodes; ++i) p.B[i] = 1.0 + (b - 1.0) * i / (nodes - 1);
    p.B.back() = b;
    p.q.back() = a - 1.0;
    return p;
}

RadialProfile linear_profile(int n, double a, double b, int nodes) {
    RadialProfile p = make_profile(n, a, b, nodes);
    for (int i = 1; i + 1 < nodes; ++i) p.q[i] = (a - 1.0) * (p.B[i] - 1.0) / (b - 1.0);
    return p;
}

RadialProfile static_case1(int n, double a, double b, int nodes) {
    if (classify(n, a, b).tag != RadialCase::Case1)
        throw Error(ErrorKind::InvalidArgument, "static profile requires nc > n - 1");
    RadialProfile p = make_profile(n, a, b, nodes);
    const double c = (a * std::pow(b, n - 1) - 1.0) / (std::pow(b, n) - 1.0);
    auto q = [&](double B) { return c * (B - 1.0) + (1.0 - c) * (std::pow(B, 1 - n) - 1.0); };
    if (std::abs(q(b) - (a - 1.0)) > 1e-12) throw Error(ErrorKind::InvalidArgument, "static profile misses f(b) = a");
    for (int i = 1; i + 1 < nodes; ++i) p.q[i] = q(p.B[i]);
    return p;
}

RadialProfile limit_case3(int n, double a, double b, int nodes) {
    const CaseTag tag = classify(n, a, b);
    if (tag.tag != RadialCase::Case3) throw Error(ErrorKind::InvalidArgument, "limit profile requires nc < n - 1");
    RadialProfile p = make_profile(n, a, b, nodes);
    const double lambda = *tag.lambda;
    const double c = (n - 1) / (n * lambda);
    const double K = std::pow(lambda, n - 1) / n;
    auto q = [&](double B) { return B <= lambda ? 0.0 : c * B + K * std::pow(B, 1 - n) - 1.0; };
    if (std::abs(q(b) - (a - 1.0)) > 1e-10) throw Error(ErrorKind::InvalidArgument, "limit profile misses f(b) = a");
    for (int i = 1; i + 1 < nodes; ++i) p.q[i] = q(p.B[i]);
    return p;
}

namespace {

// Fluxes tr_{i+1/2} = alpha_i f_{i+1} - beta_i f_i, the midpoint value of
// B^{1-n} (B^{n-1} f)' with weights chosen so that c B + d B^{1-n} has a
// constant flux exactly.
struct FluxWeights {
    std::vector<double> alpha, beta;
};

FluxWeights flux_weights(const RadialProfile& p) {
    FluxWeights w;
    const int m = p.size();
    w.alpha.resize(m - 1);
    w.beta.resize(m - 1);
    for (int i = 0; i + 1 < m; ++i) {
        const double lo = std::pow(p.B[i], p.n - 1), hi = std::pow(p.B[i + 1], p.n - 1);
        const double D = hi * p.B[i + 1] - lo * p.B[i];
        w.alpha[i] = p.n * hi / D;
        w.beta[i] = p.n * lo / D;
    }
    return w;
}

// 1 / theta''(f) for theta(B) = (B-1) log(B-1) + (a-B) log(a-B).
double mobility(double q, double a) { return std::max(0.0, q * (a - 1.0 - q) / (a - 1.0)); }

// d/dB tr at interior nodes for the profile q.
void operator_apply(const RadialProfile& p, const FluxWeights& w, const std::vector<double>& q,
                    std::vector<double>& out) {
    const int m = p.size();
    const double h = p.spacing();
    out.assign(m, 0.0);
    auto flux = [&](int i) { return w.alpha[i] * (1.0 + q[i + 1]) - w.beta[i] * (1.0 + q[i]); };
    for (int i = 1; i + 1 < m; ++i) out[i] = (flux(i) - flux(i - 1)) / h;
}

double static_residual(const RadialProfile& p, double nc) {
    double worst = 0.0;
    for (double t : p.trace()) worst = std::max(worst, std::abs(t - nc));
    return worst;
}

double min_det(const RadialProfile& p) {
    const auto d = p.det();
    return *std::min_element(d.begin(), d.end());
}

void check_monotone(const RadialProfile& p, double t) {
    for (int i = 0; i + 1 < p.size(); ++i)
        if (!(p.q[i + 1] > p.q[i]))
            throw Error(ErrorKind::StepFailure, "profile stopped increasing near B = " + std::to_string(p.B[i]) +
                                                    " at t = " + std::to_string(t));
}

// (I - dt K L) q_new = q + dt K L(1), tridiagonal with Dirichlet ends.
void implicit_step(RadialProfile& p, const FluxWeights& w, double dt) {
    const int m = p.size();
    const double h = p.spacing();
    std::vector<double> lower(m, 0.0), diag(m, 1.0), upper(m, 0.0), rhs = p.q;
    for (int i = 1; i + 1 < m; ++i) {
        const double k = dt * mobility(p.q[i], p.a) / h;
        lower[i] = -k * w.beta[i - 1];
        upper[i] = -k * w.alpha[i];
        diag[i] = 1.0 + k * (w.beta[i] + w.alpha[i - 1]);
        rhs[i] += k * ((w.alpha[i] - w.beta[i]) - (w.alpha[i - 1] - w.beta[i - 1]));
    }
    // Thomas algorithm; the matrix is strictly diagonally dominant.
    for (int i = 1; i < m; ++i) {
        const double factor = lower[i] / diag[i - 1];
        diag[i] -= factor * upper[i - 1];
        rhs[i] -= factor * rhs[i - 1];
    }
    p.q[m - 1] = rhs[m - 1] / diag[m - 1];
    for (int i = m - 2; i >= 0; --i) p.q[i] = (rhs[i] - upper[i] * p.q[i + 1]) / diag[i];
    p.q.front() = 0.0;
    p.q.back() = p.a - 1.0;
}

void explicit_step(RadialProfile& p, const FluxWeights& w, double dt) {
    std::vector<double> L;
    operator_apply(p, w, p.q, L);
    std::vector<double> mid = p.q;
    for (int i = 1; i + 1 < p.size(); ++i) mid[i] += 0.5 * dt * mobility(p.q[i], p.a) * L[i];
    operator_apply(p, w, mid, L);
    for (int i = 1; i + 1 < p.size(); ++i) p.q[i] += dt * mobility(mid[i], p.a) * L[i];
}

}  // namespace

RadialRun radial_run(const RadialProfile& initial, double t_end, const RadialOptions& opts) {
    if (!(t_end >= 0.0)) throw Error(ErrorKind::InvalidArgument, "t_end must be non-negative");
    if (!(opts.record_every > 0.0)) throw Error(ErrorKind::InvalidArgument, "record interval must be positive");
    RadialProfile p = initial;
    check_monotone(p, 0.0);
    const double nc = blowup_nc(p.n, p.a, p.b);
    const FluxWeights w = flux_weights(p);
    const double h = p.spacing();

    RadialRun run;
    double dt = opts.dt;
    if (opts.scheme == RadialScheme::ExplicitRK2) {
        const double kmax = (p.a - 1.0) / 4.0;  // max of q (a - 1 - q)/(a - 1)
        const double stable = 0.2 * h * h / kmax;
        dt = dt > 0.0 ? std::min(dt, stable) : stable;
    } else if (!(dt > 0.0)) {
        dt = 1e-3;
    }
    run.dt = dt;

    std::vector<double> stops = opts.snapshot_times;
    std::sort(stops.begin(), stops.end());
    std::size_t next_snapshot = 0;
    auto record = [&](double t) { run.series.push_back({t, static_residual(p, nc), p.energy(), min_det(p)}); };
    auto take_snapshots = [&](double t) {
        while (next_snapshot < stops.size() && stops[next_snapshot] <= t + 1e-12) {
            run.snapshots.emplace_back(stops[next_snapshot], p);
            ++next_snapshot;
        }
    };

    double t = 0.0;
    record(t);
    take_snapshots(t);
    long record_index = 1;
    while (t < t_end - 1e-12 * std::max(1.0, t_end)) {
        double target = std::min(t_end, record_index * opts.record_every);
        if (next_snapshot < stops.size()) target = std::min(target, stops[next_snapshot]);
        const double step = std::min(dt, target - t);
        if (opts.scheme == RadialScheme::ExplicitRK2)
            explicit_step(p, w, step);
        else
            implicit_step(p, w, step);
        ++run.steps;
        t = std::abs(target - (t + step)) <= 1e-12 * std::max(1.0, target) ? target : t + step;
        check_monotone(p, t);
        take_snapshots(t);
        if (t >= record_index * opts.record_every - 1e-12) {
            record(t);
            ++record_index;
        } else if (t >= t_end - 1e-12 * std::max(1.0, t_end)) {
            record(t);
        }
    }
    run.final_profile = std::move(p);
    return run;
}

std::optional<double> squeeze_point(const RadialProfile& p, double nc_prime, double tol) {
    const auto tr = p.trace();
    for (int i = 0; i < p.size(); ++i) {
        const double r = std::abs(tr[i] - nc_prime);
        if (r >= tol) continue;
        if (i == 0) return p.B[0];
        const double r_prev = std::abs(tr[i - 1] - nc_prime);
        return p.B[i - 1] + (r_prev - tol) / (r_prev - r) * p.spacing();
    }
    return std::nullopt;
}

EmbeddedSample embed_radial(const RadialProfile& p, const Vec& y) {
    const int n = static_cast<int>(y.size());
    if (n != p.n) throw Error(ErrorKind::InvalidArgument, "point dimension differs from the profile's n");
    const double B = y.sum();
    if (!(B >= 1.0 - 1e-9) || !(B <= p.b + 1e-9)) throw Error(ErrorKind::InvalidArgument, "point is outside the shell");
    const double f = p.f_at(B);
    const double fp = p.derivative_at(B);
    EmbeddedSample out;
    out.U = y * (f / B);
    out.DU = Mat::Identity(n, n) * (f / B) + y * Vec::Ones(n).transpose() * (fp / B - f / (B * B));
    return out;
}

}  // namespace jflow
