#include "jflow/potential.hpp"

#include "jflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace jflow {

std::shared_ptr<const Correction> make_correction(const std::string& expression, int dim) {
    if (expression.empty()) return std::make_shared<ZeroCorrection>();
    return std::make_shared<ExpressionCorrection>(Expression::parse(expression, dim));
}

SymplecticPotential::SymplecticPotential(DelzantPolytope P, std::shared_ptr<const Correction> v)
    : polytope_(std::make_shared<const DelzantPolytope>(std::move(P))),
      correction_(v ? std::move(v) : std::make_shared<ZeroCorrection>()) {
    const auto& poly = *polytope_;
    dim_ = poly.dim();
    if (dim_ > kMaxDim)
        throw Error(ErrorKind::Unsupported, "potentials support dimension at most " + std::to_string(kMaxDim));
    if (poly.facet_count() > kMaxFacets)
        throw Error(ErrorKind::Unsupported, "potentials support at most " + std::to_string(kMaxFacets) + " facets");
    for (int i = 0; i < poly.facet_count(); ++i) {
        normals_.push_back(poly.normal_matrix().row(i).transpose());
        offsets_.push_back(poly.offset_vector()(i));
    }
    for (int v = 0; v < static_cast<int>(poly.vertices().size()); ++v) {
        Chart c;
        c.facets = poly.vertices()[v].facets;
        for (int i = 0; i < poly.facet_count(); ++i)
            if (std::find(c.facets.begin(), c.facets.end(), i) == c.facets.end()) c.others.push_back(i);
        c.A = poly.chart_matrix(v);
        c.A_inv = poly.chart_inverse(v);
        c.offsets.resize(dim_);
        for (int r = 0; r < dim_; ++r) c.offsets(r) = offsets_[c.facets[r]];
        charts_.push_back(std::move(c));
        vertices_.push_back(poly.vertex_point(v));
    }
    center_ = poly.vertex_centroid();
    diameter_ = poly.diameter();
    h_switch_ = 1e-3 * diameter_;
}

SymplecticPotential SymplecticPotential::canonical(DelzantPolytope P) {
    return SymplecticPotential(std::move(P), std::make_shared<ZeroCorrection>());
}

SlackVec SymplecticPotential::slacks(const Vec& y) const {
    SlackVec d(facet_count());
    for (int i = 0; i < facet_count(); ++i) d(i) = slack(i, y);
    return d;
}

double SymplecticPotential::min_slack(const Vec& y) const { return slacks(y).minCoeff(); }

void SymplecticPotential::require_interior(const Vec& y) const {
    if (y.size() != dim_) throw Error(ErrorKind::InvalidArgument, "point has wrong dimension");
    for (int i = 0; i < facet_count(); ++i)
        if (slack(i, y) <= kBoundaryFloor)
            throw Error(ErrorKind::BoundaryEvaluation,
                        "point is on or outside facet " + polytope_->facet_equation(i));
}

double SymplecticPotential::eval(const Vec& y) const {
    require_interior(y);
    double u = correction_->jet(y).value;
    for (int i = 0; i < facet_count(); ++i) {
        const double d = slack(i, y);
        u += d * std::log(d);
    }
    return u;
}

Vec SymplecticPotential::grad(const Vec& y) const {
    require_interior(y);
    return grad_with(y, correction_->jet(y));
}

Mat SymplecticPotential::hess(const Vec& y) const {
    require_interior(y);
    return hess_with(y, correction_->jet(y));
}

Vec SymplecticPotential::grad_with(const Vec& y, const Jet& v) const {
    Vec g = v.grad;
    for (int i = 0; i < facet_count(); ++i) g += normals_[i] * (std::log(slack(i, y)) + 1.0);
    return g;
}

Mat SymplecticPotential::hess_with(const Vec& y, const Jet& v) const {
    Mat H = v.hess;
    for (int i = 0; i < facet_count(); ++i) H += normals_[i] * normals_[i].transpose() / slack(i, y);
    return H;
}

int SymplecticPotential::chart_for(const Vec& y) const {
    int best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < vertex_count(); ++v) {
        double worst = std::numeric_limits<double>::infinity();
        for (int j : charts_[v].others) worst = std::min(worst, slack(j, y));
        if (worst > best_value) {
            best_value = worst;
            best = v;
        }
    }
    return best;
}

ChartJet SymplecticPotential::chart_jet(int vertex, const Vec& y, const Jet& v) const {
    const Chart& c = charts_[vertex];
    ChartJet out;
    out.vertex = vertex;
    out.coords.resize(dim_);
    for (int r = 0; r < dim_; ++r) out.coords(r) = slack(c.facets[r], y);
    Vec g = v.grad;
    Mat H = v.hess;
    for (int j : c.others) {
        const double d = slack(j, y);
        if (!(d > 0.0))
            throw Error(ErrorKind::NoVertexChart, "point is outside the chart of vertex " + std::to_string(vertex));
        g += normals_[j] * (std::log(d) + 1.0);
        H += normals_[j] * normals_[j].transpose() / d;
    }
    out.grad_w = c.A_inv.transpose() * g;
    out.hess_w = c.A_inv.transpose() * H * c.A_inv;
    return out;
}

Vec SymplecticPotential::from_chart(int vertex, const Vec& coords) const {
    const Chart& c = charts_[vertex];
    return c.A_inv * (coords - c.offsets);
}

Mat SymplecticPotential::inverse_hess_extended(const Vec& y) const {
    return inverse_hess_extended_with(y, correction_->jet(y));
}

Mat SymplecticPotential::inverse_hess_extended_with(const Vec& y, const Jet& v) const {
    if (min_slack(y) >= h_switch_) {
        Eigen::LLT<Mat> llt(hess_with(y, v));
        if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotConvex, "Hessian is not positive definite");
        return llt.solve(Mat::Identity(dim_, dim_));
    }
    // (diag(1/s) + W)^{-1} = S (I + S W S)^{-1} S with S = diag(sqrt(s)),
    // finite when some chart slack s_i vanishes.
    const int vtx = chart_for(y);
    const ChartJet cj = chart_jet(vtx, y, v);
    for (int r = 0; r < dim_; ++r)
        if (cj.coords(r) < -1e-9 * (1.0 + diameter_))
            throw Error(ErrorKind::NoVertexChart, "point lies outside the polytope");
    const Vec s = cj.coords.cwiseMax(0.0).cwiseSqrt();
    Mat K = Mat::Identity(dim_, dim_) + s.asDiagonal() * cj.hess_w * s.asDiagonal();
    Eigen::LLT<Mat> llt(K);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotConvex, "chart Hessian is not positive definite");
    const Mat inner = s.asDiagonal() * llt.solve(Mat(s.asDiagonal())) ;
    const Chart& c = charts_[vtx];
    return c.A_inv * inner * c.A_inv.transpose();
}

namespace {

struct LogChartState {
    int vertex = 0;
    Vec s;  // log of the chart coordinates
};

// r = s + 1 + dw/ds-coordinates - x~, the chart form of grad g(z) - x.
bool log_chart_residual(const SymplecticPotential& g, const LogChartState& st, const Vec& x, Vec& r,
                        Mat* jac, Vec* z_out, Jet* jet_out = nullptr) {
    const Vec coords = st.s.array().exp().matrix();
    const Vec z = g.from_chart(st.vertex, coords);
    for (int j = 0; j < g.facet_count(); ++j) {
        const auto& facets = g.chart_facets(st.vertex);
        if (std::find(facets.begin(), facets.end(), j) != facets.end()) continue;
        if (!(g.slack(j, z) > 0.0)) return false;
    }
    Jet vj = g.correction().jet(z);
    const ChartJet cj = g.chart_jet(st.vertex, z, vj);
    const Vec xt = g.chart_inverse(st.vertex).transpose() * x;
    r = st.s + Vec::Ones(g.dim()) + cj.grad_w - xt;
    if (!r.allFinite()) return false;
    if (jac) *jac = Mat::Identity(g.dim(), g.dim()) + cj.hess_w * coords.asDiagonal();
    if (z_out) *z_out = z;
    if (jet_out) *jet_out = std::move(vj);
    return true;
}

}  // namespace

LegendreResult legendre_dual_grad_detailed(const SymplecticPotential& g, const Vec& x,
                                           const std::optional<Vec>& start) {
    const int n = g.dim();
    if (x.size() != n) throw Error(ErrorKind::InvalidArgument, "covector has wrong dimension");
    if (!x.allFinite()) throw Error(ErrorKind::InvalidArgument, "covector is not finite");
    const double tol = 1e-10 * (1.0 + x.norm());

    Vec z = g.center();
    if (start && start->size() == n && g.min_slack(*start) > 0.0) z = *start;

    auto enter_chart = [&](const Vec& point) {
        LogChartState st;
        st.vertex = g.chart_for(point);
        st.s.resize(n);
        const auto& facets = g.chart_facets(st.vertex);
        for (int r = 0; r < n; ++r) st.s(r) = std::log(g.slack(facets[r], point));
        return st;
    };
    LogChartState st = enter_chart(z);

    LegendreResult result;
    Vec r, r_trial, z_trial;
    Mat J, J_trial;
    Jet vj, vj_trial;
    bool fresh = false;  // r, J, z already hold the current iterate
    int polish = 0;
    for (int it = 0; it <= kNewtonMaxIterations; ++it) {
        if (!fresh && !log_chart_residual(g, st, x, r, &J, &z, &vj))
            throw Error(ErrorKind::NewtonDivergence, "iterate left the chart domain");
        fresh = false;
        const Mat& A = g.chart_matrix(st.vertex);
        const double norm = (A.transpose() * r).norm();
        if (polish > 0 && norm >= result.residual) return result;
        result.z = z;
        result.iterations = it;
        result.residual = norm;
        result.correction = vj;
        // A few extra steps past the tolerance bring the residual to rounding level.
        if (norm < tol && (norm < 1e-14 * (1.0 + x.norm()) || polish++ == 3)) return result;
        if (it == kNewtonMaxIterations) break;

        // Move to a better chart while the iterate is strictly interior. Not
        // while polishing: residuals in different charts are not comparable.
        if (norm >= tol && g.min_slack(z) > 0.0) {
            const int better = g.chart_for(z);
            if (better != st.vertex) {
                st = enter_chart(z);
                continue;
            }
        }

        const Vec step = small_solve(J, -r);
        double alpha = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k, alpha *= 0.5) {
            LogChartState trial{st.vertex, st.s + alpha * step};
            if (!log_chart_residual(g, trial, x, r_trial, &J_trial, &z_trial, &vj_trial)) continue;
            if ((A.transpose() * r_trial).norm() < norm) {
                st = trial;
                r = r_trial;
                J = J_trial;
                z = z_trial;
                vj = vj_trial;
                fresh = true;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (norm < tol) return result;
            throw Error(ErrorKind::NewtonDivergence,
                        "line search stalled at residual " + std::to_string(norm));
        }
    }
    if (result.residual < tol) return result;
    throw Error(ErrorKind::NewtonDivergence,
                "no convergence in " + std::to_string(kNewtonMaxIterations) + " iterations");
}

Vec legendre_dual_grad(const SymplecticPotential& g, const Vec& x) {
    return legendre_dual_grad_detailed(g, x).z;
}

}  // namespace jflow
