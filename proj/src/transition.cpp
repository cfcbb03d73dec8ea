#include "jflow/transition.hpp"

#include "jflow/errors.hpp"
#include "jflow/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace jflow {

GeometryPair::GeometryPair(SymplecticPotential u, SymplecticPotential g) : u_(std::move(u)), g_(std::move(g)) {
    if (!u_.polytope().same_normals(g_.polytope()))
        throw Error(ErrorKind::NormalMismatch, "source and target polytopes have different normals");
}

double compatibility_residual(const Mat& M, const Mat& DU) {
    const Mat S = M * DU.transpose();
    return (S - S.transpose()).cwiseAbs().maxCoeff();
}

namespace {

bool inside_chart(const SymplecticPotential& g, int vertex, const Vec& coords) {
    if ((coords.array() < 0.0).any()) return false;
    const Vec z = g.from_chart(vertex, coords);
    const auto& facets = g.chart_facets(vertex);
    for (int j = 0; j < g.facet_count(); ++j) {
        if (std::find(facets.begin(), facets.end(), j) != facets.end()) continue;
        if (!(g.slack(j, z) > 0.0)) return false;
    }
    return true;
}

// Solves c_i exp(dw_g/dc_i (c)) = a_i for the target chart coordinates c.
// Components with a_i = 0 stay exactly on the corresponding facet.
Vec solve_chart_equation(const SymplecticPotential& g, int vertex, const Vec& a, Vec c) {
    const int n = g.dim();
    for (int i = 0; i < n; ++i)
        if (a(i) == 0.0) c(i) = 0.0;
    auto residual = [&](const Vec& coords, Vec& F, Mat* J) {
        const Vec z = g.from_chart(vertex, coords);
        const ChartJet cj = g.chart_jet(vertex, z, g.correction().jet(z));
        const Vec e = cj.grad_w.array().exp().matrix();
        F = coords.cwiseProduct(e) - a;
        if (J) *J = e.asDiagonal() * (Mat::Identity(n, n) + coords.asDiagonal() * cj.hess_w);
        return F.allFinite();
    };
    auto converged = [&](const Vec& F) {
        for (int i = 0; i < n; ++i)
            if (std::abs(F(i)) > 1e-13 * a(i) + 1e-300) return false;
        return true;
    };
    Vec F, F_trial;
    Mat J;
    for (int it = 0; it < kNewtonMaxIterations; ++it) {
        if (!residual(c, F, &J)) throw Error(ErrorKind::NewtonDivergence, "chart residual is not finite");
        if (converged(F)) return c;
        Vec step = small_solve(J, -F);
        for (int i = 0; i < n; ++i)
            if (a(i) == 0.0) step(i) = 0.0;
        const double norm = F.norm();
        double alpha = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k, alpha *= 0.5) {
            const Vec trial = c + alpha * step;
            bool positive = true;
            for (int i = 0; i < n; ++i)
                if (a(i) > 0.0 && !(trial(i) > 0.0)) positive = false;
            if (!positive || !inside_chart(g, vertex, trial)) continue;
            if (!residual(trial, F_trial, nullptr)) continue;
            if (F_trial.norm() <= norm) {
                const bool stalled = (trial - c).cwiseAbs().maxCoeff() <= 1e-16 * (1.0 + c.cwiseAbs().maxCoeff());
                c = trial;
                accepted = true;
                if (stalled) {
                    if (F_trial.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a.cwiseAbs().maxCoeff())) return c;
                    accepted = false;
                }
                break;
            }
        }
        if (!accepted) {
            if (F.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a.cwiseAbs().maxCoeff())) return c;
            throw Error(ErrorKind::NewtonDivergence, "chart Newton line search stalled");
        }
    }
    throw Error(ErrorKind::NewtonDivergence, "chart Newton did not converge");
}

void fill_scalars(TransitionSample& s) {
    s.trace = s.DU.trace();
    s.det = s.DU.determinant();
    s.partial_bound = (s.DU * s.DU).trace();
    s.compat_residual = compatibility_residual(s.target_inverse_hess, s.DU);
}

}  // namespace

TransitionSample transition_with(const SymplecticPotential& u, const Vec& y, const Jet& v,
                                 const SymplecticPotential& g, const TransitionOptions& opts) {
    const int n = u.dim();
    if (y.size() != n) throw Error(ErrorKind::InvalidArgument, "point has wrong dimension");
    const double scale = 1.0 + u.diameter();
    const double min_slack = u.min_slack(y);
    if (min_slack < -1e-9 * scale) throw Error(ErrorKind::InvalidArgument, "point lies outside the polytope");

    TransitionSample s;
    s.y = y;

    if (min_slack >= u.h_switch()) {
        const Mat H = u.hess_with(y, v);
        Eigen::LLT<Mat> llt(H);
        if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotConvex, "source Hessian is not positive definite");
        const auto res = legendre_dual_grad_detailed(g, u.grad_with(y, v), opts.warm_start);
        s.U = res.z;
        s.target_inverse_hess = g.inverse_hess_extended_with(s.U, res.correction);
        s.DU = s.target_inverse_hess * H;
        if (opts.spectrum) {
            const Mat L = llt.matrixL();
            Eigen::SelfAdjointEigenSolver<Mat> es(L.transpose() * s.target_inverse_hess * L, Eigen::EigenvaluesOnly);
            s.eigenvalues = es.eigenvalues();
        }
        fill_scalars(s);
        return s;
    }

    // Boundary layer: with chart coordinates s (source) and c (target) at the
    // same vertex, grad u(y) = grad g(U) reads c_i e^{dw_g/dc_i} = s_i e^{dw_u/ds_i}.
    s.boundary_path = true;
    const int vertex = u.chart_for(y);
    const ChartJet cu = u.chart_jet(vertex, y, v);
    const Vec ys = cu.coords.cwiseMax(0.0);
    const Vec a = ys.cwiseProduct(cu.grad_w.array().exp().matrix());

    Vec c0 = ys;
    if (opts.warm_start) {
        Vec cw(n);
        const auto& facets = g.chart_facets(vertex);
        for (int r = 0; r < n; ++r) cw(r) = g.slack(facets[r], *opts.warm_start);
        if (inside_chart(g, vertex, cw.cwiseMax(0.0))) c0 = cw.cwiseMax(0.0);
    }
    for (int k = 0; k < 80 && !inside_chart(g, vertex, c0); ++k) c0 *= 0.5;
    for (int i = 0; i < n; ++i)
        if (a(i) > 0.0 && !(c0(i) > 0.0)) c0(i) = std::min(a(i), 1e-3 * scale);
    const Vec c = solve_chart_equation(g, vertex, a, c0);
    s.U = g.from_chart(vertex, c);

    for (int i = 0; i < n; ++i)
        if (cu.coords(i) <= 1e-12 * scale && c(i) > kFaceTolerance)
            throw Error(ErrorKind::FaceMismatch, "point on facet " + u.polytope().facet_equation(u.chart_facets(vertex)[i]) +
                                                     " maps off the corresponding facet");

    const ChartJet cg = g.chart_jet(vertex, s.U, g.correction().jet(s.U));
    const Mat I = Mat::Identity(n, n);
    // DU in chart coordinates: (I + C W_g)^{-1} R (I + S W_u), R = diag(c_i / s_i).
    const Vec R = (cu.grad_w - cg.grad_w).array().exp().matrix();
    const Mat chart_DU = (I + c.asDiagonal() * cg.hess_w).partialPivLu().solve(
        R.asDiagonal() * (I + ys.asDiagonal() * cu.hess_w));
    const Mat& A = u.chart_matrix(vertex);
    const Mat& A_inv = u.chart_inverse(vertex);
    s.DU = A_inv * chart_DU * A;

    const Vec sc = c.cwiseSqrt();
    const Vec sy = ys.cwiseSqrt();
    const Mat Kg = I + sc.asDiagonal() * cg.hess_w * sc.asDiagonal();
    const Mat Ku = I + sy.asDiagonal() * cu.hess_w * sy.asDiagonal();
    Eigen::LLT<Mat> llt_g(Kg), llt_u(Ku);
    if (llt_u.info() != Eigen::Success) throw Error(ErrorKind::NotConvex, "source chart Hessian is not positive definite");
    if (llt_g.info() != Eigen::Success) throw Error(ErrorKind::NotConvex, "target chart Hessian is not positive definite");
    s.target_inverse_hess = A_inv * (sc.asDiagonal() * llt_g.solve(Mat(sc.asDiagonal()))) * A_inv.transpose();
    if (opts.spectrum) {
        // DU is similar to T Kg^{-1} T Ku with T = R^{1/2}: a product of two
        // symmetric positive definite matrices.
        const Vec T = R.cwiseSqrt();
        const Mat Lu = llt_u.matrixL();
        const Mat C = T.asDiagonal() * llt_g.solve(Mat(T.asDiagonal()));
        Eigen::SelfAdjointEigenSolver<Mat> es(Lu.transpose() * C * Lu, Eigen::EigenvaluesOnly);
        s.eigenvalues = es.eigenvalues();
    }
    fill_scalars(s);
    return s;
}

TransitionSample transition_at(const GeometryPair& pair, const Vec& y, const TransitionOptions& opts) {
    return transition_with(pair.source(), y, pair.source().correction().jet(y), pair.target(), opts);
}

double compatibility_residual(const GeometryPair& pair, const Vec& y) {
    TransitionOptions opts;
    opts.spectrum = false;
    return transition_at(pair, y, opts).compat_residual;
}

Mat finite_difference_jacobian(const GeometryPair& pair, const Vec& y, double h) {
    const int n = pair.dim();
    TransitionOptions opts;
    opts.spectrum = false;
    Mat J(n, n);
    for (int k = 0; k < n; ++k) {
        Vec yp = y, ym = y;
        yp(k) += h;
        ym(k) -= h;
        J.col(k) = (transition_at(pair, yp, opts).U - transition_at(pair, ym, opts).U) / (2.0 * h);
    }
    return J;
}

std::vector<double> characteristic_check(const GeometryPair& pair, const Vec& y,
                                         const std::vector<double>& t_values) {
    TransitionOptions opts;
    opts.spectrum = false;
    const Mat DU = transition_at(pair, y, opts).DU;
    const int n = pair.dim();
    std::vector<double> out;
    for (double t : t_values) out.push_back((Mat::Identity(n, n) + t * DU).determinant());
    return out;
}

Mat restrict_to_face(const Mat& DU, const Eigen::MatrixXd& basis) {
    const Eigen::MatrixXd E = basis;
    const Eigen::MatrixXd D = DU;
    const Eigen::MatrixXd R = (E.transpose() * E).ldlt().solve(E.transpose() * D * E);
    Mat out(R.rows(), R.cols());
    for (Eigen::Index i = 0; i < R.rows(); ++i)
        for (Eigen::Index j = 0; j < R.cols(); ++j) out(i, j) = R(i, j);
    return out;
}

double face_trace_integral(const GeometryPair& pair, const Face& F, int quad_order, double h) {
    const auto& P = pair.source().polytope();
    const int n = P.dim();
    Eigen::MatrixXd basis(n, F.dim);
    if (F.dim == n) {
        basis.setIdentity();
    } else {
        for (int k = 0; k < F.dim; ++k)
            for (int r = 0; r < n; ++r) basis(r, k) = static_cast<double>(F.tangent_basis[k][r]);
    }
    TransitionOptions opts;
    opts.spectrum = false;
    double total = 0.0;
    for (const auto& q : face_quadrature(P, F, h, quad_order)) {
        const auto s = transition_at(pair, q.y, opts);
        opts.warm_start = s.U;
        total += q.weight * (F.dim == n ? s.trace : restrict_to_face(s.DU, basis).trace());
    }
    return total;
}

double trace_integral(const GeometryPair& pair, int quad_order, double h) {
    return face_trace_integral(pair, face_from_facets(pair.source().polytope(), {}), quad_order, h);
}

double energy(const GeometryPair& pair, int quad_order, double h) {
    TransitionOptions opts;
    opts.spectrum = false;
    double total = 0.0;
    for (const auto& q : polytope_quadrature(pair.source().polytope(), h, quad_order)) {
        const auto s = transition_at(pair, q.y, opts);
        opts.warm_start = s.U;
        total += q.weight * s.trace * s.trace;
    }
    return 0.5 * total;
}

Vec inverse_point(const GeometryPair& pair, const Vec& z, const std::optional<Vec>& start) {
    const auto& u = pair.source();
    const auto& g = pair.target();
    if (g.min_slack(z) <= 0.0) throw Error(ErrorKind::InvalidArgument, "target point must be interior");
    const double tol = 1e-12 * (1.0 + z.norm());
    Vec y = (start && u.min_slack(*start) > 0.0) ? *start : u.center();
    TransitionOptions opts;
    opts.spectrum = false;
    auto sample = transition_at(pair, y, opts);
    double norm = (sample.U - z).norm();
    for (int it = 0; it < kNewtonMaxIterations; ++it) {
        if (norm < tol) return y;
        const Vec step = sample.DU.partialPivLu().solve(z - sample.U);
        double alpha = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k, alpha *= 0.5) {
            const Vec trial = y + alpha * step;
            if (!(u.min_slack(trial) > 0.0)) continue;
            opts.warm_start = sample.U;
            auto ts = transition_at(pair, trial, opts);
            const double tn = (ts.U - z).norm();
            if (tn < norm) {
                y = trial;
                sample = std::move(ts);
                norm = tn;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (norm < 1e3 * tol) return y;
            throw Error(ErrorKind::NewtonDivergence, "inverse point line search stalled");
        }
    }
    if (norm < 1e3 * tol) return y;
    throw Error(ErrorKind::NewtonDivergence, "inverse point did not converge");
}

}  // namespace jflow
