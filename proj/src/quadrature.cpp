#include "jflow/quadrature.hpp"

#include "jflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace jflow {

void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights) {
    if (order < 1) throw Error(ErrorKind::InvalidArgument, "quadrature order must be positive");
    nodes.assign(order, 0.0);
    weights.assign(order, 0.0);
    for (int i = 0; i < order; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= order; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            if (order == 1) {
                p1 = x;
                p0 = 1.0;
            }
            dp = order * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
}

std::vector<Eigen::Vector2d> clip_polygon(const std::vector<Eigen::Vector2d>& poly,
                                          const Eigen::Vector2d& a, double beta) {
    std::vector<Eigen::Vector2d> out;
    const std::size_t m = poly.size();
    for (std::size_t i = 0; i < m; ++i) {
        const Eigen::Vector2d& p = poly[i];
        const Eigen::Vector2d& q = poly[(i + 1) % m];
        const double sp = a.dot(p) + beta;
        const double sq = a.dot(q) + beta;
        if (sp >= 0) out.push_back(p);
        if ((sp >= 0) != (sq >= 0)) out.push_back(p + (q - p) * (sp / (sp - sq)));
    }
    return out;
}

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
    double a = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& p = poly[i];
        const auto& q = poly[(i + 1) % poly.size()];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * std::abs(a);
}

Eigen::Vector2d polygon_centroid(const std::vector<Eigen::Vector2d>& poly) {
    double a = 0.0;
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& p = poly[i];
        const auto& q = poly[(i + 1) % poly.size()];
        const double cross = p.x() * q.y() - q.x() * p.y();
        a += cross;
        c += (p + q) * cross;
    }
    if (std::abs(a) < 1e-300) return poly.front();
    return c / (3.0 * a);
}

namespace {

// Face coordinates c map to y = origin + E c; constraints are a_j.c + beta_j >= 0.
struct FaceFrame {
    Eigen::VectorXd origin;
    Eigen::MatrixXd E;
    std::vector<Eigen::VectorXd> a;
    std::vector<double> beta;
    Eigen::VectorXd lo, hi;
};

FaceFrame make_frame(const DelzantPolytope& P, const Face& F) {
    const int n = P.dim();
    FaceFrame fr;
    if (F.dim == n) {
        fr.origin = Eigen::VectorXd::Zero(n);
        fr.E = Eigen::MatrixXd::Identity(n, n);
    } else {
        fr.origin = P.vertex_point(F.anchor);
        fr.E.resize(n, F.dim);
        for (int k = 0; k < F.dim; ++k)
            for (int r = 0; r < n; ++r) fr.E(r, k) = static_cast<double>(F.tangent_basis[k][r]);
    }
    for (int j = 0; j < P.facet_count(); ++j) {
        if (std::binary_search(F.facet_ids.begin(), F.facet_ids.end(), j)) continue;
        const Eigen::VectorXd u = P.normal_matrix().row(j).transpose();
        fr.a.push_back(fr.E.transpose() * u);
        fr.beta.push_back(u.dot(fr.origin) + P.offset_vector()(j));
    }
    // Bounding box from the face vertices.
    const Eigen::MatrixXd pinv = (fr.E.transpose() * fr.E).inverse() * fr.E.transpose();
    fr.lo = Eigen::VectorXd::Constant(F.dim, std::numeric_limits<double>::infinity());
    fr.hi = -fr.lo;
    for (int v : F.vertices) {
        const Eigen::VectorXd c = pinv * (P.vertex_point(v) - fr.origin);
        fr.lo = fr.lo.cwiseMin(c);
        fr.hi = fr.hi.cwiseMax(c);
    }
    return fr;
}

Vec to_vec(const Eigen::VectorXd& x) {
    Vec v(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) v(i) = x(i);
    return v;
}

}  // namespace

std::vector<QuadraturePoint> face_quadrature(const DelzantPolytope& P, const Face& F, double h, int order) {
    if (F.dim < 1 || F.dim > 2)
        throw Error(ErrorKind::Unsupported, "cell quadrature supports faces of dimension 1 and 2");
    if (!(h > 0)) throw Error(ErrorKind::InvalidArgument, "grid spacing must be positive");
    const FaceFrame fr = make_frame(P, F);
    std::vector<double> gx, gw;
    gauss_legendre(order, gx, gw);
    std::vector<QuadraturePoint> out;

    if (F.dim == 1) {
        double lo = fr.lo(0), hi = fr.hi(0);
        const int cells = std::max(1, static_cast<int>(std::ceil((hi - lo) / h - 1e-9)));
        const double step = (hi - lo) / cells;
        for (int k = 0; k < cells; ++k) {
            const double a = lo + k * step;
            for (int q = 0; q < order; ++q) {
                const double c = a + gx[q] * step;
                Eigen::VectorXd y = fr.origin + fr.E.col(0) * c;
                out.push_back({to_vec(y), gw[q] * step});
            }
        }
        return out;
    }

    const int nx = std::max(1, static_cast<int>(std::ceil((fr.hi(0) - fr.lo(0)) / h - 1e-9)));
    const int ny = std::max(1, static_cast<int>(std::ceil((fr.hi(1) - fr.lo(1)) / h - 1e-9)));
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            const double x0 = fr.lo(0) + i * h, y0 = fr.lo(1) + j * h;
            std::vector<Eigen::Vector2d> cell{{x0, y0}, {x0 + h, y0}, {x0 + h, y0 + h}, {x0, y0 + h}};
            for (std::size_t c = 0; c < fr.a.size() && !cell.empty(); ++c)
                cell = clip_polygon(cell, Eigen::Vector2d(fr.a[c](0), fr.a[c](1)), fr.beta[c]);
            if (cell.size() < 3 || polygon_area(cell) <= 1e-14 * h * h) continue;
            // Fan triangulation of the convex clipped cell, collapsed Gauss per triangle.
            for (std::size_t t = 1; t + 1 < cell.size(); ++t) {
                const Eigen::Vector2d A = cell[0], B = cell[t], C = cell[t + 1];
                const double area2 = std::abs((B - A).x() * (C - A).y() - (B - A).y() * (C - A).x());
                // slivers from clipping sit on the boundary and carry no weight
                if (area2 <= 1e-12 * h * h) continue;
                for (int p = 0; p < order; ++p) {
                    for (int q = 0; q < order; ++q) {
                        const double xi = gx[p], eta = gx[q];
                        const Eigen::Vector2d c2 = A + xi * ((1.0 - eta) * (B - A) + eta * (C - A));
                        const Eigen::VectorXd y = fr.origin + fr.E * Eigen::VectorXd(c2);
                        out.push_back({to_vec(y), gw[p] * gw[q] * xi * area2});
                    }
                }
            }
        }
    }
    return out;
}

std::vector<QuadraturePoint> polytope_quadrature(const DelzantPolytope& P, double h, int order) {
    return face_quadrature(P, face_from_facets(P, {}), h, order);
}

}  // namespace jflow
