#ifndef JFLOW_QUADRATURE_HPP
#define JFLOW_QUADRATURE_HPP

#include "jflow/linalg.hpp"
#include "jflow/polytope.hpp"

#include <vector>

namespace jflow {

struct QuadraturePoint {
    Vec y;          // ambient coordinates
    double weight;  // lattice-normalized measure of the face
};

/// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights);

/// Cell quadrature on a face of dimension 1 or 2: a grid of spacing h in
/// face coordinates is clipped to the face, each clipped cell is split into
/// simplices and integrated with a collapsed Gauss rule of the given order.
/// The top face uses the ambient grid directly.
std::vector<QuadraturePoint> face_quadrature(const DelzantPolytope& P, const Face& F, double h,
                                             int order);
std::vector<QuadraturePoint> polytope_quadrature(const DelzantPolytope& P, double h, int order);

/// Convex polygon clipped by the half-plane a.x + beta >= 0.
std::vector<Eigen::Vector2d> clip_polygon(const std::vector<Eigen::Vector2d>& poly,
                                          const Eigen::Vector2d& a, double beta);

double polygon_area(const std::vector<Eigen::Vector2d>& poly);
Eigen::Vector2d polygon_centroid(const std::vector<Eigen::Vector2d>& poly);

}  // namespace jflow

#endif
