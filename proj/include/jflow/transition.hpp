#ifndef JFLOW_TRANSITION_HPP
#define JFLOW_TRANSITION_HPP

#include "jflow/linalg.hpp"
#include "jflow/potential.hpp"

#include <optional>
#include <vector>

namespace jflow {

/// Source potential u on P and target potential g on Q; P and Q share
/// their normals so faces correspond through identical facet ids.
class GeometryPair {
public:
    GeometryPair(SymplecticPotential u, SymplecticPotential g);

    const SymplecticPotential& source() const { return u_; }
    const SymplecticPotential& target() const { return g_; }
    int dim() const { return u_.dim(); }

private:
    SymplecticPotential u_;
    SymplecticPotential g_;
};

/// The transition map U = grad f o grad u and its Jacobian at one point.
struct TransitionSample {
    Vec y;
    Vec U;
    Mat DU;
    Mat target_inverse_hess;  // [g^{ij}(U)]
    Vec eigenvalues;          // ascending; empty unless requested
    double trace = 0.0;
    double det = 0.0;
    double compat_residual = 0.0;
    double partial_bound = 0.0;  // sum dU^j/dy^i dU^l/dy^k g^{ik}(U) g_{jl}(U) = tr(DU^2)
    bool boundary_path = false;
};

struct TransitionOptions {
    bool spectrum = true;
    std::optional<Vec> warm_start;  // previous U near this point
};

/// Sample of the transition map at y in the closed polytope P. Points at
/// distance >= h_switch from the boundary go through the Legendre dual
/// gradient of g; points in the boundary layer use the vertex-chart form,
/// which is regular on the faces.
TransitionSample transition_at(const GeometryPair& pair, const Vec& y, const TransitionOptions& opts = {});

/// Same, with the jet of u's smooth correction at y supplied by the caller.
TransitionSample transition_with(const SymplecticPotential& u, const Vec& y, const Jet& v,
                                 const SymplecticPotential& g, const TransitionOptions& opts = {});

/// max_{i,j} |(M DU^T - DU M)_{ij}| with M = [g^{ij}(U)].
double compatibility_residual(const Mat& target_inverse_hess, const Mat& DU);
double compatibility_residual(const GeometryPair& pair, const Vec& y);

/// Central-difference Jacobian of U with step h.
Mat finite_difference_jacobian(const GeometryPair& pair, const Vec& y, double h);

/// det(I + t DU) for each t.
std::vector<double> characteristic_check(const GeometryPair& pair, const Vec& y,
                                         const std::vector<double>& t_values);

/// Restriction of DU to the tangent space of a face spanned by `basis`
/// (columns), as a p x p matrix in that basis.
Mat restrict_to_face(const Mat& DU, const Eigen::MatrixXd& basis);

/// Integral of tr(DU|_TF) over F against the lattice measure sigma_F.
double face_trace_integral(const GeometryPair& pair, const Face& F, int quad_order, double h);

/// Integral of tr DU over P.
double trace_integral(const GeometryPair& pair, int quad_order, double h);

/// E = 1/2 integral over P of (tr DU)^2.
double energy(const GeometryPair& pair, int quad_order, double h);

/// The y with U(y) = z, by damped Newton using DU.
Vec inverse_point(const GeometryPair& pair, const Vec& z, const std::optional<Vec>& start = std::nullopt);

inline constexpr double kFaceTolerance = 1e-7;

}  // namespace jflow

#endif
