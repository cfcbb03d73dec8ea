#ifndef JFLOW_POLYTOPE_HPP
#define JFLOW_POLYTOPE_HPP

#include <boost/multiprecision/cpp_int.hpp>
#include <Eigen/Dense>

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace jflow {

using Rational = boost::multiprecision::cpp_rational;
using IntVector = std::vector<long long>;

/// Parses "2", "-3/2" or a decimal such as "1.1" (read exactly as 11/10).
Rational parse_rational(std::string_view text);

/// Decimal-free exact rendering ("11/10", "-1", "0").
std::string rational_to_string(const Rational& r);

double to_double(const Rational& r);

struct Vertex {
    std::vector<Rational> point;
    std::vector<int> facets;  // the n tight facets, ascending
};

/// A face is identified by the set of facets containing it. For a simple
/// polytope its dimension is n - |facet_ids|.
struct Face {
    std::vector<int> facet_ids;
    int dim = 0;
    /// Lattice basis of TF ∩ M, annihilated by every normal in facet_ids.
    std::vector<IntVector> tangent_basis;
    std::vector<int> vertices;  // indices into DelzantPolytope::vertices()
    int anchor = 0;             // vertex used as origin of face coordinates
};

/// Polytope {y : <u_i, y> + b_i >= 0} with primitive inward normals u_i.
/// Construction validates boundedness, full dimension and the Delzant
/// condition with exact arithmetic.
class DelzantPolytope {
public:
    static DelzantPolytope build(std::vector<IntVector> normals, std::vector<Rational> offsets);

    int dim() const { return dim_; }
    int facet_count() const { return static_cast<int>(normals_.size()); }
    const std::vector<IntVector>& normals() const { return normals_; }
    const std::vector<Rational>& offsets() const { return offsets_; }
    const std::vector<Vertex>& vertices() const { return vertices_; }

    /// Rows are the facet normals.
    const Eigen::MatrixXd& normal_matrix() const { return normal_matrix_; }
    const Eigen::VectorXd& offset_vector() const { return offset_vector_; }

    /// Rows of chart_matrix(v) are the normals of the facets through vertex
    /// v (in Vertex::facets order); it is unimodular, so its inverse is
    /// integral.
    const Eigen::MatrixXd& chart_matrix(int vertex) const { return charts_[vertex]; }
    const Eigen::MatrixXd& chart_inverse(int vertex) const { return chart_inverses_[vertex]; }

    Eigen::VectorXd vertex_point(int vertex) const;
    Eigen::VectorXd vertex_centroid() const;
    double diameter() const;
    Eigen::VectorXd lower_corner() const;
    Eigen::VectorXd upper_corner() const;

    /// Human-readable facet equation, e.g. "y1+y2=1".
    std::string facet_equation(int facet) const;

    bool same_normals(const DelzantPolytope& other) const { return normals_ == other.normals_; }

private:
    int dim_ = 0;
    std::vector<IntVector> normals_;
    std::vector<Rational> offsets_;
    std::vector<Vertex> vertices_;
    Eigen::MatrixXd normal_matrix_;
    Eigen::VectorXd offset_vector_;
    std::vector<Eigen::MatrixXd> charts_;
    std::vector<Eigen::MatrixXd> chart_inverses_;
};

/// All faces of dimension 0..n, ordered by dimension then facet ids. The
/// last entry is the polytope itself.
std::vector<Face> enumerate_faces(const DelzantPolytope& P);

/// Looks up the face cut out by exactly these facets; throws
/// InvalidArgument when the intersection is not a face.
Face face_from_facets(const DelzantPolytope& P, std::vector<int> facet_ids);

/// Coordinates of a point of F with respect to F's tangent lattice basis,
/// relative to F's anchor vertex.
std::vector<Rational> face_coordinates(const DelzantPolytope& P, const Face& F,
                                       const std::vector<Rational>& point);

/// Volume in the lattice-normalized measure of F (1 for a vertex).
Rational lattice_volume_exact(const DelzantPolytope& P, const Face& F);
double lattice_volume(const DelzantPolytope& P, const Face& F);
double lattice_volume(const DelzantPolytope& P);

/// Polytope with offsets b_i + t b'_i.
DelzantPolytope minkowski_sum_offsets(const DelzantPolytope& P, const DelzantPolytope& Q,
                                      const Rational& t);

/// Monomial coefficients c_0..c_p of t -> vol(F_{P+tQ}) for the face with
/// the given facets, fitted exactly through t = 0..p.
std::vector<Rational> face_volume_polynomial(const DelzantPolytope& P, const DelzantPolytope& Q,
                                             const std::vector<int>& facet_ids);

/// d/dt vol(P + tQ) at t = 0, i.e. n V(P[n-1], Q).
Rational trace_class_integral_exact(const DelzantPolytope& P, const DelzantPolytope& Q);
double trace_class_integral(const DelzantPolytope& P, const DelzantPolytope& Q);

Rational compute_nc_exact(const DelzantPolytope& P, const DelzantPolytope& Q);
double compute_nc(const DelzantPolytope& P, const DelzantPolytope& Q);

enum class Verdict { Pass, Marginal, Violated };
std::string_view to_string(Verdict v);

struct FaceStability {
    Face face;
    int p = 0;
    Rational lhs_exact;
    double lhs = 0.0;
    Verdict verdict = Verdict::Pass;
};

struct StabilityReport {
    Rational nc_exact;
    double nc = 0.0;
    double tol = 0.0;
    std::vector<FaceStability> per_face;

    bool any(Verdict v) const;
};

inline constexpr double kDefaultStabilityTol = 1e-9;

/// Face-average of the trace integral against nc for every proper face of
/// dimension 1..n-1.
StabilityReport check_face_stability(const DelzantPolytope& P, const DelzantPolytope& Q,
                                     double tol = kDefaultStabilityTol);

/// Reads the text format: "dim n" then one "u_1 ... u_n b" line per facet.
/// Blank lines and '#' comments are ignored.
DelzantPolytope parse_polytope(std::string_view text);
DelzantPolytope load_polytope(const std::string& path);
std::string format_polytope(const DelzantPolytope& P);

/// {y >= 0, 1 <= sum y <= b} in dimension n: the blowup of P^n at a point.
DelzantPolytope blowup_polytope(int n, const Rational& b);

}  // namespace jflow

#endif
