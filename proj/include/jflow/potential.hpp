#ifndef JFLOW_POTENTIAL_HPP
#define JFLOW_POTENTIAL_HPP

#include "jflow/expression.hpp"
#include "jflow/linalg.hpp"
#include "jflow/polytope.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace jflow {

inline constexpr int kMaxFacets = 16;
using SlackVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxFacets, 1>;

/// Smooth part v of a symplectic potential u = sum d_i log d_i + v.
class Correction {
public:
    virtual ~Correction() = default;
    /// Value, gradient and Hessian of v at y (y may lie on the boundary).
    virtual Jet jet(const Vec& y) const = 0;
    /// Expression text for configs and reports; empty for v = 0.
    virtual std::string describe() const = 0;
};

class ZeroCorrection final : public Correction {
public:
    Jet jet(const Vec& y) const override { return Jet::constant(0.0, static_cast<int>(y.size())); }
    std::string describe() const override { return {}; }
};

class ExpressionCorrection final : public Correction {
public:
    explicit ExpressionCorrection(Expression e) : expr_(std::move(e)) {}
    Jet jet(const Vec& y) const override { return expr_.eval(y); }
    std::string describe() const override { return expr_.text(); }

private:
    Expression expr_;
};

std::shared_ptr<const Correction> make_correction(const std::string& expression, int dim);

/// Local data of the vertex chart at a vertex q: chart coordinates are the
/// slacks of the n facets through q, and w collects everything in u that is
/// smooth near q (the remaining log terms and v), expressed in those
/// coordinates.
struct ChartJet {
    int vertex = 0;
    Vec coords;    // slacks of the chart facets
    Vec grad_w;    // d w / d coords
    Mat hess_w;    // d^2 w / d coords^2
};

/// Symplectic potential u = sum_i d_i log d_i + v on a Delzant polytope
/// (Guillemin normalization without a factor 1/2).
class SymplecticPotential {
public:
    SymplecticPotential(DelzantPolytope P, std::shared_ptr<const Correction> v);
    static SymplecticPotential canonical(DelzantPolytope P);

    const DelzantPolytope& polytope() const { return *polytope_; }
    const std::shared_ptr<const Correction>& correction_ptr() const { return correction_; }
    const Correction& correction() const { return *correction_; }
    bool is_canonical() const { return correction_->describe().empty(); }
    int dim() const { return dim_; }
    int facet_count() const { return static_cast<int>(normals_.size()); }
    const Vec& normal(int i) const { return normals_[i]; }
    double offset(int i) const { return offsets_[i]; }

    SlackVec slacks(const Vec& y) const;
    double slack(int i, const Vec& y) const { return normals_[i].dot(y) + offsets_[i]; }
    double min_slack(const Vec& y) const;

    /// Width of the boundary layer in which the vertex-chart formulas are used.
    double h_switch() const { return h_switch_; }
    double diameter() const { return diameter_; }

    double eval(const Vec& y) const;
    Vec grad(const Vec& y) const;
    Mat hess(const Vec& y) const;

    /// Same quantities for a caller-supplied jet of the correction at y.
    Vec grad_with(const Vec& y, const Jet& v) const;
    Mat hess_with(const Vec& y, const Jet& v) const;

    /// Continuous extension of (Hess u)^{-1} to the closed polytope.
    Mat inverse_hess_extended(const Vec& y) const;
    Mat inverse_hess_extended_with(const Vec& y, const Jet& v) const;

    /// Vertex whose chart covers y best: the one maximizing the smallest
    /// slack among facets outside the chart.
    int chart_for(const Vec& y) const;
    ChartJet chart_jet(int vertex, const Vec& y, const Jet& v) const;
    const std::vector<int>& chart_facets(int vertex) const { return charts_[vertex].facets; }
    const Mat& chart_matrix(int vertex) const { return charts_[vertex].A; }
    const Mat& chart_inverse(int vertex) const { return charts_[vertex].A_inv; }
    /// Point with the given chart coordinates.
    Vec from_chart(int vertex, const Vec& coords) const;
    int vertex_count() const { return static_cast<int>(charts_.size()); }
    Vec vertex(int v) const { return vertices_[v]; }
    Vec center() const { return center_; }

private:
    struct Chart {
        std::vector<int> facets;
        std::vector<int> others;
        Mat A;      // rows: chart normals
        Mat A_inv;
        Vec offsets;
    };

    void require_interior(const Vec& y) const;

    std::shared_ptr<const DelzantPolytope> polytope_;
    std::shared_ptr<const Correction> correction_;
    int dim_ = 0;
    std::vector<Vec> normals_;
    std::vector<double> offsets_;
    std::vector<Chart> charts_;
    std::vector<Vec> vertices_;
    Vec center_;
    double h_switch_ = 0.0;
    double diameter_ = 0.0;
};

/// Minimum distance to the boundary accepted by eval/grad/hess.
inline constexpr double kBoundaryFloor = 1e-12;

struct LegendreResult {
    Vec z;
    int iterations = 0;
    double residual = 0.0;  // |grad g(z) - x|, evaluated in chart form
    Jet correction;         // jet of g's correction at z
};

/// The unique z in the interior of g's polytope with grad g(z) = x, by
/// damped Newton in logarithmic vertex-chart coordinates. Points whose
/// distance to a facet underflows come back on that facet.
LegendreResult legendre_dual_grad_detailed(const SymplecticPotential& g, const Vec& x,
                                           const std::optional<Vec>& start = std::nullopt);
Vec legendre_dual_grad(const SymplecticPotential& g, const Vec& x);

inline constexpr int kNewtonMaxIterations = 200;

}  // namespace jflow

#endif
