#ifndef JFLOW_FLOW_HPP
#define JFLOW_FLOW_HPP

#include "jflow/errors.hpp"
#include "jflow/linalg.hpp"
#include "jflow/potential.hpp"
#include "jflow/transition.hpp"

#include <array>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

namespace jflow {

/// Derivative weights at one point: rows are the value, the gradient
/// components and the Hessian entries (i <= j, row by row).
struct Stencil {
    std::vector<int> nodes;
    Eigen::MatrixXd coeff;
};

/// Lattice nodes lo + h k inside the closed polytope (dimension 1 or 2).
/// When h divides the bounding box the nodes include every vertex.
class FlowGrid {
public:
    FlowGrid(const DelzantPolytope& P, double h);

    int dim() const { return dim_; }
    double h() const { return h_; }
    int size() const { return static_cast<int>(nodes_.size()); }
    const Vec& node(int k) const { return nodes_[k]; }
    const std::vector<Vec>& nodes() const { return nodes_; }
    /// True when all 3^n - 1 lattice neighbours are nodes, so centered
    /// differences apply.
    bool centered(int k) const { return centered_[k]; }
    /// Node at the lattice offset from node k, or -1.
    int neighbor(int k, const std::array<int, kMaxDim>& offset) const;
    /// Quadrature weight: area of the dual cell of the node clipped to P.
    double weight(int k) const { return weights_[k]; }
    const std::vector<int>& vertex_nodes() const { return vertex_nodes_; }
    const Vec& spacing() const { return spacing_; }
    const std::array<int, kMaxDim>& lattice_index(int k) const { return index_[k]; }

    /// Value, gradient and Hessian of the nodal field at node k: centered
    /// differences in the bulk; near the boundary, differences along lattice
    /// directions, one-sided only across a facet (a least-squares cubic
    /// where no such stencil fits).
    Jet jet(int k, const std::vector<double>& field) const;
    Vec gradient(int k, const std::vector<double>& field) const;
    const Stencil& stencil(int k) const { return stencils_[k]; }
    /// Local cubic fits at an arbitrary point of P, blended smoothly between
    /// the surrounding lattice points.
    Jet jet_at(const Vec& y, const std::vector<double>& field) const;

private:
    Stencil fit_stencil(const Vec& center, const std::array<int, kMaxDim>& index) const;
    bool directional_stencil(int node, Stencil& out) const;
    int lattice_lookup(const std::array<int, kMaxDim>& index) const;

    std::shared_ptr<const DelzantPolytope> polytope_;
    int dim_ = 0;
    double h_ = 0.0;
    Vec lo_;
    Vec spacing_;  // actual lattice spacing per axis (h, or the exact divisor of the box)
    std::array<int, kMaxDim> shape_{};
    std::vector<int> lattice_;  // flat lattice index -> node id or -1
    std::vector<Vec> nodes_;
    std::vector<std::array<int, kMaxDim>> index_;
    std::vector<bool> centered_;
    std::vector<double> weights_;
    std::vector<Stencil> stencils_;
    std::vector<int> vertex_nodes_;  // node of each polytope vertex, -1 if absent
};

/// Correction v given by nodal values on a FlowGrid.
class GridCorrection final : public Correction {
public:
    GridCorrection(std::shared_ptr<const FlowGrid> grid, std::vector<double> values)
        : grid_(std::move(grid)), values_(std::move(values)) {}
    Jet jet(const Vec& y) const override { return grid_->jet_at(y, values_); }
    std::string describe() const override { return "<grid>"; }

private:
    std::shared_ptr<const FlowGrid> grid_;
    std::vector<double> values_;
};

struct NodeSample {
    Vec U;
    Mat DU;
    Mat M;  // [g^{ij}(U)]
    double trace = 0.0;
    double det = 0.0;
    double compat = 0.0;
    double partial_bound = 0.0;
};

struct FlowOptions {
    double cfl = 0.2;
    double fixed_dt = 0.0;  // > 0 replaces the CFL step
    int max_halvings = 10;
    double tol_static = 1e-4;
    int converge_window = 50;
    double delta_conv = 1e-3;
    double delta_deg = 1e-3;
    int degenerate_window = 100;
    double immediate_tol = 1e-10;  // static residual for convergence at t = 0
};

/// J-flow state: u_t = u_G + v_t on P with u_G the canonical potential,
/// and the cached transition data at every node.
struct GridFlowState {
    std::shared_ptr<const FlowGrid> grid;
    std::shared_ptr<const SymplecticPotential> base;    // u_G
    std::shared_ptr<const SymplecticPotential> target;  // g
    double nc = 0.0;
    double volume = 0.0;  // lattice volume of P
    std::vector<double> v;
    double t = 0.0;
    double dt = 0.0;  // last step taken
    std::vector<NodeSample> samples;

    /// u_t with the grid correction.
    SymplecticPotential potential() const;
    GeometryPair pair() const;
};

/// v = u0 - u_G at the nodes; validates convexity by evaluating U everywhere.
GridFlowState init_flow(const SymplecticPotential& u0, const SymplecticPotential& g, double h);

/// tr DU - nc at every node for the current v.
std::vector<double> rhs(const GridFlowState& state);

/// Transition data for the nodal correction v (warm-started from `warm`).
std::vector<NodeSample> evaluate_nodes(const GridFlowState& state, const std::vector<double>& v,
                                       const std::vector<NodeSample>* warm);

/// Spectral radius bound max_k rho(M_k) used by the CFL rule.
double max_diffusion(const GridFlowState& state);

/// One midpoint RK2 step of dv/dt = tr DU - nc, at most max_dt long.
/// Returns the step taken; throws StepFailure after max_halvings.
double step(GridFlowState& state, const FlowOptions& opts = {},
            double max_dt = std::numeric_limits<double>::infinity());

struct Diagnostics {
    double t = 0.0;
    double energy = 0.0;  // 1/2 sum w (tr - nc)^2 + 1/2 nc^2 vol(P)
    double max_trace = 0.0;
    double min_trace = 0.0;
    double min_det = 0.0;
    double max_det = 0.0;
    double max_compat = 0.0;
    double max_partial_bound = 0.0;
    double max_du_norm = 0.0;
    double static_residual = 0.0;  // max |tr - nc|
    double dissipation = 0.0;      // integral of g^{kl}(U) d_k tr d_l tr
    double parabolic_residual = std::numeric_limits<double>::quiet_NaN();
    double min_tracked_distance = std::numeric_limits<double>::quiet_NaN();
    double vertex_error = 0.0;     // max |U(q) - q'| over vertex nodes
    double dt = 0.0;
};

struct DiagnosticsTrace {
    std::vector<Diagnostics> rows;
    std::vector<std::vector<Vec>> tracked;  // y_t for each tracked z, per row
};

enum class OutcomeTag { Converged, Degenerating, Undecided };
std::string_view to_string(OutcomeTag t);

struct Outcome {
    OutcomeTag tag = OutcomeTag::Undecided;
    double static_residual = 0.0;
    double min_det = 0.0;
    std::vector<int> degenerate_nodes;  // det DU < delta_deg at the end
    int degenerate_components = 0;
    std::optional<std::pair<double, double>> degenerate_sum_range;  // range of sum y over those nodes
};

/// Snapshot of the U field used by the parabolic residual.
struct USnapshot {
    double t = 0.0;
    std::vector<Vec> U;
    std::vector<Vec> rhs;  // right side of the divergence-form system; empty off the checked nodes
};

USnapshot take_snapshot(const GridFlowState& state);
/// max over checked nodes of |dU/dt - (divergence-form right side)|, by
/// time differencing two snapshots and averaging the right side. Checked
/// nodes lie at slack >= 0.05 diam(P) with fully centered stencils.
double parabolic_residual(const GridFlowState& state, const USnapshot& earlier, const USnapshot& later);
double parabolic_residual(const GridFlowState& state, const std::vector<USnapshot>& history);

/// Records the diagnostics of the current state.
Diagnostics diagnose(const GridFlowState& state);

struct FlowResult {
    GridFlowState state;
    DiagnosticsTrace trace;
    Outcome outcome;
};

/// Raised by run() on StepFailure; carries the diagnostics gathered so far.
class StepFailureError : public Error {
public:
    StepFailureError(const std::string& what, DiagnosticsTrace partial)
        : Error(ErrorKind::StepFailure, what), partial_(std::move(partial)) {}
    const DiagnosticsTrace& partial() const { return partial_; }

private:
    DiagnosticsTrace partial_;
};

FlowResult run(GridFlowState state, double t_end, double diag_every, const std::vector<Vec>& tracked_z = {},
               const FlowOptions& opts = {});

}  // namespace jflow

#endif
