#include "jflow/flow.hpp"

#include "jflow/parallel.hpp"
#include "jflow/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace jflow {

namespace {

using Index = std::array<int, kMaxDim>;

// Exponents of the monomials of total degree <= 3 in n variables.
std::vector<Index> cubic_monomials(int n) {
    std::vector<Index> out;
    const int deg = 3;
    if (n == 1) {
        for (int e = 0; e <= deg; ++e) out.push_back({e, 0, 0, 0});
    } else {
        for (int d = 0; d <= deg; ++d)
            for (int e = d; e >= 0; --e) out.push_back({e, d - e, 0, 0});
    }
    return out;
}

int hess_rows(int n) { return n * (n + 1) / 2; }

Jet apply_stencil(const Stencil& st, const std::vector<double>& field, int n) {
    std::array<double, 1 + kMaxDim + kMaxDim * (kMaxDim + 1) / 2> d{};
    for (Eigen::Index c = 0; c < st.coeff.cols(); ++c) {
        const double f = field[st.nodes[c]];
        for (Eigen::Index r = 0; r < st.coeff.rows(); ++r) d[r] += st.coeff(r, c) * f;
    }
    Jet j;
    j.value = d[0];
    j.grad.resize(n);
    j.hess.resize(n, n);
    for (int i = 0; i < n; ++i) j.grad(i) = d[1 + i];
    int r = 1 + n;
    for (int i = 0; i < n; ++i)
        for (int k = i; k < n; ++k, ++r) j.hess(i, k) = j.hess(k, i) = d[r];
    return j;
}

}  // namespace

FlowGrid::FlowGrid(const DelzantPolytope& P, double h) : polytope_(std::make_shared<const DelzantPolytope>(P)) {
    dim_ = P.dim();
    if (dim_ < 1 || dim_ > 2) throw Error(ErrorKind::Unsupported, "grid flows support dimension 1 and 2");
    if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorKind::InvalidArgument, "grid spacing must be positive");
    h_ = h;
    const Eigen::VectorXd lo = P.lower_corner(), hi = P.upper_corner();
    lo_.resize(dim_);
    spacing_.resize(dim_);
    std::vector<bool> exact(dim_);
    std::vector<double> width(dim_);
    std::vector<int> cells(dim_);
    for (int d = 0; d < dim_; ++d) {
        lo_(d) = lo(d);
        width[d] = hi(d) - lo(d);
        const double c = width[d] / h;
        const double r = std::round(c);
        exact[d] = r >= 1 && std::abs(c - r) <= 1e-9 * std::max(1.0, c);
        cells[d] = exact[d] ? static_cast<int>(r) : static_cast<int>(std::floor(c + 1e-9));
        if (cells[d] < 8) throw Error(ErrorKind::InvalidArgument, "grid needs at least 8 cells across the polytope");
        spacing_(d) = exact[d] ? width[d] / cells[d] : h;
        shape_[d] = cells[d] + 1;
    }
    for (int d = dim_; d < kMaxDim; ++d) shape_[d] = 1;

    const int total = std::accumulate(shape_.begin(), shape_.begin() + dim_, 1, std::multiplies<int>());
    lattice_.assign(total, -1);
    const double tol = 1e-12 * (1.0 + P.diameter());
    for (int flat = 0; flat < total; ++flat) {
        Index k{};
        int rest = flat;
        for (int d = 0; d < dim_; ++d) {
            k[d] = rest % shape_[d];
            rest /= shape_[d];
        }
        Vec y(dim_);
        for (int d = 0; d < dim_; ++d)
            y(d) = exact[d] ? lo_(d) + (k[d] * width[d]) / cells[d] : lo_(d) + k[d] * h;
        bool inside = true;
        for (int i = 0; i < P.facet_count() && inside; ++i)
            inside = P.normal_matrix().row(i).dot(Eigen::VectorXd(y)) + P.offset_vector()(i) >= -tol;
        if (!inside) continue;
        lattice_[flat] = static_cast<int>(nodes_.size());
        nodes_.push_back(y);
        index_.push_back(k);
    }

    // Stencils.
    const int rows = 1 + dim_ + hess_rows(dim_);
    centered_.assign(nodes_.size(), false);
    stencils_.resize(nodes_.size());
    for (int node = 0; node < size(); ++node) {
        bool full = true;
        std::vector<int> offsets_present;
        const int count = dim_ == 1 ? 3 : 9;
        for (int c = 0; c < count && full; ++c) {
            Index off{};
            off[0] = c % 3 - 1;
            if (dim_ == 2) off[1] = c / 3 - 1;
            if (neighbor(node, off) < 0) full = false;
        }
        centered_[node] = full;
        if (!full) {
            if (!directional_stencil(node, stencils_[node]))
                stencils_[node] = fit_stencil(nodes_[node], index_[node]);
            continue;
        }
        Stencil st;
        st.coeff = Eigen::MatrixXd::Zero(rows, dim_ == 1 ? 3 : 9);
        auto col = [&](int dx, int dy) {
            Index off{};
            off[0] = dx;
            off[1] = dy;
            const int id = neighbor(node, off);
            auto it = std::find(st.nodes.begin(), st.nodes.end(), id);
            if (it != st.nodes.end()) return static_cast<int>(it - st.nodes.begin());
            st.nodes.push_back(id);
            return static_cast<int>(st.nodes.size()) - 1;
        };
        const double hx = spacing_(0);
        st.coeff(0, col(0, 0)) = 1.0;
        st.coeff(1, col(1, 0)) += 0.5 / hx;
        st.coeff(1, col(-1, 0)) -= 0.5 / hx;
        if (dim_ == 1) {
            st.coeff(2, col(1, 0)) += 1.0 / (hx * hx);
            st.coeff(2, col(-1, 0)) += 1.0 / (hx * hx);
            st.coeff(2, col(0, 0)) -= 2.0 / (hx * hx);
        } else {
            const double hy = spacing_(1);
            st.coeff(2, col(0, 1)) += 0.5 / hy;
            st.coeff(2, col(0, -1)) -= 0.5 / hy;
            st.coeff(3, col(1, 0)) += 1.0 / (hx * hx);
            st.coeff(3, col(-1, 0)) += 1.0 / (hx * hx);
            st.coeff(3, col(0, 0)) -= 2.0 / (hx * hx);
            const double q = 0.25 / (hx * hy);
            st.coeff(4, col(1, 1)) += q;
            st.coeff(4, col(-1, -1)) += q;
            st.coeff(4, col(1, -1)) -= q;
            st.coeff(4, col(-1, 1)) -= q;
            st.coeff(5, col(0, 1)) += 1.0 / (hy * hy);
            st.coeff(5, col(0, -1)) += 1.0 / (hy * hy);
            st.coeff(5, col(0, 0)) -= 2.0 / (hy * hy);
        }
        st.coeff.conservativeResize(rows, static_cast<Eigen::Index>(st.nodes.size()));
        stencils_[node] = std::move(st);
    }

    // Quadrature weights: dual cells clipped to P. Cells of lattice points
    // outside P still meet P near slanted facets; their share goes to the
    // nearest node.
    weights_.assign(nodes_.size(), 0.0);
    auto nearest_node = [&](const Index& k, const Vec& y) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        const int r = 2;
        for (int dx = -r; dx <= r; ++dx)
            for (int dy = (dim_ == 2 ? -r : 0); dy <= (dim_ == 2 ? r : 0); ++dy) {
                Index kk = k;
                kk[0] += dx;
                kk[1] += dy;
                const int id = lattice_lookup(kk);
                if (id < 0) continue;
                const double d = (nodes_[id] - y).norm();
                if (d < best_d) {
                    best_d = d;
                    best = id;
                }
            }
        if (best < 0) throw Error(ErrorKind::InvalidArgument, "grid too coarse to cover the polytope");
        return best;
    };
    const Eigen::MatrixXd& N = P.normal_matrix();
    const Eigen::VectorXd& b = P.offset_vector();
    for (int i = -1; i <= shape_[0]; ++i) {
        for (int j = (dim_ == 2 ? -1 : 0); j <= (dim_ == 2 ? shape_[1] : 0); ++j) {
            Index k{};
            k[0] = i;
            k[1] = j;
            Vec y(dim_);
            y(0) = lo_(0) + i * spacing_(0);
            if (dim_ == 2) y(1) = lo_(1) + j * spacing_(1);
            const int self = lattice_lookup(k);
            if (self >= 0) y = nodes_[self];
            double area = 0.0;
            if (dim_ == 1) {
                double a = y(0) - 0.5 * spacing_(0), c = y(0) + 0.5 * spacing_(0);
                a = std::max(a, lo(0));
                c = std::min(c, hi(0));
                area = std::max(0.0, c - a);
            } else {
                const double hx = 0.5 * spacing_(0), hy = 0.5 * spacing_(1);
                std::vector<Eigen::Vector2d> cell{{y(0) - hx, y(1) - hy},
                                                  {y(0) + hx, y(1) - hy},
                                                  {y(0) + hx, y(1) + hy},
                                                  {y(0) - hx, y(1) + hy}};
                for (int f = 0; f < P.facet_count() && !cell.empty(); ++f)
                    cell = clip_polygon(cell, Eigen::Vector2d(N(f, 0), N(f, 1)), b(f));
                if (cell.size() >= 3) area = polygon_area(cell);
            }
            if (area <= 0.0) continue;
            weights_[self >= 0 ? self : nearest_node(k, y)] += area;
        }
    }

    for (int v = 0; v < static_cast<int>(P.vertices().size()); ++v) {
        const Eigen::VectorXd q = P.vertex_point(v);
        int found = -1;
        for (int node = 0; node < size() && found < 0; ++node)
            if ((Eigen::VectorXd(nodes_[node]) - q).norm() <= tol) found = node;
        vertex_nodes_.push_back(found);
    }
}

int FlowGrid::lattice_lookup(const Index& k) const {
    int flat = 0, stride = 1;
    for (int d = 0; d < dim_; ++d) {
        if (k[d] < 0 || k[d] >= shape_[d]) return -1;
        flat += k[d] * stride;
        stride *= shape_[d];
    }
    return lattice_[flat];
}

int FlowGrid::neighbor(int k, const Index& offset) const {
    Index idx = index_[k];
    for (int d = 0; d < dim_; ++d) idx[d] += offset[d];
    return lattice_lookup(idx);
}

namespace {

// Weights on lattice offsets for one directional difference.
using Offsets = std::map<std::pair<int, int>, double>;

void add_scaled(Offsets& to, const Offsets& from, double s) {
    for (const auto& [k, w] : from) to[k] += s * w;
}

}  // namespace

// Second-order differences along lattice directions. Near a facet the
// tangential direction stays centered and only the transverse one goes
// one-sided, which keeps the semi-discrete operator dissipative; a
// least-squares fit over a 2-D patch does not.
bool FlowGrid::directional_stencil(int node, Stencil& out) const {
    auto has = [&](int dx, int dy) {
        Index off{};
        off[0] = dx;
        off[1] = dy;
        return neighbor(node, off) >= 0;
    };
    using Dir = std::pair<int, int>;
    // sign 0 centered, +1 forward, -1 backward; cost counts one-sided pieces.
    auto first = [&](Dir d, int cx, int cy, Offsets& w) -> int {
        const auto [a, b] = d;
        if (has(cx + a, cy + b) && has(cx - a, cy - b)) {
            w = {{{cx + a, cy + b}, 0.5}, {{cx - a, cy - b}, -0.5}};
            return 0;
        }
        for (int s : {1, -1})
            if (has(cx, cy) && has(cx + s * a, cy + s * b) && has(cx + 2 * s * a, cy + 2 * s * b)) {
                w = {{{cx, cy}, -1.5 * s}, {{cx + s * a, cy + s * b}, 2.0 * s}, {{cx + 2 * s * a, cy + 2 * s * b}, -0.5 * s}};
                return 1;
            }
        return -1;
    };
    auto second = [&](Dir d, Offsets& w) -> int {
        const auto [a, b] = d;
        if (has(a, b) && has(-a, -b)) {
            w = {{{a, b}, 1.0}, {{0, 0}, -2.0}, {{-a, -b}, 1.0}};
            return 0;
        }
        for (int s : {1, -1})
            if (has(s * a, s * b) && has(2 * s * a, 2 * s * b) && has(3 * s * a, 3 * s * b)) {
                w = {{{0, 0}, 2.0}, {{s * a, s * b}, -5.0}, {{2 * s * a, 2 * s * b}, 4.0}, {{3 * s * a, 3 * s * b}, -1.0}};
                return 1;
            }
        return -1;
    };
    // d/da d/db: the b-derivative differenced along a.
    auto mixed = [&](Dir a, Dir b, Offsets& w) -> int {
        int best = -1;
        for (int pass = 0; pass < 2; ++pass) {
            const Dir outer = pass == 0 ? a : b, inner = pass == 0 ? b : a;
            Offsets at[3];
            int c[3];
            // centered in outer
            c[0] = first(inner, outer.first, outer.second, at[0]);
            c[1] = first(inner, -outer.first, -outer.second, at[1]);
            if (c[0] >= 0 && c[1] >= 0 && has(outer.first, outer.second) && has(-outer.first, -outer.second)) {
                const int cost = c[0] + c[1];
                if (best < 0 || cost < best) {
                    w.clear();
                    add_scaled(w, at[0], 0.5);
                    add_scaled(w, at[1], -0.5);
                    best = cost;
                }
                continue;
            }
            for (int s : {1, -1}) {
                bool ok = true;
                int cost = 1;
                for (int k = 0; k < 3 && ok; ++k) {
                    c[k] = first(inner, k * s * outer.first, k * s * outer.second, at[k]);
                    ok = c[k] >= 0;
                    cost += std::max(c[k], 0);
                }
                if (!ok) continue;
                if (best < 0 || cost < best) {
                    w.clear();
                    add_scaled(w, at[0], -1.5 * s);
                    add_scaled(w, at[1], 2.0 * s);
                    add_scaled(w, at[2], -0.5 * s);
                    best = cost;
                }
                break;
            }
        }
        return best;
    };

    std::vector<Dir> dirs = {{1, 0}};
    if (dim_ == 2) dirs = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
    const int rows = 1 + dim_ + hess_rows(dim_);

    int best_cost = -1;
    Offsets best_rows[6];
    Eigen::MatrixXd best_binv;
    auto consider = [&](Dir a, Dir b) {
        Offsets da, db, daa, dbb, dab;
        int cost = 0;
        int c = first(a, 0, 0, da);
        if (c < 0) return;
        cost += c;
        if ((c = second(a, daa)) < 0) return;
        cost += c;
        Eigen::MatrixXd B(dim_, dim_);
        B(0, 0) = a.first * spacing_(0);
        if (dim_ == 2) {
            B(1, 0) = a.second * spacing_(1);
            if ((c = first(b, 0, 0, db)) < 0) return;
            cost += c;
            if ((c = second(b, dbb)) < 0) return;
            cost += c;
            if ((c = mixed(a, b, dab)) < 0) return;
            cost += c;
            B(0, 1) = b.first * spacing_(0);
            B(1, 1) = b.second * spacing_(1);
        }
        if (best_cost >= 0 && cost >= best_cost) return;
        best_cost = cost;
        best_binv = B.inverse();
        // grad = B^{-T} (Da, Db); H = B^{-T} D B^{-1}
        const Eigen::MatrixXd& Bi = best_binv;
        for (auto& r : best_rows) r.clear();
        best_rows[0] = {{{0, 0}, 1.0}};
        if (dim_ == 1) {
            add_scaled(best_rows[1], da, Bi(0, 0));
            add_scaled(best_rows[2], daa, Bi(0, 0) * Bi(0, 0));
            return;
        }
        for (int i = 0; i < 2; ++i) {
            add_scaled(best_rows[1 + i], da, Bi(0, i));
            add_scaled(best_rows[1 + i], db, Bi(1, i));
        }
        int r = 3;
        for (int i = 0; i < 2; ++i)
            for (int j = i; j < 2; ++j, ++r) {
                add_scaled(best_rows[r], daa, Bi(0, i) * Bi(0, j));
                add_scaled(best_rows[r], dbb, Bi(1, i) * Bi(1, j));
                add_scaled(best_rows[r], dab, Bi(0, i) * Bi(1, j) + Bi(1, i) * Bi(0, j));
            }
    };
    if (dim_ == 1) {
        consider(dirs[0], dirs[0]);
    } else {
        for (std::size_t i = 0; i < dirs.size(); ++i)
            for (std::size_t j = i + 1; j < dirs.size(); ++j) consider(dirs[i], dirs[j]);
    }
    if (best_cost < 0) return false;

    Stencil st;
    std::map<std::pair<int, int>, int> column;
    for (int r = 0; r < rows; ++r)
        for (const auto& [k, w] : best_rows[r])
            if (!column.count(k)) {
                Index off{};
                off[0] = k.first;
                off[1] = k.second;
                column[k] = static_cast<int>(st.nodes.size());
                st.nodes.push_back(neighbor(node, off));
            }
    st.coeff = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(st.nodes.size()));
    for (int r = 0; r < rows; ++r)
        for (const auto& [k, w] : best_rows[r]) st.coeff(r, column[k]) += w;
    out = std::move(st);
    return true;
}

Stencil FlowGrid::fit_stencil(const Vec& center, const Index& index) const {
    const auto monomials = cubic_monomials(dim_);
    const int p = static_cast<int>(monomials.size());
    const int rows = 1 + dim_ + hess_rows(dim_);
    for (int r = 2; r <= 6; ++r) {
        Stencil st;
        for (int dx = -r; dx <= r; ++dx)
            for (int dy = (dim_ == 2 ? -r : 0); dy <= (dim_ == 2 ? r : 0); ++dy) {
                Index k = index;
                k[0] += dx;
                k[1] += dy;
                const int id = lattice_lookup(k);
                if (id >= 0) st.nodes.push_back(id);
            }
        const int m = static_cast<int>(st.nodes.size());
        if (m < p + (dim_ == 1 ? 1 : 4)) continue;
        Eigen::MatrixXd V(m, p);
        for (int i = 0; i < m; ++i) {
            const Vec x = (nodes_[st.nodes[i]] - center).cwiseQuotient(spacing_);
            for (int c = 0; c < p; ++c) {
                double val = 1.0;
                for (int d = 0; d < dim_; ++d) val *= std::pow(x(d), monomials[c][d]);
                V(i, c) = val;
            }
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (sv(p - 1) <= 1e-8 * sv(0)) continue;
        // pinv = V S^{-1} U^T
        const Eigen::MatrixXd pinv =
            svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
        auto row_of = [&](int e0, int e1) {
            for (int c = 0; c < p; ++c)
                if (monomials[c][0] == e0 && (dim_ == 1 || monomials[c][1] == e1)) return c;
            return -1;
        };
        st.coeff.resize(rows, m);
        st.coeff.row(0) = pinv.row(row_of(0, 0));
        if (dim_ == 1) {
            st.coeff.row(1) = pinv.row(row_of(1, 0)) / spacing_(0);
            st.coeff.row(2) = 2.0 * pinv.row(row_of(2, 0)) / (spacing_(0) * spacing_(0));
        } else {
            const double hx = spacing_(0), hy = spacing_(1);
            st.coeff.row(1) = pinv.row(row_of(1, 0)) / hx;
            st.coeff.row(2) = pinv.row(row_of(0, 1)) / hy;
            st.coeff.row(3) = 2.0 * pinv.row(row_of(2, 0)) / (hx * hx);
            st.coeff.row(4) = pinv.row(row_of(1, 1)) / (hx * hy);
            st.coeff.row(5) = 2.0 * pinv.row(row_of(0, 2)) / (hy * hy);
        }
        return st;
    }
    throw Error(ErrorKind::Unsupported, "no well-conditioned boundary stencil; refine the grid");
}

Jet FlowGrid::jet(int k, const std::vector<double>& field) const { return apply_stencil(stencils_[k], field, dim_); }

Vec FlowGrid::gradient(int k, const std::vector<double>& field) const { return jet(k, field).grad; }

Jet FlowGrid::jet_at(const Vec& y, const std::vector<double>& field) const {
    // Cubic fits around the 2^n surrounding lattice points, blended with C2
    // smoothstep weights so the result is smooth across cells.
    Index k0{};
    std::array<double, kMaxDim> s{};
    for (int d = 0; d < dim_; ++d) {
        const double x = (y(d) - lo_(d)) / spacing_(d);
        k0[d] = std::clamp(static_cast<int>(std::floor(x)), 0, std::max(shape_[d] - 2, 0));
        s[d] = std::clamp(x - k0[d], 0.0, 1.0);
    }
    Jet out = Jet::constant(0.0, dim_);
    for (int corner = 0; corner < (1 << dim_); ++corner) {
        Jet w = Jet::constant(1.0, dim_);
        Index k = k0;
        for (int d = 0; d < dim_; ++d) {
            const bool up = (corner >> d) & 1;
            k[d] += up;
            const double t = s[d], h = spacing_(d);
            double f = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
            double df = 30.0 * t * t * (1.0 - t) * (1.0 - t) / h;
            double d2f = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (h * h);
            if (!up) {
                f = 1.0 - f;
                df = -df;
                d2f = -d2f;
            }
            Jet wd = Jet::constant(f, dim_);
            wd.grad(d) = df;
            wd.hess(d, d) = d2f;
            w = w * wd;
        }
        if (w.value == 0.0 && w.grad.isZero() && w.hess.isZero()) continue;
        out = out + w * apply_stencil(fit_stencil(y, k), field, dim_);
    }
    return out;
}

SymplecticPotential GridFlowState::potential() const {
    return SymplecticPotential(base->polytope(), std::make_shared<GridCorrection>(grid, v));
}

GeometryPair GridFlowState::pair() const { return GeometryPair(potential(), *target); }

std::vector<NodeSample> evaluate_nodes(const GridFlowState& state, const std::vector<double>& v,
                                       const std::vector<NodeSample>* warm) {
    const FlowGrid& grid = *state.grid;
    std::vector<NodeSample> out(grid.size());
    parallel_for(grid.size(), [&](int k) {
        TransitionOptions opts;
        opts.spectrum = false;
        if (warm) opts.warm_start = (*warm)[k].U;
        const auto s = transition_with(*state.base, grid.node(k), grid.jet(k, v), *state.target, opts);
        NodeSample& n = out[k];
        n.U = s.U;
        n.DU = s.DU;
        n.M = s.target_inverse_hess;
        n.trace = s.trace;
        n.det = s.det;
        n.compat = s.compat_residual;
        n.partial_bound = s.partial_bound;
    });
    return out;
}

GridFlowState init_flow(const SymplecticPotential& u0, const SymplecticPotential& g, double h) {
    if (!u0.polytope().same_normals(g.polytope()))
        throw Error(ErrorKind::NormalMismatch, "source and target polytopes have different normals");
    GridFlowState s;
    s.grid = std::make_shared<const FlowGrid>(u0.polytope(), h);
    s.base = std::make_shared<const SymplecticPotential>(SymplecticPotential::canonical(u0.polytope()));
    s.target = std::make_shared<const SymplecticPotential>(g);
    s.nc = compute_nc(u0.polytope(), g.polytope());
    s.volume = lattice_volume(u0.polytope());
    s.v.resize(s.grid->size());
    for (int k = 0; k < s.grid->size(); ++k) s.v[k] = u0.correction().jet(s.grid->node(k)).value;
    s.samples = evaluate_nodes(s, s.v, nullptr);
    return s;
}

std::vector<double> rhs(const GridFlowState& state) {
    std::vector<double> r(state.samples.size());
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = state.samples[k].trace - state.nc;
    return r;
}

double max_diffusion(const GridFlowState& state) {
    double rho = 0.0;
    for (const auto& s : state.samples) {
        Eigen::SelfAdjointEigenSolver<Mat> es(s.M, Eigen::EigenvaluesOnly);
        rho = std::max(rho, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    return rho;
}

double step(GridFlowState& state, const FlowOptions& opts, double max_dt) {
    if (!(max_dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "step length bound must be positive");
    double dt;
    if (opts.fixed_dt > 0.0) {
        dt = opts.fixed_dt;
    } else {
        const double rho = max_diffusion(state);
        const double h = state.grid->spacing().minCoeff();
        dt = rho > 0.0 ? opts.cfl * h * h / rho : max_dt;
    }
    dt = std::min(dt, max_dt);
    const std::vector<double> k1 = rhs(state);
    std::string last_error;
    for (int attempt = 0; attempt <= opts.max_halvings; ++attempt, dt *= 0.5) {
        try {
            std::vector<double> mid = state.v;
            for (std::size_t k = 0; k < mid.size(); ++k) mid[k] += 0.5 * dt * k1[k];
            const auto mid_samples = evaluate_nodes(state, mid, &state.samples);
            std::vector<double> next = state.v;
            for (std::size_t k = 0; k < next.size(); ++k) next[k] += dt * (mid_samples[k].trace - state.nc);
            auto next_samples = evaluate_nodes(state, next, &mid_samples);
            state.v = std::move(next);
            state.samples = std::move(next_samples);
            state.t += dt;
            state.dt = dt;
            return dt;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::InvalidArgument || e.kind() == ErrorKind::Unsupported) throw;
            last_error = e.what();
        }
    }
    throw Error(ErrorKind::StepFailure, "convexity lost after " + std::to_string(opts.max_halvings) +
                                            " step halvings at t = " + std::to_string(state.t) + " (" + last_error +
                                            ")");
}

std::string_view to_string(OutcomeTag t) {
    switch (t) {
        case OutcomeTag::Converged: return "Converged";
        case OutcomeTag::Degenerating: return "Degenerating";
        case OutcomeTag::Undecided: return "Undecided";
    }
    return "?";
}

namespace {

// First and second differences of a vector field at a node:
// D(i, j) = d_j F^i, D2[i](j, k) = d_j d_k F^i.
void field_derivatives(const FlowGrid& grid, int k, const std::vector<Vec>& F, Mat& D, std::vector<Mat>& D2) {
    const int n = grid.dim();
    const Stencil& st = grid.stencil(k);
    D.resize(n, n);
    D2.assign(n, Mat(n, n));
    Eigen::VectorXd vals(st.nodes.size());
    for (int i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < st.nodes.size(); ++c) vals(c) = F[st.nodes[c]](i);
        const Eigen::VectorXd d = st.coeff * vals;
        int r = 1 + n;
        for (int a = 0; a < n; ++a) {
            D(i, a) = d(1 + a);
            for (int b = a; b < n; ++b, ++r) D2[i](a, b) = D2[i](b, a) = d(r);
        }
    }
}

}  // namespace

USnapshot take_snapshot(const GridFlowState& state) {
    const FlowGrid& grid = *state.grid;
    const auto& g = *state.target;
    const int n = grid.dim();
    USnapshot snap;
    snap.t = state.t;
    snap.U.resize(grid.size());
    for (int k = 0; k < grid.size(); ++k) snap.U[k] = state.samples[k].U;
    snap.rhs.assign(grid.size(), Vec());
    const double delta = 1e-5 * (1.0 + g.diameter());
    const double interior = 0.05 * state.base->diameter();
    parallel_for(grid.size(), [&](int k) {
        // Second differences of U are only trusted where every node they
        // touch was itself computed from centered differences of v, and the
        // one-sided boundary closure leaves an O(h) layer; a fixed interior
        // set keeps the residual's order visible.
        if (!grid.centered(k)) return;
        for (int j : grid.stencil(k).nodes)
            if (!grid.centered(j)) return;
        if (state.base->min_slack(grid.node(k)) < interior) return;
        const Vec& U = snap.U[k];
        if (g.min_slack(U) < 4 * delta) return;
        Mat D;
        std::vector<Mat> D2;
        field_derivatives(grid, k, snap.U, D, D2);
        const Mat& M = state.samples[k].M;
        std::vector<Mat> dM(n);
        for (int l = 0; l < n; ++l) {
            Vec up = U, dn = U;
            up(l) += delta;
            dn(l) -= delta;
            dM[l] = (g.inverse_hess_extended(up) - g.inverse_hess_extended(dn)) / (2 * delta);
        }
        const Mat D_sq = D * D;
        Vec r(n);
        for (int i = 0; i < n; ++i) {
            double val = (M.cwiseProduct(D2[i])).sum();
            for (int l = 0; l < n; ++l) {
                for (int j = 0; j < n; ++j) val -= dM[l](i, j) * D_sq(l, j);
                for (int kk = 0; kk < n; ++kk)
                    for (int j = 0; j < n; ++j) val += dM[l](kk, j) * D(l, kk) * D(i, j);
            }
            r(i) = val;
        }
        snap.rhs[k] = r;
    });
    return snap;
}

double parabolic_residual(const GridFlowState& state, const USnapshot& earlier, const USnapshot& later) {
    const double span = later.t - earlier.t;
    if (!(span > 0.0)) throw Error(ErrorKind::InsufficientHistory, "snapshots must be at increasing times");
    double worst = 0.0;
    for (int k = 0; k < state.grid->size(); ++k) {
        if (earlier.rhs[k].size() == 0 || later.rhs[k].size() == 0) continue;
        const Vec dUdt = (later.U[k] - earlier.U[k]) / span;
        worst = std::max(worst, (dUdt - 0.5 * (earlier.rhs[k] + later.rhs[k])).cwiseAbs().maxCoeff());
    }
    return worst;
}

double parabolic_residual(const GridFlowState& state, const std::vector<USnapshot>& history) {
    if (history.size() < 2) throw Error(ErrorKind::InsufficientHistory, "need two snapshots of the U field");
    return parabolic_residual(state, history[history.size() - 2], history.back());
}

Diagnostics diagnose(const GridFlowState& state) {
    const FlowGrid& grid = *state.grid;
    Diagnostics d;
    d.t = state.t;
    d.dt = state.dt;
    d.max_trace = -std::numeric_limits<double>::infinity();
    d.min_trace = std::numeric_limits<double>::infinity();
    d.min_det = std::numeric_limits<double>::infinity();
    d.max_det = -std::numeric_limits<double>::infinity();
    std::vector<double> tr(grid.size());
    for (int k = 0; k < grid.size(); ++k) tr[k] = state.samples[k].trace;
    for (int k = 0; k < grid.size(); ++k) {
        const auto& s = state.samples[k];
        d.energy += 0.5 * grid.weight(k) * (s.trace - state.nc) * (s.trace - state.nc);
        d.max_trace = std::max(d.max_trace, s.trace);
        d.min_trace = std::min(d.min_trace, s.trace);
        d.min_det = std::min(d.min_det, s.det);
        d.max_det = std::max(d.max_det, s.det);
        d.max_compat = std::max(d.max_compat, s.compat);
        d.max_partial_bound = std::max(d.max_partial_bound, s.partial_bound);
        d.max_du_norm = std::max(d.max_du_norm, s.DU.norm());
        d.static_residual = std::max(d.static_residual, std::abs(s.trace - state.nc));
        const Vec gt = grid.gradient(k, tr);
        d.dissipation += grid.weight(k) * gt.dot(s.M * gt);
    }
    // The nodal sum of tr DU drifts at O(h^2) although its exact value is the
    // class invariant nc vol(P); splitting that part off keeps E and its
    // time derivative free of the drift.
    d.energy += 0.5 * state.nc * state.nc * state.volume;
    const auto& P = state.base->polytope();
    const auto& Q = state.target->polytope();
    for (int v = 0; v < static_cast<int>(grid.vertex_nodes().size()); ++v) {
        const int node = grid.vertex_nodes()[v];
        if (node < 0) continue;
        for (int w = 0; w < static_cast<int>(Q.vertices().size()); ++w)
            if (Q.vertices()[w].facets == P.vertices()[v].facets)
                d.vertex_error = std::max(d.vertex_error, (state.samples[node].U - state.target->vertex(w)).norm());
    }
    return d;
}

namespace {

double distance_to_boundary(const SymplecticPotential& u, const Vec& y) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < u.facet_count(); ++i) best = std::min(best, u.slack(i, y) / u.normal(i).norm());
    return best;
}

int count_components(const FlowGrid& grid, const std::vector<int>& nodes) {
    std::vector<int> mark(grid.size(), 0);
    for (int k : nodes) mark[k] = 1;
    int components = 0;
    std::vector<int> stack;
    for (int k : nodes) {
        if (mark[k] != 1) continue;
        ++components;
        stack.push_back(k);
        mark[k] = 2;
        while (!stack.empty()) {
            const int c = stack.back();
            stack.pop_back();
            for (int d = 0; d < grid.dim(); ++d)
                for (int s : {-1, 1}) {
                    Index off{};
                    off[d] = s;
                    const int nb = grid.neighbor(c, off);
                    if (nb >= 0 && mark[nb] == 1) {
                        mark[nb] = 2;
                        stack.push_back(nb);
                    }
                }
        }
    }
    return components;
}

}  // namespace

FlowResult run(GridFlowState state, double t_end, double diag_every, const std::vector<Vec>& tracked_z,
               const FlowOptions& opts) {
    if (!(t_end > 0.0)) throw Error(ErrorKind::InvalidArgument, "t_end must be positive");
    if (!(diag_every > 0.0)) throw Error(ErrorKind::InvalidArgument, "diag_every must be positive");
    for (const Vec& z : tracked_z) {
        if (z.size() != state.grid->dim()) throw Error(ErrorKind::InvalidArgument, "tracked point has wrong dimension");
        if (!(state.target->min_slack(z) > 0.0))
            throw Error(ErrorKind::InvalidArgument, "tracked points must lie inside the target polytope");
    }

    DiagnosticsTrace trace;
    std::optional<USnapshot> previous;
    std::vector<Vec> tracked_y;

    auto record = [&] {
        Diagnostics d = diagnose(state);
        USnapshot snap = take_snapshot(state);
        if (previous) d.parabolic_residual = parabolic_residual(state, *previous, snap);
        previous = std::move(snap);
        if (!tracked_z.empty()) {
            const GeometryPair pair = state.pair();
            std::vector<Vec> ys;
            double closest = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < tracked_z.size(); ++i) {
                std::optional<Vec> start;
                if (i < tracked_y.size()) start = tracked_y[i];
                const Vec y = inverse_point(pair, tracked_z[i], start);
                closest = std::min(closest, distance_to_boundary(pair.source(), y));
                ys.push_back(y);
            }
            tracked_y = ys;
            d.min_tracked_distance = closest;
            trace.tracked.push_back(std::move(ys));
        }
        trace.rows.push_back(d);
    };
    auto converged = [&] {
        const auto& rows = trace.rows;
        if (rows.size() == 1)
            return rows[0].static_residual < opts.immediate_tol && rows[0].min_det > opts.delta_conv;
        if (static_cast<int>(rows.size()) < opts.converge_window) return false;
        for (std::size_t i = rows.size() - opts.converge_window; i < rows.size(); ++i)
            if (!(rows[i].static_residual < opts.tol_static && rows[i].min_det > opts.delta_conv)) return false;
        return true;
    };

    record();
    bool done = converged();
    const double t_eps = 1e-12 * std::max(1.0, t_end);
    // Diagnostics land on multiples of diag_every, also for a resumed state.
    long diag_index = static_cast<long>(std::floor((state.t + t_eps) / diag_every)) + 1;
    while (!done && state.t < t_end - t_eps) {
        const double next_diag = std::min(t_end, diag_index * diag_every);
        try {
            step(state, opts, next_diag - state.t);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::StepFailure) {
                std::string msg = e.what();
                const std::string prefix = std::string(to_string(ErrorKind::StepFailure)) + ": ";
                if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
                throw StepFailureError(msg, trace);
            }
            throw;
        }
        if (state.t >= next_diag - t_eps) {
            state.t = next_diag;
            record();
            if (next_diag >= diag_index * diag_every - t_eps) ++diag_index;
            done = converged();
        }
    }

    Outcome outcome;
    const Diagnostics& last = trace.rows.back();
    outcome.static_residual = last.static_residual;
    outcome.min_det = last.min_det;
    if (done) {
        outcome.tag = OutcomeTag::Converged;
    } else {
        const int n = static_cast<int>(trace.rows.size());
        const bool low = last.min_det < opts.delta_deg;
        const bool decreasing = n > opts.degenerate_window && last.min_det < trace.rows[n - 1 - opts.degenerate_window].min_det;
        outcome.tag = (low && decreasing) ? OutcomeTag::Degenerating : OutcomeTag::Undecided;
    }
    for (int k = 0; k < state.grid->size(); ++k)
        if (state.samples[k].det < opts.delta_deg) outcome.degenerate_nodes.push_back(k);
    if (!outcome.degenerate_nodes.empty()) {
        outcome.degenerate_components = count_components(*state.grid, outcome.degenerate_nodes);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int k : outcome.degenerate_nodes) {
            const double s = state.grid->node(k).sum();
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        outcome.degenerate_sum_range = std::make_pair(lo, hi);
    }
    return FlowResult{std::move(state), std::move(trace), std::move(outcome)};
}

}  // namespace jflow
