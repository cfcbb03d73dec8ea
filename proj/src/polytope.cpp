#include "jflow/polytope.hpp"

#include "jflow/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace jflow {

namespace {

using RationalMatrix = std::vector<std::vector<Rational>>;

// Solves M x = rhs exactly; returns false when M is singular.
bool solve_exact(RationalMatrix M, std::vector<Rational> rhs, std::vector<Rational>& x) {
    const std::size_t n = M.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        while (pivot < n && M[pivot][col] == 0) ++pivot;
        if (pivot == n) return false;
        std::swap(M[pivot], M[col]);
        std::swap(rhs[pivot], rhs[col]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col || M[r][col] == 0) continue;
            const Rational factor = M[r][col] / M[col][col];
            for (std::size_t c = col; c < n; ++c) M[r][c] -= factor * M[col][c];
            rhs[r] -= factor * rhs[col];
        }
    }
    x.resize(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = rhs[i] / M[i][i];
    return true;
}

Rational determinant_exact(RationalMatrix M) {
    const std::size_t n = M.size();
    Rational det = 1;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        while (pivot < n && M[pivot][col] == 0) ++pivot;
        if (pivot == n) return 0;
        if (pivot != col) {
            std::swap(M[pivot], M[col]);
            det = -det;
        }
        det *= M[col][col];
        for (std::size_t r = col + 1; r < n; ++r) {
            if (M[r][col] == 0) continue;
            const Rational factor = M[r][col] / M[col][col];
            for (std::size_t c = col; c < n; ++c) M[r][c] -= factor * M[col][c];
        }
    }
    return det;
}

// Row-echelon rank over the rationals.
int rank_exact(RationalMatrix M) {
    if (M.empty()) return 0;
    const std::size_t rows = M.size();
    const std::size_t cols = M[0].size();
    std::size_t rank = 0;
    for (std::size_t col = 0; col < cols && rank < rows; ++col) {
        std::size_t pivot = rank;
        while (pivot < rows && M[pivot][col] == 0) ++pivot;
        if (pivot == rows) continue;
        std::swap(M[pivot], M[rank]);
        for (std::size_t r = rank + 1; r < rows; ++r) {
            if (M[r][col] == 0) continue;
            const Rational factor = M[r][col] / M[rank][col];
            for (std::size_t c = col; c < cols; ++c) M[r][c] -= factor * M[rank][c];
        }
        ++rank;
    }
    return static_cast<int>(rank);
}

// Generalized cross product of n-1 vectors in R^n: spans the kernel when
// the rows are independent, zero otherwise.
std::vector<Rational> cofactor_kernel(const std::vector<IntVector>& rows, int n) {
    std::vector<Rational> d(n);
    for (int k = 0; k < n; ++k) {
        RationalMatrix minor;
        for (const auto& row : rows) {
            std::vector<Rational> r;
            for (int c = 0; c < n; ++c)
                if (c != k) r.emplace_back(row[c]);
            minor.push_back(std::move(r));
        }
        const Rational det = minor.empty() ? Rational(1) : determinant_exact(minor);
        d[k] = (k % 2 == 0) ? det : Rational(-det);
    }
    return d;
}

Rational dot(const IntVector& u, const std::vector<Rational>& y) {
    Rational s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s += Rational(u[i]) * y[i];
    return s;
}

// Calls fn on every k-subset of {0..m-1} in lexicographic order.
template <typename Fn>
void for_each_subset(int m, int k, Fn&& fn) {
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    if (k > m) return;
    while (true) {
        fn(idx);
        int i = k - 1;
        while (i >= 0 && idx[i] == m - k + i) --i;
        if (i < 0) return;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

std::string point_string(const std::vector<Rational>& p) {
    std::string s = "(";
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) s += ", ";
        s += rational_to_string(p[i]);
    }
    return s + ")";
}

using FaceMap = std::map<std::vector<int>, std::vector<int>>;

FaceMap face_map(const DelzantPolytope& P) {
    FaceMap faces;
    const int n = P.dim();
    const auto& verts = P.vertices();
    for (int v = 0; v < static_cast<int>(verts.size()); ++v) {
        const auto& tight = verts[v].facets;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            std::vector<int> ids;
            for (int j = 0; j < n; ++j)
                if (mask & (1u << j)) ids.push_back(tight[j]);
            faces[ids].push_back(v);
        }
    }
    return faces;
}

Face make_face(const DelzantPolytope& P, const std::vector<int>& ids, const std::vector<int>& verts) {
    Face F;
    F.facet_ids = ids;
    F.dim = P.dim() - static_cast<int>(ids.size());
    F.vertices = verts;
    F.anchor = verts.front();
    const auto& tight = P.vertices()[F.anchor].facets;
    const Eigen::MatrixXd& inv = P.chart_inverse(F.anchor);
    for (int j = 0; j < P.dim(); ++j) {
        if (std::binary_search(ids.begin(), ids.end(), tight[j])) continue;
        IntVector e(P.dim());
        for (int r = 0; r < P.dim(); ++r) e[r] = std::llround(inv(r, j));
        F.tangent_basis.push_back(std::move(e));
    }
    return F;
}

std::vector<Rational> centroid_of(const DelzantPolytope& P, const std::vector<int>& verts) {
    std::vector<Rational> c(P.dim(), Rational(0));
    for (int v : verts)
        for (int i = 0; i < P.dim(); ++i) c[i] += P.vertices()[v].point[i];
    for (auto& x : c) x /= static_cast<long long>(verts.size());
    return c;
}

// Sum over full flags F = G_p > G_{p-1} > ... > G_0 of the simplex spanned
// by the face centroids: the barycentric subdivision of F.
void accumulate_flags(const DelzantPolytope& P, const Face& top, const FaceMap& faces,
                      const std::vector<int>& current, std::vector<std::vector<Rational>>& chain,
                      Rational& total) {
    const int n = P.dim();
    const auto& verts = faces.at(current);
    if (static_cast<int>(current.size()) == n) {
        const auto vcoords = face_coordinates(P, top, P.vertices()[verts.front()].point);
        RationalMatrix M;
        for (const auto& c : chain) {
            std::vector<Rational> row(c.size());
            for (std::size_t i = 0; i < c.size(); ++i) row[i] = c[i] - vcoords[i];
            M.push_back(std::move(row));
        }
        const Rational det = determinant_exact(M);
        total += det < 0 ? Rational(-det) : det;
        return;
    }
    chain.push_back(face_coordinates(P, top, centroid_of(P, verts)));
    for (int j = 0; j < P.facet_count(); ++j) {
        if (std::binary_search(current.begin(), current.end(), j)) continue;
        std::vector<int> next = current;
        next.insert(std::upper_bound(next.begin(), next.end(), j), j);
        if (faces.count(next)) accumulate_flags(P, top, faces, next, chain, total);
    }
    chain.pop_back();
}

Rational factorial(int k) {
    Rational f = 1;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Unbounded: return "Unbounded";
        case ErrorKind::EmptyInterior: return "EmptyInterior";
        case ErrorKind::NotDelzant: return "NotDelzant";
        case ErrorKind::NonPrimitiveNormal: return "NonPrimitiveNormal";
        case ErrorKind::NormalMismatch: return "NormalMismatch";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::BoundaryEvaluation: return "BoundaryEvaluation";
        case ErrorKind::NoVertexChart: return "NoVertexChart";
        case ErrorKind::NewtonDivergence: return "NewtonDivergence";
        case ErrorKind::FaceMismatch: return "FaceMismatch";
        case ErrorKind::NotConvex: return "NotConvex";
        case ErrorKind::StepFailure: return "StepFailure";
        case ErrorKind::InsufficientHistory: return "InsufficientHistory";
        case ErrorKind::NoRoot: return "NoRoot";
        case ErrorKind::Unsupported: return "Unsupported";
    }
    return "Unknown";
}

Rational parse_rational(std::string_view text) {
    std::string s(text);
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }),
            s.end());
    if (s.empty()) throw Error(ErrorKind::ParseError, "empty number");
    try {
        if (auto slash = s.find('/'); slash != std::string::npos) {
            boost::multiprecision::cpp_int num(s.substr(0, slash));
            boost::multiprecision::cpp_int den(s.substr(slash + 1));
            if (den == 0) throw Error(ErrorKind::ParseError, "zero denominator in '" + s + "'");
            return Rational(num, den);
        }
        bool negative = false;
        std::size_t pos = 0;
        if (s[0] == '-' || s[0] == '+') {
            negative = s[0] == '-';
            pos = 1;
        }
        std::string digits;
        long long exponent = 0;
        bool seen_point = false;
        for (; pos < s.size(); ++pos) {
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c))) {
                digits += c;
                if (seen_point) --exponent;
            } else if (c == '.' && !seen_point) {
                seen_point = true;
            } else if (c == 'e' || c == 'E') {
                exponent += std::stoll(s.substr(pos + 1));
                break;
            } else {
                throw Error(ErrorKind::ParseError, "bad number '" + s + "'");
            }
        }
        if (digits.empty()) throw Error(ErrorKind::ParseError, "bad number '" + s + "'");
        Rational value{boost::multiprecision::cpp_int(digits)};
        boost::multiprecision::cpp_int scale = boost::multiprecision::pow(
            boost::multiprecision::cpp_int(10), static_cast<unsigned>(std::llabs(exponent)));
        value = exponent >= 0 ? value * Rational(scale) : value / Rational(scale);
        return negative ? Rational(-value) : value;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw Error(ErrorKind::ParseError, "bad number '" + s + "'");
    }
}

std::string rational_to_string(const Rational& r) {
    const auto num = boost::multiprecision::numerator(r);
    const auto den = boost::multiprecision::denominator(r);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

DelzantPolytope DelzantPolytope::build(std::vector<IntVector> normals, std::vector<Rational> offsets) {
    if (normals.empty()) throw Error(ErrorKind::InvalidArgument, "no facets given");
    const int n = static_cast<int>(normals.front().size());
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "dimension must be at least 1");
    if (offsets.size() != normals.size())
        throw Error(ErrorKind::InvalidArgument, "normal and offset counts differ");
    const int m = static_cast<int>(normals.size());
    for (int i = 0; i < m; ++i) {
        if (static_cast<int>(normals[i].size()) != n)
            throw Error(ErrorKind::InvalidArgument, "facet " + std::to_string(i) + " has wrong dimension");
        long long g = 0;
        for (long long x : normals[i]) g = std::gcd(g, std::llabs(x));
        if (g != 1)
            throw Error(ErrorKind::NonPrimitiveNormal, "normal of facet " + std::to_string(i) +
                                                           " has gcd " + std::to_string(g));
    }

    // Boundedness: the recession cone {d : U d >= 0} must be trivial. A
    // nontrivial pointed cone has an extreme ray cut out by n-1 normals.
    {
        RationalMatrix U;
        for (const auto& u : normals) U.emplace_back(u.begin(), u.end());
        if (rank_exact(U) < n) throw Error(ErrorKind::Unbounded, "normals do not span R^n");
        bool unbounded = false;
        for_each_subset(m, n - 1, [&](const std::vector<int>& idx) {
            if (unbounded) return;
            std::vector<IntVector> rows;
            for (int i : idx) rows.push_back(normals[i]);
            const auto d = cofactor_kernel(rows, n);
            if (std::all_of(d.begin(), d.end(), [](const Rational& x) { return x == 0; })) return;
            bool all_nonneg = true, all_nonpos = true;
            for (const auto& u : normals) {
                const Rational s = dot(u, d);
                if (s < 0) all_nonneg = false;
                if (s > 0) all_nonpos = false;
            }
            unbounded = all_nonneg || all_nonpos;
        });
        if (unbounded) throw Error(ErrorKind::Unbounded, "polytope has a recession direction");
    }

    DelzantPolytope P;
    P.dim_ = n;
    P.normals_ = std::move(normals);
    P.offsets_ = std::move(offsets);

    std::set<std::vector<Rational>> seen;
    for_each_subset(m, n, [&](const std::vector<int>& idx) {
        RationalMatrix M;
        std::vector<Rational> rhs;
        for (int i : idx) {
            M.emplace_back(P.normals_[i].begin(), P.normals_[i].end());
            rhs.push_back(-P.offsets_[i]);
        }
        std::vector<Rational> y;
        if (!solve_exact(M, rhs, y)) return;
        for (int i = 0; i < m; ++i)
            if (dot(P.normals_[i], y) + P.offsets_[i] < 0) return;
        if (!seen.insert(y).second) return;
        Vertex v;
        v.point = y;
        for (int i = 0; i < m; ++i)
            if (dot(P.normals_[i], y) + P.offsets_[i] == 0) v.facets.push_back(i);
        P.vertices_.push_back(std::move(v));
    });
    if (P.vertices_.empty()) throw Error(ErrorKind::EmptyInterior, "inequalities are infeasible");

    std::vector<int> all(P.vertices_.size());
    std::iota(all.begin(), all.end(), 0);
    const auto c = centroid_of(P, all);
    for (int i = 0; i < m; ++i)
        if (dot(P.normals_[i], c) + P.offsets_[i] == 0)
            throw Error(ErrorKind::EmptyInterior, "polytope lies in facet hyperplane " + std::to_string(i));

    std::vector<bool> used(m, false);
    for (const auto& v : P.vertices_) {
        if (static_cast<int>(v.facets.size()) != n)
            throw Error(ErrorKind::NotDelzant, "vertex " + point_string(v.point) + " lies on " +
                                                   std::to_string(v.facets.size()) + " facets");
        RationalMatrix M;
        for (int i : v.facets) M.emplace_back(P.normals_[i].begin(), P.normals_[i].end());
        const Rational det = determinant_exact(M);
        if (det != 1 && det != -1)
            throw Error(ErrorKind::NotDelzant, "normals at vertex " + point_string(v.point) +
                                                   " have determinant " + rational_to_string(det));
        for (int i : v.facets) used[i] = true;
    }
    for (int i = 0; i < m; ++i)
        if (!used[i]) throw Error(ErrorKind::NotDelzant, "facet " + std::to_string(i) + " is redundant");

    P.normal_matrix_.resize(m, n);
    P.offset_vector_.resize(m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) P.normal_matrix_(i, j) = static_cast<double>(P.normals_[i][j]);
        P.offset_vector_(i) = to_double(P.offsets_[i]);
    }
    for (const auto& v : P.vertices_) {
        Eigen::MatrixXd A(n, n);
        for (int r = 0; r < n; ++r) A.row(r) = P.normal_matrix_.row(v.facets[r]);
        Eigen::MatrixXd inv = A.inverse();
        P.chart_inverses_.push_back(inv.array().round().matrix());
        P.charts_.push_back(std::move(A));
    }
    return P;
}

Eigen::VectorXd DelzantPolytope::vertex_point(int vertex) const {
    Eigen::VectorXd p(dim_);
    for (int i = 0; i < dim_; ++i) p(i) = to_double(vertices_[vertex].point[i]);
    return p;
}

Eigen::VectorXd DelzantPolytope::vertex_centroid() const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(dim_);
    for (int v = 0; v < static_cast<int>(vertices_.size()); ++v) c += vertex_point(v);
    return c / static_cast<double>(vertices_.size());
}

double DelzantPolytope::diameter() const {
    double d = 0.0;
    for (std::size_t a = 0; a < vertices_.size(); ++a)
        for (std::size_t b = a + 1; b < vertices_.size(); ++b)
            d = std::max(d, (vertex_point(static_cast<int>(a)) - vertex_point(static_cast<int>(b))).norm());
    return d;
}

Eigen::VectorXd DelzantPolytope::lower_corner() const {
    Eigen::VectorXd lo = vertex_point(0);
    for (int v = 1; v < static_cast<int>(vertices_.size()); ++v) lo = lo.cwiseMin(vertex_point(v));
    return lo;
}

Eigen::VectorXd DelzantPolytope::upper_corner() const {
    Eigen::VectorXd hi = vertex_point(0);
    for (int v = 1; v < static_cast<int>(vertices_.size()); ++v) hi = hi.cwiseMax(vertex_point(v));
    return hi;
}

std::string DelzantPolytope::facet_equation(int facet) const {
    std::string lhs;
    for (int j = 0; j < dim_; ++j) {
        const long long c = normals_[facet][j];
        if (c == 0) continue;
        if (c < 0)
            lhs += "-";
        else if (!lhs.empty())
            lhs += "+";
        if (std::llabs(c) != 1) lhs += std::to_string(std::llabs(c)) + "*";
        lhs += "y" + std::to_string(j + 1);
    }
    return lhs + "=" + rational_to_string(-offsets_[facet]);
}

std::vector<Face> enumerate_faces(const DelzantPolytope& P) {
    const auto faces = face_map(P);
    std::vector<Face> out;
    for (const auto& [ids, verts] : faces) out.push_back(make_face(P, ids, verts));
    std::stable_sort(out.begin(), out.end(), [](const Face& a, const Face& b) {
        if (a.dim != b.dim) return a.dim < b.dim;
        return a.facet_ids < b.facet_ids;
    });
    return out;
}

Face face_from_facets(const DelzantPolytope& P, std::vector<int> facet_ids) {
    std::sort(facet_ids.begin(), facet_ids.end());
    const auto faces = face_map(P);
    auto it = faces.find(facet_ids);
    if (it == faces.end()) throw Error(ErrorKind::InvalidArgument, "facet set does not define a face");
    return make_face(P, it->first, it->second);
}

std::vector<Rational> face_coordinates(const DelzantPolytope& P, const Face& F,
                                       const std::vector<Rational>& point) {
    const auto& q = P.vertices()[F.anchor];
    std::vector<Rational> diff(P.dim());
    for (int i = 0; i < P.dim(); ++i) diff[i] = point[i] - q.point[i];
    std::vector<Rational> coords;
    for (int j : q.facets) {
        if (std::binary_search(F.facet_ids.begin(), F.facet_ids.end(), j)) continue;
        coords.push_back(dot(P.normals()[j], diff));
    }
    return coords;
}

Rational lattice_volume_exact(const DelzantPolytope& P, const Face& F) {
    if (F.dim == 0) return 1;
    const auto faces = face_map(P);
    std::vector<std::vector<Rational>> chain;
    Rational total = 0;
    accumulate_flags(P, F, faces, F.facet_ids, chain, total);
    return total / factorial(F.dim);
}

double lattice_volume(const DelzantPolytope& P, const Face& F) {
    return to_double(lattice_volume_exact(P, F));
}

double lattice_volume(const DelzantPolytope& P) { return lattice_volume(P, face_from_facets(P, {})); }

DelzantPolytope minkowski_sum_offsets(const DelzantPolytope& P, const DelzantPolytope& Q,
                                      const Rational& t) {
    if (!P.same_normals(Q)) throw Error(ErrorKind::NormalMismatch, "polytopes do not share normals");
    if (t < 0) throw Error(ErrorKind::InvalidArgument, "Minkowski weight must be nonnegative");
    std::vector<Rational> offsets(P.facet_count());
    for (int i = 0; i < P.facet_count(); ++i) offsets[i] = P.offsets()[i] + t * Q.offsets()[i];
    return DelzantPolytope::build(P.normals(), std::move(offsets));
}

std::vector<Rational> face_volume_polynomial(const DelzantPolytope& P, const DelzantPolytope& Q,
                                             const std::vector<int>& facet_ids) {
    if (!P.same_normals(Q)) throw Error(ErrorKind::NormalMismatch, "polytopes do not share normals");
    const int p = P.dim() - static_cast<int>(facet_ids.size());
    RationalMatrix V;
    std::vector<Rational> values;
    for (int k = 0; k <= p; ++k) {
        const auto Pk = minkowski_sum_offsets(P, Q, Rational(k));
        values.push_back(lattice_volume_exact(Pk, face_from_facets(Pk, facet_ids)));
        std::vector<Rational> row;
        Rational power = 1;
        for (int e = 0; e <= p; ++e) {
            row.push_back(power);
            power *= k;
        }
        V.push_back(std::move(row));
    }
    std::vector<Rational> coeffs;
    solve_exact(V, values, coeffs);
    return coeffs;
}

Rational trace_class_integral_exact(const DelzantPolytope& P, const DelzantPolytope& Q) {
    const auto c = face_volume_polynomial(P, Q, {});
    return c.size() > 1 ? c[1] : Rational(0);
}

double trace_class_integral(const DelzantPolytope& P, const DelzantPolytope& Q) {
    return to_double(trace_class_integral_exact(P, Q));
}

Rational compute_nc_exact(const DelzantPolytope& P, const DelzantPolytope& Q) {
    return trace_class_integral_exact(P, Q) / lattice_volume_exact(P, face_from_facets(P, {}));
}

double compute_nc(const DelzantPolytope& P, const DelzantPolytope& Q) {
    return to_double(compute_nc_exact(P, Q));
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Marginal: return "marginal";
        case Verdict::Violated: return "violated";
    }
    return "unknown";
}

bool StabilityReport::any(Verdict v) const {
    return std::any_of(per_face.begin(), per_face.end(),
                       [v](const FaceStability& f) { return f.verdict == v; });
}

StabilityReport check_face_stability(const DelzantPolytope& P, const DelzantPolytope& Q, double tol) {
    StabilityReport report;
    report.nc_exact = compute_nc_exact(P, Q);
    report.nc = to_double(report.nc_exact);
    report.tol = tol;
    for (auto& F : enumerate_faces(P)) {
        if (F.dim < 1 || F.dim > P.dim() - 1) continue;
        const auto poly = face_volume_polynomial(P, Q, F.facet_ids);
        FaceStability entry;
        entry.p = F.dim;
        entry.lhs_exact = poly[1] / poly[0];
        entry.lhs = to_double(entry.lhs_exact);
        if (entry.lhs > report.nc + tol)
            entry.verdict = Verdict::Violated;
        else if (std::abs(entry.lhs - report.nc) <= tol)
            entry.verdict = Verdict::Marginal;
        else
            entry.verdict = Verdict::Pass;
        entry.face = std::move(F);
        report.per_face.push_back(std::move(entry));
    }
    return report;
}

DelzantPolytope parse_polytope(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    int n = -1;
    int line_no = 0;
    std::vector<IntVector> normals;
    std::vector<Rational> offsets;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        for (std::string tok; ls >> tok;) tokens.push_back(tok);
        if (tokens.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        if (n < 0) {
            if (tokens.size() != 2 || tokens[0] != "dim")
                throw Error(ErrorKind::ParseError, where + ": expected header 'dim n'");
            try {
                n = std::stoi(tokens[1]);
            } catch (const std::exception&) {
                throw Error(ErrorKind::ParseError, where + ": bad dimension");
            }
            if (n < 1) throw Error(ErrorKind::ParseError, where + ": dimension must be positive");
            continue;
        }
        if (static_cast<int>(tokens.size()) != n + 1)
            throw Error(ErrorKind::ParseError, where + ": facet " + std::to_string(normals.size()) +
                                                   " needs " + std::to_string(n + 1) + " entries");
        IntVector u(n);
        for (int j = 0; j < n; ++j) {
            std::size_t used = 0;
            try {
                u[j] = std::stoll(tokens[j], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tokens[j].size())
                throw Error(ErrorKind::ParseError, where + ": facet " + std::to_string(normals.size()) +
                                                       " has non-integer normal entry '" + tokens[j] + "'");
        }
        normals.push_back(std::move(u));
        offsets.push_back(parse_rational(tokens[n]));
    }
    if (n < 0) throw Error(ErrorKind::ParseError, "missing 'dim n' header");
    return DelzantPolytope::build(std::move(normals), std::move(offsets));
}

DelzantPolytope load_polytope(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open polytope file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_polytope(buf.str());
}

std::string format_polytope(const DelzantPolytope& P) {
    std::string out = "dim " + std::to_string(P.dim()) + "\n";
    for (int i = 0; i < P.facet_count(); ++i) {
        for (long long x : P.normals()[i]) out += std::to_string(x) + " ";
        out += rational_to_string(P.offsets()[i]) + "\n";
    }
    return out;
}

DelzantPolytope blowup_polytope(int n, const Rational& b) {
    std::vector<IntVector> normals;
    std::vector<Rational> offsets;
    for (int i = 0; i < n; ++i) {
        IntVector e(n, 0);
        e[i] = 1;
        normals.push_back(e);
        offsets.emplace_back(0);
    }
    normals.emplace_back(n, -1);
    offsets.push_back(b);
    normals.emplace_back(n, 1);
    offsets.emplace_back(-1);
    return DelzantPolytope::build(std::move(normals), std::move(offsets));
}

}  // namespace jflow
