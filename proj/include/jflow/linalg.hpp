#ifndef JFLOW_LINALG_HPP
#define JFLOW_LINALG_HPP

#include <Eigen/Dense>

#include <cmath>

namespace jflow {

/// Upper bound on the dimension handled by the numerical modules. The
/// fixed capacity keeps every small vector and matrix on the stack.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec make_vec(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

/// A x = b for the small systems of the Newton loops; closed form up to 2x2.
inline Vec small_solve(const Mat& A, const Vec& b) {
    if (A.rows() == 1) return Vec::Constant(1, b(0) / A(0, 0));
    if (A.rows() == 2) {
        const double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
        const double scale = A.cwiseAbs().maxCoeff();
        if (std::abs(det) > 1e-8 * scale * scale) {
            Vec x(2);
            x(0) = (A(1, 1) * b(0) - A(0, 1) * b(1)) / det;
            x(1) = (A(0, 0) * b(1) - A(1, 0) * b(0)) / det;
            return x;
        }
    }
    return A.partialPivLu().solve(b);
}

}  // namespace jflow

#endif
