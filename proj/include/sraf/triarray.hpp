#pragma once

// Dense triangular algebra and Householder triangularization of pre-arrays.

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "sraf/errors.hpp"

namespace sraf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Triangle { upper, lower };

// Square triangular matrix tagged with its orientation. Entries on the
// zero side of the diagonal are exactly zero.
struct TriangularFactor {
    Matrix matrix;
    Triangle orientation = Triangle::upper;

    Index size() const { return matrix.rows(); }
};

// Q together with the post-array Q*A.
struct Triangularization {
    Matrix q;
    Matrix post;
};

enum class SolveMode {
    left,             // T * X = B
    left_transposed,  // T' * X = B
    right             // X * T = B
};

namespace tol {
inline constexpr double orthogonality = 1e-12;
inline constexpr double symmetry = 1e-12;
inline constexpr double solve = 1e-12;
}  // namespace tol

namespace detail {

inline std::string dims(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw DimensionMismatch(std::string(what) + ": expected a nonempty square matrix, got " +
                                dims(m));
    }
}

inline void require_nonsingular_diagonal(const Matrix& t, const char* what) {
    for (Index i = 0; i < t.rows(); ++i) {
        const double d = std::abs(t(i, i));
        if (!(d >= std::numeric_limits<double>::min())) {
            throw SingularTriangular(std::string(what) + ": diagonal entry " + std::to_string(i) +
                                     " is zero or subnormal");
        }
    }
}

// Reflect rows [first, first+len) of `work` and `q` so that entry `pivot`
// (relative to `first`) of column `col` absorbs the whole column segment.
// Returns false when the segment off the pivot is already zero (identity).
inline bool householder_eliminate(Matrix& work, Matrix& q, Index col, Index first, Index len,
                                  Index pivot) {
    Vector x = work.col(col).segment(first, len);
    const double alpha = x(pivot);
    double sigma = 0.0;
    for (Index i = 0; i < len; ++i) {
        if (i != pivot) sigma += x(i) * x(i);
    }
    if (sigma == 0.0) return false;

    const double beta = -std::copysign(std::sqrt(alpha * alpha + sigma), alpha);
    Vector v = x;
    v(pivot) = alpha - beta;
    const double vtv = v.squaredNorm();

    auto apply = [&](Matrix& target) {
        auto rows = target.middleRows(first, len);
        const Eigen::RowVectorXd w = (2.0 / vtv) * (v.transpose() * rows);
        rows.noalias() -= v * w;
    };
    apply(work);
    apply(q);

    for (Index i = 0; i < len; ++i) work(first + i, col) = 0.0;
    work(first + pivot, col) = beta;
    return true;
}

}  // namespace detail

inline double inf_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    return m.cwiseAbs().rowwise().sum().maxCoeff();
}

// U with U'U = S and positive diagonal. S must be symmetric within
// tol::symmetry (relative to max(1, max|S|)).
inline TriangularFactor cholesky_upper(const Matrix& s) {
    detail::require_square(s, "cholesky_upper");
    if (!s.allFinite()) throw NotPositiveDefinite("cholesky_upper: non-finite entries");
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > tol::symmetry * scale) {
        throw NotPositiveDefinite("cholesky_upper: matrix is not symmetric");
    }
    Eigen::LLT<Matrix, Eigen::Upper> llt(s);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("cholesky_upper: leading minor pivot is not positive");
    }
    Matrix u = llt.matrixU();
    return {std::move(u), Triangle::upper};
}

// Householder QR on the first s columns: R = Q*A has R11 (s x s) upper
// triangular and rows s.. of the first s columns exactly zero.
inline Triangularization triangularize_upper(const Matrix& a, Index s) {
    if (s < 1 || s > a.rows() || s > a.cols()) {
        throw DimensionMismatch("triangularize_upper: block order " + std::to_string(s) +
                                " incompatible with " + detail::dims(a));
    }
    const Index rows = a.rows();
    Triangularization out{Matrix::Identity(rows, rows), a};
    for (Index j = 0; j < s; ++j) {
        detail::householder_eliminate(out.post, out.q, j, j, rows - j, 0);
    }
    for (Index j = 0; j < s; ++j) out.post.col(j).tail(rows - j - 1).setZero();
    return out;
}

// Householder QL on the first s columns, processed right to left: L = Q*A
// has the top k = rows - s rows of the first s columns exactly zero and
// L21 (bottom s x s) lower triangular.
inline Triangularization triangularize_lower(const Matrix& a, Index s) {
    if (s < 1 || s > a.rows() || s > a.cols()) {
        throw DimensionMismatch("triangularize_lower: block order " + std::to_string(s) +
                                " incompatible with " + detail::dims(a));
    }
    const Index rows = a.rows();
    const Index k = rows - s;
    Triangularization out{Matrix::Identity(rows, rows), a};
    for (Index j = s - 1; j >= 0; --j) {
        const Index pivot_row = k + j;
        detail::householder_eliminate(out.post, out.q, j, 0, pivot_row + 1, pivot_row);
    }
    for (Index j = 0; j < s; ++j) out.post.col(j).head(k + j).setZero();
    return out;
}

struct LduSplit {
    Matrix strictly_lower;
    Matrix diagonal;
    Matrix strictly_upper;
};

inline LduSplit split_ldu(const Matrix& m) {
    detail::require_square(m, "split_ldu");
    const Index n = m.rows();
    LduSplit out{Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n)};
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            if (i > j) out.strictly_lower(i, j) = m(i, j);
            else if (i == j) out.diagonal(i, j) = m(i, j);
            else out.strictly_upper(i, j) = m(i, j);
        }
    }
    return out;
}

inline Matrix tri_solve(const TriangularFactor& t, const Matrix& b, SolveMode mode) {
    detail::require_square(t.matrix, "tri_solve");
    const Index n = t.size();
    const bool rows_match = mode == SolveMode::right ? b.cols() == n : b.rows() == n;
    if (!rows_match) {
        throw DimensionMismatch("tri_solve: factor " + detail::dims(t.matrix) + " vs rhs " +
                                detail::dims(b));
    }
    detail::require_nonsingular_diagonal(t.matrix, "tri_solve");

    auto solve = [&](const auto& view) -> Matrix {
        switch (mode) {
            case SolveMode::left: return view.solve(b);
            case SolveMode::left_transposed: return view.transpose().solve(b);
            case SolveMode::right: {
                // X T = B  <=>  T' X' = B'
                Matrix xt = view.transpose().solve(b.transpose());
                return xt.transpose();
            }
        }
        return {};
    };
    if (t.orientation == Triangle::upper) {
        return solve(t.matrix.triangularView<Eigen::Upper>());
    }
    return solve(t.matrix.triangularView<Eigen::Lower>());
}

inline Matrix tri_inverse(const TriangularFactor& t) {
    return tri_solve(t, Matrix::Identity(t.size(), t.size()), SolveMode::left);
}

// d(M^{-1}) = -M^{-1} dM M^{-1}
inline Matrix inverse_derivative(const Matrix& m, const Matrix& dm) {
    detail::require_square(m, "inverse_derivative");
    if (dm.rows() != m.rows() || dm.cols() != m.cols()) {
        throw DimensionMismatch("inverse_derivative: " + detail::dims(m) + " vs " +
                                detail::dims(dm));
    }
    Eigen::FullPivLU<Matrix> lu(m);
    if (!lu.isInvertible()) throw SingularMatrix("inverse_derivative: matrix is singular");
    const Matrix inv = lu.inverse();
    return -inv * dm * inv;
}

// Forward-mode differential of the upper Cholesky factor:
// dU = Phi(U^{-T} dS U^{-1}) U, Phi = strictly upper part + half diagonal.
inline Matrix cholesky_derivative(const TriangularFactor& u, const Matrix& ds) {
    detail::require_square(u.matrix, "cholesky_derivative");
    if (u.orientation != Triangle::upper) {
        throw DimensionMismatch("cholesky_derivative: expects an upper factor");
    }
    if (ds.rows() != u.size() || ds.cols() != u.size()) {
        throw DimensionMismatch("cholesky_derivative: " + detail::dims(u.matrix) + " vs " +
                                detail::dims(ds));
    }
    const Matrix left = tri_solve(u, ds, SolveMode::left_transposed);  // U^{-T} dS
    Matrix w = tri_solve(u, left, SolveMode::right);                   // ... U^{-1}
    Matrix phi = w.triangularView<Eigen::StrictlyUpper>();
    phi.diagonal() = 0.5 * w.diagonal();
    Matrix du = phi * u.matrix;
    return du.triangularView<Eigen::Upper>();
}

// Diagonal of the s x s triangular block of a post-array, taken at
// (row_offset + i, i).
inline Vector triangular_diagonal(const Matrix& post, Index s, Index row_offset) {
    Vector d(s);
    for (Index i = 0; i < s; ++i) d(i) = post(row_offset + i, i);
    return d;
}

// Row signs (+1/-1) that make the triangular diagonal of `post` carry the
// signs given in `target` (zeros in target keep the row as is).
inline Vector row_signs_matching(const Matrix& post, Index s, Index row_offset,
                                 const Vector& target) {
    Vector signs = Vector::Ones(post.rows());
    const Vector d = triangular_diagonal(post, s, row_offset);
    for (Index i = 0; i < s; ++i) {
        if (target(i) != 0.0 && d(i) != 0.0 && std::signbit(target(i)) != std::signbit(d(i))) {
            signs(row_offset + i) = -1.0;
        }
    }
    return signs;
}

// Rescale rows by a +-1 diagonal; applied to a post-array and, separately,
// to each of its derivatives since (D R)' = D R' for constant D.
inline Matrix normalize_signs(const Matrix& m, const Vector& row_signs) {
    if (row_signs.size() != m.rows()) {
        throw DimensionMismatch("normalize_signs: sign vector length mismatch");
    }
    return row_signs.asDiagonal() * m;
}

}  // namespace sraf
