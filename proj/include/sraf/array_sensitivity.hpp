#pragma once

// Derivatives of triangularized post-arrays.
//
// Given a pre-array A(theta) and its partials dA_i, one orthogonal
// transformation Q (computed from A alone) triangularizes A. The derivative
// of the triangular block and of the trailing columns follow from Q*dA_i
// without ever differentiating Q: Q'Q^T is skew-symmetric, and its pieces
// are recovered from the triangular structure of the post-array.
//
// Partition of A, (s+k) x (s+l):
//   upper case   [A11 A12] s      Q A = [R11 R12] s
//                [A21 A22] k            [ 0  R22] k
//   lower case   [A11 A12] k      Q A = [ 0  L12] k
//                [A21 A22] s            [L21 L22] s
//
// with Q*dA_i partitioned the same way into [X N; Y V].

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "sraf/differentiated.hpp"
#include "sraf/triarray.hpp"

namespace sraf {

struct ArrayPartition {
    Index s = 1;  // order of the triangular block
    Index k = 0;  // rows outside the triangular block
    Index l = 0;  // trailing columns

    void validate(const Matrix& a) const {
        if (s < 1 || k < 0 || l < 0 || a.rows() != s + k || a.cols() != s + l) {
            throw DimensionMismatch("ArrayPartition (s=" + std::to_string(s) +
                                    ", k=" + std::to_string(k) + ", l=" + std::to_string(l) +
                                    ") does not fit pre-array " + detail::dims(a));
        }
    }
};

// Blocks of Q * dA_i for one parameter.
struct SensitivityBlocks {
    Matrix x, n, y, v;
};

struct UpperPostDerivative {
    ArrayPartition part;
    Matrix q;
    Matrix post;                     // [R11 R12; 0 R22]
    std::vector<Matrix> d_r11;       // s x s, upper triangular
    std::vector<Matrix> d_r12;       // s x l
    std::vector<SensitivityBlocks> blocks;

    Matrix r11() const { return post.topLeftCorner(part.s, part.s); }
    Matrix r12() const { return post.topRightCorner(part.s, part.l); }
    Matrix r22() const { return post.bottomRightCorner(part.k, part.l); }

    // Full (s+k) x (s+l) derivative of the post-array. The R22 block has no
    // closed-form derivative and is zero-padded.
    Matrix full_derivative(Index i) const {
        Matrix d = Matrix::Zero(post.rows(), post.cols());
        d.topLeftCorner(part.s, part.s) = d_r11[static_cast<std::size_t>(i)];
        d.topRightCorner(part.s, part.l) = d_r12[static_cast<std::size_t>(i)];
        return d;
    }
};

struct LowerPostDerivative {
    ArrayPartition part;
    Matrix q;
    Matrix post;                     // [0 L12; L21 L22]
    std::vector<Matrix> d_l21;       // s x s, lower triangular
    std::vector<Matrix> d_l22;       // s x l
    std::vector<SensitivityBlocks> blocks;

    Matrix l12() const { return post.topRightCorner(part.k, part.l); }
    Matrix l21() const { return post.bottomLeftCorner(part.s, part.s); }
    Matrix l22() const { return post.bottomRightCorner(part.s, part.l); }

    // Full derivative; the L12 block (top k rows) is zero-padded.
    Matrix full_derivative(Index i) const {
        Matrix d = Matrix::Zero(post.rows(), post.cols());
        d.bottomLeftCorner(part.s, part.s) = d_l21[static_cast<std::size_t>(i)];
        d.bottomRightCorner(part.s, part.l) = d_l22[static_cast<std::size_t>(i)];
        return d;
    }
};

namespace detail {

// Diagonal entries below 1e3 * eps * ||block|| mark the triangular block as
// numerically singular.
inline void require_nonsingular_post(const Matrix& tri, const char* what) {
    const double threshold = 1e3 * std::numeric_limits<double>::epsilon() * inf_norm(tri);
    for (Index i = 0; i < tri.rows(); ++i) {
        const double d = std::abs(tri(i, i));
        if (!(d > threshold) || !std::isfinite(d)) {
            throw SingularPostArray(std::string(what) + ": triangular block diagonal entry " +
                                    std::to_string(i) + " is numerically zero");
        }
    }
}

}  // namespace detail

inline UpperPostDerivative post_derivative_upper(const DifferentiatedMatrix& a,
                                                 const ArrayPartition& part) {
    part.validate(a.value());
    const Index s = part.s, k = part.k, l = part.l;

    auto tri = triangularize_upper(a.value(), s);
    UpperPostDerivative out{part, std::move(tri.q), std::move(tri.post), {}, {}, {}};

    const Matrix r11 = out.r11();
    detail::require_nonsingular_post(r11, "post_derivative_upper");
    const TriangularFactor r11f{r11, Triangle::upper};
    const Matrix r12 = out.r12();
    const Matrix r22 = out.r22();

    const auto p = static_cast<std::size_t>(a.params());
    out.d_r11.reserve(p);
    out.d_r12.reserve(p);
    out.blocks.reserve(p);
    for (std::size_t i = 0; i < p; ++i) {
        const Matrix qda = out.q * a.derivs()[i];
        SensitivityBlocks b{qda.topLeftCorner(s, s), qda.topRightCorner(s, l),
                            qda.bottomLeftCorner(k, s), qda.bottomRightCorner(k, l)};

        const LduSplit split = split_ldu(tri_solve(r11f, b.x, SolveMode::right));
        const Matrix lt = split.strictly_lower.transpose();

        Matrix d11 = (lt + split.diagonal + split.strictly_upper) * r11;
        d11 = d11.triangularView<Eigen::Upper>();

        Matrix d12 = (lt - split.strictly_lower) * r12 + b.n;
        if (k > 0) {
            d12 += tri_solve(r11f, b.y.transpose() * r22, SolveMode::left_transposed);
        }
        out.d_r11.push_back(std::move(d11));
        out.d_r12.push_back(std::move(d12));
        out.blocks.push_back(std::move(b));
    }
    return out;
}

inline LowerPostDerivative post_derivative_lower(const DifferentiatedMatrix& a,
                                                 const ArrayPartition& part) {
    part.validate(a.value());
    const Index s = part.s, k = part.k, l = part.l;

    auto tri = triangularize_lower(a.value(), s);
    LowerPostDerivative out{part, std::move(tri.q), std::move(tri.post), {}, {}, {}};

    const Matrix l21 = out.l21();
    detail::require_nonsingular_post(l21, "post_derivative_lower");
    const TriangularFactor l21f{l21, Triangle::lower};
    const Matrix l12 = out.l12();
    const Matrix l22 = out.l22();

    const auto p = static_cast<std::size_t>(a.params());
    out.d_l21.reserve(p);
    out.d_l22.reserve(p);
    out.blocks.reserve(p);
    for (std::size_t i = 0; i < p; ++i) {
        const Matrix qda = out.q * a.derivs()[i];
        SensitivityBlocks b{qda.topLeftCorner(k, s), qda.topRightCorner(k, l),
                            qda.bottomLeftCorner(s, s), qda.bottomRightCorner(s, l)};

        const LduSplit split = split_ldu(tri_solve(l21f, b.y, SolveMode::right));
        const Matrix ut = split.strictly_upper.transpose();

        Matrix d21 = (ut + split.diagonal + split.strictly_lower) * l21;
        d21 = d21.triangularView<Eigen::Lower>();

        Matrix d22 = (ut - split.strictly_upper) * l22 + b.v;
        if (k > 0) {
            d22 += tri_solve(l21f, b.x.transpose() * l12, SolveMode::left_transposed);
        }
        out.d_l21.push_back(std::move(d21));
        out.d_l22.push_back(std::move(d22));
        out.blocks.push_back(std::move(b));
    }
    return out;
}

// max_i || (A'A)'_i - (P'P)'_i ||_inf for a post-array P with full
// derivatives dP_i. Zero means the derivative is consistent with A'A = P'P.
inline double self_check_norm(const DifferentiatedMatrix& a, const DifferentiatedMatrix& post) {
    a.require_same_params(post, "self_check_norm");
    if (a.cols() != post.cols()) {
        throw DimensionMismatch("self_check_norm: column counts differ");
    }
    double worst = 0.0;
    for (Index i = 0; i < a.params(); ++i) {
        const Matrix lhs = a.deriv(i).transpose() * a.value() + a.value().transpose() * a.deriv(i);
        const Matrix rhs =
            post.deriv(i).transpose() * post.value() + post.value().transpose() * post.deriv(i);
        worst = std::max(worst, inf_norm(lhs - rhs));
    }
    return worst;
}

template <typename PostDerivative>
DifferentiatedMatrix assembled_post(const PostDerivative& pd) {
    std::vector<Matrix> d;
    const std::size_t p =
        [&] {
            if constexpr (requires { pd.d_r11; }) return pd.d_r11.size();
            else return pd.d_l21.size();
        }();
    d.reserve(p);
    for (std::size_t i = 0; i < p; ++i) d.push_back(pd.full_derivative(static_cast<Index>(i)));
    return DifferentiatedMatrix(pd.post, std::move(d));
}

}  // namespace sraf
