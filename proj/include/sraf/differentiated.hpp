#pragma once

// A matrix carried together with its partial derivatives with respect to a
// parameter vector, plus the product-rule arithmetic used to build filter
// pre-arrays and their derivatives.

#include <string>
#include <utility>
#include <vector>

#include "sraf/triarray.hpp"

namespace sraf {

class DifferentiatedMatrix {
public:
    DifferentiatedMatrix() = default;

    explicit DifferentiatedMatrix(Matrix value, std::vector<Matrix> derivs = {})
        : value_(std::move(value)), derivs_(std::move(derivs)) {
        for (const auto& d : derivs_) {
            if (d.rows() != value_.rows() || d.cols() != value_.cols()) {
                throw DimensionMismatch("DifferentiatedMatrix: derivative " + detail::dims(d) +
                                        " does not match value " + detail::dims(value_));
            }
        }
    }

    // Constant with p zero derivatives.
    static DifferentiatedMatrix constant(Matrix value, Index params) {
        std::vector<Matrix> d(static_cast<std::size_t>(params),
                              Matrix::Zero(value.rows(), value.cols()));
        return DifferentiatedMatrix(std::move(value), std::move(d));
    }

    static DifferentiatedMatrix zero(Index rows, Index cols, Index params) {
        return constant(Matrix::Zero(rows, cols), params);
    }

    const Matrix& value() const { return value_; }
    Matrix& value() { return value_; }
    const std::vector<Matrix>& derivs() const { return derivs_; }
    std::vector<Matrix>& derivs() { return derivs_; }
    const Matrix& deriv(Index i) const { return derivs_[static_cast<std::size_t>(i)]; }
    Matrix& deriv(Index i) { return derivs_[static_cast<std::size_t>(i)]; }

    Index params() const { return static_cast<Index>(derivs_.size()); }
    Index rows() const { return value_.rows(); }
    Index cols() const { return value_.cols(); }

    // Copy keeping only the first p derivatives.
    DifferentiatedMatrix truncated(Index p) const {
        return DifferentiatedMatrix(value_, {derivs_.begin(), derivs_.begin() + p});
    }

    DifferentiatedMatrix block(Index r, Index c, Index rows, Index cols) const {
        DifferentiatedMatrix out(value_.block(r, c, rows, cols));
        out.derivs_.reserve(derivs_.size());
        for (const auto& d : derivs_) out.derivs_.emplace_back(d.block(r, c, rows, cols));
        return out;
    }

    void set_block(Index r, Index c, const DifferentiatedMatrix& src) {
        require_same_params(src, "set_block");
        value_.block(r, c, src.rows(), src.cols()) = src.value_;
        for (std::size_t i = 0; i < derivs_.size(); ++i) {
            derivs_[i].block(r, c, src.rows(), src.cols()) = src.derivs_[i];
        }
    }

    DifferentiatedMatrix transpose() const {
        DifferentiatedMatrix out(value_.transpose());
        out.derivs_.reserve(derivs_.size());
        for (const auto& d : derivs_) out.derivs_.emplace_back(d.transpose());
        return out;
    }

    void require_same_params(const DifferentiatedMatrix& other, const char* what) const {
        if (other.params() != params()) {
            throw DimensionMismatch(std::string(what) + ": parameter counts differ (" +
                                    std::to_string(params()) + " vs " +
                                    std::to_string(other.params()) + ")");
        }
    }

private:
    Matrix value_;
    std::vector<Matrix> derivs_;
};

inline DifferentiatedMatrix operator*(const DifferentiatedMatrix& a,
                                      const DifferentiatedMatrix& b) {
    a.require_same_params(b, "operator*");
    if (a.cols() != b.rows()) {
        throw DimensionMismatch("operator*: " + detail::dims(a.value()) + " * " +
                                detail::dims(b.value()));
    }
    std::vector<Matrix> d;
    d.reserve(static_cast<std::size_t>(a.params()));
    for (Index i = 0; i < a.params(); ++i) {
        d.emplace_back(a.deriv(i) * b.value() + a.value() * b.deriv(i));
    }
    return DifferentiatedMatrix(a.value() * b.value(), std::move(d));
}

// Product with a parameter-independent right factor.
inline DifferentiatedMatrix operator*(const DifferentiatedMatrix& a, const Matrix& b) {
    std::vector<Matrix> d;
    d.reserve(a.derivs().size());
    for (const auto& da : a.derivs()) d.emplace_back(da * b);
    return DifferentiatedMatrix(a.value() * b, std::move(d));
}

inline DifferentiatedMatrix operator+(const DifferentiatedMatrix& a,
                                      const DifferentiatedMatrix& b) {
    a.require_same_params(b, "operator+");
    std::vector<Matrix> d;
    d.reserve(a.derivs().size());
    for (Index i = 0; i < a.params(); ++i) d.emplace_back(a.deriv(i) + b.deriv(i));
    return DifferentiatedMatrix(a.value() + b.value(), std::move(d));
}

inline DifferentiatedMatrix operator-(const DifferentiatedMatrix& a) {
    std::vector<Matrix> d;
    d.reserve(a.derivs().size());
    for (const auto& da : a.derivs()) d.emplace_back(-da);
    return DifferentiatedMatrix(-a.value(), std::move(d));
}

inline DifferentiatedMatrix operator-(const DifferentiatedMatrix& a,
                                      const DifferentiatedMatrix& b) {
    return a + (-b);
}

// Upper Cholesky factor and its derivatives.
inline DifferentiatedMatrix cholesky_upper(const DifferentiatedMatrix& s) {
    TriangularFactor u = cholesky_upper(s.value());
    std::vector<Matrix> d;
    d.reserve(s.derivs().size());
    for (const auto& ds : s.derivs()) d.emplace_back(cholesky_derivative(u, ds));
    return DifferentiatedMatrix(std::move(u.matrix), std::move(d));
}

// Square-root factor for a PSD covariance: the Cholesky factor when PD, an
// exact zero when the covariance is identically zero with zero derivatives.
inline DifferentiatedMatrix psd_sqrt_upper(const DifferentiatedMatrix& s) {
    const auto is_zero = [](const Matrix& m) { return (m.array() == 0.0).all(); };
    if (is_zero(s.value())) {
        for (const auto& ds : s.derivs()) {
            if (!is_zero(ds)) {
                throw NotPositiveDefinite(
                    "psd_sqrt_upper: zero covariance with nonzero derivative has no "
                    "differentiable square root");
            }
        }
        return DifferentiatedMatrix::zero(s.rows(), s.cols(), s.params());
    }
    return cholesky_upper(s);
}

// T^{-T} for a triangular T, with d(T^{-T}) = -T^{-T} dT' T^{-T}.
inline DifferentiatedMatrix inverse_transpose(const DifferentiatedMatrix& t, Triangle orientation) {
    const TriangularFactor tf{t.value(), orientation};
    Matrix inv_t = tri_inverse(tf).transpose();
    std::vector<Matrix> d;
    d.reserve(t.derivs().size());
    for (const auto& dt : t.derivs()) d.emplace_back(-inv_t * dt.transpose() * inv_t);
    return DifferentiatedMatrix(std::move(inv_t), std::move(d));
}

// General inverse with derivatives; SingularMatrix when not invertible.
inline DifferentiatedMatrix inverse(const DifferentiatedMatrix& m) {
    detail::require_square(m.value(), "inverse");
    Eigen::FullPivLU<Matrix> lu(m.value());
    if (!lu.isInvertible()) throw SingularMatrix("inverse: matrix is singular");
    Matrix inv = lu.inverse();
    std::vector<Matrix> d;
    d.reserve(m.derivs().size());
    for (const auto& dm : m.derivs()) d.emplace_back(-inv * dm * inv);
    return DifferentiatedMatrix(std::move(inv), std::move(d));
}

}  // namespace sraf
