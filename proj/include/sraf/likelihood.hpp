#pragma once

// Negative log-likelihood mu(theta) = (Nm/2) ln 2pi + 1/2 sum_k [ln det Re_k + e_k' Re_k^{-1} e_k]
// and its gradient, accumulated step by step from filter outputs.
//
// Square-root engines use ln det Re = 2 sum ln|diag(Re^{1/2})| (factor signs
// drop out) and e' Re^{-1} e = ebar' ebar. The gradient term per step is
// tr[Re^{-1/2} dRe^{1/2}] + ebar' d(ebar). For the information engine, with
// V = Re^{-T/2} and U = V^{-T}: tr[U^{-1} dU] = -tr[V^{-1} dV].

#include <cmath>
#include <numbers>
#include <vector>

#include "sraf/filters.hpp"

namespace sraf {

struct LikelihoodStepTerm {
    std::size_t k = 0;
    double increment = 0.0;
    Vector gradient_increment;
};

struct NegLogLikelihood {
    double value = 0.0;
    Vector gradient;
    std::size_t samples = 0;
    bool keep_trace = false;
    std::vector<LikelihoodStepTerm> trace;

    explicit NegLogLikelihood(Index params = 0, bool keep_trace_ = false)
        : gradient(Vector::Zero(params)), keep_trace(keep_trace_) {}
};

namespace detail {

inline const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);

inline void record(NegLogLikelihood& acc, double increment, const Vector& grad) {
    if (grad.size() != acc.gradient.size()) {
        throw DimensionMismatch("likelihood: step carries " + std::to_string(grad.size()) +
                                " derivatives, accumulator expects " +
                                std::to_string(acc.gradient.size()));
    }
    acc.value += increment;
    acc.gradient += grad;
    ++acc.samples;
    if (acc.keep_trace) acc.trace.push_back({acc.samples, increment, grad});
}

}  // namespace detail

inline void accumulate_conventional(const StepOutput& out, NegLogLikelihood& acc) {
    const Index m = out.innovation.size();
    const Matrix& re = out.innovation_factor;
    Eigen::LLT<Matrix> llt(re);
    if (!re.allFinite() || llt.info() != Eigen::Success) {
        throw InnovationCovSingular("likelihood: innovation covariance is not positive definite");
    }
    const Matrix re_inv = re.inverse();
    const double log_det = std::log(re.determinant());
    const Vector alpha = re_inv * out.innovation;
    const double quad = out.innovation.dot(alpha);
    const double increment = static_cast<double>(m) * detail::half_log_two_pi + 0.5 * (log_det + quad);

    Vector grad(out.params());
    for (Index i = 0; i < out.params(); ++i) {
        const auto ii = static_cast<std::size_t>(i);
        const Matrix& dre = out.d_innovation_factor[ii];
        const double trace = (re_inv * dre).trace();
        grad(i) = 0.5 * trace - 0.5 * alpha.dot(dre * alpha) + alpha.dot(out.d_innovation[ii]);
    }
    detail::record(acc, increment, grad);
}

inline void accumulate_sqrt(const StepOutput& out, NegLogLikelihood& acc) {
    if (out.engine == Engine::conventional) {
        throw DomainError("accumulate_sqrt: conventional outputs carry no square-root factor");
    }
    const bool info = out.engine == Engine::esrif;
    const Index m = out.innovation.size();
    const TriangularFactor factor{out.innovation_factor, info ? Triangle::lower : Triangle::upper};
    detail::require_nonsingular_diagonal(factor.matrix, "accumulate_sqrt");

    double log_abs_det = 0.0;  // ln|det Re^{1/2}|
    for (Index i = 0; i < m; ++i) log_abs_det += std::log(std::abs(factor.matrix(i, i)));
    if (info) log_abs_det = -log_abs_det;

    const double increment = static_cast<double>(m) * detail::half_log_two_pi + log_abs_det +
                             0.5 * out.innovation.squaredNorm();

    Vector grad(out.params());
    for (Index i = 0; i < out.params(); ++i) {
        const auto ii = static_cast<std::size_t>(i);
        const double trace =
            tri_solve(factor, out.d_innovation_factor[ii], SolveMode::left).trace();
        grad(i) = (info ? -trace : trace) + out.innovation.dot(out.d_innovation[ii]);
    }
    detail::record(acc, increment, grad);
}

inline void accumulate(const StepOutput& out, NegLogLikelihood& acc) {
    if (out.engine == Engine::conventional) accumulate_conventional(out, acc);
    else accumulate_sqrt(out, acc);
}

}  // namespace sraf
