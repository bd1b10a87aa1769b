#pragma once

// Three interchangeable Kalman filter engines over the same model:
//
//   conventional  Riccati recursion on P; derivatives by direct
//                 differentiation (filter sensitivity equations).
//   esrcf         array square-root covariance filter; propagates P^{1/2}
//                 and P^{-T/2} x through one QR-type triangularization.
//   esrif         array square-root information filter; propagates P^{-T/2}
//                 and P^{-T/2} x through one QL-type triangularization.
//
// Square-root engines obtain derivatives from the post-array derivative
// formulas in array_sensitivity.hpp. Each engine runs in plain mode (state
// carries no derivatives) or sensitivity mode (state carries p of them); the
// mode is fixed at init.

#include <string>
#include <utility>
#include <vector>

#include "sraf/array_sensitivity.hpp"
#include "sraf/model.hpp"

namespace sraf {

enum class Engine { conventional, esrcf, esrif };

inline std::string to_string(Engine e) {
    switch (e) {
        case Engine::conventional: return "conventional";
        case Engine::esrcf: return "esrcf";
        case Engine::esrif: return "esrif";
    }
    return "unknown";
}

inline Engine engine_from_string(const std::string& name) {
    if (name == "conventional" || name == "kf") return Engine::conventional;
    if (name == "esrcf") return Engine::esrcf;
    if (name == "esrif") return Engine::esrif;
    throw DomainError("unknown engine '" + name + "' (expected conventional, esrcf or esrif)");
}

enum class Sensitivity { off, on };

struct StepOutput {
    Engine engine = Engine::conventional;
    // e_k for the conventional engine, the normalized innovation otherwise.
    Vector innovation;
    // R_e (conventional), R_e^{1/2} upper (esrcf), R_e^{-T/2} lower (esrif).
    Matrix innovation_factor;
    Vector predicted_state;  // x_{k+1|k}

    std::vector<Vector> d_innovation;
    std::vector<Matrix> d_innovation_factor;
    std::vector<Vector> d_predicted_state;

    // esrcf only: normalized gain transpose K_bar' (m x n) and residual gamma.
    Matrix normalized_gain_t;
    // esrcf: gamma (q x 1). esrif: discarded bottom row block of the post-array.
    Matrix residual;

    Index params() const { return static_cast<Index>(d_innovation.size()); }
};

template <typename State>
struct StepResult {
    State state;
    StepOutput output;
};

struct ConvFilterState {
    Vector x;  // x_{k|k-1}
    Matrix P;  // P_{k|k-1}
    std::vector<Vector> dx;
    std::vector<Matrix> dP;

    Index params() const { return static_cast<Index>(dx.size()); }
};

struct SqrtCovState {
    DifferentiatedMatrix sqrt_p;      // P^{1/2}, upper triangular
    DifferentiatedMatrix norm_state;  // P^{-T/2} x, n x 1

    Index params() const { return sqrt_p.params(); }
    // x = P^{T/2} (P^{-T/2} x)
    Vector state() const { return sqrt_p.value().transpose() * norm_state.value().col(0); }
};

struct SqrtInfoState {
    DifferentiatedMatrix inv_sqrt_p;  // P^{-T/2}, lower triangular
    DifferentiatedMatrix norm_state;  // P^{-T/2} x, n x 1

    Index params() const { return inv_sqrt_p.params(); }
    Vector state() const {
        return tri_solve({inv_sqrt_p.value(), Triangle::lower}, norm_state.value(),
                         SolveMode::left)
            .col(0);
    }
};

namespace detail {

inline Index mode_params(const ModelEval& model, Sensitivity mode) {
    return mode == Sensitivity::on ? model.params() : 0;
}

inline void require_params(Index state_p, const ModelEval& model, const char* what) {
    if (state_p > model.params()) {
        throw DimensionMismatch(std::string(what) + ": state carries more derivatives than the model");
    }
}

inline void require_measurement(const Vector& z, const Vector& u, const ModelEval& model) {
    if (z.size() != model.H.rows()) {
        throw DimensionMismatch("filter step: measurement has length " + std::to_string(z.size()) +
                                ", expected " + std::to_string(model.H.rows()));
    }
    if (u.size() != model.B.cols()) {
        throw DimensionMismatch("filter step: input has length " + std::to_string(u.size()) +
                                ", expected " + std::to_string(model.B.cols()));
    }
}

inline DifferentiatedMatrix column(const Vector& v, Index params) {
    return DifferentiatedMatrix::constant(Matrix(v), params);
}

inline Vector first_col(const Matrix& m) { return m.col(0); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Conventional Kalman filter

inline ConvFilterState kf_init(const ModelEval& model, Sensitivity mode = Sensitivity::off) {
    const Index p = detail::mode_params(model, mode);
    ConvFilterState s{model.x0.value().col(0), model.Pi0.value(), {}, {}};
    for (Index i = 0; i < p; ++i) {
        s.dx.push_back(model.x0.deriv(i).col(0));
        s.dP.push_back(model.Pi0.deriv(i));
    }
    return s;
}

inline StepResult<ConvFilterState> kf_step(const ConvFilterState& state, const ModelEval& model,
                                           const Vector& z, const Vector& u) {
    detail::require_params(state.params(), model, "kf_step");
    detail::require_measurement(z, u, model);
    const Index p = state.params();
    const Matrix& F = model.F.value();
    const Matrix& B = model.B.value();
    const Matrix& G = model.G.value();
    const Matrix& H = model.H.value();
    const Matrix& Q = model.Q.value();
    const Matrix& R = model.R.value();
    const Matrix& P = state.P;

    const Vector e = z - H * state.x;
    const Matrix PHt = P * H.transpose();
    const Matrix re = H * PHt + R;
    Eigen::LLT<Matrix> llt(re);
    if (!re.allFinite() || llt.info() != Eigen::Success) {
        throw InnovationCovSingular("innovation covariance is not positive definite");
    }
    const Matrix re_inv = re.inverse();
    const Matrix FPHt = F * PHt;
    const Matrix K = FPHt * re_inv;

    StepResult<ConvFilterState> r;
    r.state.x = F * state.x + K * e;
    if (B.cols() > 0) r.state.x += B * u;
    Matrix pn = F * P * F.transpose() + G * Q * G.transpose() - K * re * K.transpose();
    r.state.P = 0.5 * (pn + pn.transpose());

    StepOutput& out = r.output;
    out.engine = Engine::conventional;
    out.innovation = e;
    out.innovation_factor = re;
    out.predicted_state = r.state.x;

    for (Index i = 0; i < p; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        const Matrix& dF = model.F.deriv(i);
        const Matrix& dB = model.B.deriv(i);
        const Matrix& dG = model.G.deriv(i);
        const Matrix& dH = model.H.deriv(i);
        const Matrix& dQ = model.Q.deriv(i);
        const Matrix& dR = model.R.deriv(i);
        const Vector& dx = state.dx[ii];
        const Matrix& dP = state.dP[ii];

        const Vector de = -dH * state.x - H * dx;
        const Matrix dPHt = dP * H.transpose() + P * dH.transpose();
        Matrix dre = dH * PHt + H * dPHt + dR;
        dre = 0.5 * (dre + dre.transpose()).eval();
        const Matrix dFPHt = dF * PHt + F * dPHt;
        const Matrix dK = (dFPHt - K * dre) * re_inv;

        Vector dxn = dF * state.x + F * dx + dK * e + K * de;
        if (B.cols() > 0) dxn += dB * u;

        Matrix dFPFt = dF * P * F.transpose();
        dFPFt += dFPFt.transpose().eval();
        Matrix dGQGt = dG * Q * G.transpose();
        dGQGt += dGQGt.transpose().eval();
        Matrix dKReKt = dK * re * K.transpose();
        dKReKt += dKReKt.transpose().eval();
        Matrix dpn = dFPFt + F * dP * F.transpose() + dGQGt + G * dQ * G.transpose() - dKReKt -
                     K * dre * K.transpose();
        dpn = 0.5 * (dpn + dpn.transpose()).eval();

        out.d_innovation.push_back(de);
        out.d_innovation_factor.push_back(dre);
        out.d_predicted_state.push_back(dxn);
        r.state.dx.push_back(std::move(dxn));
        r.state.dP.push_back(std::move(dpn));
    }
    return r;
}

inline StepResult<ConvFilterState> kf_sensitivity_step(const ConvFilterState& state,
                                                       const ModelEval& model, const Vector& z,
                                                       const Vector& u) {
    if (state.params() != model.params()) {
        throw DimensionMismatch("kf_sensitivity_step: state was not initialized in sensitivity mode");
    }
    return kf_step(state, model, z, u);
}

// ---------------------------------------------------------------------------
// Extended square-root covariance filter
//
// Pre-array, s = m + n, k = q, l = 1:
//   [ R^{1/2}       0            -R^{-T/2} z ]       [ Re^{1/2}  Kbar'     -ebar        ]
//   [ P^{1/2} H'    P^{1/2} F'   P^{-T/2} x  ]  -->  [ 0         P+^{1/2}  P+^{-T/2} x+ ]
//   [ 0             Q^{1/2} G'   0           ]       [ 0         0         gamma        ]

inline SqrtCovState esrcf_init(const ModelEval& full, Sensitivity mode = Sensitivity::off) {
    const ModelEval model = full.truncated(detail::mode_params(full, mode));
    SqrtCovState s;
    s.sqrt_p = cholesky_upper(model.Pi0);
    // Pi0^{-T/2} x0
    s.norm_state = inverse_transpose(s.sqrt_p, Triangle::upper) * model.x0;
    return s;
}

inline StepResult<SqrtCovState> esrcf_step(const SqrtCovState& state, const ModelEval& full,
                                           const Vector& z, const Vector& u) {
    detail::require_params(state.params(), full, "esrcf_step");
    detail::require_measurement(z, u, full);
    const Index p = state.params();
    const ModelEval model = full.truncated(p);
    const Index n = model.F.rows(), m = model.H.rows(), q = model.G.cols();

    const DifferentiatedMatrix sqrt_r = cholesky_upper(model.R);
    const DifferentiatedMatrix inv_t_sqrt_r = inverse_transpose(sqrt_r, Triangle::upper);
    const DifferentiatedMatrix sqrt_q = psd_sqrt_upper(model.Q);

    DifferentiatedMatrix pre = DifferentiatedMatrix::zero(m + n + q, m + n + 1, p);
    pre.set_block(0, 0, sqrt_r);
    pre.set_block(0, m + n, -(inv_t_sqrt_r * detail::column(z, p)));
    pre.set_block(m, 0, state.sqrt_p * model.H.transpose());
    pre.set_block(m, m, state.sqrt_p * model.F.transpose());
    pre.set_block(m, m + n, state.norm_state);
    pre.set_block(m + n, m, sqrt_q * model.G.transpose());

    const UpperPostDerivative post = post_derivative_upper(pre, {m + n, q, 1});
    const DifferentiatedMatrix r = assembled_post(post);

    StepResult<SqrtCovState> res;
    res.state.sqrt_p = r.block(m, m, n, n);
    res.state.norm_state = r.block(m, m + n, n, 1);

    if (model.B.cols() > 0) {
        // P+^{-T/2} B u by a triangular solve against P+^{T/2}.
        const DifferentiatedMatrix bu = model.B * Matrix(u);
        const TriangularFactor sp{res.state.sqrt_p.value(), Triangle::upper};
        DifferentiatedMatrix corr(tri_solve(sp, bu.value(), SolveMode::left_transposed));
        for (Index i = 0; i < p; ++i) {
            const Matrix rhs = bu.deriv(i) - res.state.sqrt_p.deriv(i).transpose() * corr.value();
            corr.derivs().push_back(tri_solve(sp, rhs, SolveMode::left_transposed));
        }
        res.state.norm_state = res.state.norm_state + corr;
    }

    StepOutput& out = res.output;
    out.engine = Engine::esrcf;
    out.innovation = -detail::first_col(post.post.block(0, m + n, m, 1));
    out.innovation_factor = post.post.topLeftCorner(m, m);
    out.normalized_gain_t = post.post.block(0, m, m, n);
    out.residual = post.r22();
    const DifferentiatedMatrix x_next = res.state.sqrt_p.transpose() * res.state.norm_state;
    out.predicted_state = x_next.value().col(0);
    for (Index i = 0; i < p; ++i) {
        out.d_innovation.push_back(-detail::first_col(r.deriv(i).block(0, m + n, m, 1)));
        out.d_innovation_factor.push_back(r.deriv(i).topLeftCorner(m, m));
        out.d_predicted_state.push_back(x_next.deriv(i).col(0));
    }
    return res;
}

inline StepResult<SqrtCovState> esrcf_sensitivity_step(const SqrtCovState& state,
                                                       const ModelEval& model, const Vector& z,
                                                       const Vector& u) {
    if (state.params() != model.params()) {
        throw DimensionMismatch(
            "esrcf_sensitivity_step: state was not initialized in sensitivity mode");
    }
    return esrcf_step(state, model, z, u);
}

// ---------------------------------------------------------------------------
// Extended square-root information filter
//
// Pre-array, s = m + n + q, k = 0, l = 1 (Fi = F^{-1}, W = R^{-T/2},
// S = P^{-T/2}, GQ = G Q^{T/2}):
//   [ W   -W H Fi   W H Fi GQ   -W z ]       [ Re^{-T/2}      0          0   -ebar        ]
//   [ 0    S Fi     -S Fi GQ     S x ]  -->  [ -P+^{-T/2} K   P+^{-T/2}  0   P+^{-T/2} x+ ]
//   [ 0    0         I           0   ]       [ *              *          *   *            ]

inline SqrtInfoState esrif_init(const ModelEval& full, Sensitivity mode = Sensitivity::off) {
    const ModelEval model = full.truncated(detail::mode_params(full, mode));
    SqrtInfoState s;
    s.inv_sqrt_p = inverse_transpose(cholesky_upper(model.Pi0), Triangle::upper);
    s.norm_state = s.inv_sqrt_p * model.x0;
    return s;
}

inline StepResult<SqrtInfoState> esrif_step(const SqrtInfoState& state, const ModelEval& full,
                                            const Vector& z, const Vector& u) {
    detail::require_params(state.params(), full, "esrif_step");
    detail::require_measurement(z, u, full);
    const Index p = state.params();
    const ModelEval model = full.truncated(p);
    const Index n = model.F.rows(), m = model.H.rows(), q = model.G.cols();

    DifferentiatedMatrix f_inv;
    try {
        f_inv = inverse(model.F);
    } catch (const SingularMatrix&) {
        throw SingularMatrix("eSRIF requires invertible F");
    }
    const DifferentiatedMatrix w = inverse_transpose(cholesky_upper(model.R), Triangle::upper);
    const DifferentiatedMatrix gq = model.G * psd_sqrt_upper(model.Q).transpose();
    const DifferentiatedMatrix whfi = w * model.H * f_inv;
    const DifferentiatedMatrix sfi = state.inv_sqrt_p * f_inv;

    DifferentiatedMatrix pre = DifferentiatedMatrix::zero(m + n + q, m + n + q + 1, p);
    pre.set_block(0, 0, w);
    pre.set_block(0, m, -whfi);
    pre.set_block(0, m + n, whfi * gq);
    pre.set_block(0, m + n + q, -(w * detail::column(z, p)));
    pre.set_block(m, m, sfi);
    pre.set_block(m, m + n, -(sfi * gq));
    pre.set_block(m, m + n + q, state.norm_state);
    pre.set_block(m + n, m + n, DifferentiatedMatrix::constant(Matrix::Identity(q, q), p));

    const Index s = m + n + q;
    const LowerPostDerivative post = post_derivative_lower(pre, {s, 0, 1});
    const DifferentiatedMatrix l = assembled_post(post);

    StepResult<SqrtInfoState> res;
    res.state.inv_sqrt_p = l.block(m, m, n, n);
    res.state.norm_state = l.block(m, s, n, 1);

    if (model.B.cols() > 0) {
        res.state.norm_state =
            res.state.norm_state + res.state.inv_sqrt_p * (model.B * Matrix(u));
    }

    StepOutput& out = res.output;
    out.engine = Engine::esrif;
    out.innovation = -detail::first_col(post.post.block(0, s, m, 1));
    out.innovation_factor = post.post.topLeftCorner(m, m);
    out.residual = post.post.bottomRows(q);

    const TriangularFactor sp{res.state.inv_sqrt_p.value(), Triangle::lower};
    const Vector x_next = res.state.state();
    out.predicted_state = x_next;
    for (Index i = 0; i < p; ++i) {
        out.d_innovation.push_back(-detail::first_col(l.deriv(i).block(0, s, m, 1)));
        out.d_innovation_factor.push_back(l.deriv(i).topLeftCorner(m, m));
        // S x = y  =>  dx = S^{-1} (dy - dS x)
        const Matrix rhs = res.state.norm_state.deriv(i) - res.state.inv_sqrt_p.deriv(i) * x_next;
        out.d_predicted_state.push_back(tri_solve(sp, rhs, SolveMode::left).col(0));
    }
    return res;
}

inline StepResult<SqrtInfoState> esrif_sensitivity_step(const SqrtInfoState& state,
                                                        const ModelEval& model, const Vector& z,
                                                        const Vector& u) {
    if (state.params() != model.params()) {
        throw DimensionMismatch(
            "esrif_sensitivity_step: state was not initialized in sensitivity mode");
    }
    return esrif_step(state, model, z, u);
}

}  // namespace sraf
