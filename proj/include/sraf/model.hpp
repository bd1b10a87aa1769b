#pragma once

// Linear-Gaussian model families theta -> {F, B, G, H, Q, R, x0, Pi0}:
//
//   x_{k+1} = F x_k + B u_k + G w_k,   w_k ~ N(0, Q)
//   z_k     = H x_k + v_k,             v_k ~ N(0, R)
//   x_1     ~ N(x0, Pi0)
//
// Row k of a measurement log holds z_k and the input u_k applied after it.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sraf/differentiated.hpp"

namespace sraf {

using ThetaVector = Vector;

struct ModelDims {
    Index n = 1;  // state
    Index m = 1;  // measurement
    Index d = 0;  // input
    Index q = 1;  // process noise
    Index p = 1;  // parameters
};

struct ModelEval {
    DifferentiatedMatrix F, B, G, H, Q, R, x0, Pi0;

    Index params() const { return F.params(); }

    // Same matrices with only the first p derivatives.
    ModelEval truncated(Index p) const {
        return {F.truncated(p), B.truncated(p), G.truncated(p), H.truncated(p),
                Q.truncated(p), R.truncated(p), x0.truncated(p), Pi0.truncated(p)};
    }
};

// Values only; the input of the finite-difference derivative mode.
struct ModelValues {
    Matrix F, B, G, H, Q, R;
    Vector x0;
    Matrix Pi0;
};

enum class DerivativeMode { analytic, finite_difference };

struct ModelSpec {
    ModelDims dims;
    std::string family;
    nlohmann::json family_params = nlohmann::json::object();

    std::function<ModelEval(const ThetaVector&)> analytic;
    std::function<ModelValues(const ThetaVector&)> values;
    DerivativeMode mode = DerivativeMode::analytic;

    // Box of admissible parameters; empty means unbounded.
    Vector lower_bounds;
    Vector upper_bounds;
};

namespace detail {

inline void check_dims(const Matrix& m, Index rows, Index cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionMismatch(std::string("model matrix ") + name + " is " + dims(m) +
                                ", expected " + std::to_string(rows) + "x" +
                                std::to_string(cols));
    }
}

inline void symmetrize(DifferentiatedMatrix& m) {
    m.value() = 0.5 * (m.value() + m.value().transpose()).eval();
    for (auto& d : m.derivs()) d = 0.5 * (d + d.transpose()).eval();
}

inline ModelValues values_of(const ModelEval& e) {
    return {e.F.value(), e.B.value(), e.G.value(), e.H.value(),  e.Q.value(),
            e.R.value(), e.x0.value(), e.Pi0.value()};
}

// Central differences with h_i = eps^{1/3} * max(1, |theta_i|).
inline ModelEval finite_difference_eval(const std::function<ModelValues(const ThetaVector&)>& f,
                                        const ThetaVector& theta) {
    const ModelValues base = f(theta);
    const Index p = theta.size();
    const double root = std::cbrt(std::numeric_limits<double>::epsilon());

    std::vector<ModelValues> plus, minus;
    std::vector<double> steps;
    for (Index i = 0; i < p; ++i) {
        const double h = root * std::max(1.0, std::abs(theta(i)));
        ThetaVector tp = theta, tm = theta;
        tp(i) += h;
        tm(i) -= h;
        steps.push_back(tp(i) - tm(i));
        plus.push_back(f(tp));
        minus.push_back(f(tm));
    }
    auto build = [&](auto member) {
        std::vector<Matrix> d;
        for (Index i = 0; i < p; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            d.emplace_back((Matrix(plus[ii].*member) - Matrix(minus[ii].*member)) / steps[ii]);
        }
        return DifferentiatedMatrix(Matrix(base.*member), std::move(d));
    };
    return {build(&ModelValues::F), build(&ModelValues::B),  build(&ModelValues::G),
            build(&ModelValues::H), build(&ModelValues::Q),  build(&ModelValues::R),
            build(&ModelValues::x0), build(&ModelValues::Pi0)};
}

inline bool is_positive_definite(const Matrix& m) {
    Eigen::LLT<Matrix> llt(m);
    return llt.info() == Eigen::Success;
}

inline bool is_positive_semidefinite(const Matrix& m) {
    if (m.size() == 0) return true;
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return es.eigenvalues().minCoeff() >= -1e-12 * scale;
}

}  // namespace detail

// All system matrices and their p derivatives at theta. Q, R, Pi0 and their
// derivatives are symmetrized; R and Pi0 must be PD and Q PSD at theta.
inline ModelEval evaluate(const ModelSpec& spec, const ThetaVector& theta) {
    const ModelDims& dm = spec.dims;
    if (theta.size() != dm.p) {
        throw DimensionMismatch("evaluate: theta has " + std::to_string(theta.size()) +
                                " components, model expects " + std::to_string(dm.p));
    }
    if (!theta.allFinite()) throw DomainError("evaluate: non-finite parameter");

    ModelEval e;
    if (spec.mode == DerivativeMode::analytic) {
        if (!spec.analytic) throw DomainError("evaluate: model has no analytic evaluator");
        e = spec.analytic(theta);
    } else {
        std::function<ModelValues(const ThetaVector&)> f = spec.values;
        if (!f) {
            if (!spec.analytic) throw DomainError("evaluate: model has no evaluator");
            f = [&spec](const ThetaVector& t) { return detail::values_of(spec.analytic(t)); };
        }
        e = detail::finite_difference_eval(f, theta);
    }

    detail::check_dims(e.F.value(), dm.n, dm.n, "F");
    detail::check_dims(e.B.value(), dm.n, dm.d, "B");
    detail::check_dims(e.G.value(), dm.n, dm.q, "G");
    detail::check_dims(e.H.value(), dm.m, dm.n, "H");
    detail::check_dims(e.Q.value(), dm.q, dm.q, "Q");
    detail::check_dims(e.R.value(), dm.m, dm.m, "R");
    detail::check_dims(e.x0.value(), dm.n, 1, "x0");
    detail::check_dims(e.Pi0.value(), dm.n, dm.n, "Pi0");
    for (const auto* m : {&e.F, &e.B, &e.G, &e.H, &e.Q, &e.R, &e.x0, &e.Pi0}) {
        if (m->params() != dm.p) {
            throw DimensionMismatch("evaluate: model matrix carries " +
                                    std::to_string(m->params()) + " derivatives, expected " +
                                    std::to_string(dm.p));
        }
    }

    detail::symmetrize(e.Q);
    detail::symmetrize(e.R);
    detail::symmetrize(e.Pi0);

    if (!detail::is_positive_definite(e.R.value())) {
        throw DomainError("evaluate: R is not positive definite at this parameter");
    }
    if (!detail::is_positive_definite(e.Pi0.value())) {
        throw DomainError("evaluate: Pi0 is not positive definite at this parameter");
    }
    if (!detail::is_positive_semidefinite(e.Q.value())) {
        throw DomainError("evaluate: Q is not positive semidefinite at this parameter");
    }
    return e;
}

// Ill-conditioned benchmark family (p = 1): F = I3, B = G = 0, Q = [1],
// R = delta^2 theta^2 I2, H = [1 1 1; 1 1 1+delta], x0 = 0, Pi0 = theta^2 I3.
// As delta approaches the unit roundoff, R + H Pi0 H' becomes numerically
// singular.
inline ModelSpec example3_spec(double delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw DomainError("example3_spec: delta must be positive");
    }
    ModelSpec spec;
    spec.dims = {3, 2, 1, 1, 1};
    spec.family = "example3";
    spec.family_params = {{"delta", delta}};
    spec.lower_bounds = Vector::Constant(1, 1e-3);
    spec.upper_bounds = Vector::Constant(1, 1e3);
    spec.analytic = [delta](const ThetaVector& theta) {
        const double t = theta(0);
        if (t == 0.0) throw DomainError("example3: theta = 0 makes R singular");
        const Index p = 1;
        Matrix h(2, 3);
        h << 1, 1, 1, 1, 1, 1 + delta;
        ModelEval e;
        e.F = DifferentiatedMatrix::constant(Matrix::Identity(3, 3), p);
        e.B = DifferentiatedMatrix::zero(3, 1, p);
        e.G = DifferentiatedMatrix::zero(3, 1, p);
        e.H = DifferentiatedMatrix::constant(h, p);
        e.Q = DifferentiatedMatrix::constant(Matrix::Identity(1, 1), p);
        e.R = DifferentiatedMatrix(delta * delta * t * t * Matrix::Identity(2, 2),
                                   {2.0 * delta * delta * t * Matrix::Identity(2, 2)});
        e.x0 = DifferentiatedMatrix::zero(3, 1, p);
        e.Pi0 = DifferentiatedMatrix(t * t * Matrix::Identity(3, 3), {2.0 * t * Matrix::Identity(3, 3)});
        return e;
    };
    return spec;
}

// Smooth, well-conditioned model with every matrix depending on theta:
// F, B, G, H, x0 affine in theta; R, Q, Pi0 = C(theta) C(theta)' + c I with
// C affine. Used for property tests and gradient checks. With
// singular_f the last row of F is zero for every theta.
inline ModelSpec random_spec(const ModelDims& dims, std::uint64_t seed, bool singular_f = false) {
    std::mt19937_64 gen(seed);
    auto uniform = [&gen](double lo, double hi) {
        const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    };
    auto random_matrix = [&](Index r, Index c, double scale) {
        Matrix m(r, c);
        for (Index j = 0; j < c; ++j)
            for (Index i = 0; i < r; ++i) m(i, j) = scale * uniform(-1.0, 1.0);
        return m;
    };

    struct Affine {
        Matrix base;
        std::vector<Matrix> slopes;
    };
    auto affine = [&](Index r, Index c, double base_scale, double slope_scale) {
        Affine a{random_matrix(r, c, base_scale), {}};
        for (Index i = 0; i < dims.p; ++i) a.slopes.push_back(random_matrix(r, c, slope_scale));
        return a;
    };

    // Keep F comfortably stable so long runs stay well scaled.
    Affine f = affine(dims.n, dims.n, 0.4 / std::sqrt(static_cast<double>(dims.n)),
                      0.1 / std::sqrt(static_cast<double>(dims.n)));
    f.base.diagonal().array() += 0.5;
    if (singular_f) {
        f.base.row(dims.n - 1).setZero();
        for (auto& s : f.slopes) s.row(dims.n - 1).setZero();
    }
    Affine b = affine(dims.n, dims.d, 1.0, 0.3);
    Affine g = affine(dims.n, dims.q, 0.8, 0.2);
    Affine h = affine(dims.m, dims.n, 1.0, 0.3);
    Affine x0 = affine(dims.n, 1, 1.0, 0.3);
    Affine cq = affine(dims.q, dims.q, 0.5, 0.2);
    Affine cr = affine(dims.m, dims.m, 0.5, 0.2);
    Affine cp = affine(dims.n, dims.n, 0.5, 0.2);

    auto eval_affine = [](const Affine& a, const ThetaVector& t) {
        DifferentiatedMatrix out(a.base, a.slopes);
        for (std::size_t i = 0; i < a.slopes.size(); ++i) {
            out.value() += t(static_cast<Index>(i)) * a.slopes[i];
        }
        return out;
    };
    auto eval_cov = [&](const Affine& c, const ThetaVector& t, double floor) {
        const DifferentiatedMatrix cm = eval_affine(c, t);
        DifferentiatedMatrix cov = cm * cm.transpose();
        cov.value() += floor * Matrix::Identity(c.base.rows(), c.base.rows());
        return cov;
    };

    ModelSpec spec;
    spec.dims = dims;
    spec.family = "random";
    spec.family_params = {{"n", dims.n}, {"m", dims.m},       {"d", dims.d},
                          {"q", dims.q}, {"p", dims.p},       {"seed", seed},
                          {"singular_f", singular_f}};
    spec.analytic = [=](const ThetaVector& t) {
        ModelEval e;
        e.F = eval_affine(f, t);
        e.B = eval_affine(b, t);
        e.G = eval_affine(g, t);
        e.H = eval_affine(h, t);
        e.x0 = eval_affine(x0, t);
        e.Q = eval_cov(cq, t, 0.3);
        e.R = eval_cov(cr, t, 0.3);
        e.Pi0 = eval_cov(cp, t, 0.5);
        return e;
    };
    return spec;
}

// Seedable N(0,1) source: mt19937_64 words mapped to (0,1) uniforms with
// 53-bit resolution, then Box-Muller (cosine branch, sine branch cached).
// Fully specified, so draws are identical across standard libraries.
class GaussianSource {
public:
    static constexpr const char* name = "mt19937_64/box-muller";

    explicit GaussianSource(std::uint64_t seed) : gen_(seed) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform_open();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    Vector draw(Index size) {
        Vector v(size);
        for (Index i = 0; i < size; ++i) v(i) = next();
        return v;
    }

private:
    double uniform_open() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Transform mapping standard normals to N(0, cov): a Cholesky factor when
// cov is PD, otherwise a symmetric square root from the eigendecomposition
// with negative roundoff eigenvalues clamped to zero.
inline Matrix sampling_transform(const Matrix& cov) {
    if (cov.size() == 0) return cov;
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const Vector roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * roots.asDiagonal();
}

struct MeasurementLog {
    Index m = 0;
    Index d = 0;
    std::vector<Vector> z;  // z_1..z_N
    std::vector<Vector> u;  // u_1..u_N (length d each)
    nlohmann::json metadata = nlohmann::json::object();

    std::size_t size() const { return z.size(); }
};

// Draws x_1 ~ N(x0, Pi0), w_k ~ N(0, Q), v_k ~ N(0, R) and propagates the
// model for N samples. Deterministic for a fixed seed. `inputs`, when given,
// must hold N vectors of length d; otherwise u_k = 0.
inline MeasurementLog simulate(const ModelSpec& spec, const ThetaVector& theta, std::size_t samples,
                               std::uint64_t seed,
                               const std::vector<Vector>* inputs = nullptr) {
    if (samples < 1) throw DomainError("simulate: sample count must be at least 1");
    const ModelDims& dm = spec.dims;
    if (inputs && inputs->size() != samples) {
        throw DimensionMismatch("simulate: input sequence length differs from sample count");
    }
    const ModelEval e = evaluate(spec, theta).truncated(0);

    const Matrix& F = e.F.value();
    const Matrix& B = e.B.value();
    const Matrix& G = e.G.value();
    const Matrix& H = e.H.value();
    const Matrix tq = sampling_transform(e.Q.value());
    const Matrix tr = sampling_transform(e.R.value());
    const Matrix tp = sampling_transform(e.Pi0.value());

    GaussianSource rng(seed);
    MeasurementLog log;
    log.m = dm.m;
    log.d = dm.d;
    log.z.reserve(samples);
    log.u.reserve(samples);

    Vector x = e.x0.value().col(0) + tp * rng.draw(dm.n);
    for (std::size_t k = 0; k < samples; ++k) {
        const Vector u = inputs ? (*inputs)[k] : Vector::Zero(dm.d);
        if (u.size() != dm.d) throw DimensionMismatch("simulate: input has wrong length");
        log.z.push_back(H * x + tr * rng.draw(dm.m));
        log.u.push_back(u);
        const Vector w = tq * rng.draw(dm.q);
        x = F * x + G * w;
        if (dm.d > 0) x += B * u;
    }

    std::vector<double> theta_list(theta.data(), theta.data() + theta.size());
    log.metadata = {{"family", spec.family},
                    {"family_params", spec.family_params},
                    {"theta_true", theta_list},
                    {"seed", seed},
                    {"samples", samples},
                    {"generator", GaussianSource::name}};
    return log;
}

}  // namespace sraf
