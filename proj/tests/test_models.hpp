#pragma once

#include "sraf/estimator.hpp"

namespace sraf::testing {

// n = m = q = 1, d = 0: F = H = G = 1, Q = 0, R = theta, x0 = 0, Pi0 = 1.
inline ModelSpec scalar_r_spec() {
    ModelSpec spec;
    spec.dims = {1, 1, 0, 1, 1};
    spec.family = "scalar-r";
    spec.analytic = [](const ThetaVector& t) {
        const Matrix one = Matrix::Ones(1, 1);
        ModelEval e;
        e.F = DifferentiatedMatrix::constant(one, 1);
        e.B = DifferentiatedMatrix::zero(1, 0, 1);
        e.G = DifferentiatedMatrix::constant(one, 1);
        e.H = DifferentiatedMatrix::constant(one, 1);
        e.Q = DifferentiatedMatrix::zero(1, 1, 1);
        e.R = DifferentiatedMatrix(t(0) * one, {one});
        e.x0 = DifferentiatedMatrix::zero(1, 1, 1);
        e.Pi0 = DifferentiatedMatrix::constant(one, 1);
        return e;
    };
    return spec;
}

// Spec whose matrices do not depend on theta (p parameters).
inline ModelSpec constant_spec(const ModelSpec& base, const ThetaVector& at) {
    const ModelEval fixed = evaluate(base, at);
    ModelSpec spec = base;
    spec.family = "constant";
    spec.analytic = [fixed](const ThetaVector&) {
        auto c = [&](const DifferentiatedMatrix& m) {
            return DifferentiatedMatrix::constant(m.value(), m.params());
        };
        return ModelEval{c(fixed.F), c(fixed.B), c(fixed.G),  c(fixed.H),
                         c(fixed.Q), c(fixed.R), c(fixed.x0), c(fixed.Pi0)};
    };
    return spec;
}

inline MeasurementLog single_measurement(double z) {
    MeasurementLog log;
    log.m = 1;
    log.d = 0;
    log.z.push_back(Vector::Constant(1, z));
    log.u.push_back(Vector(0));
    return log;
}

// Every step output of one filter pass with derivatives.
inline std::vector<StepOutput> sensitivity_outputs(const ModelSpec& spec, const MeasurementLog& data,
                                                   const ThetaVector& theta, Engine engine) {
    std::vector<StepOutput> outs;
    detail::observed_pass(spec, data, theta, engine, Sensitivity::on, false,
                          [&outs](std::size_t, const StepOutput& o) { outs.push_back(o); });
    return outs;
}

inline constexpr Engine all_engines[] = {Engine::conventional, Engine::esrcf, Engine::esrif};

}  // namespace sraf::testing
