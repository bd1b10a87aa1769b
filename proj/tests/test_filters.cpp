#include <gtest/gtest.h>

#include "sraf/estimator.hpp"
#include "test_models.hpp"
#include "test_support.hpp"

using namespace sraf;
using sraf::testing::all_engines;
using sraf::testing::rel_error;
using sraf::testing::scalar_r_spec;
using sraf::testing::sensitivity_outputs;
using sraf::testing::single_measurement;

namespace {

Vector theta1(double t) { return Vector::Constant(1, t); }

// Innovation covariance rebuilt from whatever factor the engine reports.
Matrix innovation_cov(const StepOutput& o) {
    const Matrix& f = o.innovation_factor;
    switch (o.engine) {
        case Engine::conventional: return f;
        case Engine::esrcf: return f.transpose() * f;
        case Engine::esrif: return Matrix(f.transpose() * f).inverse();
    }
    return {};
}

Matrix d_innovation_cov(const StepOutput& o, Index i) {
    const Matrix& f = o.innovation_factor;
    const Matrix& df = o.d_innovation_factor[static_cast<std::size_t>(i)];
    switch (o.engine) {
        case Engine::conventional: return df;
        case Engine::esrcf: return df.transpose() * f + f.transpose() * df;
        case Engine::esrif: {
            const Matrix re = innovation_cov(o);
            return -re * (df.transpose() * f + f.transpose() * df) * re;
        }
    }
    return {};
}

double quadratic_form(const StepOutput& o) {
    if (o.engine == Engine::conventional) {
        return o.innovation.dot(o.innovation_factor.llt().solve(o.innovation));
    }
    return o.innovation.squaredNorm();
}

double d_quadratic_form(const StepOutput& o, Index i) {
    const auto ii = static_cast<std::size_t>(i);
    if (o.engine == Engine::conventional) {
        const Vector a = o.innovation_factor.llt().solve(o.innovation);
        return 2.0 * a.dot(o.d_innovation[ii]) - a.dot(o.d_innovation_factor[ii] * a);
    }
    return 2.0 * o.innovation.dot(o.d_innovation[ii]);
}

struct RandomCase {
    ModelSpec spec;
    Vector theta;
    MeasurementLog data;
};

RandomCase random_case(std::uint64_t seed, std::size_t samples, Index max_p = 3) {
    sraf::testing::Rng rng(seed);
    const ModelDims dims{rng.integer(1, 4), rng.integer(1, 3), rng.integer(0, 2),
                         rng.integer(1, 3), rng.integer(1, max_p)};
    RandomCase c{random_spec(dims, seed), Vector(dims.p), {}};
    for (Index i = 0; i < dims.p; ++i) c.theta(i) = rng.uniform(-0.5, 0.5);
    std::vector<Vector> inputs;
    for (std::size_t k = 0; k < samples; ++k) inputs.push_back(Vector::NullaryExpr(dims.d, [&] { return rng.uniform(); }));
    c.data = simulate(c.spec, c.theta, samples, seed + 1000, &inputs);
    return c;
}

}  // namespace

TEST(ConventionalFilter, ScalarStep) {
    const ModelEval model = evaluate(scalar_r_spec(), theta1(1.0));
    const auto r = kf_step(kf_init(model), model, Vector::Constant(1, 2.0), Vector(0));
    EXPECT_DOUBLE_EQ(r.output.innovation_factor(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(r.output.innovation(0), 2.0);
    EXPECT_DOUBLE_EQ(r.state.x(0), 1.0);
    EXPECT_DOUBLE_EQ(r.state.P(0, 0), 0.5);
}

TEST(SqrtCovFilter, ScalarStep) {
    const ModelEval model = evaluate(scalar_r_spec(), theta1(1.0));
    const auto st = esrcf_init(model, Sensitivity::on);
    const auto r = esrcf_sensitivity_step(st, model, Vector::Constant(1, 2.0), Vector(0));
    const double f = r.output.innovation_factor(0, 0);
    EXPECT_NEAR(std::abs(f), std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(r.output.predicted_state(0), 1.0, 1e-15);
    // d sqrt(1 + theta) at theta = 1, carrying the factor's sign
    EXPECT_NEAR(r.output.d_innovation_factor[0](0, 0) * (f > 0 ? 1 : -1), 0.353553, 1e-6);
    EXPECT_THROW(esrcf_sensitivity_step(esrcf_init(model), model, Vector::Ones(1), Vector(0)),
                 DimensionMismatch);
}

TEST(SqrtInfoFilter, ScalarStep) {
    const ModelEval model = evaluate(scalar_r_spec(), theta1(1.0));
    const auto st = esrif_init(model, Sensitivity::on);
    const auto r = esrif_sensitivity_step(st, model, Vector::Constant(1, 2.0), Vector(0));
    const double f = r.output.innovation_factor(0, 0);
    EXPECT_NEAR(std::abs(f), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(r.output.predicted_state(0), 1.0, 1e-15);
    EXPECT_NEAR(r.output.d_innovation_factor[0](0, 0) * (f > 0 ? 1 : -1), -0.176777, 1e-6);
}

TEST(AllEngines, ConstantModelHasZeroDerivatives) {
    const RandomCase c = random_case(3, 15);
    const ModelSpec spec = sraf::testing::constant_spec(c.spec, c.theta);
    for (Engine e : all_engines) {
        for (const StepOutput& o : sensitivity_outputs(spec, c.data, c.theta, e)) {
            for (Index i = 0; i < o.params(); ++i) {
                const auto ii = static_cast<std::size_t>(i);
                EXPECT_LE(o.d_innovation[ii].cwiseAbs().maxCoeff(), 1e-13) << to_string(e);
                EXPECT_LE(o.d_innovation_factor[ii].cwiseAbs().maxCoeff(), 1e-13) << to_string(e);
                EXPECT_LE(o.d_predicted_state[ii].cwiseAbs().maxCoeff(), 1e-13) << to_string(e);
            }
        }
    }
}

TEST(AllEngines, AgreeOnWellConditionedModels) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const RandomCase c = random_case(seed, 50);
        const auto conv = filter_outputs(c.spec, c.data, c.theta, Engine::conventional);
        const auto cov = filter_outputs(c.spec, c.data, c.theta, Engine::esrcf);
        const auto info = filter_outputs(c.spec, c.data, c.theta, Engine::esrif);
        for (std::size_t k = 0; k < conv.size(); ++k) {
            const Vector& x = conv[k].predicted_state;
            const double scale = std::max(1.0, x.norm());
            EXPECT_LE((cov[k].predicted_state - x).norm(), 1e-9 * scale) << "seed " << seed;
            EXPECT_LE((info[k].predicted_state - x).norm(), 1e-9 * scale) << "seed " << seed;
            const double qf = quadratic_form(conv[k]);
            EXPECT_NEAR(quadratic_form(cov[k]), qf, 1e-9);
            EXPECT_NEAR(quadratic_form(info[k]), qf, 1e-9);
            EXPECT_LE(rel_error(innovation_cov(cov[k]), conv[k].innovation_factor), 1e-9);
            EXPECT_LE(rel_error(innovation_cov(info[k]), conv[k].innovation_factor), 1e-9);
            // normalized innovations agree up to the factor signs
            EXPECT_LE((cov[k].innovation.cwiseAbs() - info[k].innovation.cwiseAbs())
                          .cwiseAbs().maxCoeff(),
                      1e-8 * std::max(1.0, cov[k].innovation.cwiseAbs().maxCoeff()));
        }
    }
}

TEST(AllEngines, SensitivitiesMatchFiniteDifferencesThroughFilter) {
    for (std::uint64_t seed = 20; seed < 30; ++seed) {
        const RandomCase c = random_case(seed, 20);
        for (Engine e : all_engines) {
            const auto outs = sensitivity_outputs(c.spec, c.data, c.theta, e);
            for (Index i = 0; i < c.theta.size(); ++i) {
                const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                                 std::max(1.0, std::abs(c.theta(i)));
                Vector tp = c.theta, tm = c.theta;
                tp(i) += h;
                tm(i) -= h;
                const auto plus = filter_outputs(c.spec, c.data, tp, e);
                const auto minus = filter_outputs(c.spec, c.data, tm, e);
                for (std::size_t k = 0; k < outs.size(); ++k) {
                    const Matrix fd_re =
                        (innovation_cov(plus[k]) - innovation_cov(minus[k])) / (2 * h);
                    EXPECT_LE(rel_error(d_innovation_cov(outs[k], i), fd_re, 1e-3), 1e-5)
                        << to_string(e) << " seed " << seed << " k " << k;
                    const double fd_q = (quadratic_form(plus[k]) - quadratic_form(minus[k])) / (2 * h);
                    EXPECT_LE(std::abs(d_quadratic_form(outs[k], i) - fd_q),
                              1e-5 * std::max(1e-2, std::abs(fd_q)))
                        << to_string(e) << " seed " << seed << " k " << k;
                    const Matrix fd_x =
                        (plus[k].predicted_state - minus[k].predicted_state) / (2 * h);
                    EXPECT_LE(rel_error(outs[k].d_predicted_state[static_cast<std::size_t>(i)],
                                        fd_x, 1e-3),
                              1e-5);
                }
            }
        }
    }
}

TEST(AllEngines, ZeroInputMatchesZeroInputMatrix) {
    const ModelSpec base = random_spec({3, 2, 2, 2, 2}, 41);
    ModelSpec no_b = base;
    no_b.analytic = [base](const ThetaVector& t) {
        ModelEval e = base.analytic(t);
        e.B = DifferentiatedMatrix::zero(3, 2, 2);
        return e;
    };
    const Vector theta = Vector::LinSpaced(2, 0.1, -0.2);
    MeasurementLog zero_u = simulate(no_b, theta, 30, 5);
    MeasurementLog some_u = zero_u;
    for (auto& u : some_u.u) u = Vector::LinSpaced(2, 1.0, -3.0);
    for (Engine e : all_engines) {
        const auto a = sensitivity_outputs(base, zero_u, theta, e);
        const auto b = sensitivity_outputs(no_b, some_u, theta, e);
        for (std::size_t k = 0; k < a.size(); ++k) {
            EXPECT_EQ(a[k].innovation, b[k].innovation) << to_string(e);
            EXPECT_EQ(a[k].innovation_factor, b[k].innovation_factor) << to_string(e);
            EXPECT_EQ(a[k].predicted_state, b[k].predicted_state) << to_string(e);
            for (std::size_t i = 0; i < 2; ++i) {
                EXPECT_EQ(a[k].d_innovation[i], b[k].d_innovation[i]) << to_string(e);
                EXPECT_EQ(a[k].d_predicted_state[i], b[k].d_predicted_state[i]) << to_string(e);
            }
        }
    }
}

TEST(AllEngines, ControlInputEntersPrediction) {
    int tested = 0;
    for (std::uint64_t seed = 7; seed < 40 && tested < 3; ++seed) {
        const RandomCase c = random_case(seed, 10);
        if (c.spec.dims.d == 0) continue;
        ++tested;
        const auto conv = filter_outputs(c.spec, c.data, c.theta, Engine::conventional);
        for (Engine e : {Engine::esrcf, Engine::esrif}) {
            const auto sq = filter_outputs(c.spec, c.data, c.theta, e);
            for (std::size_t k = 0; k < conv.size(); ++k) {
                EXPECT_LE((sq[k].predicted_state - conv[k].predicted_state).norm(),
                          1e-9 * std::max(1.0, conv[k].predicted_state.norm()));
            }
        }
        MeasurementLog still = c.data;
        for (Vector& u : still.u) u.setZero();
        const auto moved = filter_outputs(c.spec, still, c.theta, Engine::conventional);
        EXPECT_GT((moved.back().predicted_state - conv.back().predicted_state).norm(), 0.0);
    }
    EXPECT_EQ(tested, 3);
}

TEST(SqrtCovFilter, ReconstructedCovarianceIsValid) {
    const RandomCase c = random_case(9, 40);
    const ModelEval model = evaluate(c.spec, c.theta);
    SqrtCovState st = esrcf_init(model);
    for (std::size_t k = 0; k < c.data.size(); ++k) {
        st = esrcf_step(st, model, c.data.z[k], c.data.u[k]).state;
        const Matrix& s = st.sqrt_p.value();
        EXPECT_TRUE(sraf::testing::is_upper(s));
        const Matrix p = s.transpose() * s;
        EXPECT_LE(inf_norm(p - p.transpose()), 1e-14 * inf_norm(p));
        EXPECT_TRUE((p.diagonal().array() >= 0.0).all());
    }
}

TEST(SqrtInfoFilter, SingularTransitionRejected) {
    const ModelSpec spec = random_spec({3, 1, 0, 1, 1}, 4, true);
    const Vector theta = theta1(0.1);
    const MeasurementLog data = simulate(spec, theta, 5, 1);
    const ModelEval model = evaluate(spec, theta);
    EXPECT_THROW(esrif_step(esrif_init(model), model, data.z[0], data.u[0]), SingularMatrix);
    EXPECT_THROW(require_engine_capability(spec, theta, Engine::esrif), DomainError);
    EXPECT_NO_THROW(require_engine_capability(spec, theta, Engine::esrcf));
    EXPECT_NO_THROW(filter_outputs(spec, data, theta, Engine::esrcf));
    EXPECT_NO_THROW(filter_outputs(spec, data, theta, Engine::conventional));
}

TEST(AllEngines, DimensionChecks) {
    const ModelEval model = evaluate(scalar_r_spec(), theta1(1.0));
    EXPECT_THROW(kf_step(kf_init(model), model, Vector::Ones(2), Vector(0)), DimensionMismatch);
    EXPECT_THROW(esrcf_step(esrcf_init(model), model, Vector::Ones(1), Vector::Ones(1)),
                 DimensionMismatch);
    EXPECT_THROW(kf_sensitivity_step(kf_init(model), model, Vector::Ones(1), Vector(0)),
                 DimensionMismatch);
}

TEST(Example3, SquareRootEnginesCompleteAtTinyDelta) {
    const ModelSpec spec = example3_spec(1e-5);
    const MeasurementLog data = simulate(spec, theta1(5.0), 1000, 17);
    for (Engine e : {Engine::esrcf, Engine::esrif}) {
        const NegLogLikelihood pi = evaluate_pi(spec, data, theta1(5.0), e);
        EXPECT_TRUE(std::isfinite(pi.value)) << to_string(e);
        EXPECT_EQ(pi.samples, 1000u);
    }
}

TEST(Example3, ConventionalEngineBreaksDownNearRoundoff) {
    const ModelSpec spec = example3_spec(1e-8);
    const MeasurementLog data = simulate(spec, theta1(5.0), 50, 17);
    try {
        evaluate_pi(spec, data, theta1(1.0), Engine::conventional);
        FAIL() << "expected a filter failure";
    } catch (const FilterFailure& f) {
        EXPECT_GE(f.step(), 1u);
        EXPECT_FALSE(f.cause().empty());
    }
    EXPECT_NO_THROW(evaluate_pi(spec, data, theta1(1.0), Engine::esrcf));
}

TEST(Filters, SingleMeasurementPass) {
    const MeasurementLog one = single_measurement(2.0);
    for (Engine e : all_engines) {
        const auto outs = filter_outputs(scalar_r_spec(), one, theta1(1.0), e);
        ASSERT_EQ(outs.size(), 1u);
        EXPECT_NEAR(outs[0].predicted_state(0), 1.0, 1e-15);
    }
}
