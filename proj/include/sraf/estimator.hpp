#pragma once

// Maximum-likelihood parameter estimation: every candidate theta gets one
// sensitivity-augmented filter pass producing mu(theta) and grad mu(theta);
// a projected gradient iteration theta_n = theta_{n-1} - gamma_n d_n with
// backtracking on gamma drives mu down.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sraf/likelihood.hpp"

namespace sraf {

namespace detail {

inline void check_log(const ModelSpec& spec, const MeasurementLog& data) {
    if (data.size() == 0) throw DomainError("measurement log is empty");
    for (std::size_t k = 0; k < data.size(); ++k) {
        if (data.z[k].size() != spec.dims.m || data.u[k].size() != spec.dims.d) {
            throw DimensionMismatch("measurement log row " + std::to_string(k + 1) +
                                    " does not match model dimensions (m=" +
                                    std::to_string(spec.dims.m) +
                                    ", d=" + std::to_string(spec.dims.d) + ")");
        }
    }
}

using StepObserver = std::function<void(std::size_t, const StepOutput&)>;

template <typename Init, typename Step>
NegLogLikelihood run_pass(const ModelEval& model, const MeasurementLog& data, Sensitivity mode,
                          bool keep_trace, const StepObserver& observe, Init init, Step step) {
    const Index p = mode == Sensitivity::on ? model.params() : 0;
    NegLogLikelihood acc(p, keep_trace);
    auto state = init(model, mode);
    for (std::size_t k = 0; k < data.size(); ++k) {
        try {
            auto next = step(state, model, data.z[k], data.u[k]);
            accumulate(next.output, acc);
            if (!std::isfinite(acc.value) || !acc.gradient.allFinite()) {
                throw Error("non-finite likelihood");
            }
            if (observe) observe(k + 1, next.output);
            state = std::move(next.state);
        } catch (const Error& e) {
            throw FilterFailure(k + 1, e.what());
        }
    }
    return acc;
}

inline NegLogLikelihood observed_pass(const ModelSpec& spec, const MeasurementLog& data,
                                      const ThetaVector& theta, Engine engine, Sensitivity mode,
                                      bool keep_trace, const StepObserver& observe) {
    check_log(spec, data);
    ModelEval model;
    try {
        model = evaluate(spec, theta);
    } catch (const Error& e) {
        throw FilterFailure(0, e.what());
    }
    auto pass = [&](auto init, auto step) {
        return run_pass(model, data, mode, keep_trace, observe, init, step);
    };
    try {
        switch (engine) {
            case Engine::conventional:
                return pass([](const ModelEval& m, Sensitivity s) { return kf_init(m, s); },
                            [](const auto& st, const ModelEval& m, const Vector& z,
                               const Vector& u) { return kf_step(st, m, z, u); });
            case Engine::esrcf:
                return pass([](const ModelEval& m, Sensitivity s) { return esrcf_init(m, s); },
                            [](const auto& st, const ModelEval& m, const Vector& z,
                               const Vector& u) { return esrcf_step(st, m, z, u); });
            case Engine::esrif:
                return pass([](const ModelEval& m, Sensitivity s) { return esrif_init(m, s); },
                            [](const auto& st, const ModelEval& m, const Vector& z,
                               const Vector& u) { return esrif_step(st, m, z, u); });
        }
    } catch (const FilterFailure&) {
        throw;
    } catch (const Error& e) {
        // initialization breakdown (e.g. Pi0 factorization)
        throw FilterFailure(0, e.what());
    }
    throw DomainError("evaluate_pi: unknown engine");
}

}  // namespace detail

// One full filter pass k = 1..N at theta. Any breakdown (including a model
// that cannot be evaluated at theta, reported as step 0) is raised as
// FilterFailure. `trajectory`, when given, receives x_{k+1|k} for every k.
inline NegLogLikelihood evaluate_pi(const ModelSpec& spec, const MeasurementLog& data,
                                    const ThetaVector& theta, Engine engine,
                                    Sensitivity mode = Sensitivity::on,
                                    std::vector<Vector>* trajectory = nullptr,
                                    bool keep_trace = false) {
    detail::StepObserver observe;
    if (trajectory) {
        trajectory->clear();
        trajectory->reserve(data.size());
        observe = [trajectory](std::size_t, const StepOutput& out) {
            trajectory->push_back(out.predicted_state);
        };
    }
    return detail::observed_pass(spec, data, theta, engine, mode, keep_trace, observe);
}

// Plain filter pass returning every step's output.
inline std::vector<StepOutput> filter_outputs(const ModelSpec& spec, const MeasurementLog& data,
                                              const ThetaVector& theta, Engine engine) {
    std::vector<StepOutput> outs;
    outs.reserve(data.size());
    detail::observed_pass(spec, data, theta, engine, Sensitivity::off, false,
                          [&outs](std::size_t, const StepOutput& out) { outs.push_back(out); });
    return outs;
}

// Capability check: the information engine needs F(theta) invertible.
inline void require_engine_capability(const ModelSpec& spec, const ThetaVector& theta,
                                      Engine engine) {
    if (engine != Engine::esrif) return;
    const ModelEval model = evaluate(spec, theta).truncated(0);
    Eigen::FullPivLU<Matrix> lu(model.F.value());
    if (!lu.isInvertible()) throw DomainError("eSRIF requires invertible F");
}

enum class StepRule { fixed, backtracking };
enum class Direction { steepest, bfgs };
enum class Termination { grad_tol, theta_tol, max_iters, filter_failure };

inline std::string to_string(Termination t) {
    switch (t) {
        case Termination::grad_tol: return "gradTol";
        case Termination::theta_tol: return "thetaTol";
        case Termination::max_iters: return "maxIters";
        case Termination::filter_failure: return "filterFailure";
    }
    return "unknown";
}

struct OptimizerConfig {
    Engine engine = Engine::esrcf;
    ThetaVector theta0;
    StepRule step_rule = StepRule::backtracking;
    Direction direction = Direction::steepest;
    double gamma0 = 1.0;
    double beta = 0.5;    // backtracking shrink factor
    double slack = 0.0;   // accept mu_n <= mu_{n-1} + slack
    int max_iters = 200;
    double grad_tol_rel = 1e-6;  // stop when ||grad|| <= grad_tol_rel * max(1, |mu|)
    double theta_tol = 1e-8;
    // Caps the first trial step of each line search at
    // max_step_rel * max(1, ||theta||_inf); infinite leaves gamma0 untouched.
    double max_step_rel = 1.0;
    // Box bounds; when empty the model's declared bounds apply.
    Vector lower_bounds;
    Vector upper_bounds;
    bool keep_trajectory = true;

    void validate(Index p) const {
        if (theta0.size() != p) {
            throw DomainError("optimizer: theta0 has " + std::to_string(theta0.size()) +
                              " components, model expects " + std::to_string(p));
        }
        if (!(gamma0 > 0.0)) throw DomainError("optimizer: gamma0 must be positive");
        if (!(beta > 0.0 && beta < 1.0)) throw DomainError("optimizer: beta must lie in (0, 1)");
        if (!(slack >= 0.0)) throw DomainError("optimizer: slack must be nonnegative");
        if (!(max_step_rel > 0.0)) throw DomainError("optimizer: max_step_rel must be positive");
        if (max_iters < 1) throw DomainError("optimizer: max_iters must be at least 1");
        if (!(grad_tol_rel > 0.0) || !(theta_tol > 0.0)) {
            throw DomainError("optimizer: tolerances must be positive");
        }
        for (const Vector* b : {&lower_bounds, &upper_bounds}) {
            if (b->size() != 0 && b->size() != p) {
                throw DomainError("optimizer: bounds must have one entry per parameter");
            }
        }
    }
};

struct IterateRecord {
    int n = 0;
    ThetaVector theta;
    double mu = 0.0;
    double grad_norm = 0.0;
    double gamma = 0.0;
};

struct FailureRecord {
    std::size_t step = 0;
    std::string cause;
    ThetaVector theta;
};

struct EstimationResult {
    ThetaVector theta_hat;
    std::vector<IterateRecord> trace;
    Termination termination = Termination::max_iters;
    std::optional<FailureRecord> last_failure;  // most recent filter breakdown seen
    std::size_t failed_evaluations = 0;
    std::size_t evaluations = 0;
    double mu = 0.0;
    Vector gradient;
    std::vector<Vector> trajectory;  // x_{k+1|k} at theta_hat

    int iterations() const { return trace.empty() ? 0 : trace.back().n; }
};

namespace detail {

inline ThetaVector project(const ThetaVector& theta, const Vector& lo, const Vector& hi) {
    ThetaVector out = theta;
    for (Index i = 0; i < out.size(); ++i) {
        if (lo.size()) out(i) = std::max(out(i), lo(i));
        if (hi.size()) out(i) = std::min(out(i), hi(i));
    }
    return out;
}

// Gradient with components zeroed where a bound blocks the descent move.
inline Vector projected_gradient(const ThetaVector& theta, const Vector& g, const Vector& lo,
                                 const Vector& hi) {
    Vector out = g;
    for (Index i = 0; i < g.size(); ++i) {
        if (lo.size() && theta(i) <= lo(i) && g(i) > 0.0) out(i) = 0.0;
        if (hi.size() && theta(i) >= hi(i) && g(i) < 0.0) out(i) = 0.0;
    }
    return out;
}

// Memoryless BFGS: H = tau (I - rho s y')(I - rho y s') + rho s s', tau = s'y / y'y.
inline Vector bfgs_direction(const Vector& g, const Vector& s, const Vector& y) {
    const double sy = s.dot(y);
    if (!(sy > 0.0)) return -g;
    const double rho = 1.0 / sy;
    const double tau = sy / y.squaredNorm();
    const Vector t = g - rho * y * s.dot(g);          // (I - rho y s') g
    const Vector ht = tau * (t - rho * s * y.dot(t));  // tau (I - rho s y') t
    Vector d = -(ht + rho * s * s.dot(g));
    if (!(d.dot(g) < 0.0) || !d.allFinite()) return -g;
    return d;
}

}  // namespace detail

inline EstimationResult estimate(const ModelSpec& spec, const MeasurementLog& data,
                                 const OptimizerConfig& config) {
    const Index p = spec.dims.p;
    config.validate(p);
    detail::check_log(spec, data);
    const Vector lo = config.lower_bounds.size() ? config.lower_bounds : spec.lower_bounds;
    const Vector hi = config.upper_bounds.size() ? config.upper_bounds : spec.upper_bounds;

    EstimationResult result;
    ThetaVector theta = detail::project(config.theta0, lo, hi);
    require_engine_capability(spec, theta, config.engine);

    auto eval = [&](const ThetaVector& t) -> std::optional<NegLogLikelihood> {
        ++result.evaluations;
        try {
            return evaluate_pi(spec, data, t, config.engine);
        } catch (const FilterFailure& f) {
            ++result.failed_evaluations;
            result.last_failure = FailureRecord{f.step(), f.cause(), t};
            return std::nullopt;
        }
    };

    auto current = eval(theta);
    result.theta_hat = theta;
    if (!current) {
        result.termination = Termination::filter_failure;
        return result;
    }
    result.trace.push_back({0, theta, current->value, current->gradient.norm(), 0.0});

    Vector prev_step, prev_grad_change;
    bool have_history = false;

    auto converged_grad = [&](const NegLogLikelihood& pi, const ThetaVector& t) {
        const double tol = config.grad_tol_rel * std::max(1.0, std::abs(pi.value));
        return detail::projected_gradient(t, pi.gradient, lo, hi).norm() <= tol;
    };

    if (converged_grad(*current, theta)) {
        result.termination = Termination::grad_tol;
    } else {
        for (int n = 1;; ++n) {
            const Vector& g = current->gradient;
            Vector dir = -g;
            if (config.direction == Direction::bfgs && have_history) {
                dir = detail::bfgs_direction(g, prev_step, prev_grad_change);
            }

            double gamma = config.gamma0;
            const double dir_norm = dir.lpNorm<Eigen::Infinity>();
            const double cap =
                config.max_step_rel * std::max(1.0, theta.lpNorm<Eigen::Infinity>());
            if (gamma * dir_norm > cap) gamma = cap / dir_norm;
            std::optional<NegLogLikelihood> next;
            ThetaVector trial;
            bool stalled = false;
            bool failed = false;
            bool trial_failed = false;
            while (true) {
                trial = detail::project(theta + gamma * dir, lo, hi);
                if ((trial - theta).lpNorm<Eigen::Infinity>() <= config.theta_tol) {
                    stalled = true;
                    break;
                }
                next = eval(trial);
                trial_failed = trial_failed || !next;
                if (config.step_rule == StepRule::fixed) {
                    failed = !next.has_value();
                    break;
                }
                if (next && next->value <= current->value + config.slack) break;
                gamma *= config.beta;
            }
            if (stalled) {
                // Backtracking that ran into filter failures did not converge.
                result.termination =
                    trial_failed ? Termination::filter_failure : Termination::theta_tol;
                break;
            }
            if (failed) {
                result.termination = Termination::filter_failure;
                break;
            }

            prev_step = trial - theta;
            prev_grad_change = next->gradient - g;
            have_history = true;
            const double moved = prev_step.lpNorm<Eigen::Infinity>();
            theta = trial;
            current = std::move(next);
            result.trace.push_back({n, theta, current->value, current->gradient.norm(), gamma});

            if (converged_grad(*current, theta)) {
                result.termination = Termination::grad_tol;
                break;
            }
            if (moved <= config.theta_tol) {
                result.termination = Termination::theta_tol;
                break;
            }
            if (n >= config.max_iters) {
                result.termination = Termination::max_iters;
                break;
            }
        }
    }

    result.theta_hat = theta;
    result.mu = current->value;
    result.gradient = current->gradient;
    if (config.keep_trajectory) {
        try {
            evaluate_pi(spec, data, theta, config.engine, Sensitivity::off, &result.trajectory);
        } catch (const FilterFailure&) {
            result.trajectory.clear();
        }
    }
    return result;
}

}  // namespace sraf
