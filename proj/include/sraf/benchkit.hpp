#pragma once

// Reference problems: the 3x4 polynomial test array with frozen published
// post-array values, and the ill-conditioned Monte Carlo estimation sweep.

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sraf/array_sensitivity.hpp"
#include "sraf/io.hpp"

namespace sraf::bench {

using nlohmann::json;

// A(theta) = [t^5/20 t^4/8 t^3/6 | t^3/3; t^4/8 t^3/3 t^2/2 | t^2/2; t^3/6 t^2/2 t | 1]
inline DifferentiatedMatrix lemma_test_array(double t) {
    Matrix a(3, 4), da(3, 4);
    a << std::pow(t, 5) / 20, std::pow(t, 4) / 8, std::pow(t, 3) / 6, std::pow(t, 3) / 3,
        std::pow(t, 4) / 8, std::pow(t, 3) / 3, t * t / 2, t * t / 2,
        std::pow(t, 3) / 6, t * t / 2, t, 1;
    da << std::pow(t, 4) / 4, std::pow(t, 3) / 2, t * t / 2, t * t,
        std::pow(t, 3) / 2, t * t, t, t,
        t * t / 2, t, 1, 0;
    return DifferentiatedMatrix(a, {da});
}

namespace reference {

inline Matrix rows(Index r, Index c, std::initializer_list<double> v) {
    Matrix m(r, c);
    auto it = v.begin();
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = *it++;
    return m;
}

// Published four-decimal values at theta = 2.
struct Upper {
    Matrix post = rows(3, 4, {-2.8875, -3.8788, -3.0476, -3.3247,
                              0, -0.2576, -0.6954, 0.8886,
                              0, 0, 0.0797, 0.5179});
    Matrix q = rows(3, 3, {-0.5541, -0.6926, -0.4618,
                           0.5795, 0.0773, -0.8113,
                           0.5976, -0.7171, 0.3586});
    Matrix x = rows(3, 3, {-5.9105, -5.9105, -2.9552,
                           1.0045, 1.0045, 0.5022,
                           0.2390, 0.2390, 0.1195});
    Matrix n = rows(3, 1, {-3.6017, 2.4725, 0.9562});
    Matrix x_over_r = rows(3, 3, {2.0469, -7.8778, -27.5511,
                                  -0.3479, 1.3388, 4.6822,
                                  -0.0828, 0.3186, 1.1143});
    Matrix d_r11 = rows(3, 3, {-5.9105, -5.8209, -2.7199,
                               0, -0.3448, -0.5325,
                               0, 0, 0.0888});
    Matrix d_r12 = rows(3, 1, {-3.9537, 1.4810, 0.3978});
};

struct Lower {
    Matrix post = rows(3, 4, {-0.0306, 0, 0, -0.6882,
                              -0.6456, -0.6195, 0, -1.5163,
                              -2.8142, -3.8376, -3.1269, -3.0559});
    Matrix q = rows(3, 3, {-0.6882, -0.5869, -0.4264,
                           0.6882, -0.3424, -0.6396,
                           -0.2294, 0.7337, -0.6396});
    Matrix y = rows(3, 3, {-0.4588, -0.4588, -0.2294,
                           -2.2499, -2.2499, -1.1250,
                           -5.5432, -5.5432, -2.7716});
    Matrix v = rows(3, 1, {-1.3765, -3.0325, -2.9848});
    Matrix y_over_l = rows(3, 3, {2.2105, 0.2861, 0.0734,
                                  10.8396, 1.4031, 0.3598,
                                  26.7057, 3.4569, 0.8864});
    Matrix d_l21 = rows(3, 3, {-0.0676, 0, 0,
                               -1.2462, -0.8693, 0,
                               -5.7777, -5.7661, -2.7716});
    Matrix d_l22 = rows(3, 1, {-0.7184, -2.1301, -3.5808});
};

}  // namespace reference

struct TableCheck {
    std::string name;
    double max_abs_deviation = 0.0;
};

struct LemmaCaseReport {
    std::string triangle;
    std::vector<TableCheck> checks;
    double self_check = 0.0;

    double max_deviation() const {
        double m = 0.0;
        for (const auto& c : checks) m = std::max(m, c.max_abs_deviation);
        return m;
    }
    bool passed(double entry_tol = 1e-3, double self_tol = 1e-12) const {
        return max_deviation() <= entry_tol && self_check <= self_tol;
    }
};

struct LemmaReport {
    LemmaCaseReport upper, lower;
    bool passed() const { return upper.passed() && lower.passed(); }
};

namespace detail {

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace detail

inline LemmaCaseReport verify_upper_table() {
    const DifferentiatedMatrix a = lemma_test_array(2.0);
    const UpperPostDerivative pd = post_derivative_upper(a, {3, 0, 1});
    const reference::Upper ref;

    const Vector signs =
        row_signs_matching(pd.post, 3, 0, triangular_diagonal(ref.post, 3, 0));
    const auto s = signs.asDiagonal();
    const Matrix r11 = pd.r11();
    const Matrix x_over_r = tri_solve({r11, Triangle::upper}, pd.blocks[0].x, SolveMode::right);

    LemmaCaseReport rep{"upper", {}, self_check_norm(a, assembled_post(pd))};
    auto check = [&rep](std::string name, const Matrix& got, const Matrix& want) {
        rep.checks.push_back({std::move(name), detail::max_abs_diff(got, want)});
    };
    check("post", s * pd.post, ref.post);
    check("q", s * pd.q, ref.q);
    check("x", s * pd.blocks[0].x, ref.x);
    check("n", s * pd.blocks[0].n, ref.n);
    check("x_r11_inv", s * x_over_r * s, ref.x_over_r);
    check("d_r11", s * pd.d_r11[0], ref.d_r11);
    check("d_r12", s * pd.d_r12[0], ref.d_r12);
    return rep;
}

inline LemmaCaseReport verify_lower_table() {
    const DifferentiatedMatrix a = lemma_test_array(2.0);
    const LowerPostDerivative pd = post_derivative_lower(a, {3, 0, 1});
    const reference::Lower ref;

    const Vector signs =
        row_signs_matching(pd.post, 3, 0, triangular_diagonal(ref.post, 3, 0));
    const auto s = signs.asDiagonal();
    const Matrix l21 = pd.l21();
    const Matrix y_over_l = tri_solve({l21, Triangle::lower}, pd.blocks[0].y, SolveMode::right);

    LemmaCaseReport rep{"lower", {}, self_check_norm(a, assembled_post(pd))};
    auto check = [&rep](std::string name, const Matrix& got, const Matrix& want) {
        rep.checks.push_back({std::move(name), detail::max_abs_diff(got, want)});
    };
    check("post", s * pd.post, ref.post);
    // reference lists the transformation with post = q^T a
    check("q", pd.q.transpose() * s, ref.q);
    check("y", s * pd.blocks[0].y, ref.y);
    check("v", s * pd.blocks[0].v, ref.v);
    check("y_l21_inv", s * y_over_l * s, ref.y_over_l);
    check("d_l21", s * pd.d_l21[0], ref.d_l21);
    check("d_l22", s * pd.d_l22[0], ref.d_l22);
    return rep;
}

inline LemmaReport verify_lemma_tables() { return {verify_upper_table(), verify_lower_table()}; }

inline json to_json(const LemmaCaseReport& r) {
    json checks = json::object();
    for (const auto& c : r.checks) checks[c.name] = c.max_abs_deviation;
    return {{"triangle", r.triangle},
            {"max_abs_deviation", checks},
            {"self_check_norm", r.self_check},
            {"passed", r.passed()}};
}

inline json to_json(const LemmaReport& r) {
    return {{"upper", to_json(r.upper)}, {"lower", to_json(r.lower)}, {"passed", r.passed()}};
}

// ---------------------------------------------------------------------------
// Monte Carlo sweep over the ill-conditioned family.

struct SweepConfig {
    std::vector<double> deltas{1e-2, 1e-3, 1e-5};
    double theta_true = 5.0;
    double theta0 = 1.0;
    std::size_t samples = 1000;
    int replicates = 100;
    std::vector<Engine> engines{Engine::conventional, Engine::esrcf, Engine::esrif};
    std::uint64_t base_seed = 1;
    std::optional<double> conv_tol;  // defaults to 0.1 * theta_true
    OptimizerConfig optimizer;       // engine and theta0 are set per run

    double convergence_tolerance() const { return conv_tol.value_or(0.1 * std::abs(theta_true)); }

    void validate() const {
        if (deltas.empty()) throw ConfigError("sweep.deltas: at least one value required");
        for (double d : deltas) {
            if (!(d > 0.0) || !std::isfinite(d)) throw ConfigError("sweep.deltas: values must be positive");
        }
        if (replicates < 1) throw ConfigError("sweep.replicates: must be at least 1");
        if (samples < 1) throw ConfigError("sweep.samples: must be at least 1");
        if (engines.empty()) throw ConfigError("sweep.engines: at least one engine required");
        if (!(convergence_tolerance() > 0.0)) throw ConfigError("sweep.conv_tol: must be positive");
    }
};

struct ReplicateOutcome {
    double delta = 0.0;
    Engine engine = Engine::esrcf;
    int replicate = 0;
    std::uint64_t seed = 0;
    double theta_hat = 0.0;
    bool converged = false;
    Termination termination = Termination::max_iters;
    int iterations = 0;
    std::size_t failed_evaluations = 0;
    std::optional<FailureRecord> last_failure;
    std::vector<IterateRecord> trace;
};

struct SweepSummary {
    double delta = 0.0;
    Engine engine = Engine::esrcf;
    int runs = 0;
    int converged = 0;
    int filter_failures = 0;  // runs that ended in filterFailure

    double success_rate() const { return runs ? static_cast<double>(converged) / runs : 0.0; }
};

struct SweepReport {
    SweepConfig config;
    std::vector<ReplicateOutcome> outcomes;  // (delta, engine, replicate) order
    std::vector<SweepSummary> summary;       // (delta, engine) order

    const SweepSummary& find(double delta, Engine engine) const {
        for (const auto& s : summary) {
            if (s.delta == delta && s.engine == engine) return s;
        }
        throw DomainError("sweep report has no entry for this (delta, engine)");
    }
};

using SweepProgress = std::function<void(const ReplicateOutcome&)>;

inline SweepReport run_sweep(const SweepConfig& config, const SweepProgress& progress = {}) {
    config.validate();
    const std::size_t n_eng = config.engines.size();
    const auto n_rep = static_cast<std::size_t>(config.replicates);

    SweepReport report;
    report.config = config;
    report.outcomes.resize(config.deltas.size() * n_eng * n_rep);

    for (std::size_t di = 0; di < config.deltas.size(); ++di) {
        const double delta = config.deltas[di];
        const ModelSpec spec = example3_spec(delta);
        for (std::size_t r = 0; r < n_rep; ++r) {
            const std::uint64_t seed = config.base_seed + r;
            const MeasurementLog data =
                simulate(spec, Vector::Constant(1, config.theta_true), config.samples, seed);
            for (std::size_t ei = 0; ei < n_eng; ++ei) {
                OptimizerConfig opt = config.optimizer;
                opt.engine = config.engines[ei];
                opt.theta0 = Vector::Constant(1, config.theta0);
                opt.keep_trajectory = false;
                const EstimationResult res = estimate(spec, data, opt);

                ReplicateOutcome& o = report.outcomes[(di * n_eng + ei) * n_rep + r];
                o.delta = delta;
                o.engine = opt.engine;
                o.replicate = static_cast<int>(r);
                o.seed = seed;
                o.theta_hat = res.theta_hat(0);
                o.converged = std::abs(o.theta_hat - config.theta_true) <=
                              config.convergence_tolerance();
                o.termination = res.termination;
                o.iterations = res.iterations();
                o.failed_evaluations = res.failed_evaluations;
                o.last_failure = res.last_failure;
                o.trace = res.trace;
                if (progress) progress(o);
            }
        }
    }

    for (std::size_t di = 0; di < config.deltas.size(); ++di) {
        for (std::size_t ei = 0; ei < n_eng; ++ei) {
            SweepSummary s{config.deltas[di], config.engines[ei], 0, 0, 0};
            for (std::size_t r = 0; r < n_rep; ++r) {
                const ReplicateOutcome& o = report.outcomes[(di * n_eng + ei) * n_rep + r];
                ++s.runs;
                if (o.converged) ++s.converged;
                if (o.termination == Termination::filter_failure) ++s.filter_failures;
            }
            report.summary.push_back(s);
        }
    }
    return report;
}

// delta,engine,replicate,theta_hat,converged,termination
inline std::string report_to_csv(const SweepReport& rep, const json& meta = json::object()) {
    std::ostringstream os;
    io::write_metadata_lines(os, meta);
    os << "delta,engine,replicate,theta_hat,converged,termination\n";
    for (const auto& o : rep.outcomes) {
        os << io::format_double(o.delta) << ',' << to_string(o.engine) << ',' << o.replicate << ','
           << io::format_double(o.theta_hat) << ',' << (o.converged ? 1 : 0) << ','
           << to_string(o.termination) << '\n';
    }
    return os.str();
}

// delta,engine,replicate,n,theta,mu,gradnorm,gamma
inline std::string traces_to_csv(const SweepReport& rep, const json& meta = json::object()) {
    std::ostringstream os;
    io::write_metadata_lines(os, meta);
    os << "delta,engine,replicate,n,theta,mu,gradnorm,gamma\n";
    for (const auto& o : rep.outcomes) {
        for (const auto& it : o.trace) {
            os << io::format_double(o.delta) << ',' << to_string(o.engine) << ',' << o.replicate
               << ',' << it.n << ',' << io::format_double(it.theta(0)) << ','
               << io::format_double(it.mu) << ',' << io::format_double(it.grad_norm) << ','
               << io::format_double(it.gamma) << '\n';
        }
    }
    return os.str();
}

inline json report_to_json(const SweepReport& rep, const json& meta = json::object()) {
    const SweepConfig& c = rep.config;
    json engines = json::array();
    for (Engine e : c.engines) engines.push_back(to_string(e));
    json summary = json::array();
    for (const auto& s : rep.summary) {
        summary.push_back({{"delta", s.delta},
                           {"engine", to_string(s.engine)},
                           {"runs", s.runs},
                           {"converged", s.converged},
                           {"filter_failures", s.filter_failures},
                           {"success_rate", s.success_rate()}});
    }
    json runs = json::array();
    for (const auto& o : rep.outcomes) {
        json r = {{"delta", o.delta},
                  {"engine", to_string(o.engine)},
                  {"replicate", o.replicate},
                  {"seed", o.seed},
                  {"theta_hat", o.theta_hat},
                  {"converged", o.converged},
                  {"termination", to_string(o.termination)},
                  {"iterations", o.iterations},
                  {"failed_evaluations", o.failed_evaluations}};
        if (o.last_failure) {
            r["last_failure"] = {{"step", o.last_failure->step}, {"cause", o.last_failure->cause}};
        }
        runs.push_back(std::move(r));
    }
    return {{"metadata", meta},
            {"config",
             {{"deltas", c.deltas},
              {"theta_true", c.theta_true},
              {"theta0", c.theta0},
              {"samples", c.samples},
              {"replicates", c.replicates},
              {"engines", engines},
              {"base_seed", c.base_seed},
              {"conv_tol", c.convergence_tolerance()}}},
            {"summary", summary},
            {"runs", runs}};
}

}  // namespace sraf::bench
