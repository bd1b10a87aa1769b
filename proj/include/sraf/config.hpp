#pragma once

// JSON run configuration.
//
//   {
//     "model":     {"family": "example3", "delta": 0.01}
//                | {"family": "random", "n": 2, "m": 1, "d": 1, "q": 1, "p": 2,
//                   "seed": 7, "singular_f": false},
//                  optional "lower_bounds", "upper_bounds", "derivatives"
//                  ("analytic" | "finite_difference")
//     "theta_true": [5],  "samples": 1000,  "seed": 42,
//     "optimizer": {"engine", "theta0", "step_rule", "direction", "gamma0", "beta",
//                   "slack", "max_iters", "grad_tol_rel", "theta_tol",
//                   "max_step_rel", "lower_bounds", "upper_bounds"},
//     "sweep":     {"deltas", "theta_true", "theta0", "samples", "replicates",
//                   "engines", "base_seed", "conv_tol"},
//     "gradcheck": {"theta": [...], "rel_tol": 1e-4}
//   }
//
// Every section is optional; missing keys take the defaults below. Unknown
// keys are rejected. Overrides "a.b.c=value" are applied after parsing; the
// value is read as JSON when it parses, else as a string.

#include <initializer_list>
#include <string>
#include <string_view>

#include "sraf/benchkit.hpp"

namespace sraf::config {

using nlohmann::json;

inline json default_config() {
    return {{"model", {{"family", "example3"}, {"delta", 1e-2}}},
            {"theta_true", json::array({5.0})},
            {"samples", 1000},
            {"seed", 42},
            {"optimizer", {{"engine", "esrcf"}, {"theta0", json::array({1.0})}}},
            {"sweep", json::object()},
            {"gradcheck", {{"rel_tol", 1e-4}}}};
}

// Deep merge: objects merge key by key, anything else replaces.
inline void merge(json& base, const json& patch) {
    if (!base.is_object() || !patch.is_object()) {
        base = patch;
        return;
    }
    for (const auto& [key, value] : patch.items()) {
        if (base.contains(key) && base[key].is_object() && value.is_object()) {
            merge(base[key], value);
        } else {
            base[key] = value;
        }
    }
}

inline void apply_override(json& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    const std::string path(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw ConfigError("override key '" + path + "' has an empty component");
        if (!node->is_object()) {
            throw ConfigError("override key '" + path + "' descends into a non-object");
        }
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

inline json load(const std::string& path) {
    json cfg = default_config();
    if (!path.empty()) {
        const json file = io::parse_json(io::read_file(path), "config '" + path + "'");
        if (!file.is_object()) throw ConfigError("config '" + path + "' must hold a JSON object");
        merge(cfg, file);
    }
    return cfg;
}

namespace detail {

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view section) {
    if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get(const json& j, std::string_view key, T fallback, std::string_view section) {
    const std::string k(key);
    if (!j.contains(k)) return fallback;
    try {
        return j.at(k).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string(section) + "." + k + ": wrong type");
    }
}

inline double get_number(const json& j, std::string_view key, double fallback,
                         std::string_view section) {
    const std::string k(key);
    if (!j.contains(k)) return fallback;
    if (!j.at(k).is_number()) throw ConfigError(std::string(section) + "." + k + ": expected a number");
    return j.at(k).get<double>();
}

inline long long get_integer(const json& j, std::string_view key, long long fallback,
                             std::string_view section) {
    const std::string k(key);
    if (!j.contains(k)) return fallback;
    const json& v = j.at(k);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == std::floor(d) && std::abs(d) < 9e15) return static_cast<long long>(d);
    }
    throw ConfigError(std::string(section) + "." + k + ": expected an integer");
}

inline Vector get_vector(const json& j, std::string_view key, std::string_view section) {
    const std::string k(key);
    if (!j.contains(k)) return Vector(0);
    return io::vector_from_json(j.at(k), std::string(section) + "." + k);
}

inline Engine get_engine(const json& j, std::string_view key, Engine fallback,
                         std::string_view section) {
    const std::string name = get<std::string>(j, key, to_string(fallback), section);
    try {
        return engine_from_string(name);
    } catch (const DomainError& e) {
        throw ConfigError(std::string(section) + "." + std::string(key) + ": " + e.what());
    }
}

}  // namespace detail

inline ModelSpec model_from_json(const json& j) {
    const std::string family = detail::get<std::string>(j, "family", "example3", "model");
    ModelSpec spec;
    if (family == "example3") {
        detail::check_keys(j, {"family", "delta", "lower_bounds", "upper_bounds", "derivatives"},
                           "model");
        const double delta = detail::get_number(j, "delta", 1e-2, "model");
        if (!(delta > 0.0)) throw ConfigError("model.delta: must be positive");
        spec = example3_spec(delta);
    } else if (family == "random") {
        detail::check_keys(j, {"family", "n", "m", "d", "q", "p", "seed", "singular_f",
                               "lower_bounds", "upper_bounds", "derivatives"},
                           "model");
        ModelDims dims;
        dims.n = detail::get_integer(j, "n", 2, "model");
        dims.m = detail::get_integer(j, "m", 1, "model");
        dims.d = detail::get_integer(j, "d", 1, "model");
        dims.q = detail::get_integer(j, "q", 1, "model");
        dims.p = detail::get_integer(j, "p", 2, "model");
        if (dims.n < 1 || dims.m < 1 || dims.q < 1 || dims.p < 1 || dims.d < 0) {
            throw ConfigError("model: n, m, q, p must be at least 1 and d nonnegative");
        }
        const auto seed = detail::get_integer(j, "seed", 1, "model");
        if (seed < 0) throw ConfigError("model.seed: must be nonnegative");
        spec = random_spec(dims, static_cast<std::uint64_t>(seed),
                           detail::get<bool>(j, "singular_f", false, "model"));
    } else {
        throw ConfigError("model.family: unknown family '" + family + "' (expected example3 or random)");
    }

    const std::string deriv = detail::get<std::string>(j, "derivatives", "analytic", "model");
    if (deriv == "analytic") spec.mode = DerivativeMode::analytic;
    else if (deriv == "finite_difference") spec.mode = DerivativeMode::finite_difference;
    else throw ConfigError("model.derivatives: expected analytic or finite_difference");

    for (const auto& [key, target] : {std::pair{"lower_bounds", &spec.lower_bounds},
                                      std::pair{"upper_bounds", &spec.upper_bounds}}) {
        if (!j.contains(key)) continue;
        const Vector b = detail::get_vector(j, key, "model");
        if (b.size() != spec.dims.p) {
            throw ConfigError(std::string("model.") + key + ": expected " +
                              std::to_string(spec.dims.p) + " entries");
        }
        *target = b;
    }
    return spec;
}

inline OptimizerConfig optimizer_from_json(const json& j, Index p) {
    detail::check_keys(j, {"engine", "theta0", "step_rule", "direction", "gamma0", "beta", "slack",
                           "max_iters", "grad_tol_rel", "theta_tol", "max_step_rel",
                           "lower_bounds", "upper_bounds"},
                       "optimizer");
    OptimizerConfig c;
    c.engine = detail::get_engine(j, "engine", c.engine, "optimizer");
    c.theta0 = j.contains("theta0") ? detail::get_vector(j, "theta0", "optimizer")
                                    : Vector::Ones(p);

    const std::string rule = detail::get<std::string>(j, "step_rule", "backtracking", "optimizer");
    if (rule == "backtracking") c.step_rule = StepRule::backtracking;
    else if (rule == "fixed") c.step_rule = StepRule::fixed;
    else throw ConfigError("optimizer.step_rule: expected backtracking or fixed");

    const std::string dir = detail::get<std::string>(j, "direction", "steepest", "optimizer");
    if (dir == "steepest") c.direction = Direction::steepest;
    else if (dir == "bfgs") c.direction = Direction::bfgs;
    else throw ConfigError("optimizer.direction: expected steepest or bfgs");

    c.gamma0 = detail::get_number(j, "gamma0", c.gamma0, "optimizer");
    c.beta = detail::get_number(j, "beta", c.beta, "optimizer");
    c.slack = detail::get_number(j, "slack", c.slack, "optimizer");
    c.max_iters = static_cast<int>(detail::get_integer(j, "max_iters", c.max_iters, "optimizer"));
    c.grad_tol_rel = detail::get_number(j, "grad_tol_rel", c.grad_tol_rel, "optimizer");
    c.theta_tol = detail::get_number(j, "theta_tol", c.theta_tol, "optimizer");
    c.max_step_rel = detail::get_number(j, "max_step_rel", c.max_step_rel, "optimizer");
    c.lower_bounds = detail::get_vector(j, "lower_bounds", "optimizer");
    c.upper_bounds = detail::get_vector(j, "upper_bounds", "optimizer");
    try {
        c.validate(p);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

inline bench::SweepConfig sweep_from_json(const json& j, const json& optimizer) {
    detail::check_keys(j, {"deltas", "theta_true", "theta0", "samples", "replicates", "engines",
                           "base_seed", "conv_tol"},
                       "sweep");
    bench::SweepConfig c;
    if (j.contains("deltas")) {
        const Vector d = detail::get_vector(j, "deltas", "sweep");
        c.deltas.assign(d.data(), d.data() + d.size());
    }
    c.theta_true = detail::get_number(j, "theta_true", c.theta_true, "sweep");
    c.theta0 = detail::get_number(j, "theta0", c.theta0, "sweep");
    const long long samples = detail::get_integer(j, "samples", 1000, "sweep");
    if (samples < 1) throw ConfigError("sweep.samples: must be at least 1");
    c.samples = static_cast<std::size_t>(samples);
    c.replicates = static_cast<int>(detail::get_integer(j, "replicates", c.replicates, "sweep"));
    if (j.contains("engines")) {
        if (!j.at("engines").is_array()) throw ConfigError("sweep.engines: expected an array");
        c.engines.clear();
        for (const auto& e : j.at("engines")) {
            if (!e.is_string()) throw ConfigError("sweep.engines: expected engine names");
            try {
                c.engines.push_back(engine_from_string(e.get<std::string>()));
            } catch (const DomainError& err) {
                throw ConfigError(std::string("sweep.engines: ") + err.what());
            }
        }
    }
    const long long seed = detail::get_integer(j, "base_seed", 1, "sweep");
    if (seed < 0) throw ConfigError("sweep.base_seed: must be nonnegative");
    c.base_seed = static_cast<std::uint64_t>(seed);
    if (j.contains("conv_tol")) c.conv_tol = detail::get_number(j, "conv_tol", 0.0, "sweep");

    json opt = optimizer;
    opt.erase("engine");
    opt.erase("theta0");
    c.optimizer = optimizer_from_json(opt, 1);
    c.validate();
    return c;
}

// Top-level scalar fields shared by subcommands.
struct RunSettings {
    ThetaVector theta_true;
    std::size_t samples = 1000;
    std::uint64_t seed = 42;
};

inline RunSettings run_settings(const json& cfg, Index p) {
    RunSettings s;
    s.theta_true = cfg.contains("theta_true") ? io::vector_from_json(cfg.at("theta_true"), "theta_true")
                                              : Vector::Ones(p);
    if (s.theta_true.size() != p) {
        throw ConfigError("theta_true: expected " + std::to_string(p) + " entries");
    }
    const long long samples = detail::get_integer(cfg, "samples", 1000, "config");
    if (samples < 1) throw ConfigError("samples: must be at least 1 (got " + std::to_string(samples) + ")");
    s.samples = static_cast<std::size_t>(samples);
    const long long seed = detail::get_integer(cfg, "seed", 42, "config");
    if (seed < 0) throw ConfigError("seed: must be nonnegative");
    s.seed = static_cast<std::uint64_t>(seed);
    return s;
}

inline void check_top_level(const json& cfg) {
    detail::check_keys(cfg, {"model", "theta_true", "samples", "seed", "optimizer", "sweep",
                             "gradcheck"},
                       "config");
}

}  // namespace sraf::config
