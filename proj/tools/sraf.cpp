// Command-line front end: simulate, estimate, verify-lemmas, benchmark, gradcheck.
//
// Exit codes: 0 success, 1 a check did not pass, 2 usage or configuration
// error, 3 domain or data error, 4 internal error.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sraf/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sraf;

namespace {

constexpr int exit_check_failed = 1;
constexpr int exit_config = 2;
constexpr int exit_domain = 3;
constexpr int exit_internal = 4;

struct Common {
    std::string config_path;
    std::string out;
    std::string data;
    std::string engine;
    std::vector<std::string> sets;
    long long seed = -1;
    long long samples = -1;
    int replicates = -1;
    std::string deltas;
    bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "JSON configuration file");
    cmd->add_option("--set", c.sets, "Override a config value, key.path=value (repeatable)");
    cmd->add_option("--seed", c.seed, "Random seed");
    cmd->add_flag("--verbose,-v", c.verbose, "Progress on stderr");
}

// Applies file, --set overrides, then dedicated flags, in that order.
json effective_config(const Common& c) {
    json cfg = config::load(c.config_path);
    for (const auto& s : c.sets) config::apply_override(cfg, s);
    if (c.seed >= 0) {
        cfg["seed"] = c.seed;
        cfg["sweep"]["base_seed"] = c.seed;
    }
    if (c.samples != -1) {
        cfg["samples"] = c.samples;
        cfg["sweep"]["samples"] = c.samples;
    }
    if (c.replicates != -1) cfg["sweep"]["replicates"] = c.replicates;
    if (!c.engine.empty()) cfg["optimizer"]["engine"] = c.engine;
    if (!c.deltas.empty()) {
        json d = json::array();
        std::string_view rest = c.deltas;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            try {
                d.push_back(io::parse_double(rest.substr(0, comma), "--deltas"));
            } catch (const DataError& e) {
                throw ConfigError(e.what());
            }
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        cfg["sweep"]["deltas"] = d;
    }
    config::check_top_level(cfg);
    return cfg;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string in_dir(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

MeasurementLog load_or_simulate(const Common& c, const ModelSpec& spec,
                                const config::RunSettings& run) {
    if (!c.data.empty()) return io::read_log(c.data);
    if (c.verbose) std::cerr << "no --data given; simulating " << run.samples << " samples\n";
    return simulate(spec, run.theta_true, run.samples, run.seed);
}

int cmd_simulate(const Common& c) {
    const json cfg = effective_config(c);
    const ModelSpec spec = config::model_from_json(cfg.at("model"));
    const auto run = config::run_settings(cfg, spec.dims.p);
    const MeasurementLog log = simulate(spec, run.theta_true, run.samples, run.seed);
    const json meta = io::run_metadata(cfg, run.seed);
    const std::string csv = io::log_to_csv(log, meta);
    if (c.out.empty()) {
        std::cout << csv;
        return 0;
    }
    io::write_file(c.out, csv);
    fs::path js(c.out);
    js.replace_extension(".json");
    io::write_file(js.string(), io::log_to_json(log, meta).dump(2) + "\n");
    if (c.verbose) std::cerr << "wrote " << c.out << " and " << js.string() << "\n";
    return 0;
}

int cmd_estimate(const Common& c) {
    const json cfg = effective_config(c);
    const ModelSpec spec = config::model_from_json(cfg.at("model"));
    const auto run = config::run_settings(cfg, spec.dims.p);
    const OptimizerConfig opt = config::optimizer_from_json(cfg.value("optimizer", json::object()),
                                                            spec.dims.p);
    const MeasurementLog data = load_or_simulate(c, spec, run);

    const EstimationResult res = estimate(spec, data, opt);
    const json meta = io::run_metadata(cfg, run.seed);
    const json result = io::result_to_json(res, opt.engine, meta);

    if (c.verbose) {
        std::cerr << "termination " << to_string(res.termination) << " after " << res.iterations()
                  << " iterations, " << res.evaluations << " evaluations ("
                  << res.failed_evaluations << " failed)\n";
    }
    if (c.out.empty()) {
        std::cout << result.dump(2) << "\n";
        return 0;
    }
    ensure_dir(c.out);
    io::write_file(in_dir(c.out, "result.json"), result.dump(2) + "\n");
    io::write_file(in_dir(c.out, "trace.csv"), io::trace_to_csv(res, meta));
    try {
        io::write_file(in_dir(c.out, "steps.csv"),
                       io::step_trace_to_csv(filter_outputs(spec, data, res.theta_hat, opt.engine), meta));
    } catch (const FilterFailure& f) {
        if (c.verbose) std::cerr << "no step trace: " << f.what() << "\n";
    }
    return 0;
}

void print_case(const bench::LemmaCaseReport& r) {
    std::cout << r.triangle << " triangular case\n";
    for (const auto& chk : r.checks) {
        std::cout << "  " << chk.name << " max |deviation| " << chk.max_abs_deviation << "\n";
    }
    std::cout << "  self-check norm " << r.self_check << "\n"
              << "  " << (r.passed() ? "PASS" : "FAIL") << "\n";
}

int cmd_verify(const Common& c) {
    const bench::LemmaReport rep = bench::verify_lemma_tables();
    print_case(rep.upper);
    print_case(rep.lower);
    if (!c.out.empty()) {
        ensure_dir(c.out);
        json j = bench::to_json(rep);
        j["metadata"] = io::run_metadata(json::object(), 0);
        io::write_file(in_dir(c.out, "lemmas.json"), j.dump(2) + "\n");
    }
    return rep.passed() ? 0 : exit_check_failed;
}

int cmd_benchmark(const Common& c) {
    const json cfg = effective_config(c);
    json sweep_json = cfg.value("sweep", json::object());
    if (!c.engine.empty()) sweep_json["engines"] = json::array({c.engine});
    const bench::SweepConfig sc =
        config::sweep_from_json(sweep_json, cfg.value("optimizer", json::object()));

    bench::SweepProgress progress;
    if (c.verbose) {
        progress = [](const bench::ReplicateOutcome& o) {
            std::cerr << "delta " << o.delta << " " << to_string(o.engine) << " replicate "
                      << o.replicate << ": theta " << o.theta_hat << " ("
                      << to_string(o.termination) << ")\n";
        };
    }
    const bench::SweepReport rep = bench::run_sweep(sc, progress);
    const json meta = io::run_metadata(cfg, sc.base_seed);

    std::cout << "delta,engine,runs,converged,filter_failures,success_rate\n";
    for (const auto& s : rep.summary) {
        std::cout << io::format_double(s.delta) << ',' << to_string(s.engine) << ',' << s.runs
                  << ',' << s.converged << ',' << s.filter_failures << ','
                  << io::format_double(s.success_rate()) << '\n';
    }
    if (!c.out.empty()) {
        ensure_dir(c.out);
        io::write_file(in_dir(c.out, "sweep.csv"), bench::report_to_csv(rep, meta));
        io::write_file(in_dir(c.out, "sweep_traces.csv"), bench::traces_to_csv(rep, meta));
        io::write_file(in_dir(c.out, "sweep.json"), bench::report_to_json(rep, meta).dump(2) + "\n");
    }
    return 0;
}

int cmd_gradcheck(const Common& c) {
    const json cfg = effective_config(c);
    const ModelSpec spec = config::model_from_json(cfg.at("model"));
    const auto run = config::run_settings(cfg, spec.dims.p);
    const json gc = cfg.value("gradcheck", json::object());
    config::detail::check_keys(gc, {"theta", "rel_tol"}, "gradcheck");
    const ThetaVector theta =
        gc.contains("theta") ? io::vector_from_json(gc.at("theta"), "gradcheck.theta") : run.theta_true;
    if (theta.size() != spec.dims.p) throw ConfigError("gradcheck.theta: wrong length");
    const double rel_tol = config::detail::get_number(gc, "rel_tol", 1e-4, "gradcheck");
    const MeasurementLog data = load_or_simulate(c, spec, run);

    std::vector<Engine> engines;
    if (!c.engine.empty()) engines.push_back(engine_from_string(c.engine));
    else engines = {Engine::conventional, Engine::esrcf, Engine::esrif};

    json report = json::array();
    double worst = 0.0;
    for (Engine e : engines) {
        if (e == Engine::esrif) require_engine_capability(spec, theta, e);
        const NegLogLikelihood pi = evaluate_pi(spec, data, theta, e);
        Vector fd(theta.size());
        for (Index i = 0; i < theta.size(); ++i) {
            const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                             std::max(1.0, std::abs(theta(i)));
            ThetaVector tp = theta, tm = theta;
            tp(i) += h;
            tm(i) -= h;
            fd(i) = (evaluate_pi(spec, data, tp, e, Sensitivity::off).value -
                     evaluate_pi(spec, data, tm, e, Sensitivity::off).value) /
                    (2.0 * h);
        }
        const double rel = (pi.gradient - fd).lpNorm<Eigen::Infinity>() /
                           std::max(fd.lpNorm<Eigen::Infinity>(), 1e-300);
        worst = std::max(worst, rel);
        std::cout << to_string(e) << " mu " << io::format_double(pi.value)
                  << " max relative gradient error " << rel << "\n";
        report.push_back({{"engine", to_string(e)},
                          {"mu", pi.value},
                          {"gradient", io::to_json(pi.gradient)},
                          {"finite_difference", io::to_json(fd)},
                          {"max_rel_error", rel}});
    }
    const bool ok = worst <= rel_tol;
    std::cout << (ok ? "PASS" : "FAIL") << " (tolerance " << rel_tol << ")\n";
    if (!c.out.empty()) {
        ensure_dir(c.out);
        const json j = {{"metadata", io::run_metadata(cfg, run.seed)},
                        {"theta", io::to_json(theta)},
                        {"engines", report},
                        {"rel_tol", rel_tol},
                        {"passed", ok}};
        io::write_file(in_dir(c.out, "gradcheck.json"), j.dump(2) + "\n");
    }
    return ok ? 0 : exit_check_failed;
}

int report_error(int code, std::string_view kind, const std::string& message) {
    const json line = {{"error", kind}, {"exit_code", code}, {"message", message}};
    std::cerr << line.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Square-root adaptive filtering: simulation, estimation and checks"};
    app.set_version_flag("--version", std::string(io::tool_version));
    app.require_subcommand(1);

    Common c;
    auto* sim = app.add_subcommand("simulate", "Simulate a measurement log");
    add_common(sim, c);
    sim->add_option("--samples", c.samples, "Number of measurements N");
    sim->add_option("--out", c.out, "Output CSV path (JSON copy written alongside)");

    auto* est = app.add_subcommand("estimate", "Maximum-likelihood parameter estimation");
    add_common(est, c);
    est->add_option("--data", c.data, "Measurement log (CSV or JSON); simulated when omitted");
    est->add_option("--engine", c.engine, "conventional, esrcf or esrif");
    est->add_option("--samples", c.samples, "N when simulating");
    est->add_option("--out", c.out, "Output directory (result.json, trace.csv, steps.csv)");

    auto* ver = app.add_subcommand("verify-lemmas", "Check post-array derivatives against reference tables");
    ver->add_option("--out", c.out, "Output directory (lemmas.json)");
    ver->add_flag("--verbose,-v", c.verbose, "Progress on stderr");

    auto* bm = app.add_subcommand("benchmark", "Monte Carlo ill-conditioning sweep");
    add_common(bm, c);
    bm->add_option("--engine", c.engine, "Restrict the sweep to one engine");
    bm->add_option("--replicates", c.replicates, "Replicates per delta");
    bm->add_option("--samples", c.samples, "Measurements per replicate");
    bm->add_option("--deltas", c.deltas, "Comma-separated delta values");
    bm->add_option("--out", c.out, "Output directory (sweep.csv, sweep_traces.csv, sweep.json)");

    auto* gc = app.add_subcommand("gradcheck", "Compare analytic likelihood gradients with finite differences");
    add_common(gc, c);
    gc->add_option("--data", c.data, "Measurement log; simulated when omitted");
    gc->add_option("--engine", c.engine, "Single engine (default: all three)");
    gc->add_option("--samples", c.samples, "N when simulating");
    gc->add_option("--out", c.out, "Output directory (gradcheck.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    try {
        if (*sim) return cmd_simulate(c);
        if (*est) return cmd_estimate(c);
        if (*ver) return cmd_verify(c);
        if (*bm) return cmd_benchmark(c);
        if (*gc) return cmd_gradcheck(c);
    } catch (const ConfigError& e) {
        return report_error(exit_config, "config", e.what());
    } catch (const IoError& e) {
        return report_error(exit_config, "io", e.what());
    } catch (const sraf::Error& e) {
        return report_error(exit_domain, "domain", e.what());
    } catch (const std::exception& e) {
        return report_error(exit_internal, "internal", e.what());
    }
    return exit_internal;
}
