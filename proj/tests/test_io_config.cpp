#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "sraf/config.hpp"
#include "sraf/io.hpp"

using namespace sraf;
using nlohmann::json;

namespace {

Vector theta1(double t) { return Vector::Constant(1, t); }

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("sraf_test_" + name)).string();
}

}  // namespace

TEST(Numbers, ShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 5.0, 0.0}) {
        EXPECT_EQ(io::parse_double(io::format_double(v), "v"), v);
    }
    EXPECT_EQ(io::format_double(0.1), "0.1");
    EXPECT_EQ(io::parse_double(" 2.5\r", "v"), 2.5);
    EXPECT_THROW(io::parse_double("abc", "v"), DataError);
    EXPECT_THROW(io::parse_double("1.0x", "v"), DataError);
}

TEST(Metadata, HashIsStableAndSensitive) {
    const json a = config::default_config();
    json b = a;
    EXPECT_EQ(io::config_hash(a), io::config_hash(b));
    EXPECT_EQ(io::config_hash(a).size(), 16u);
    b["seed"] = 43;
    EXPECT_NE(io::config_hash(a), io::config_hash(b));
    const json meta = io::run_metadata(a, 7);
    EXPECT_EQ(meta["seed"], 7);
    EXPECT_EQ(meta["tool_version"], std::string(io::tool_version));
    EXPECT_EQ(meta["config_hash"], io::config_hash(a));
}

TEST(MeasurementCsv, RoundTripIsBitFaithful) {
    const ModelSpec spec = random_spec({3, 2, 2, 1, 1}, 6);
    std::vector<Vector> inputs(25, Vector::Constant(2, 1.0 / 7.0));
    const MeasurementLog log = simulate(spec, theta1(0.2), 25, 3, &inputs);
    const std::string text = io::log_to_csv(log, {{"config_hash", "abc"}});
    EXPECT_EQ(text.substr(0, 2), "# ");
    EXPECT_NE(text.find("k,z_1,z_2,u_1,u_2\n"), std::string::npos);

    const MeasurementLog back = io::log_from_csv(text);
    ASSERT_EQ(back.size(), log.size());
    EXPECT_EQ(back.m, 2);
    EXPECT_EQ(back.d, 2);
    for (std::size_t k = 0; k < log.size(); ++k) {
        EXPECT_EQ(back.z[k], log.z[k]);
        EXPECT_EQ(back.u[k], log.u[k]);
    }
    EXPECT_EQ(back.metadata["seed"], 3);
    EXPECT_EQ(back.metadata["config_hash"], "abc");
    EXPECT_EQ(io::log_to_csv(back), io::log_to_csv(log, {{"config_hash", "abc"}}));
}

TEST(MeasurementCsv, RejectsMalformedInput) {
    EXPECT_THROW(io::log_from_csv(""), DataError);
    EXPECT_THROW(io::log_from_csv("x,z_1\n1,2\n"), DataError);
    EXPECT_THROW(io::log_from_csv("k,u_1\n1,2\n"), DataError);
    EXPECT_THROW(io::log_from_csv("k,z_1\n1,2,3\n"), DataError);
    EXPECT_THROW(io::log_from_csv("k,z_1\n2,2\n"), DataError);
    EXPECT_THROW(io::log_from_csv("k,z_1\n1,nan?\n"), DataError);
    EXPECT_THROW(io::log_from_csv("k,z_2\n1,2\n"), DataError);
    const MeasurementLog ok = io::log_from_csv("k,z_1\r\n1,2\r\n\r\n2,3\r\n");
    EXPECT_EQ(ok.size(), 2u);
    EXPECT_EQ(ok.d, 0);
}

TEST(MeasurementJson, RoundTripAndFileDetection) {
    const MeasurementLog log = simulate(example3_spec(1e-3), theta1(5.0), 12, 4);
    const json j = io::log_to_json(log);
    const MeasurementLog back = io::log_from_json(json::parse(j.dump()));
    for (std::size_t k = 0; k < log.size(); ++k) EXPECT_EQ(back.z[k], log.z[k]);

    const std::string jpath = temp_path("log.json"), cpath = temp_path("log.csv");
    io::write_file(jpath, j.dump(2));
    io::write_file(cpath, io::log_to_csv(log));
    EXPECT_EQ(io::read_log(jpath).z, log.z);
    EXPECT_EQ(io::read_log(cpath).z, log.z);
    std::remove(jpath.c_str());
    std::remove(cpath.c_str());

    EXPECT_THROW(io::log_from_json(json{{"m", 1}}), DataError);
    EXPECT_THROW(io::read_log(temp_path("missing")), IoError);
}

TEST(Outputs, EstimationWritersHaveDocumentedColumns) {
    const ModelSpec spec = example3_spec(1e-2);
    const MeasurementLog data = simulate(spec, theta1(5.0), 50, 2);
    OptimizerConfig c;
    c.theta0 = theta1(1.0);
    const EstimationResult r = estimate(spec, data, c);
    const json meta = io::run_metadata(config::default_config(), 2);

    const json j = io::result_to_json(r, Engine::esrcf, meta);
    for (const char* key : {"metadata", "engine", "theta_hat", "termination", "iterations",
                            "evaluations", "mu", "gradient", "trace", "last_failure"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j["metadata"]["seed"], 2);

    const std::string trace = io::trace_to_csv(r, meta);
    EXPECT_NE(trace.find("\nn,theta_1,mu,gradnorm,gamma\n"), std::string::npos);
    EXPECT_NE(trace.find("# tool_version="), std::string::npos);

    const std::string steps = io::step_trace_to_csv(filter_outputs(spec, data, r.theta_hat, Engine::esrcf));
    EXPECT_EQ(steps.substr(0, steps.find('\n')), "k,e_1,e_2,re_1,re_2,xhat_1,xhat_2,xhat_3");

    const NegLogLikelihood pi =
        evaluate_pi(spec, data, r.theta_hat, Engine::esrcf, Sensitivity::on, nullptr, true);
    const std::string pis = io::pi_trace_to_csv(pi);
    EXPECT_EQ(pis.substr(0, pis.find('\n')), "k,mu_increment,grad_increment_1");
}

TEST(Config, DefaultsParse) {
    const json cfg = config::default_config();
    config::check_top_level(cfg);
    const ModelSpec spec = config::model_from_json(cfg["model"]);
    EXPECT_EQ(spec.family, "example3");
    const OptimizerConfig opt = config::optimizer_from_json(cfg["optimizer"], spec.dims.p);
    EXPECT_EQ(opt.engine, Engine::esrcf);
    EXPECT_EQ(opt.theta0(0), 1.0);
    EXPECT_EQ(opt.max_iters, 200);
    const auto run = config::run_settings(cfg, 1);
    EXPECT_EQ(run.samples, 1000u);
    EXPECT_EQ(run.seed, 42u);
    const bench::SweepConfig sweep = config::sweep_from_json(cfg["sweep"], cfg["optimizer"]);
    EXPECT_EQ(sweep.replicates, 100);
    EXPECT_EQ(sweep.deltas.size(), 3u);
}

TEST(Config, OverridesApplyAfterFile) {
    const std::string path = temp_path("cfg.json");
    io::write_file(path, R"({"model": {"delta": 0.001}, "samples": 10})");
    json cfg = config::load(path);
    std::remove(path.c_str());
    EXPECT_EQ(cfg["model"]["delta"], 0.001);
    EXPECT_EQ(cfg["model"]["family"], "example3");
    EXPECT_EQ(cfg["samples"], 10);

    config::apply_override(cfg, "samples=20");
    config::apply_override(cfg, "optimizer.engine=esrif");
    config::apply_override(cfg, "optimizer.theta0=[2]");
    config::apply_override(cfg, "sweep.deltas=[0.1]");
    EXPECT_EQ(cfg["samples"], 20);
    EXPECT_EQ(cfg["optimizer"]["engine"], "esrif");
    EXPECT_EQ(config::optimizer_from_json(cfg["optimizer"], 1).theta0(0), 2.0);
    EXPECT_EQ(config::sweep_from_json(cfg["sweep"], cfg["optimizer"]).deltas,
              std::vector<double>{0.1});

    EXPECT_THROW(config::apply_override(cfg, "novalue"), ConfigError);
    EXPECT_THROW(config::apply_override(cfg, "=1"), ConfigError);
    EXPECT_THROW(config::apply_override(cfg, "samples.x=1"), ConfigError);
    EXPECT_THROW(config::apply_override(cfg, "a..b=1"), ConfigError);
}

TEST(Config, RejectsInvalidValues) {
    json cfg = config::default_config();
    cfg["bogus"] = 1;
    EXPECT_THROW(config::check_top_level(cfg), ConfigError);

    EXPECT_THROW(config::model_from_json({{"family", "nope"}}), ConfigError);
    EXPECT_THROW(config::model_from_json({{"family", "example3"}, {"delta", 0}}), ConfigError);
    EXPECT_THROW(config::model_from_json({{"family", "example3"}, {"extra", 1}}), ConfigError);
    EXPECT_THROW(config::model_from_json({{"family", "random"}, {"n", 0}}), ConfigError);
    EXPECT_THROW(config::model_from_json({{"derivatives", "magic"}}), ConfigError);
    EXPECT_THROW(config::model_from_json({{"lower_bounds", json::array({1, 2})}}), ConfigError);

    EXPECT_THROW(config::optimizer_from_json({{"engine", "nope"}}, 1), ConfigError);
    EXPECT_THROW(config::optimizer_from_json({{"beta", 2}}, 1), ConfigError);
    EXPECT_THROW(config::optimizer_from_json({{"theta0", json::array({1, 2})}}, 1), ConfigError);
    EXPECT_THROW(config::optimizer_from_json({{"direction", "newton"}}, 1), ConfigError);
    EXPECT_THROW(config::optimizer_from_json({{"max_iters", "many"}}, 1), ConfigError);

    EXPECT_THROW(config::sweep_from_json({{"replicates", 0}}, json::object()), ConfigError);
    EXPECT_THROW(config::sweep_from_json({{"deltas", json::array({-1})}}, json::object()), ConfigError);
    EXPECT_THROW(config::sweep_from_json({{"engines", json::array({"x"})}}, json::object()), ConfigError);

    cfg = config::default_config();
    cfg["samples"] = 0;
    EXPECT_THROW(config::run_settings(cfg, 1), ConfigError);
    cfg["samples"] = 10;
    cfg["theta_true"] = json::array({1, 2});
    EXPECT_THROW(config::run_settings(cfg, 1), ConfigError);

    const std::string path = temp_path("bad.json");
    io::write_file(path, "{ not json");
    EXPECT_THROW(config::load(path), ConfigError);
    io::write_file(path, "[1, 2]");
    EXPECT_THROW(config::load(path), ConfigError);
    std::remove(path.c_str());
    EXPECT_THROW(config::load(temp_path("absent.json")), IoError);
}

TEST(Config, RandomFamilyAndDerivativeMode) {
    const ModelSpec spec = config::model_from_json(
        {{"family", "random"}, {"n", 3}, {"p", 2}, {"seed", 9}, {"derivatives", "finite_difference"}});
    EXPECT_EQ(spec.dims.n, 3);
    EXPECT_EQ(spec.dims.p, 2);
    EXPECT_EQ(spec.mode, DerivativeMode::finite_difference);
    EXPECT_NO_THROW(evaluate(spec, Vector::Zero(2)));
}
