// Simulates the ill-conditioned three-state model, runs one filter pass with
// each engine, then estimates theta from theta0 = 1.

#include <iostream>

#include "sraf/estimator.hpp"

int main() {
    using namespace sraf;

    const ModelSpec spec = example3_spec(1e-3);
    const MeasurementLog data = simulate(spec, Vector::Constant(1, 5.0), 250, 7);

    const Vector theta = Vector::Constant(1, 2.0);
    for (Engine e : {Engine::conventional, Engine::esrcf, Engine::esrif}) {
        const NegLogLikelihood pi = evaluate_pi(spec, data, theta, e);
        std::cout << to_string(e) << ": mu(2) = " << pi.value
                  << ", dmu/dtheta = " << pi.gradient(0) << "\n";
    }

    OptimizerConfig opt;
    opt.engine = Engine::esrif;
    opt.theta0 = Vector::Constant(1, 1.0);
    const EstimationResult res = estimate(spec, data, opt);
    std::cout << "theta_hat = " << res.theta_hat(0) << " (" << to_string(res.termination)
              << ", " << res.iterations() << " iterations)\n";
}
