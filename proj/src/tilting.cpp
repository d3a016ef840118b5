#include "bpre/tilting.hpp"

#include <cmath>

#include "bpre/errors.hpp"
#include "bpre/oracle.hpp"
#include "bpre/randwalk.hpp"

namespace bpre {

double phi(const EnvironmentLaw& env, double beta) {
    double s = 0.0;
    for (std::size_t i = 0; i < env.size(); ++i) {
        const double x = env.log_mean(i);
        s += env.weight(i) * x * std::exp(beta * x);
    }
    return s;
}

double phi_derivative(const EnvironmentLaw& env, double beta) {
    double s = 0.0;
    for (std::size_t i = 0; i < env.size(); ++i) {
        const double x = env.log_mean(i);
        s += env.weight(i) * x * x * std::exp(beta * x);
    }
    return s;
}

TiltSolution solve_beta(const EnvironmentLaw& env, double tol) {
    double lo = 0.0, hi = 1.0;
    const double phi_lo = phi(env, lo);
    const double phi_hi = phi(env, hi);
    if (phi_lo >= 0.0)
        throw NotSubcriticalError("solve_beta: E[X] >= 0, process not subcritical");
    if (phi_hi <= 0.0)
        throw NoRootError("solve_beta: phi has no sign change on (0,1)");

    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        if (phi(env, mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    double beta = 0.5 * (lo + hi);
    // Newton polish; phi is smooth with phi' > 0.
    for (int it = 0; it < 8; ++it) {
        const double f = phi(env, beta);
        if (std::abs(f) <= tol) break;
        const double step = f / phi_derivative(env, beta);
        double next = beta - step;
        if (next <= 0.0 || next >= 1.0) break;
        beta = next;
    }

    TiltSolution sol;
    sol.beta = beta;
    sol.residual = std::abs(phi(env, beta));
    double gamma = 0.0;
    for (std::size_t i = 0; i < env.size(); ++i)
        gamma += env.weight(i) * std::exp(beta * env.log_mean(i));
    sol.gamma = gamma;
    sol.tilted_weights.reserve(env.size());
    for (std::size_t i = 0; i < env.size(); ++i)
        sol.tilted_weights.push_back(env.weight(i) * std::exp(beta * env.log_mean(i)) / gamma);
    return sol;
}

EnvironmentLaw tilted_env(const EnvironmentLaw& env, const TiltSolution& sol) {
    std::vector<EnvAtom> atoms;
    atoms.reserve(env.size());
    for (std::size_t i = 0; i < env.size(); ++i)
        atoms.push_back(EnvAtom{sol.tilted_weights[i], env.law(i)});
    return EnvironmentLaw(std::move(atoms));
}

CheckPair change_of_measure_check(const EnvironmentLaw& env, const TiltSolution& sol,
                                  unsigned n,
                                  const std::function<double(const WalkPath&)>& h) {
    const EnvironmentLaw tilted = tilted_env(env, sol);
    CheckPair out;
    out.lhs = exact_walk_functional(env, n, h).value;
    const double log_gamma_n = double(n) * std::log(sol.gamma);
    const double beta = sol.beta;
    out.rhs = exact_walk_functional(tilted, n, [&](const WalkPath& p) {
                  return h(p) * std::exp(log_gamma_n - beta * p.last());
              }).value;
    return out;
}

double StableNorm::a(double n) const { return sigma * std::pow(n, 1.0 / alpha); }

StableNorm StableNorm::gaussian(const EnvironmentLaw& tilted) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < tilted.size(); ++i) {
        const double x = tilted.log_mean(i);
        m1 += tilted.weight(i) * x;
        m2 += tilted.weight(i) * x * x;
    }
    StableNorm s;
    s.alpha = 2.0;
    s.sigma = std::sqrt(m2 - m1 * m1);
    s.s0 = 1.0 / std::sqrt(2.0 * M_PI);
    return s;
}

} // namespace bpre
