// Exponential change of measure: the tilt parameter beta solving
// E[X e^{beta X}] = 0, the decay rate gamma = E[e^{beta X}], and the tilted
// environment law under which the associated walk is driftless.
#pragma once

#include <functional>
#include <vector>

#include "bpre/offspring_env.hpp"

namespace bpre {

class WalkPath;

struct TiltSolution {
    double beta = 0.0;                  // in (0,1)
    double gamma = 0.0;                 // E[e^{beta X}] < 1
    std::vector<double> tilted_weights; // w_i e^{beta X_i} / gamma
    double residual = 0.0;              // |phi(beta)| achieved
};

// phi(beta) = sum_i w_i X_i e^{beta X_i}; strictly increasing in beta.
double phi(const EnvironmentLaw& env, double beta);
double phi_derivative(const EnvironmentLaw& env, double beta);

// Bracketed bisection on [0,1] to width 1e-13 plus a Newton polish.
// Throws NotSubcriticalError if phi(0) >= 0, NoRootError if phi(1) <= 0.
TiltSolution solve_beta(const EnvironmentLaw& env, double tol = 1e-12);

// Same atoms, weights replaced by the tilted weights.
EnvironmentLaw tilted_env(const EnvironmentLaw& env, const TiltSolution& sol);

struct CheckPair {
    double lhs = 0.0;
    double rhs = 0.0;
};

// Exact-enumeration check of E_P[h] = gamma^n E**[h e^{-beta S_n}] for a
// bounded path functional h.  Throws SizeLimitError if atoms^n > 1e7.
CheckPair change_of_measure_check(const EnvironmentLaw& env, const TiltSolution& sol,
                                  unsigned n,
                                  const std::function<double(const WalkPath&)>& h);

// Normalizing sequence a_n = sigma n^{1/alpha} with b_n = 1/(a_n n) and the
// limiting stable density at 0.  Only alpha = 2 is wired into defaults;
// callers supplying alpha < 2 must provide sigma and s0 themselves.
struct StableNorm {
    double alpha = 2.0;
    double sigma = 1.0;
    double s0 = 0.0;

    double a(double n) const;
    double b(double n) const { return 1.0 / (a(n) * n); }

    // alpha = 2: sigma = std dev of X under the tilted law, s0 = 1/sqrt(2 pi).
    static StableNorm gaussian(const EnvironmentLaw& tilted);
};

} // namespace bpre
