// Exact small-instance ground truth by full enumeration over environment
// sequences.  Deterministic: fixed lexicographic order, compensated
// long-double accumulation, fixed chunking merged in order (independent of
// worker count).
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bpre/offspring_env.hpp"

namespace bpre {

class WalkPath;

struct ExactResult {
    double value = 0.0;
    std::uint64_t sequences = 0;
};

// P{Z_n > 0} = E over environment sequences of 1 - f_{0,n}(0).
// Throws SizeLimitError if atoms^n > 2e7.
ExactResult exact_survival(const EnvironmentLaw& env, unsigned n, int workers = 1);

// Exact sum over sequences of weight * f(walk path).  Budget atoms^n <= 2e7.
ExactResult exact_walk_functional(const EnvironmentLaw& env, unsigned n,
                                  const std::function<double(const WalkPath&)>& f,
                                  int workers = 1);

// pmf of Z_n | Z_n > 0 for finite-support offspring laws, by per-sequence DP
// over the population size capped at zmax.  pmf[j] = P{Z_n = j | Z_n > 0}.
// Throws TailMassError if the truncated mass exceeds tail_tol.
std::vector<double> exact_conditional_pmf(const EnvironmentLaw& env, unsigned n,
                                          std::size_t zmax, double tail_tol = 1e-12,
                                          double* tail_mass_out = nullptr);

} // namespace bpre
