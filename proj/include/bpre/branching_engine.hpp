// Quenched generating-function calculus, population simulation, the three
// annealed survival estimators, and the conditioned-population sampler.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bpre/estimate.hpp"
#include "bpre/offspring_env.hpp"
#include "bpre/tilting.hpp"

namespace bpre {

// Everything quenched about one realized environment sequence: the walk
// S_0..S_n, per-step eta, and the backward survival probabilities
// h_k = P{Z_n > 0 | Z_k = 1, environment} (so q_hat = h_0).
struct QuenchedRecord {
    std::vector<std::uint32_t> atom_idx; // length n
    std::vector<double> s;               // S_0..S_n
    std::vector<double> eta;             // eta_i for i = 1..n
    std::vector<double> log_h;           // log h_k, k = 0..n (log_h[n] = 0)
    double q_hat = 0.0;                  // exp(log_h[0]); 0 if underflowed
    double log_q_hat = 0.0;
    bool underflow = false;              // q_hat < 1e-280
};

QuenchedRecord make_quenched(const EnvironmentLaw& env,
                             std::span<const std::uint32_t> seq);
void make_quenched_into(const EnvironmentLaw& env, std::span<const std::uint32_t> seq,
                        QuenchedRecord& out);

// Backward scalar recursion t <- f_k(t) from k = n down to 1; returns
// f_{0,n}(s).
double compose_pgf_backward(const EnvironmentLaw& env,
                            std::span<const std::uint32_t> seq, double s);

// log(1 - f_{0,n}(0)) via the survival-form recursion h_k = g_{k+1}(h_{k+1});
// stable arbitrarily far below double underflow.
double log_survival_backward(const EnvironmentLaw& env,
                             std::span<const std::uint32_t> seq);

// Closed evaluation for all-Geometric (linear-fractional) sequences:
// log q_hat = -logsumexp(-S_n, -S_0, ..., -S_{n-1}).
double log_survival_linear_fractional(const EnvironmentLaw& env,
                                      std::span<const std::uint32_t> seq);

struct SurvivalResult {
    double value = 0.0;     // q_hat (0 when underflowed)
    double log_value = 0.0; // always valid
    bool underflow = false; // value below 1e-280: use log_value
};

// Quenched survival q_hat_n.  For all-Geometric environments the
// linear-fractional closed form is cross-checked against the generic
// recursion (1e-12 relative) before returning.
SurvivalResult survival_quenched(const EnvironmentLaw& env,
                                 std::span<const std::uint32_t> seq);

struct PopulationPath {
    std::vector<std::uint64_t> z; // Z_0..Z_n (frozen at cap when censored)
    bool censored = false;        // some generation exceeded the cap
};

inline constexpr std::uint64_t kDefaultPopulationCap = 100'000'000;

PopulationPath simulate_population(const EnvironmentLaw& env,
                                   std::span<const std::uint32_t> seq, RngStream& rng,
                                   std::uint64_t cap = kDefaultPopulationCap);

enum class SurvivalMethod { Naive, QuenchedCond, TiltedIS };
const char* survival_method_name(SurvivalMethod m);

// Annealed survival probability P{Z_n > 0} by one of the three estimators.
Estimate estimate_survival(const EnvironmentLaw& env, const TiltSolution& sol,
                           std::uint64_t n, std::uint64_t reps, SurvivalMethod method,
                           std::uint64_t seed, int workers = 1);

// Checks of the composition inequalities on one environment sequence, all in
// log space: monotonicity of f_{k,0}(s)^{exp(-S_k)} in k, its floor
// s^{exp(-S_0)}, and the harmonic-sum lower bound on e^{-S_k}(1 - f_{k,0}(s)).
struct LemmaCheckResult {
    double worst_monotone = 0.0; // most negative a_{k+1} - a_k (scaled slack units)
    double worst_floor = 0.0;
    double worst_lower_bound = 0.0;
    std::size_t witness_k = 0;
    bool pass = true;
};
LemmaCheckResult lemma_checks(const EnvironmentLaw& env,
                              std::span<const std::uint32_t> seq, double s,
                              double slack = 1e-12);

struct CondOptions {
    double q_floor = 1e-9;          // environments with q_hat below are dropped
    std::uint64_t try_budget = 100'000; // per-environment proposal budget
    // Conditioned paths ride a supercritical stretch with Z_k ~ e^{S_k}; the
    // closed-form generation samplers never touch individuals, so the cap
    // only guards integer width.
    std::uint64_t cap = 1'000'000'000'000'000ULL;
};

// Per-replica summary of one conditioned draw (environment from the tilted
// law with weight gamma^n e^{-beta S_n} q_hat, then Z-path | Z_n > 0).
struct CondReplica {
    double weight = 0.0;
    std::uint64_t z_n = 0;
};

struct CondPopulationSample {
    std::vector<double> weights;
    std::vector<QuenchedRecord> records;
    std::vector<std::vector<std::uint64_t>> z_paths;
    double ess = 0.0;                  // (sum w)^2 / sum w^2
    double mean_weight = 0.0;          // equals the tilted-is survival estimate
    double dropped_weight_fraction = 0.0; // logged bias bound from the q-floor
    std::uint64_t proposals = 0;
    std::uint64_t accepted_steps = 0;
    bool ess_warning = false;          // ess < 0.01 * reps
};

// Weighted sample of (environment, Z-path) given Z_n > 0.  Environment draws
// use the "tilt-env" stream, so for a fixed seed the raw mean weight equals
// the tilted-is estimate replica for replica.
CondPopulationSample conditioned_population(const EnvironmentLaw& env,
                                            const TiltSolution& sol, std::uint64_t n,
                                            std::uint64_t reps, std::uint64_t seed,
                                            int workers = 1, const CondOptions& opt = {});

// Per-block weight bookkeeping.  Long-double sums match the accumulator used
// by estimate_survival, so the raw mean weight reproduces the tilted-is
// estimate bit for bit under the same seed.
struct CondStreamStats {
    long double sum_w = 0.0L, sum_w2 = 0.0L;
    long double dropped_w = 0.0L;
    std::uint64_t kept = 0, dropped = 0, proposals = 0;
    std::uint64_t reps = 0;

    void merge(const CondStreamStats& o) {
        sum_w += o.sum_w;
        sum_w2 += o.sum_w2;
        dropped_w += o.dropped_w;
        kept += o.kept;
        dropped += o.dropped;
        proposals += o.proposals;
        reps += o.reps;
    }
};

class CondReplicaDrawer {
public:
    CondReplicaDrawer(const EnvironmentLaw& env, const TiltSolution& sol,
                      std::uint64_t n, const CondOptions& opt);

    // Draws one environment + conditioned Z-path.  Returns false when the
    // replica was dropped (q_hat under the floor or budget exhausted); the
    // weight is accounted in stats either way.
    bool draw(RngStream& env_rng, RngStream& path_rng, CondStreamStats& stats);

    const QuenchedRecord& record() const { return rec_; }
    const std::vector<std::uint64_t>& z_path() const { return z_; }
    double weight() const { return weight_; }

private:
    const EnvironmentLaw& env_;
    EnvironmentLaw tilted_;
    std::uint64_t n_;
    CondOptions opt_;
    double log_gamma_n_;
    double beta_;
    QuenchedRecord rec_;
    std::vector<std::uint32_t> seq_;
    std::vector<std::uint64_t> z_;
    double weight_ = 0.0;
};

} // namespace bpre
