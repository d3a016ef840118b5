// The associated random walk layer: path simulation, duality, renewal
// functions u and v, harmonic identities, boundary measures, the Baxter
// identity, and conditioned-walk samplers.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bpre/estimate.hpp"
#include "bpre/offspring_env.hpp"
#include "bpre/tilting.hpp"

namespace bpre {

// Realized path S_0..S_n with cached extrema and first-minimum index.
class WalkPath {
public:
    explicit WalkPath(std::vector<double> sums);
    static WalkPath from_increments(double start, const std::vector<double>& increments);

    std::size_t steps() const { return s_.size() - 1; } // n
    double s(std::size_t k) const { return s_[k]; }
    double start() const { return s_.front(); }
    double last() const { return s_.back(); }
    const std::vector<double>& sums() const { return s_; }

    double min_after_start() const { return lmin_; }  // L_n = min(S_1..S_n)
    double max_after_start() const { return mmax_; }  // M_n = max(S_1..S_n)
    // tau_n = min{ i <= n : S_i = min(S_0..S_n) }, ties broken by first index.
    std::size_t first_min_index() const { return tau_; }

    // Dual walk S'_i = S_n - S_{n-i}.  Requires S_0 = 0.
    WalkPath dual() const;

private:
    std::vector<double> s_;
    double lmin_ = 0.0, mmax_ = 0.0;
    std::size_t tau_ = 0;
};

WalkPath simulate_walk(const EnvironmentLaw& env, std::size_t n, double start,
                       RngStream& rng);

// ---------------------------------------------------------------------------
// Renewal functions
//
//   u(x) = 1 + sum_k P{-S_k <= x, M_k < 0},  x >= 0
//   v(x) = 1 + sum_k P{-S_k >  x, L_k >= 0}, x <= 0
//
// estimated on a grid by Monte Carlo with the series truncated at K and
// common random paths across k.  u(0) = v(0) = 1 exactly by construction.
// ---------------------------------------------------------------------------

struct RenewalTable {
    char side = 'u';          // 'u' (x >= 0) or 'v' (x <= 0)
    double dx = 0.25;
    std::vector<double> est;  // value at x = i*dx (u) or x = -i*dx (v)
    std::vector<double> se;
    std::vector<double> k_term;    // estimate of the k=K series term
    std::vector<double> tail_bar;  // truncation-bias bound per point
    unsigned K = 64;
    std::uint64_t reps = 0;
    bool truncation_warning = false; // some K-term > 10x pooled stderr

    double x_at(std::size_t i) const { return side == 'u' ? dx * double(i) : -dx * double(i); }
    std::size_t points() const { return est.size(); }
    bool in_range(double x) const;
    double at(double x) const;       // linear interpolation; exact at nodes
    double se_at(double x) const;
    double tail_bar_at(double x) const;
};

RenewalTable build_renewal_table(const EnvironmentLaw& tilted, char side,
                                 double xmax_abs, double dx, unsigned K,
                                 std::uint64_t reps, std::uint64_t seed, int workers);

struct RenewalEstimate {
    Estimate est;
    double k_term = 0.0;            // magnitude of the k=K term
    bool truncation_warning = false;
};

// Single-point estimates; x on the half-line matching the side.
RenewalEstimate renewal_u(const EnvironmentLaw& tilted, double x, unsigned K,
                          std::uint64_t reps, std::uint64_t seed, int workers = 1);
RenewalEstimate renewal_v(const EnvironmentLaw& tilted, double x, unsigned K,
                          std::uint64_t reps, std::uint64_t seed, int workers = 1);

// Harmonic identity E[u(x+X); x+X >= 0] = u(x) (or the v variant) evaluated
// from a renewal table.  The z-score combines the table's statistical errors
// with its truncation-bias bars.
struct HarmonicCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double z = 0.0;
};
HarmonicCheck harmonic_check(const EnvironmentLaw& tilted, double x,
                             const RenewalTable& table);

// Boundary measure mu_theta (from a u table) or nu_theta (from a v table):
// density c e^{-theta|z|} (u or v)(z) on the matching half-line, realized as
// trapezoid masses on the renewal grid.
struct BoundaryLaw {
    double theta = 1.0;
    char side = 'v';               // 'u' -> mu_theta, 'v' -> nu_theta
    double normalizer = 1.0;       // c1 or c2; 1/normalizer is the raw integral
    std::vector<double> z;         // grid nodes, native sign
    std::vector<double> mass;      // normalized masses, sum to 1
    double rel_se = 0.0;           // relative mass error, statistical part
    double rel_bar = 0.0;          // relative mass error, truncation part
    double rel_error = 0.0;        // rel_se + rel_bar

    // integral of f over the law; f receives z in native sign.
    double integrate(const std::function<double(double)>& f) const;
    double integral_error() const { return rel_error; } // relative mass error
};
BoundaryLaw make_boundary_law(double theta, const RenewalTable& table,
                              double density_floor = 1e-10);

// ---------------------------------------------------------------------------
// Estimators and identity checks
// ---------------------------------------------------------------------------

// P{L_n >= 0} under the ORIGINAL measure, estimated by importance sampling
// under the tilted law: gamma^n E**[e^{-beta S_n} 1{L_n >= 0}].
Estimate prob_min_nonneg(const EnvironmentLaw& env, const TiltSolution& sol,
                         std::uint64_t n, std::uint64_t reps, std::uint64_t seed,
                         int workers = 1);

// Truncated Baxter identity
//   1 + sum_{k<=K} t^k E[e^{theta S_k}; M_k < 0]
//     = exp( sum_{k<=K} t^k/k E[e^{theta S_k}; S_k < 0] )
// computed by exact enumeration when atoms^K fits the budget, otherwise by
// Monte Carlo with common paths.
struct BaxterCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool exact = false;
    std::uint64_t paths = 0;
};
BaxterCheck baxter_check(const EnvironmentLaw& tilted, double theta, double t,
                         unsigned K, std::uint64_t mc_reps = 1'000'000,
                         std::uint64_t seed = 1, int workers = 1);

enum class CondMode { StayNonneg, FirstMinAtEnd };

struct ConditionedWalkSample {
    std::vector<WalkPath> paths;
    std::vector<double> weights;   // all 1 for rejection; IS weights otherwise
    double acceptance_rate = 0.0;
    std::uint64_t proposals = 0;
    bool approximate = false;      // true for the u-table h-transform route
};

// Exact rejection sampler for the tilted walk conditioned on the mode event.
// Throws TimeoutError if the acceptance rate falls below min_acceptance.
ConditionedWalkSample sample_conditioned(const EnvironmentLaw& tilted, CondMode mode,
                                         std::size_t n, std::size_t count,
                                         std::uint64_t seed,
                                         double min_acceptance = 1e-6);

// Accelerated stay-nonneg sampler driven by the u-table h-transform kernel
// P+(x,dy) ~ P{x+X in dy} u(y) 1{y>=0}; importance weights correct for the
// estimated u.  Flagged approximate.
ConditionedWalkSample sample_conditioned_htransform(const EnvironmentLaw& tilted,
                                                    std::size_t n, std::size_t count,
                                                    const RenewalTable& u_table,
                                                    std::uint64_t seed);

// Conditional limit check (U = V = 1): for x >= 0,
//   E_x[phi(S_n) e^{-theta S_n}; L_n>=0] / E_x[e^{-theta S_n}; L_n>=0]
//     ->  integral of phi(-z) nu_theta(dz).
struct Pr2Row {
    std::uint64_t n = 0;
    double ratio = 0.0;
    double se = 0.0;
};
struct Pr2Check {
    std::vector<Pr2Row> rows;
    double rhs = 0.0;
    double rhs_error = 0.0;          // quadrature + truncation
    bool truncation_warning = false; // propagated from the v table
};
Pr2Check prop_pr2_check(const EnvironmentLaw& tilted, double theta,
                        const std::function<double(double)>& phi_fn,
                        const std::vector<std::uint64_t>& n_list, std::uint64_t reps,
                        const RenewalTable& v_table, std::uint64_t seed,
                        int workers = 1, double x = 0.0);

} // namespace bpre
