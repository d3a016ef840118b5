// Desk-scale reproduction of the limit theorems: estimate tables across n,
// stabilization diagnostics, and machine-checkable verdicts.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bpre/branching_engine.hpp"
#include "bpre/offspring_env.hpp"
#include "bpre/randwalk.hpp"
#include "bpre/tilting.hpp"

namespace bpre {

struct TableRow {
    double n = 0;
    double stat = 0;
    double se = 0;
};

struct ConvergenceTable {
    std::string name;
    std::vector<TableRow> rows;
    // relative change across the last two rows
    double stabilization() const;
};

struct Check {
    std::string name;
    double statistic = 0;
    double threshold = 0;
    bool pass = false;
    std::string details;
};

struct LimitConstants {
    double kappa = 0.0;
    double kappa_se = 0.0;
};

// Theorem 1: r_n = P{Z_n>0} / P{L_n >= 0} with shared environment streams.
struct Theorem1Result {
    ConvergenceTable table; // r_n
    LimitConstants constants;
    std::vector<Check> checks;
};
Theorem1Result theorem1_ratio(const EnvironmentLaw& env, const TiltSolution& sol,
                              const std::vector<std::uint64_t>& n_list,
                              std::uint64_t reps, std::uint64_t seed, int workers,
                              double stab_threshold = 0.10);

// Corollary: c_n = P{Z_n>0} n a_n gamma^{-n}, evaluated replica-wise in log
// space so gamma^{-n} never materializes.  Also tabulates
// d_n = P{L_n>=0} n a_n gamma^{-n} for the kappa'/kappa cross-check.
struct CorollaryResult {
    ConvergenceTable table;     // c_n
    ConvergenceTable min_table; // d_n
    LimitConstants constants;   // kappa' from the largest n
    bool lattice_warning = false;
    std::vector<Check> checks;
};
CorollaryResult corollary_scaling(const EnvironmentLaw& env, const TiltSolution& sol,
                                  const StableNorm& stable,
                                  const std::vector<std::uint64_t>& n_list,
                                  std::uint64_t reps, std::uint64_t seed, int workers,
                                  double stab_threshold = 0.15,
                                  const LimitConstants* kappa_th1 = nullptr);

// Theorem 2: weighted conditional pmfs of Z_n | Z_n > 0, TV distances along
// the n-list, and the theta-moment boundedness diagnostic.
struct Theorem2Result {
    ConvergenceTable tv_table;     // (n_i, TV(pmf_{i-1}, pmf_i))
    ConvergenceTable moment_table; // E[Z_n^theta | Z_n > 0]
    double theta = 0.0;
    std::vector<double> ess;                  // per n
    double dropped_weight_bound = 0.0;        // max over n
    std::vector<Check> checks;
};
Theorem2Result theorem2_conditional(const EnvironmentLaw& env, const TiltSolution& sol,
                                    const std::vector<std::uint64_t>& n_list,
                                    std::uint64_t reps, double theta,
                                    std::uint64_t seed, int workers,
                                    const CondOptions& opt = {});

// Weighted empirical pmf of Z_n | Z_n > 0 (index = population size).
std::vector<double> conditional_pmf_mc(const EnvironmentLaw& env,
                                       const TiltSolution& sol, std::uint64_t n,
                                       std::uint64_t reps, std::uint64_t seed,
                                       int workers, std::size_t zmax,
                                       const CondOptions& opt = {});

double total_variation(const std::vector<double>& a, const std::vector<double>& b);

// Mass regrouped on bins {0},{1},{2},{3,4},{5..8},...  The TV progression
// along n uses binned pmfs: raw empirical TV on an unbounded support has a
// noise floor set by the sample size, not by the distributions.
std::vector<double> dyadic_binned(const std::vector<double>& pmf);

// Theorem 3: flatness of Y_t^n = exp(-S_k) Z_k over k in [r_n, n - r_n].
struct Theorem3Result {
    ConvergenceTable median_table; // median of D_n / max(Y_0, eps)
    ConvergenceTable q90_table;
    ConvergenceTable w_low_table;  // P{Y_{1/2} < delta}
    ConvergenceTable w_high_table; // P{Y_{1/2} > 1/delta}
    std::vector<double> ess;
    std::vector<Check> checks;
};
Theorem3Result theorem3_flatness(const EnvironmentLaw& env, const TiltSolution& sol,
                                 const std::vector<std::uint64_t>& n_list,
                                 std::uint64_t reps, std::uint64_t seed, int workers,
                                 double r_exponent = 0.25, double delta = 1e-3,
                                 const CondOptions& opt = {});

// Large-deviation shape: n a_n E_x[e^{-theta S_n}; L_n >= 0] under the tilted
// law against s0 u(x) * integral of e^{-theta z} v(-z) dz.
struct Prop21Result {
    std::vector<double> x_grid;
    std::vector<ConvergenceTable> tables; // one per x
    std::vector<double> rhs;              // per x
    std::vector<double> rhs_se;           // statistical part
    std::vector<double> rhs_bar;          // truncation part
    std::vector<Check> checks;
};
Prop21Result prop21_table(const EnvironmentLaw& tilted, double theta,
                          const std::vector<double>& x_grid,
                          const std::vector<std::uint64_t>& n_list, std::uint64_t reps,
                          const RenewalTable& u_table, const RenewalTable& v_table,
                          const StableNorm& stable, std::uint64_t seed, int workers,
                          double stab_threshold = 0.15);

} // namespace bpre
