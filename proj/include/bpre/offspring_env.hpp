// Offspring distributions, their generating-function calculus, and the
// finite-atom environment law.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpre/rng.hpp"

namespace bpre {

enum class OffspringKind { Geometric, Poisson, Binary, Explicit };

// One offspring distribution q on {0,1,2,...}.
//
//   Geometric(p): q(k) = p(1-p)^k, mean (1-p)/p
//   Poisson(l):   mean l
//   Binary(p):    mass 1-p at 0 and p at 2
//   Explicit:     finite probability vector over counts 0..K, K <= 64
class OffspringLaw {
public:
    static OffspringLaw geometric(double p);
    static OffspringLaw poisson(double lambda);
    static OffspringLaw binary(double p);
    static OffspringLaw explicit_pmf(std::vector<double> probs);

    OffspringKind kind() const { return kind_; }
    double param() const { return param_; }
    const std::vector<double>& probs() const { return probs_; }

    // f(s) = sum_k s^k q(k), s in [0,1].  Throws std::domain_error outside.
    double pgf(double s) const;

    // g(h) = 1 - f(1-h), evaluated in a cancellation-free form per kind.
    // This is the survival transform: if h is the survival probability of
    // one child line, g(h) is the survival probability one generation up.
    double survival_pgf(double h) const;

    // log g(e^{log_h}); stable for log_h far below log(DBL_MIN).
    double log_survival_pgf(double log_h) const;

    double mean() const;        // m(q) = f'(1)
    double log_mean() const;    // X = log m(q)
    double eta() const;         // E[Y(Y-1)] / m^2
    double zeta(unsigned a) const; // sum_{y>=a} y^2 q(y) / m^2

    double pmf(std::uint64_t k) const;
    // Largest support point, or UINT64_MAX when the support is infinite.
    std::uint64_t max_support() const;

    std::uint64_t sample(RngStream& rng) const;
    // Sum of z i.i.d. draws, using the closed-form convolution law.
    std::uint64_t sample_sum(std::uint64_t z, RngStream& rng) const;

    nlohmann::json to_json() const;
    static OffspringLaw from_json(const nlohmann::json& j);

private:
    OffspringLaw(OffspringKind k, double p, std::vector<double> probs);

    OffspringKind kind_;
    double param_ = 0.0;          // p or lambda
    std::vector<double> probs_;   // Explicit only
    double mean_ = 0.0;
    double log_mean_ = 0.0;
};

struct EnvAtom {
    double weight;
    OffspringLaw law;
};

// Finite-atom law of the random offspring distribution Q.  Immutable after
// construction; safe to share across threads.
class EnvironmentLaw {
public:
    explicit EnvironmentLaw(std::vector<EnvAtom> atoms);

    std::size_t size() const { return atoms_.size(); }
    double weight(std::size_t i) const { return atoms_[i].weight; }
    const OffspringLaw& law(std::size_t i) const { return atoms_[i].law; }
    double log_mean(std::size_t i) const { return log_means_[i]; }
    const std::vector<double>& log_means() const { return log_means_; }

    std::uint32_t sample_index(RngStream& rng) const;
    void sample_indices(std::span<std::uint32_t> out, RngStream& rng) const;

    double mean_offspring_mean() const; // E[m(Q)]
    bool all_geometric() const;
    // True when the X_i lie on a common lattice (pairwise commensurable).
    bool is_lattice(double tol = 1e-9) const;

    nlohmann::json to_json() const;
    // Rejects weights not summing to 1 within 1e-9; stored weights are then
    // normalized exactly.
    static EnvironmentLaw from_json(const nlohmann::json& j);
    static EnvironmentLaw load(const std::string& path);

private:
    std::vector<EnvAtom> atoms_;
    std::vector<double> cum_;
    std::vector<double> log_means_;
};

struct AtomMoments {
    double x;       // log m(q_i)
    double eta;
    double zeta_a;
};

// Moment report plus A1/A3 feasibility flags.
struct MomentReport {
    std::vector<AtomMoments> atoms;
    double mean_x;       // E[X]
    double phi_at_0;     // E[X]
    double phi_at_1;     // E[X e^X]
    bool a1_feasible;    // sign change of phi on (0,1)
    bool a3_finite;      // always true for finite-atom environments
    unsigned a;
    double alpha;
};

MomentReport assumption_report(const EnvironmentLaw& env, unsigned a = 1,
                               double alpha = 2.0);

} // namespace bpre
