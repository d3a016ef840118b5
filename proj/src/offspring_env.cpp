#include "bpre/offspring_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace bpre {

namespace {
constexpr double kProbSumTol = 1e-12;
constexpr double kTailCut = 1e-14;   // relative tail mass cut for infinite sums
constexpr std::size_t kMaxExplicitSupport = 65; // counts 0..64
} // namespace

OffspringLaw::OffspringLaw(OffspringKind k, double p, std::vector<double> probs)
    : kind_(k), param_(p), probs_(std::move(probs)) {
    switch (kind_) {
    case OffspringKind::Geometric:
        mean_ = (1.0 - param_) / param_;
        log_mean_ = std::log1p(-param_) - std::log(param_);
        break;
    case OffspringKind::Poisson:
        mean_ = param_;
        log_mean_ = std::log(param_);
        break;
    case OffspringKind::Binary:
        mean_ = 2.0 * param_;
        log_mean_ = std::log(2.0 * param_);
        break;
    case OffspringKind::Explicit: {
        double m = 0.0;
        for (std::size_t k2 = 0; k2 < probs_.size(); ++k2) m += double(k2) * probs_[k2];
        mean_ = m;
        log_mean_ = std::log(m);
        break;
    }
    }
}

OffspringLaw OffspringLaw::geometric(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("geometric: p must be in (0,1)");
    return OffspringLaw(OffspringKind::Geometric, p, {});
}

OffspringLaw OffspringLaw::poisson(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("poisson: lambda must be positive and finite");
    return OffspringLaw(OffspringKind::Poisson, lambda, {});
}

OffspringLaw OffspringLaw::binary(double p) {
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("binary: p must be in (0,1]");
    return OffspringLaw(OffspringKind::Binary, p, {});
}

OffspringLaw OffspringLaw::explicit_pmf(std::vector<double> probs) {
    if (probs.empty() || probs.size() > kMaxExplicitSupport)
        throw std::invalid_argument("explicit: support must be 0..K with K <= 64");
    double sum = 0.0;
    for (double q : probs) {
        if (!(q >= 0.0)) throw std::invalid_argument("explicit: negative probability");
        sum += q;
    }
    if (std::abs(sum - 1.0) > kProbSumTol)
        throw std::invalid_argument("explicit: probabilities must sum to 1 within 1e-12");
    if (probs[0] / sum >= 1.0 - 1e-15)
        throw std::invalid_argument("explicit: all mass at 0");
    for (double& q : probs) q /= sum;
    OffspringLaw law(OffspringKind::Explicit, 0.0, std::move(probs));
    if (!(law.mean() > 0.0)) throw std::invalid_argument("explicit: mean must be positive");
    return law;
}

double OffspringLaw::pgf(double s) const {
    if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("pgf: s must be in [0,1]");
    switch (kind_) {
    case OffspringKind::Geometric:
        return param_ / (1.0 - (1.0 - param_) * s);
    case OffspringKind::Poisson:
        return std::exp(param_ * (s - 1.0));
    case OffspringKind::Binary:
        return 1.0 - param_ + param_ * s * s;
    case OffspringKind::Explicit: {
        // Horner evaluation of the probability polynomial.
        double acc = 0.0;
        for (std::size_t k = probs_.size(); k-- > 0;) acc = acc * s + probs_[k];
        return acc;
    }
    }
    return 0.0;
}

double OffspringLaw::survival_pgf(double h) const {
    switch (kind_) {
    case OffspringKind::Geometric: {
        const double q = 1.0 - param_;
        return q * h / (param_ + q * h);
    }
    case OffspringKind::Poisson:
        return -std::expm1(-param_ * h);
    case OffspringKind::Binary:
        return param_ * h * (2.0 - h);
    case OffspringKind::Explicit: {
        // 1 - sum q_k (1-h)^k = h * sum_k q_k * (1 + (1-h) + ... + (1-h)^{k-1}),
        // all terms positive.
        const double t = 1.0 - h;
        double geom = 0.0; // 1 + t + ... + t^{k-1}
        double tk = 1.0;   // t^k
        double acc = 0.0;
        for (std::size_t k = 0; k < probs_.size(); ++k) {
            acc += probs_[k] * geom;
            geom += tk;
            tk *= t;
        }
        return h * acc;
    }
    }
    return 0.0;
}

double OffspringLaw::log_survival_pgf(double log_h) const {
    // For h representable the direct form is exact; the branches below only
    // matter once h underflows double.
    switch (kind_) {
    case OffspringKind::Geometric: {
        const double h = std::exp(log_h);
        return std::log1p(-param_) + log_h - std::log(param_ + (1.0 - param_) * h);
    }
    case OffspringKind::Poisson: {
        const double h = std::exp(log_h);
        const double u = param_ * h;
        if (u > 1e-8) return std::log(-std::expm1(-u));
        // log(1 - e^{-u}) = log(u) + log(1 - u/2 + u^2/6 - ...)
        return std::log(param_) + log_h + std::log1p(-u / 2.0 + u * u / 6.0);
    }
    case OffspringKind::Binary: {
        const double h = std::exp(log_h);
        return std::log(param_) + log_h + std::log(2.0 - h);
    }
    case OffspringKind::Explicit: {
        const double h = std::exp(log_h);
        const double t = 1.0 - h;
        double geom = 0.0, tk = 1.0, acc = 0.0;
        for (std::size_t k = 0; k < probs_.size(); ++k) {
            acc += probs_[k] * geom;
            geom += tk;
            tk *= t;
        }
        return log_h + std::log(acc);
    }
    }
    return -INFINITY;
}

double OffspringLaw::mean() const { return mean_; }
double OffspringLaw::log_mean() const { return log_mean_; }

double OffspringLaw::eta() const {
    double fact2 = 0.0; // E[Y(Y-1)]
    switch (kind_) {
    case OffspringKind::Geometric:
        fact2 = 2.0 * mean_ * mean_;
        break;
    case OffspringKind::Poisson:
        fact2 = param_ * param_;
        break;
    case OffspringKind::Binary:
        fact2 = 2.0 * param_;
        break;
    case OffspringKind::Explicit:
        for (std::size_t k = 2; k < probs_.size(); ++k)
            fact2 += double(k) * double(k - 1) * probs_[k];
        break;
    }
    return fact2 / (mean_ * mean_);
}

double OffspringLaw::zeta(unsigned a) const {
    if (a < 1) throw std::invalid_argument("zeta: a must be >= 1");
    const double m2 = mean_ * mean_;
    switch (kind_) {
    case OffspringKind::Geometric: {
        // sum_{y>=a} y^2 x^y with x = 1-p, via shifted standard sums.
        const double x = 1.0 - param_;
        const double omx = param_; // 1-x
        const double s0 = 1.0 / omx;
        const double s1 = x / (omx * omx);
        const double s2 = x * (1.0 + x) / (omx * omx * omx);
        const double xa = std::pow(x, double(a));
        const double tail = xa * (s2 + 2.0 * double(a) * s1 + double(a) * double(a) * s0);
        return param_ * tail / m2;
    }
    case OffspringKind::Poisson: {
        // Direct tail sum; terms eventually decay factorially.
        double term = std::exp(double(a) * std::log(param_) - param_ - std::lgamma(double(a) + 1.0));
        double sum = 0.0;
        double y = double(a);
        while (true) {
            const double add = y * y * term;
            sum += add;
            term *= param_ / (y + 1.0);
            y += 1.0;
            if (y > param_ && (y * y * term) < kTailCut * (sum + 1e-300)) break;
        }
        return sum / m2;
    }
    case OffspringKind::Binary:
        return a <= 2 ? 4.0 * param_ / m2 : 0.0;
    case OffspringKind::Explicit: {
        double sum = 0.0;
        for (std::size_t k = a; k < probs_.size(); ++k)
            sum += double(k) * double(k) * probs_[k];
        return sum / m2;
    }
    }
    return 0.0;
}

double OffspringLaw::pmf(std::uint64_t k) const {
    switch (kind_) {
    case OffspringKind::Geometric:
        return param_ * std::exp(double(k) * std::log1p(-param_));
    case OffspringKind::Poisson:
        return std::exp(double(k) * std::log(param_) - param_ - std::lgamma(double(k) + 1.0));
    case OffspringKind::Binary:
        if (k == 0) return 1.0 - param_;
        if (k == 2) return param_;
        return 0.0;
    case OffspringKind::Explicit:
        return k < probs_.size() ? probs_[k] : 0.0;
    }
    return 0.0;
}

std::uint64_t OffspringLaw::max_support() const {
    switch (kind_) {
    case OffspringKind::Binary:
        return 2;
    case OffspringKind::Explicit:
        return probs_.size() - 1;
    default:
        return UINT64_MAX;
    }
}

std::uint64_t OffspringLaw::sample(RngStream& rng) const {
    switch (kind_) {
    case OffspringKind::Geometric: {
        // Inversion: P{Y >= k} = (1-p)^k.
        const double u = rng.uniform_pos();
        return static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-param_)));
    }
    case OffspringKind::Poisson: {
        std::poisson_distribution<std::uint64_t> d(param_);
        return d(rng.engine());
    }
    case OffspringKind::Binary:
        return rng.uniform() < param_ ? 2 : 0;
    case OffspringKind::Explicit: {
        double u = rng.uniform();
        double c = 0.0;
        for (std::size_t k = 0; k < probs_.size(); ++k) {
            c += probs_[k];
            if (u < c) return k;
        }
        return probs_.size() - 1;
    }
    }
    return 0;
}

std::uint64_t OffspringLaw::sample_sum(std::uint64_t z, RngStream& rng) const {
    if (z == 0) return 0;
    if (z == 1) return sample(rng);
    switch (kind_) {
    case OffspringKind::Geometric: {
        // NegBinomial(z, p) as a gamma-Poisson mixture.
        std::gamma_distribution<double> g(double(z), (1.0 - param_) / param_);
        const double lambda = g(rng.engine());
        std::poisson_distribution<std::uint64_t> d(lambda);
        return d(rng.engine());
    }
    case OffspringKind::Poisson: {
        std::poisson_distribution<std::uint64_t> d(param_ * double(z));
        return d(rng.engine());
    }
    case OffspringKind::Binary: {
        std::binomial_distribution<std::uint64_t> d(z, param_);
        return 2 * d(rng.engine());
    }
    case OffspringKind::Explicit: {
        // Multinomial via sequential binomials.
        std::uint64_t remaining = z;
        double rest = 1.0;
        std::uint64_t total = 0;
        for (std::size_t k = 0; k < probs_.size() && remaining > 0; ++k) {
            if (k + 1 == probs_.size()) {
                total += k * remaining;
                break;
            }
            const double pk = probs_[k] / rest;
            std::uint64_t nk;
            if (pk >= 1.0) {
                nk = remaining;
            } else {
                std::binomial_distribution<std::uint64_t> d(remaining, pk);
                nk = d(rng.engine());
            }
            total += k * nk;
            remaining -= nk;
            rest -= probs_[k];
        }
        return total;
    }
    }
    return 0;
}

nlohmann::json OffspringLaw::to_json() const {
    switch (kind_) {
    case OffspringKind::Geometric:
        return {{"kind", "geometric"}, {"p", param_}};
    case OffspringKind::Poisson:
        return {{"kind", "poisson"}, {"lambda", param_}};
    case OffspringKind::Binary:
        return {{"kind", "binary"}, {"p", param_}};
    case OffspringKind::Explicit:
        return {{"kind", "explicit"}, {"probs", probs_}};
    }
    return {};
}

OffspringLaw OffspringLaw::from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "geometric") return geometric(j.at("p").get<double>());
    if (kind == "poisson") return poisson(j.at("lambda").get<double>());
    if (kind == "binary") return binary(j.at("p").get<double>());
    if (kind == "explicit") return explicit_pmf(j.at("probs").get<std::vector<double>>());
    throw std::invalid_argument("unknown offspring law kind: " + kind);
}

EnvironmentLaw::EnvironmentLaw(std::vector<EnvAtom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw std::invalid_argument("environment: no atoms");
    double sum = 0.0;
    for (const auto& a : atoms_) {
        if (!(a.weight > 0.0)) throw std::invalid_argument("environment: weights must be positive");
        sum += a.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("environment: weights must sum to 1 within 1e-9");
    cum_.reserve(atoms_.size());
    log_means_.reserve(atoms_.size());
    double c = 0.0;
    for (auto& a : atoms_) {
        a.weight /= sum;
        c += a.weight;
        cum_.push_back(c);
        log_means_.push_back(a.law.log_mean());
    }
    cum_.back() = 1.0;
}

std::uint32_t EnvironmentLaw::sample_index(RngStream& rng) const {
    const double u = rng.uniform();
    for (std::size_t i = 0; i + 1 < cum_.size(); ++i)
        if (u < cum_[i]) return static_cast<std::uint32_t>(i);
    return static_cast<std::uint32_t>(cum_.size() - 1);
}

void EnvironmentLaw::sample_indices(std::span<std::uint32_t> out, RngStream& rng) const {
    for (auto& v : out) v = sample_index(rng);
}

double EnvironmentLaw::mean_offspring_mean() const {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.weight * a.law.mean();
    return m;
}

bool EnvironmentLaw::all_geometric() const {
    return std::all_of(atoms_.begin(), atoms_.end(), [](const EnvAtom& a) {
        return a.law.kind() == OffspringKind::Geometric;
    });
}

bool EnvironmentLaw::is_lattice(double tol) const {
    // Floating gcd of the |X_i|; lattice if a common span above tol remains.
    double g = 0.0;
    for (double x : log_means_) {
        double a = std::abs(x);
        if (a < tol) continue;
        if (g == 0.0) {
            g = a;
            continue;
        }
        double b = a;
        while (b > tol) {
            const double r = std::fmod(g, b);
            g = b;
            b = r;
        }
    }
    return g > 1e-6;
}

nlohmann::json EnvironmentLaw::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : atoms_)
        arr.push_back({{"weight", a.weight}, {"law", a.law.to_json()}});
    return {{"atoms", arr}};
}

EnvironmentLaw EnvironmentLaw::from_json(const nlohmann::json& j) {
    std::vector<EnvAtom> atoms;
    for (const auto& item : j.at("atoms")) {
        atoms.push_back(EnvAtom{item.at("weight").get<double>(),
                                OffspringLaw::from_json(item.at("law"))});
    }
    return EnvironmentLaw(std::move(atoms));
}

EnvironmentLaw EnvironmentLaw::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open environment file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

MomentReport assumption_report(const EnvironmentLaw& env, unsigned a, double alpha) {
    MomentReport r;
    r.a = a;
    r.alpha = alpha;
    r.mean_x = 0.0;
    r.phi_at_0 = 0.0;
    r.phi_at_1 = 0.0;
    for (std::size_t i = 0; i < env.size(); ++i) {
        const double x = env.log_mean(i);
        r.atoms.push_back(AtomMoments{x, env.law(i).eta(), env.law(i).zeta(a)});
        r.mean_x += env.weight(i) * x;
        r.phi_at_0 += env.weight(i) * x;
        r.phi_at_1 += env.weight(i) * x * std::exp(x);
    }
    r.a1_feasible = r.phi_at_0 < 0.0 && r.phi_at_1 > 0.0;
    // Finite support implies all moments of log+ zeta(a) are finite.
    r.a3_finite = true;
    return r;
}

} // namespace bpre
