#include "bpre/branching_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "bpre/errors.hpp"
#include "bpre/parallel.hpp"

namespace bpre {

namespace {
constexpr double kUnderflowFloor = 1e-280;
// Below this h the linear recursion switches to log form.
constexpr double kLinearFloor = 1e-250;
// Inverse-cdf scan limit for the conditioned next-generation draw.
constexpr std::uint64_t kScanMax = 64;

double elapsed_ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}
} // namespace

double compose_pgf_backward(const EnvironmentLaw& env,
                            std::span<const std::uint32_t> seq, double s) {
    if (!(s >= 0.0 && s <= 1.0))
        throw std::domain_error("compose_pgf_backward: s must be in [0,1]");
    double t = s;
    for (std::size_t i = seq.size(); i-- > 0;) t = env.law(seq[i]).pgf(t);
    return t;
}

double log_survival_backward(const EnvironmentLaw& env,
                             std::span<const std::uint32_t> seq) {
    double h = 1.0;
    bool log_mode = false;
    double lh = 0.0;
    for (std::size_t i = seq.size(); i-- > 0;) {
        const OffspringLaw& law = env.law(seq[i]);
        if (!log_mode) {
            h = law.survival_pgf(h);
            if (h < kLinearFloor) {
                log_mode = true;
                lh = std::log(h);
            }
        } else {
            lh = law.log_survival_pgf(lh);
        }
    }
    return log_mode ? lh : std::log(h);
}

double log_survival_linear_fractional(const EnvironmentLaw& env,
                                      std::span<const std::uint32_t> seq) {
    if (!env.all_geometric())
        throw std::invalid_argument("linear-fractional survival needs all-Geometric atoms");
    // 1/q_hat = e^{-S_n} + sum_{k=0}^{n-1} e^{-S_k}
    const std::size_t n = seq.size();
    std::vector<double> neg_s(n + 1);
    neg_s[0] = 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        s += env.log_mean(seq[k]);
        neg_s[k + 1] = -s;
    }
    double mx = neg_s[n];
    for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, neg_s[k]);
    double acc = 0.0;
    for (std::size_t k = 0; k <= n; ++k) acc += std::exp(neg_s[k] - mx);
    return -(mx + std::log(acc));
}

SurvivalResult survival_quenched(const EnvironmentLaw& env,
                                 std::span<const std::uint32_t> seq) {
    SurvivalResult out;
    out.log_value = log_survival_backward(env, seq);
    if (env.all_geometric()) {
        const double lf = log_survival_linear_fractional(env, seq);
        if (out.log_value > std::log(1e-250)) {
            const double tol = 1e-12 + 1e-15 * std::abs(out.log_value);
            if (std::abs(lf - out.log_value) > tol)
                throw std::logic_error(
                    "survival_quenched: linear-fractional and generic paths disagree");
        }
        out.log_value = lf;
    }
    out.underflow = out.log_value < std::log(kUnderflowFloor);
    out.value = out.underflow ? 0.0 : std::exp(out.log_value);
    return out;
}

void make_quenched_into(const EnvironmentLaw& env, std::span<const std::uint32_t> seq,
                        QuenchedRecord& r) {
    const std::size_t n = seq.size();
    r.atom_idx.assign(seq.begin(), seq.end());
    r.s.resize(n + 1);
    r.eta.resize(n);
    r.s[0] = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        r.s[k + 1] = r.s[k] + env.log_mean(seq[k]);
        r.eta[k] = env.law(seq[k]).eta();
    }
    r.log_h.resize(n + 1);
    r.log_h[n] = 0.0;
    for (std::size_t k = n; k-- > 0;)
        r.log_h[k] = env.law(seq[k]).log_survival_pgf(r.log_h[k + 1]);
    r.log_q_hat = r.log_h[0];
    r.underflow = r.log_q_hat < std::log(kUnderflowFloor);
    r.q_hat = r.underflow ? 0.0 : std::exp(r.log_q_hat);
}

QuenchedRecord make_quenched(const EnvironmentLaw& env,
                             std::span<const std::uint32_t> seq) {
    QuenchedRecord r;
    make_quenched_into(env, seq, r);
    return r;
}

PopulationPath simulate_population(const EnvironmentLaw& env,
                                   std::span<const std::uint32_t> seq, RngStream& rng,
                                   std::uint64_t cap) {
    if (cap < 1) throw std::invalid_argument("simulate_population: cap >= 1 required");
    PopulationPath p;
    p.z.resize(seq.size() + 1);
    p.z[0] = 1;
    std::uint64_t z = 1;
    for (std::size_t k = 0; k < seq.size(); ++k) {
        if (z == 0) {
            p.z[k + 1] = 0;
            continue;
        }
        z = env.law(seq[k]).sample_sum(z, rng);
        if (z > cap) {
            p.censored = true;
            z = cap;
            for (std::size_t j = k + 1; j < p.z.size(); ++j) p.z[j] = cap;
            break;
        }
        p.z[k + 1] = z;
    }
    return p;
}

const char* survival_method_name(SurvivalMethod m) {
    switch (m) {
    case SurvivalMethod::Naive:
        return "naive";
    case SurvivalMethod::QuenchedCond:
        return "quenched-cond";
    case SurvivalMethod::TiltedIS:
        return "tilted-is";
    }
    return "?";
}

Estimate estimate_survival(const EnvironmentLaw& env, const TiltSolution& sol,
                           std::uint64_t n, std::uint64_t reps, SurvivalMethod method,
                           std::uint64_t seed, int workers) {
    const auto t0 = std::chrono::steady_clock::now();
    Estimate out;
    out.method = survival_method_name(method);
    out.reps = reps;
    if (n == 0) {
        out.value = 1.0;
        return out;
    }

    std::vector<MeanAccumulator> acc(num_blocks(reps));
    if (method == SurvivalMethod::Naive) {
        run_blocks(reps, workers, [&](BlockRange br) {
            RngStream rng = RngStream::derived(seed, "surv-naive", br.index);
            MeanAccumulator& a = acc[br.index];
            for (std::uint64_t r = br.begin; r < br.end; ++r) {
                std::uint64_t z = 1;
                for (std::uint64_t k = 0; k < n && z > 0; ++k) {
                    const auto& law = env.law(env.sample_index(rng));
                    z = law.sample_sum(z, rng);
                    if (z > kDefaultPopulationCap) z = kDefaultPopulationCap;
                }
                a.add(z > 0 ? 1.0 : 0.0);
            }
        });
    } else if (method == SurvivalMethod::QuenchedCond) {
        run_blocks(reps, workers, [&](BlockRange br) {
            RngStream rng = RngStream::derived(seed, "surv-quenched", br.index);
            MeanAccumulator& a = acc[br.index];
            std::vector<std::uint32_t> seq(n);
            for (std::uint64_t r = br.begin; r < br.end; ++r) {
                env.sample_indices(seq, rng);
                a.add(std::exp(log_survival_backward(env, seq)));
            }
        });
    } else {
        const EnvironmentLaw tilted = tilted_env(env, sol);
        const double log_gamma_n = double(n) * std::log(sol.gamma);
        const double beta = sol.beta;
        run_blocks(reps, workers, [&](BlockRange br) {
            RngStream rng = RngStream::derived(seed, "tilt-env", br.index);
            MeanAccumulator& a = acc[br.index];
            std::vector<std::uint32_t> seq(n);
            for (std::uint64_t r = br.begin; r < br.end; ++r) {
                double s = 0.0;
                for (std::uint64_t k = 0; k < n; ++k) {
                    seq[k] = tilted.sample_index(rng);
                    s += tilted.log_mean(seq[k]);
                }
                const double logq = log_survival_backward(env, seq);
                a.add(std::exp(log_gamma_n - beta * s + logq));
            }
        });
    }
    MeanAccumulator total;
    for (const auto& a : acc) total.merge(a);
    out.value = total.mean();
    out.se = total.stderr_of_mean();
    out.elapsed_ms = elapsed_ms_since(t0);
    return out;
}

LemmaCheckResult lemma_checks(const EnvironmentLaw& env,
                              std::span<const std::uint32_t> seq, double s,
                              double slack) {
    if (!(s > 0.0 && s < 1.0)) throw std::domain_error("lemma_checks: s in (0,1)");
    LemmaCheckResult out;
    const std::size_t n = seq.size();

    // Forward composition t_k = f_k(t_{k-1}) kept as h_k = 1 - t_k in mixed
    // linear/log form.  Work with b_k = log(-log t_k) - S_k: the sequence
    // t_k^{exp(-S_k)} is non-decreasing iff b_k is non-increasing.
    double h = 1.0 - s;
    bool log_mode = false;
    double lh = std::log(h);
    double S = 0.0;
    const double floor_rhs = std::log(-std::log(s)); // b_k <= this, since S_0 = 0
    // running logsumexp for the harmonic-sum lower bound
    double lse = -std::log1p(-s); // log(1/(1-s))
    double prev_b = INFINITY;     // b_0 would be log(-log s); sequence starts at k=1

    auto note = [&](double& worst, double violation, std::size_t k) {
        if (violation > worst) {
            worst = violation;
            out.witness_k = k;
        }
    };

    for (std::size_t k = 1; k <= n; ++k) {
        const OffspringLaw& law = env.law(seq[k - 1]);
        if (!log_mode) {
            h = law.survival_pgf(h);
            if (h < kLinearFloor) {
                log_mode = true;
                lh = std::log(h);
            }
        } else {
            lh = law.log_survival_pgf(lh);
        }
        if (!log_mode) lh = std::log(h);
        S += env.log_mean(seq[k - 1]);

        // b_k = log(-log t_k) - S_k; for tiny h,
        // -log t = h (1 + h/2 + O(h^2)), and the second-order term keeps the
        // comparison accurate to O(h^2), well inside the slack.
        double llog;
        if (!log_mode && h > 1e-10)
            llog = std::log(-std::log1p(-h));
        else
            llog = lh + std::log1p(0.5 * std::exp(lh));
        const double b = llog - S;

        if (k == 1) {
            prev_b = std::log(-std::log(s)); // b_0
        }
        // monotone: b_k <= b_{k-1}
        note(out.worst_monotone, (b - prev_b) / std::max(1.0, std::abs(prev_b)), k);
        // floor: b_k <= log(-log s)
        note(out.worst_floor, (b - floor_rhs) / std::max(1.0, std::abs(floor_rhs)), k);
        prev_b = b;

        // harmonic-sum lower bound: lh - S >= -lse_k
        const double eta = law.eta();
        if (eta > 0.0) {
            const double term = std::log(eta) + S;
            const double mx = std::max(lse, term);
            lse = mx + std::log(std::exp(lse - mx) + std::exp(term - mx));
        }
        note(out.worst_lower_bound, (-lse - (lh - S)) / std::max(1.0, std::abs(lse)), k);
    }
    out.pass = out.worst_monotone <= slack && out.worst_floor <= slack &&
               out.worst_lower_bound <= slack;
    return out;
}

// ---------------------------------------------------------------------------
// Conditioned population sampler
// ---------------------------------------------------------------------------

CondReplicaDrawer::CondReplicaDrawer(const EnvironmentLaw& env, const TiltSolution& sol,
                                     std::uint64_t n, const CondOptions& opt)
    : env_(env), tilted_(tilted_env(env, sol)), n_(n), opt_(opt),
      log_gamma_n_(double(n) * std::log(sol.gamma)), beta_(sol.beta) {
    seq_.resize(n);
    z_.resize(n + 1);
}

namespace {

// Poisson(u) conditioned on >= 1, by inversion; u stays O(1) where this is
// called.
std::uint64_t sample_positive_poisson(double u, RngStream& rng) {
    const double denom = -std::expm1(-u);
    const double pick = rng.uniform() * denom * (1.0 - 1e-12);
    double term = std::exp(-u);
    double c = 0.0;
    std::uint64_t m = 0;
    for (;;) {
        ++m;
        term *= u / double(m);
        c += term;
        if (c >= pick || m > 1000) return m;
    }
}

// One conditioned generation step: draw Z_{k+1} = j | Z_k = z, survival to n,
// i.e. j with law proportional to q^{*z}(j) * (1 - (1-h_next)^j).
//
// Healthy regime (the conditioning barely bites): plain rejection with the
// closed-form convolution sampler.  Rare-survival regime: exact thinned
// samplers built from the mixture form of the convolution, so the expected
// cost stays O(1) however small h gets.  Returns false when the try budget
// is exhausted (Explicit laws with large z only).
bool draw_next_generation(const OffspringLaw& law, std::uint64_t z, double log_h_cur,
                          double log_h_next, RngStream& rng, std::uint64_t& budget,
                          std::uint64_t& proposals, std::uint64_t& out_j) {
    const double h_next = std::exp(log_h_next);
    const double l1p_next = h_next < 1.0 ? std::log1p(-h_next) : -INFINITY;

    if (law.kind() == OffspringKind::Binary && law.param() == 1.0) {
        // deterministic doubling
        ++proposals;
        out_j = 2 * z;
        return true;
    }

    // acceptance of plain rejection = P{survive | Z_k = z} = 1 - (1-h_cur)^z
    const double h_cur = std::exp(log_h_cur);
    const double accept_plain =
        h_cur < 1.0 ? -std::expm1(double(z) * std::log1p(-h_cur)) : 1.0;

    if (accept_plain >= 0.3 ||
        (law.kind() == OffspringKind::Explicit && z > kScanMax)) {
        while (budget > 0) {
            --budget;
            ++proposals;
            const std::uint64_t j = law.sample_sum(z, rng);
            if (j == 0) continue;
            if (rng.uniform() < -std::expm1(double(j) * l1p_next)) {
                out_j = j;
                return true;
            }
        }
        return false;
    }

    switch (law.kind()) {
    case OffspringKind::Poisson: {
        // Thinning: j = marked + unmarked with marked ~ Poisson(mu h) | >= 1
        // and unmarked ~ Poisson(mu (1-h)); no rejection at all.
        ++proposals;
        const double mu = double(z) * law.param();
        const std::uint64_t marked = sample_positive_poisson(mu * h_next, rng);
        std::poisson_distribution<std::uint64_t> d(mu * (1.0 - h_next));
        out_j = marked + d(rng.engine());
        return true;
    }
    case OffspringKind::Geometric: {
        // NB(z,p) = Poisson(Gamma(z, (1-p)/p)).  Draw the mixing variable
        // from its size-biased law Gamma(z+1, .), accept with
        // (1-e^{-Gh})/(Gh) <= 1 to realize the (1-e^{-Gh}) tilt, then thin.
        const double scale = (1.0 - law.param()) / law.param();
        while (budget > 0) {
            --budget;
            ++proposals;
            std::gamma_distribution<double> g(double(z) + 1.0, scale);
            const double G = g(rng.engine());
            const double u = G * h_next;
            const double acc = u > 1e-8 ? -std::expm1(-u) / u : 1.0 - 0.5 * u;
            if (rng.uniform() >= acc) continue;
            const std::uint64_t marked = sample_positive_poisson(u, rng);
            std::poisson_distribution<std::uint64_t> d(G * (1.0 - h_next));
            out_j = marked + d(rng.engine());
            return true;
        }
        return false;
    }
    case OffspringKind::Binary: {
        // j = 2B with B ~ Binomial(z,p) tilted by (1-(1-h)^{2B}); propose the
        // size-biased B = 1 + Binomial(z-1,p), accept with tilt/(2Bh) <= 1.
        const double p = law.param();
        while (budget > 0) {
            --budget;
            ++proposals;
            std::uint64_t b = 1;
            if (z > 1) {
                std::binomial_distribution<std::uint64_t> d(z - 1, p);
                b += d(rng.engine());
            }
            const double tilt = -std::expm1(double(2 * b) * l1p_next);
            const double acc = tilt / (2.0 * double(b) * h_next);
            if (rng.uniform() < acc) {
                out_j = 2 * b;
                return true;
            }
        }
        return false;
    }
    case OffspringKind::Explicit: {
        // z <= kScanMax here: exact inverse-cdf over the z-fold convolution,
        // built iteratively from the law's pmf.
        const double norm = accept_plain;
        const double pick = rng.uniform() * norm * (1.0 - 1e-12);
        // conv = q^{*z} computed by repeated convolution
        const std::size_t sup = static_cast<std::size_t>(law.max_support());
        std::vector<double> conv(z * sup + 1, 0.0), tmp;
        conv[0] = 1.0;
        std::size_t cur = 0;
        for (std::uint64_t r = 0; r < z; ++r) {
            tmp.assign(cur + sup + 1, 0.0);
            for (std::size_t x = 0; x <= cur; ++x) {
                if (conv[x] == 0.0) continue;
                for (std::size_t y = 0; y <= sup; ++y) tmp[x + y] += conv[x] * law.pmf(y);
            }
            cur += sup;
            conv.swap(tmp);
        }
        double c = 0.0;
        for (std::size_t j = 1; j <= cur; ++j) {
            c += conv[j] * (-std::expm1(double(j) * l1p_next));
            if (c >= pick) {
                out_j = j;
                ++proposals;
                return true;
            }
        }
        out_j = cur;
        ++proposals;
        return true;
    }
    }
    return false;
}

} // namespace

bool CondReplicaDrawer::draw(RngStream& env_rng, RngStream& path_rng,
                             CondStreamStats& stats) {
    // Environment stage: same stream layout as estimate_survival(tilted-is),
    // so the raw mean weight reproduces that estimate draw for draw.
    for (std::uint64_t k = 0; k < n_; ++k) seq_[k] = tilted_.sample_index(env_rng);
    make_quenched_into(env_, seq_, rec_);
    weight_ = std::exp(log_gamma_n_ - beta_ * rec_.s[n_] + rec_.log_q_hat);
    stats.sum_w += weight_;
    stats.sum_w2 += static_cast<long double>(weight_) * weight_;
    ++stats.reps;

    if (rec_.log_q_hat < std::log(opt_.q_floor)) {
        stats.dropped_w += weight_;
        ++stats.dropped;
        return false;
    }
    // conditioned transitions need representable survival probabilities
    for (std::uint64_t k = 0; k <= n_; ++k) {
        if (rec_.log_h[k] < -700.0) {
            stats.dropped_w += weight_;
            ++stats.dropped;
            return false;
        }
    }

    std::uint64_t budget = opt_.try_budget;
    std::uint64_t z = 1;
    z_[0] = 1;
    for (std::uint64_t k = 0; k < n_; ++k) {
        std::uint64_t next = 0;
        if (!draw_next_generation(env_.law(seq_[k]), z, rec_.log_h[k], rec_.log_h[k + 1],
                                  path_rng, budget, stats.proposals, next)) {
            stats.dropped_w += weight_;
            ++stats.dropped;
            return false;
        }
        if (next > opt_.cap) { // conditioned supercritical stretch blew the cap
            stats.dropped_w += weight_;
            ++stats.dropped;
            return false;
        }
        z = next;
        z_[k + 1] = z;
    }
    ++stats.kept;
    return true;
}

CondPopulationSample conditioned_population(const EnvironmentLaw& env,
                                            const TiltSolution& sol, std::uint64_t n,
                                            std::uint64_t reps, std::uint64_t seed,
                                            int workers, const CondOptions& opt) {
    struct Block {
        std::vector<double> weights;
        std::vector<QuenchedRecord> records;
        std::vector<std::vector<std::uint64_t>> z_paths;
        CondStreamStats stats;
    };
    std::vector<Block> blocks(num_blocks(reps));
    run_blocks(reps, workers, [&](BlockRange br) {
        RngStream env_rng = RngStream::derived(seed, "tilt-env", br.index);
        RngStream path_rng = RngStream::derived(seed, "cond-z", br.index);
        CondReplicaDrawer drawer(env, sol, n, opt);
        Block& blk = blocks[br.index];
        for (std::uint64_t r = br.begin; r < br.end; ++r) {
            if (drawer.draw(env_rng, path_rng, blk.stats)) {
                blk.weights.push_back(drawer.weight());
                blk.records.push_back(drawer.record());
                blk.z_paths.push_back(drawer.z_path());
            }
        }
    });

    CondPopulationSample out;
    CondStreamStats stats;
    for (auto& blk : blocks) {
        stats.merge(blk.stats);
        for (auto& w : blk.weights) out.weights.push_back(w);
        for (auto& rec : blk.records) out.records.push_back(std::move(rec));
        for (auto& zp : blk.z_paths) out.z_paths.push_back(std::move(zp));
    }
    out.proposals = stats.proposals;
    out.mean_weight = stats.reps ? static_cast<double>(stats.sum_w / stats.reps) : 0.0;
    out.dropped_weight_fraction =
        stats.sum_w > 0 ? static_cast<double>(stats.dropped_w / stats.sum_w) : 0.0;
    double kept_w = 0.0, kept_w2 = 0.0;
    for (double w : out.weights) {
        kept_w += w;
        kept_w2 += w * w;
    }
    out.ess = kept_w2 > 0 ? kept_w * kept_w / kept_w2 : 0.0;
    out.ess_warning = out.ess < 0.01 * double(reps);
    return out;
}

} // namespace bpre
