#include "bpre/randwalk.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "bpre/errors.hpp"
#include "bpre/parallel.hpp"

namespace bpre {

namespace {
constexpr double kNodeEps = 1e-9; // snap-to-node tolerance for grid events

double elapsed_ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}
} // namespace

WalkPath::WalkPath(std::vector<double> sums) : s_(std::move(sums)) {
    if (s_.empty()) throw std::invalid_argument("WalkPath: empty path");
    double lo = INFINITY, hi = -INFINITY;
    double glob = s_[0];
    tau_ = 0;
    for (std::size_t k = 1; k < s_.size(); ++k) {
        lo = std::min(lo, s_[k]);
        hi = std::max(hi, s_[k]);
        if (s_[k] < glob) { // strict: first index attaining the minimum
            glob = s_[k];
            tau_ = k;
        }
    }
    lmin_ = s_.size() > 1 ? lo : s_[0];
    mmax_ = s_.size() > 1 ? hi : s_[0];
}

WalkPath WalkPath::from_increments(double start, const std::vector<double>& increments) {
    std::vector<double> s(increments.size() + 1);
    s[0] = start;
    for (std::size_t k = 0; k < increments.size(); ++k) s[k + 1] = s[k] + increments[k];
    return WalkPath(std::move(s));
}

WalkPath WalkPath::dual() const {
    if (s_.front() != 0.0)
        throw std::invalid_argument("dual: path must start at 0");
    const std::size_t n = steps();
    std::vector<double> d(n + 1);
    for (std::size_t i = 0; i <= n; ++i) d[i] = s_[n] - s_[n - i];
    return WalkPath(std::move(d));
}

WalkPath simulate_walk(const EnvironmentLaw& env, std::size_t n, double start,
                       RngStream& rng) {
    std::vector<double> s(n + 1);
    s[0] = start;
    for (std::size_t k = 0; k < n; ++k)
        s[k + 1] = s[k] + env.log_mean(env.sample_index(rng));
    return WalkPath(std::move(s));
}

// ---------------------------------------------------------------------------
// Renewal tables
// ---------------------------------------------------------------------------

bool RenewalTable::in_range(double x) const {
    const double lo = side == 'u' ? 0.0 : -dx * double(points() - 1);
    const double hi = side == 'u' ? dx * double(points() - 1) : 0.0;
    return x >= lo - kNodeEps && x <= hi + kNodeEps;
}

namespace {
// fractional grid position of x within a table (0 .. points-1)
double grid_pos(const RenewalTable& t, double x) {
    return (t.side == 'u' ? x : -x) / t.dx;
}

double interp(const std::vector<double>& v, double pos) {
    if (pos <= 0.0) return v.front();
    const std::size_t i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    const double frac = pos - double(i);
    // snap to node when the query sits on one (lattice walks put jumps there)
    if (frac < kNodeEps) return v[i];
    if (frac > 1.0 - kNodeEps) return v[i + 1];
    return v[i] * (1.0 - frac) + v[i + 1] * frac;
}
} // namespace

double RenewalTable::at(double x) const {
    if (!in_range(x)) throw std::out_of_range("RenewalTable::at: x outside grid");
    return interp(est, grid_pos(*this, x));
}
double RenewalTable::se_at(double x) const {
    if (!in_range(x)) throw std::out_of_range("RenewalTable::se_at: x outside grid");
    return interp(se, grid_pos(*this, x));
}
double RenewalTable::tail_bar_at(double x) const {
    if (!in_range(x)) throw std::out_of_range("RenewalTable::tail_bar_at: x outside grid");
    return interp(tail_bar, grid_pos(*this, x));
}

namespace {
constexpr unsigned kTailWindow = 8; // trailing terms kept for the bias bar

struct RenewalBlock {
    std::vector<long double> sum, sumsq, sum_kterm;
    std::vector<std::vector<long double>> sum_tail; // [kTailWindow][points]
    std::uint64_t n = 0;

    explicit RenewalBlock(std::size_t pts)
        : sum(pts, 0.0L), sumsq(pts, 0.0L), sum_kterm(pts, 0.0L),
          sum_tail(kTailWindow, std::vector<long double>(pts, 0.0L)) {}

    void merge(const RenewalBlock& o) {
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += o.sum[i];
            sumsq[i] += o.sumsq[i];
            sum_kterm[i] += o.sum_kterm[i];
            for (unsigned w = 0; w < kTailWindow; ++w) sum_tail[w][i] += o.sum_tail[w][i];
        }
        n += o.n;
    }
};
} // namespace

RenewalTable build_renewal_table(const EnvironmentLaw& tilted, char side,
                                 double xmax_abs, double dx, unsigned K,
                                 std::uint64_t reps, std::uint64_t seed, int workers) {
    if (side != 'u' && side != 'v') throw std::invalid_argument("renewal side must be 'u' or 'v'");
    if (K < 1) throw std::invalid_argument("renewal: K >= 1 required");
    const std::size_t pts = static_cast<std::size_t>(std::floor(xmax_abs / dx + kNodeEps)) + 1;

    const std::uint64_t nblocks = num_blocks(reps);
    std::vector<RenewalBlock> blocks;
    blocks.reserve(nblocks);
    for (std::uint64_t b = 0; b < nblocks; ++b) blocks.emplace_back(pts);

    run_blocks(reps, workers, [&](BlockRange br) {
        RngStream rng = RngStream::derived(seed, side == 'u' ? "renewal-u" : "renewal-v",
                                           br.index);
        RenewalBlock& acc = blocks[br.index];
        std::vector<std::uint32_t> diff(pts + 1, 0), diff_k(pts + 1, 0);
        std::vector<std::vector<std::uint32_t>> diff_tail(
            kTailWindow, std::vector<std::uint32_t>(pts + 1, 0));
        for (std::uint64_t r = br.begin; r < br.end; ++r) {
            std::fill(diff.begin(), diff.end(), 0);
            std::fill(diff_k.begin(), diff_k.end(), 0);
            for (auto& d : diff_tail) std::fill(d.begin(), d.end(), 0);
            double s = 0.0;
            for (unsigned k = 1; k <= K; ++k) {
                s += tilted.log_mean(tilted.sample_index(rng));
                std::size_t imin;
                if (side == 'u') {
                    if (s >= 0.0) break; // M_k >= 0 from now on
                    const double pos = -s / dx;
                    const double ri = std::round(pos);
                    imin = std::abs(pos - ri) < kNodeEps
                               ? static_cast<std::size_t>(ri)
                               : static_cast<std::size_t>(std::ceil(pos));
                    // -S_k <= 0 cannot happen under M_k < 0; keep u(0) = 1
                    // exact against rounding of near-cancelling increments
                    if (imin == 0) imin = 1;
                } else {
                    if (s < 0.0) break; // L_k < 0 from now on
                    const double pos = s / dx;
                    const double ri = std::round(pos);
                    imin = (std::abs(pos - ri) < kNodeEps
                                ? static_cast<std::size_t>(ri)
                                : static_cast<std::size_t>(std::floor(pos))) +
                           1;
                }
                if (imin < pts) {
                    ++diff[imin];
                    if (k == K) ++diff_k[imin];
                    if (k + kTailWindow > K) ++diff_tail[k + kTailWindow - K - 1][imin];
                }
            }
            std::uint32_t run = 0, run_k = 0;
            std::uint32_t run_tail[kTailWindow] = {0};
            for (std::size_t i = 0; i < pts; ++i) {
                run += diff[i];
                run_k += diff_k[i];
                acc.sum[i] += run;
                acc.sumsq[i] += static_cast<long double>(run) * run;
                acc.sum_kterm[i] += run_k;
                for (unsigned w = 0; w < kTailWindow; ++w) {
                    run_tail[w] += diff_tail[w][i];
                    acc.sum_tail[w][i] += run_tail[w];
                }
            }
            ++acc.n;
        }
    });

    RenewalBlock total(pts);
    for (const auto& b : blocks) total.merge(b);

    RenewalTable t;
    t.side = side;
    t.dx = dx;
    t.K = K;
    t.reps = reps;
    t.est.resize(pts);
    t.se.resize(pts);
    t.k_term.resize(pts);
    t.tail_bar.resize(pts);
    for (std::size_t i = 0; i < pts; ++i) {
        const long double m = total.sum[i] / total.n;
        t.est[i] = 1.0 + static_cast<double>(m);
        const long double var =
            total.n > 1 ? (total.sumsq[i] - total.n * m * m) / (total.n - 1) : 0.0L;
        t.se[i] = var > 0 ? std::sqrt(static_cast<double>(var) / double(total.n)) : 0.0;
        t.k_term[i] = static_cast<double>(total.sum_kterm[i] / total.n);
        // Terms decay like k^{-3/2}, so sum_{k>K} ~ 2K * (K-th term).  Use the
        // max over the trailing window; on lattice walks alternate terms vanish.
        long double worst = 0.0L;
        for (unsigned w = 0; w < kTailWindow; ++w)
            worst = std::max(worst, total.sum_tail[w][i] / total.n);
        t.tail_bar[i] = 2.0 * double(K) * static_cast<double>(worst);
        if (t.k_term[i] > 10.0 * t.se[i] && t.k_term[i] > 0.0) t.truncation_warning = true;
    }
    return t;
}

namespace {
RenewalEstimate renewal_point(const EnvironmentLaw& tilted, char side, double x,
                              unsigned K, std::uint64_t reps, std::uint64_t seed,
                              int workers) {
    const auto t0 = std::chrono::steady_clock::now();
    const double ax = std::abs(x);
    const double dx = ax > 0.0 ? ax : 1.0;
    RenewalTable t = build_renewal_table(tilted, side, ax, dx, K, reps, seed, workers);
    const std::size_t i = t.points() - 1;
    RenewalEstimate out;
    out.est.value = t.est[i];
    out.est.se = t.se[i];
    out.est.reps = reps;
    out.est.method = side == 'u' ? "renewal-u" : "renewal-v";
    out.est.elapsed_ms = elapsed_ms_since(t0);
    out.k_term = t.k_term[i];
    out.truncation_warning = out.k_term > 10.0 * out.est.se && out.k_term > 0.0;
    return out;
}
} // namespace

RenewalEstimate renewal_u(const EnvironmentLaw& tilted, double x, unsigned K,
                          std::uint64_t reps, std::uint64_t seed, int workers) {
    if (x < 0.0) throw std::domain_error("renewal_u: x must be >= 0");
    return renewal_point(tilted, 'u', x, K, reps, seed, workers);
}

RenewalEstimate renewal_v(const EnvironmentLaw& tilted, double x, unsigned K,
                          std::uint64_t reps, std::uint64_t seed, int workers) {
    if (x > 0.0) throw std::domain_error("renewal_v: x must be <= 0");
    return renewal_point(tilted, 'v', x, K, reps, seed, workers);
}

HarmonicCheck harmonic_check(const EnvironmentLaw& tilted, double x,
                             const RenewalTable& table) {
    if (table.side == 'u' && x < 0.0)
        throw std::domain_error("harmonic_check: x >= 0 required for the u table");
    if (table.side == 'v' && x > 0.0)
        throw std::domain_error("harmonic_check: x <= 0 required for the v table");

    HarmonicCheck out;
    double var = 0.0;
    double bars = 0.0;
    for (std::size_t i = 0; i < tilted.size(); ++i) {
        const double y = x + tilted.log_mean(i);
        const bool inside = table.side == 'u' ? (y >= 0.0 || std::abs(y) < kNodeEps)
                                              : (y < 0.0 && std::abs(y) >= kNodeEps);
        if (!inside) continue;
        const double yy = table.side == 'u' ? std::max(y, 0.0) : y;
        const double w = tilted.weight(i);
        out.lhs += w * table.at(yy);
        var += w * w * table.se_at(yy) * table.se_at(yy);
        bars += w * table.tail_bar_at(yy);
    }
    out.rhs = table.at(table.side == 'u' ? std::max(x, 0.0) : std::min(x, 0.0));
    var += table.se_at(x) * table.se_at(x);
    bars += table.tail_bar_at(x);
    const double denom = std::sqrt(var) + bars;
    const double gap = out.lhs - out.rhs;
    out.z = denom > 0.0 ? gap / denom : (gap == 0.0 ? 0.0 : INFINITY);
    return out;
}

// ---------------------------------------------------------------------------
// Boundary measures
// ---------------------------------------------------------------------------

BoundaryLaw make_boundary_law(double theta, const RenewalTable& table,
                              double density_floor) {
    if (!(theta > 0.0)) throw std::invalid_argument("boundary law: theta > 0 required");
    BoundaryLaw law;
    law.theta = theta;
    law.side = table.side;
    // Cut the domain where the damped density drops below the floor.
    std::size_t last = table.points() - 1;
    for (std::size_t i = 1; i < table.points(); ++i) {
        const double d = std::exp(-theta * std::abs(table.x_at(i))) * table.est[i];
        if (d < density_floor) {
            last = i;
            break;
        }
    }
    double total = 0.0, err_se = 0.0, err_bar = 0.0;
    law.z.resize(last + 1);
    law.mass.resize(last + 1);
    for (std::size_t i = 0; i <= last; ++i) {
        const double w = (i == 0 || i == last) ? 0.5 : 1.0;
        const double damp = std::exp(-theta * std::abs(table.x_at(i)));
        law.z[i] = table.x_at(i);
        law.mass[i] = w * table.dx * damp * table.est[i];
        err_se += w * table.dx * damp * table.se[i];
        err_bar += w * table.dx * damp * table.tail_bar[i];
        total += law.mass[i];
    }
    law.normalizer = 1.0 / total;
    for (double& m : law.mass) m *= law.normalizer;
    law.rel_se = err_se / total;
    law.rel_bar = err_bar / total;
    law.rel_error = law.rel_se + law.rel_bar;
    return law;
}

double BoundaryLaw::integrate(const std::function<double(double)>& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) acc += mass[i] * f(z[i]);
    return acc;
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

Estimate prob_min_nonneg(const EnvironmentLaw& env, const TiltSolution& sol,
                         std::uint64_t n, std::uint64_t reps, std::uint64_t seed,
                         int workers) {
    const auto t0 = std::chrono::steady_clock::now();
    Estimate out;
    out.method = "is-min-nonneg";
    out.reps = reps;
    if (n == 0) { // empty minimum
        out.value = 1.0;
        return out;
    }
    const EnvironmentLaw tilted = tilted_env(env, sol);
    const double log_gamma_n = double(n) * std::log(sol.gamma);
    const double beta = sol.beta;

    std::vector<MeanAccumulator> acc(num_blocks(reps));
    run_blocks(reps, workers, [&](BlockRange br) {
        RngStream rng = RngStream::derived(seed, "min-nonneg", br.index);
        MeanAccumulator& a = acc[br.index];
        for (std::uint64_t r = br.begin; r < br.end; ++r) {
            double s = 0.0;
            bool ok = true;
            for (std::uint64_t k = 0; k < n; ++k) {
                s += tilted.log_mean(tilted.sample_index(rng));
                if (s < 0.0) {
                    ok = false;
                    break;
                }
            }
            a.add(ok ? std::exp(log_gamma_n - beta * s) : 0.0);
        }
    });
    MeanAccumulator total;
    for (const auto& a : acc) total.merge(a);
    out.value = total.mean();
    out.se = total.stderr_of_mean();
    out.elapsed_ms = elapsed_ms_since(t0);
    return out;
}

BaxterCheck baxter_check(const EnvironmentLaw& tilted, double theta, double t,
                         unsigned K, std::uint64_t mc_reps, std::uint64_t seed,
                         int workers) {
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("baxter: t in (0,1) required");
    BaxterCheck out;
    const std::size_t a = tilted.size();
    double budget = 1.0;
    bool exact = true;
    for (unsigned k = 0; k < K; ++k) {
        budget *= double(a);
        if (budget > double(1 << 20)) {
            exact = false;
            break;
        }
    }

    std::vector<double> A(K + 1, 0.0), B(K + 1, 0.0);
    if (exact) {
        // DFS over the atom tree; every prefix of depth k contributes one
        // weighted term to A_k = E[e^{theta S_k}; M_k < 0] and
        // B_k = E[e^{theta S_k}; S_k < 0].
        std::uint64_t nodes = 0;
        std::function<void(unsigned, double, double, double)> rec =
            [&](unsigned k, double w, double s, double m) {
                if (k == K) return;
                for (std::size_t i = 0; i < a; ++i) {
                    const double s2 = s + tilted.log_mean(i);
                    const double m2 = std::max(m, s2);
                    const double w2 = w * tilted.weight(i);
                    const double e = std::exp(theta * s2);
                    if (m2 < 0.0) A[k + 1] += w2 * e;
                    if (s2 < 0.0) B[k + 1] += w2 * e;
                    ++nodes;
                    rec(k + 1, w2, s2, m2);
                }
            };
        rec(0, 1.0, 0.0, -INFINITY);
        out.exact = true;
        out.paths = nodes;
    } else {
        struct Block {
            std::vector<long double> a, b;
            explicit Block(unsigned K2) : a(K2 + 1, 0.0L), b(K2 + 1, 0.0L) {}
        };
        std::vector<Block> blocks(num_blocks(mc_reps), Block(K));
        run_blocks(mc_reps, workers, [&](BlockRange br) {
            RngStream rng = RngStream::derived(seed, "baxter", br.index);
            Block& blk = blocks[br.index];
            for (std::uint64_t r = br.begin; r < br.end; ++r) {
                double s = 0.0;
                bool m_neg = true;
                for (unsigned k = 1; k <= K; ++k) {
                    s += tilted.log_mean(tilted.sample_index(rng));
                    if (s >= 0.0) m_neg = false;
                    const double e = std::exp(theta * s);
                    if (m_neg) blk.a[k] += e;
                    if (s < 0.0) blk.b[k] += e;
                }
            }
        });
        for (const auto& blk : blocks)
            for (unsigned k = 1; k <= K; ++k) {
                A[k] += static_cast<double>(blk.a[k]);
                B[k] += static_cast<double>(blk.b[k]);
            }
        for (unsigned k = 1; k <= K; ++k) {
            A[k] /= double(mc_reps);
            B[k] /= double(mc_reps);
        }
        out.exact = false;
        out.paths = mc_reps;
    }

    double lhs = 1.0, arg = 0.0, tk = 1.0;
    for (unsigned k = 1; k <= K; ++k) {
        tk *= t;
        lhs += tk * A[k];
        arg += tk / double(k) * B[k];
    }
    out.lhs = lhs;
    out.rhs = std::exp(arg);
    return out;
}

ConditionedWalkSample sample_conditioned(const EnvironmentLaw& tilted, CondMode mode,
                                         std::size_t n, std::size_t count,
                                         std::uint64_t seed, double min_acceptance) {
    ConditionedWalkSample out;
    out.paths.reserve(count);
    out.weights.assign(count, 1.0);
    RngStream rng = RngStream::derived(seed, "cond-walk", 0);
    std::vector<double> s(n + 1);
    std::uint64_t proposals = 0;
    while (out.paths.size() < count) {
        ++proposals;
        s[0] = 0.0;
        bool ok = true;
        double run_min = INFINITY;
        for (std::size_t k = 1; k <= n; ++k) {
            s[k] = s[k - 1] + tilted.log_mean(tilted.sample_index(rng));
            if (mode == CondMode::StayNonneg && s[k] < 0.0) {
                ok = false;
                // consume the rest of the path to keep the stream aligned? not
                // needed: each proposal draws fresh variates
                break;
            }
            if (k < n) run_min = std::min(run_min, s[k]);
        }
        if (ok && mode == CondMode::FirstMinAtEnd)
            ok = s[n] < std::min(run_min, 0.0); // strict first minimum at n
        if (ok) out.paths.emplace_back(s);
        if (proposals >= 2'000'000 &&
            double(out.paths.size()) < min_acceptance * double(proposals))
            throw TimeoutError("sample_conditioned: acceptance rate below minimum");
    }
    out.proposals = proposals;
    out.acceptance_rate = double(count) / double(proposals);
    return out;
}

ConditionedWalkSample sample_conditioned_htransform(const EnvironmentLaw& tilted,
                                                    std::size_t n, std::size_t count,
                                                    const RenewalTable& u_table,
                                                    std::uint64_t seed) {
    if (u_table.side != 'u')
        throw std::invalid_argument("h-transform sampler needs a u-side table");
    ConditionedWalkSample out;
    out.approximate = true;
    out.paths.reserve(count);
    out.weights.reserve(count);
    RngStream rng = RngStream::derived(seed, "cond-walk-h", 0);
    const std::size_t na = tilted.size();
    std::vector<double> p(na), uy(na);
    std::vector<double> s(n + 1);
    for (std::size_t c = 0; c < count; ++c) {
        s[0] = 0.0;
        double log_w = 0.0;
        for (std::size_t k = 1; k <= n; ++k) {
            double norm = 0.0;
            for (std::size_t i = 0; i < na; ++i) {
                const double y = s[k - 1] + tilted.log_mean(i);
                if (y >= 0.0) {
                    uy[i] = u_table.at(y);
                    p[i] = tilted.weight(i) * uy[i];
                } else {
                    uy[i] = 0.0;
                    p[i] = 0.0;
                }
                norm += p[i];
            }
            double pick = rng.uniform() * norm;
            std::size_t i = 0;
            for (; i + 1 < na; ++i) {
                if (pick < p[i]) break;
                pick -= p[i];
            }
            while (p[i] == 0.0 && i > 0) --i; // guard against fp edge
            s[k] = s[k - 1] + tilted.log_mean(i);
            log_w += std::log(norm) - std::log(uy[i]);
        }
        out.paths.emplace_back(s);
        out.weights.push_back(std::exp(log_w));
        out.proposals += n;
    }
    out.acceptance_rate = 1.0;
    return out;
}

Pr2Check prop_pr2_check(const EnvironmentLaw& tilted, double theta,
                        const std::function<double(double)>& phi_fn,
                        const std::vector<std::uint64_t>& n_list, std::uint64_t reps,
                        const RenewalTable& v_table, std::uint64_t seed, int workers,
                        double x) {
    if (v_table.side != 'v') throw std::invalid_argument("pr2 check needs a v-side table");
    Pr2Check out;
    out.truncation_warning = v_table.truncation_warning;
    const BoundaryLaw nu = make_boundary_law(theta, v_table);
    out.rhs = nu.integrate([&](double z) { return phi_fn(-z); });
    out.rhs_error = 2.0 * std::abs(out.rhs) * nu.integral_error();

    for (std::uint64_t n : n_list) {
        std::vector<RatioAccumulator> acc(num_blocks(reps));
        run_blocks(reps, workers, [&](BlockRange br) {
            RngStream rng = RngStream::derived(seed ^ n, "pr2", br.index);
            RatioAccumulator& a = acc[br.index];
            for (std::uint64_t r = br.begin; r < br.end; ++r) {
                double s = x;
                bool ok = true;
                for (std::uint64_t k = 0; k < n; ++k) {
                    s += tilted.log_mean(tilted.sample_index(rng));
                    if (s < 0.0) {
                        ok = false;
                        break;
                    }
                }
                if (ok) {
                    const double b = std::exp(-theta * s);
                    a.add(phi_fn(s) * b, b);
                } else {
                    a.add(0.0, 0.0);
                }
            }
        });
        RatioAccumulator total;
        for (const auto& a : acc) total.merge(a);
        out.rows.push_back(Pr2Row{n, total.ratio(), total.ratio_stderr()});
    }
    return out;
}

} // namespace bpre
