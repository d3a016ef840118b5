#include "bpre/limit_harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bpre/parallel.hpp"

namespace bpre {

double ConvergenceTable::stabilization() const {
    if (rows.size() < 2) return 0.0;
    const double prev = rows[rows.size() - 2].stat;
    const double last = rows.back().stat;
    return prev != 0.0 ? std::abs(last / prev - 1.0) : INFINITY;
}

namespace {

std::string tag_n(const char* base, std::uint64_t n) {
    return std::string(base) + "-n" + std::to_string(n);
}

double weighted_quantile(std::vector<std::pair<double, double>>& vw, double q) {
    // vw: (value, weight)
    if (vw.empty()) return 0.0;
    std::sort(vw.begin(), vw.end());
    double total = 0.0;
    for (const auto& p : vw) total += p.second;
    double cum = 0.0;
    for (const auto& p : vw) {
        cum += p.second;
        if (cum >= q * total) return p.first;
    }
    return vw.back().first;
}

} // namespace

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t m = std::max(a.size(), b.size());
    double tv = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double pa = j < a.size() ? a[j] : 0.0;
        const double pb = j < b.size() ? b[j] : 0.0;
        tv += std::abs(pa - pb);
    }
    return 0.5 * tv;
}

std::vector<double> dyadic_binned(const std::vector<double>& pmf) {
    std::vector<double> out;
    auto bin_of = [](std::size_t j) -> std::size_t {
        if (j <= 2) return j;
        std::size_t b = 2;
        std::size_t hi = 2;
        while (hi < j) {
            hi *= 2;
            ++b;
        }
        return b;
    };
    for (std::size_t j = 0; j < pmf.size(); ++j) {
        if (pmf[j] == 0.0) continue;
        const std::size_t b = bin_of(j);
        if (b >= out.size()) out.resize(b + 1, 0.0);
        out[b] += pmf[j];
    }
    return out;
}

Theorem1Result theorem1_ratio(const EnvironmentLaw& env, const TiltSolution& sol,
                              const std::vector<std::uint64_t>& n_list,
                              std::uint64_t reps, std::uint64_t seed, int workers,
                              double stab_threshold) {
    Theorem1Result out;
    out.table.name = "theorem1_ratio";
    const EnvironmentLaw tilted = tilted_env(env, sol);
    const double beta = sol.beta;

    for (std::uint64_t n : n_list) {
        const std::string tag = tag_n("th1", n);
        std::vector<RatioAccumulator> acc(num_blocks(reps));
        std::vector<std::uint32_t> dummy;
        run_blocks(reps, workers, [&](BlockRange br) {
            RngStream rng = RngStream::derived(seed, tag, br.index);
            RatioAccumulator& a = acc[br.index];
            std::vector<std::uint32_t> seq(n);
            for (std::uint64_t r = br.begin; r < br.end; ++r) {
                double s = 0.0, lmin = INFINITY;
                for (std::uint64_t k = 0; k < n; ++k) {
                    seq[k] = tilted.sample_index(rng);
                    s += tilted.log_mean(seq[k]);
                    lmin = std::min(lmin, s);
                }
                const double e = std::exp(-beta * s);
                const double qa = std::exp(log_survival_backward(env, seq));
                a.add(e * qa, lmin >= 0.0 ? e : 0.0);
            }
        });
        RatioAccumulator total;
        for (const auto& a : acc) total.merge(a);
        out.table.rows.push_back(TableRow{double(n), total.ratio(), total.ratio_stderr()});
    }

    const TableRow& last = out.table.rows.back();
    out.constants.kappa = last.stat;
    out.constants.kappa_se = last.se;
    if (out.table.rows.size() >= 2) {
        const TableRow& prev = out.table.rows[out.table.rows.size() - 2];
        const double stab = out.table.stabilization();
        out.checks.push_back(Check{"theorem1.stabilization", stab, stab_threshold,
                                   stab <= stab_threshold,
                                   "|r_last/r_prev - 1| over the final dyadic pair"});
        const double gap = std::abs(last.stat - prev.stat);
        const double bars = stab_threshold * std::abs(prev.stat) + 3.0 * (last.se + prev.se);
        out.checks.push_back(Check{"theorem1.bars_consistent", gap, bars, gap <= bars,
                                   "gap within threshold plus 3 sigma"});
    }
    out.checks.push_back(Check{"theorem1.kappa_positive",
                               out.constants.kappa - 3.0 * out.constants.kappa_se, 0.0,
                               out.constants.kappa - 3.0 * out.constants.kappa_se > 0.0,
                               "kappa - 3 se > 0"});
    return out;
}

CorollaryResult corollary_scaling(const EnvironmentLaw& env, const TiltSolution& sol,
                                  const StableNorm& stable,
                                  const std::vector<std::uint64_t>& n_list,
                                  std::uint64_t reps, std::uint64_t seed, int workers,
                                  double stab_threshold, const LimitConstants* kappa_th1) {
    CorollaryResult out;
    out.table.name = "corollary_scaling";
    out.min_table.name = "min_scaling";
    out.lattice_warning = env.is_lattice();
    const EnvironmentLaw tilted = tilted_env(env, sol);
    const double beta = sol.beta;

    for (std::uint64_t n : n_list) {
        const std::string tag = tag_n("cor", n);
        const double scale = double(n) * stable.a(double(n));
        std::vector<MeanAccumulator> acc_c(num_blocks(reps)), acc_d(num_blocks(reps));
        run_blocks(reps, workers, [&](BlockRange br) {
            RngStream rng = RngStream::derived(seed, tag, br.index);
            MeanAccumulator& ac = acc_c[br.index];
            MeanAccumulator& ad = acc_d[br.index];
            std::vector<std::uint32_t> seq(n);
            for (std::uint64_t r = br.begin; r < br.end; ++r) {
                double s = 0.0, lmin = INFINITY;
                for (std::uint64_t k = 0; k < n; ++k) {
                    seq[k] = tilted.sample_index(rng);
                    s += tilted.log_mean(seq[k]);
                    lmin = std::min(lmin, s);
                }
                // c-term: gamma^n gamma^{-n} cancels, stays in double range
                ac.add(std::exp(-beta * s + log_survival_backward(env, seq)));
                ad.add(lmin >= 0.0 ? std::exp(-beta * s) : 0.0);
            }
        });
        MeanAccumulator tc, td;
        for (const auto& a : acc_c) tc.merge(a);
        for (const auto& a : acc_d) td.merge(a);
        out.table.rows.push_back(
            TableRow{double(n), scale * tc.mean(), scale * tc.stderr_of_mean()});
        out.min_table.rows.push_back(
            TableRow{double(n), scale * td.mean(), scale * td.stderr_of_mean()});
    }

    out.constants.kappa = out.table.rows.back().stat;
    out.constants.kappa_se = out.table.rows.back().se;
    const double stab = out.table.stabilization();
    out.checks.push_back(Check{"corollary.stabilization", stab, stab_threshold,
                               stab <= stab_threshold,
                               "|c_last/c_prev - 1| over the final dyadic pair"});
    if (kappa_th1 && !out.lattice_warning) {
        // kappa'/kappa should match the stabilized d_n (Corollary at x=0).
        const TableRow& d = out.min_table.rows.back();
        const double lhs = out.constants.kappa / kappa_th1->kappa;
        const double lhs_se =
            std::abs(lhs) * (out.constants.kappa_se / out.constants.kappa +
                             kappa_th1->kappa_se / kappa_th1->kappa);
        const double gap = std::abs(lhs - d.stat);
        const double bars = 3.0 * (lhs_se + d.se);
        out.checks.push_back(Check{"corollary.cross_consistency", gap, bars, gap <= bars,
                                   "kappa'/kappa vs P{L_n>=0} scaling"});
    }
    return out;
}

namespace {

struct CondAggregate {
    std::map<std::uint64_t, long double> pmf_w; // z_n -> weight
    long double moment_w = 0.0L;                // sum w * z^theta
    std::vector<std::pair<double, double>> d_rel;  // (value, weight)
    std::vector<std::pair<double, double>> y_half; // (value, weight)
    CondStreamStats stats;

    void merge(CondAggregate& o) {
        for (const auto& [k, v] : o.pmf_w) pmf_w[k] += v;
        moment_w += o.moment_w;
        d_rel.insert(d_rel.end(), o.d_rel.begin(), o.d_rel.end());
        y_half.insert(y_half.end(), o.y_half.begin(), o.y_half.end());
        stats.merge(o.stats);
    }
};

// One conditioned-population pass collecting Theorem 2 and Theorem 3
// statistics; r < n/2 enables the flatness block.
CondAggregate run_conditioned_pass(const EnvironmentLaw& env, const TiltSolution& sol,
                                   std::uint64_t n, std::uint64_t reps, double theta,
                                   std::uint64_t r, std::uint64_t seed, int workers,
                                   const CondOptions& opt) {
    std::vector<CondAggregate> agg(num_blocks(reps));
    run_blocks(reps, workers, [&](BlockRange br) {
        RngStream env_rng = RngStream::derived(seed, "tilt-env", br.index);
        RngStream path_rng = RngStream::derived(seed, "cond-z", br.index);
        CondReplicaDrawer drawer(env, sol, n, opt);
        CondAggregate& a = agg[br.index];
        const bool flat = r > 0 && 2 * r < n;
        for (std::uint64_t rep = br.begin; rep < br.end; ++rep) {
            if (!drawer.draw(env_rng, path_rng, a.stats)) continue;
            const double w = drawer.weight();
            const std::uint64_t zn = drawer.z_path().back();
            a.pmf_w[zn] += w;
            if (theta > 0.0) a.moment_w += w * std::pow(double(zn), theta);
            if (flat) {
                const auto& z = drawer.z_path();
                const auto& s = drawer.record().s;
                const std::uint64_t hi = n - r;
                const double y0 = std::exp(-s[r]) * double(z[r]);
                double d = 0.0;
                for (std::uint64_t k = r; k <= hi; ++k) {
                    const double y = std::exp(-s[k]) * double(z[k]);
                    d = std::max(d, std::abs(y - y0));
                }
                a.d_rel.push_back({d / std::max(y0, 1e-12), w});
                const std::uint64_t mid = r + (n - 2 * r) / 2;
                a.y_half.push_back({std::exp(-s[mid]) * double(z[mid]), w});
            }
        }
    });
    CondAggregate total;
    for (auto& a : agg) total.merge(a);
    return total;
}

std::vector<double> pmf_from_weights(const std::map<std::uint64_t, long double>& pmf_w,
                                     std::size_t zmax) {
    long double total = 0.0L;
    std::size_t hi = 0;
    for (const auto& [k, v] : pmf_w) {
        total += v;
        hi = std::max<std::size_t>(hi, k);
    }
    std::vector<double> pmf(std::min(hi, zmax) + 1, 0.0);
    if (total <= 0.0L) return pmf;
    for (const auto& [k, v] : pmf_w) {
        const std::size_t j = std::min<std::size_t>(k, zmax); // lump the tail
        pmf[std::min(j, pmf.size() - 1)] += static_cast<double>(v / total);
    }
    return pmf;
}

} // namespace

Theorem2Result theorem2_conditional(const EnvironmentLaw& env, const TiltSolution& sol,
                                    const std::vector<std::uint64_t>& n_list,
                                    std::uint64_t reps, double theta,
                                    std::uint64_t seed, int workers,
                                    const CondOptions& opt) {
    Theorem2Result out;
    out.theta = theta;
    out.tv_table.name = "theorem2_tv";
    out.moment_table.name = "theorem2_moment";

    std::vector<std::vector<double>> pmfs;
    for (std::uint64_t n : n_list) {
        CondAggregate agg = run_conditioned_pass(env, sol, n, reps, theta, 0,
                                                 seed + 0x517cc1b727220a95ULL * n,
                                                 workers, opt);
        pmfs.push_back(pmf_from_weights(agg.pmf_w, 1 << 20));
        long double kept_w = 0.0L;
        for (const auto& [k, v] : agg.pmf_w) kept_w += v;
        out.moment_table.rows.push_back(TableRow{
            double(n), kept_w > 0 ? double(agg.moment_w / kept_w) : 0.0, 0.0});
        out.ess.push_back(agg.stats.sum_w2 > 0
                              ? double(kept_w * kept_w / agg.stats.sum_w2)
                              : 0.0);
        out.dropped_weight_bound =
            std::max(out.dropped_weight_bound,
                     agg.stats.sum_w > 0
                         ? static_cast<double>(agg.stats.dropped_w / agg.stats.sum_w)
                         : 0.0);
    }
    for (std::size_t i = 1; i < pmfs.size(); ++i)
        out.tv_table.rows.push_back(
            TableRow{double(n_list[i]),
                     total_variation(dyadic_binned(pmfs[i - 1]), dyadic_binned(pmfs[i])),
                     0.0});

    if (out.tv_table.rows.size() >= 2) {
        const double first = out.tv_table.rows.front().stat;
        const double last = out.tv_table.rows.back().stat;
        out.checks.push_back(Check{"theorem2.tv_decreasing", last, first, last < first,
                                   "TV(last pair) < TV(first pair)"});
    }
    if (!out.moment_table.rows.empty()) {
        const double first = out.moment_table.rows.front().stat;
        double mx = 0.0;
        for (const auto& r : out.moment_table.rows) mx = std::max(mx, r.stat);
        out.checks.push_back(Check{"theorem2.moment_bounded", mx, 2.0 * first,
                                   mx <= 2.0 * first,
                                   "max over n of E[Z^theta | Z>0] <= 2x first"});
    }
    return out;
}

std::vector<double> conditional_pmf_mc(const EnvironmentLaw& env,
                                       const TiltSolution& sol, std::uint64_t n,
                                       std::uint64_t reps, std::uint64_t seed,
                                       int workers, std::size_t zmax,
                                       const CondOptions& opt) {
    CondAggregate agg = run_conditioned_pass(env, sol, n, reps, 0.0, 0, seed, workers, opt);
    return pmf_from_weights(agg.pmf_w, zmax);
}

Theorem3Result theorem3_flatness(const EnvironmentLaw& env, const TiltSolution& sol,
                                 const std::vector<std::uint64_t>& n_list,
                                 std::uint64_t reps, std::uint64_t seed, int workers,
                                 double r_exponent, double delta,
                                 const CondOptions& opt) {
    Theorem3Result out;
    out.median_table.name = "theorem3_median_flatness";
    out.q90_table.name = "theorem3_q90_flatness";
    out.w_low_table.name = "theorem3_w_low";
    out.w_high_table.name = "theorem3_w_high";

    for (std::uint64_t n : n_list) {
        // r_exponent < 1: r_n = ceil(n^e); r_exponent >= 1 is read as a
        // linear rule r_n = ceil(n/e) (still r_n -> infinity, r_n < n/2).
        std::uint64_t r =
            r_exponent < 1.0
                ? static_cast<std::uint64_t>(std::ceil(std::pow(double(n), r_exponent)))
                : static_cast<std::uint64_t>(std::ceil(double(n) / r_exponent));
        if (2 * r >= n) r = n / 2 > 0 ? n / 2 - 1 : 0;
        if (r == 0) r = 1;
        CondAggregate agg = run_conditioned_pass(env, sol, n, reps, 0.0, r,
                                                 seed + 0x2545f4914f6cdd1dULL * n,
                                                 workers, opt);
        out.median_table.rows.push_back(
            TableRow{double(n), weighted_quantile(agg.d_rel, 0.5), 0.0});
        out.q90_table.rows.push_back(
            TableRow{double(n), weighted_quantile(agg.d_rel, 0.9), 0.0});
        long double w_lo = 0.0L, w_hi = 0.0L, w_tot = 0.0L;
        for (const auto& [y, w] : agg.y_half) {
            w_tot += w;
            if (y < delta) w_lo += w;
            if (y > 1.0 / delta) w_hi += w;
        }
        out.w_low_table.rows.push_back(
            TableRow{double(n), w_tot > 0 ? double(w_lo / w_tot) : 0.0, 0.0});
        out.w_high_table.rows.push_back(
            TableRow{double(n), w_tot > 0 ? double(w_hi / w_tot) : 0.0, 0.0});
        long double kept_w = 0.0L, kept_w2 = 0.0L;
        for (const auto& [y, w] : agg.y_half) {
            kept_w += w;
            kept_w2 += static_cast<long double>(w) * w;
        }
        out.ess.push_back(kept_w2 > 0 ? double(kept_w * kept_w / kept_w2) : 0.0);
    }

    bool decreasing = true;
    for (std::size_t i = 1; i < out.median_table.rows.size(); ++i)
        decreasing = decreasing &&
                     out.median_table.rows[i].stat < out.median_table.rows[i - 1].stat;
    out.checks.push_back(Check{"theorem3.median_decreasing",
                               out.median_table.rows.back().stat,
                               out.median_table.rows.front().stat, decreasing,
                               "median flatness decreasing along the n-list"});
    out.checks.push_back(Check{"theorem3.w_positive", out.w_low_table.rows.back().stat,
                               0.05, out.w_low_table.rows.back().stat <= 0.05,
                               "P{Y_{1/2} < delta} at the largest n"});
    return out;
}

Prop21Result prop21_table(const EnvironmentLaw& tilted, double theta,
                          const std::vector<double>& x_grid,
                          const std::vector<std::uint64_t>& n_list, std::uint64_t reps,
                          const RenewalTable& u_table, const RenewalTable& v_table,
                          const StableNorm& stable, std::uint64_t seed, int workers,
                          double stab_threshold) {
    Prop21Result out;
    out.x_grid = x_grid;
    const BoundaryLaw nu = make_boundary_law(theta, v_table);
    const double integral = 1.0 / nu.normalizer;

    for (double x : x_grid) {
        ConvergenceTable table;
        table.name = "prop21_x" + std::to_string(x);
        for (std::uint64_t n : n_list) {
            const std::string tag = tag_n("pr21", n) + "-x" + std::to_string(x);
            const double scale = double(n) * stable.a(double(n));
            std::vector<MeanAccumulator> acc(num_blocks(reps));
            run_blocks(reps, workers, [&](BlockRange br) {
                RngStream rng = RngStream::derived(seed, tag, br.index);
                MeanAccumulator& a = acc[br.index];
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
                    a.add(ok ? std::exp(-theta * s) : 0.0);
                }
            });
            MeanAccumulator total;
            for (const auto& a : acc) total.merge(a);
            table.rows.push_back(
                TableRow{double(n), scale * total.mean(), scale * total.stderr_of_mean()});
        }
        const double ux = u_table.at(x);
        const double rhs = stable.s0 * ux * integral;
        out.rhs.push_back(rhs);
        out.rhs_se.push_back(rhs * (u_table.se_at(x) / ux + nu.rel_se));
        out.rhs_bar.push_back(rhs * (u_table.tail_bar_at(x) / ux + nu.rel_bar));

        const double stab = table.stabilization();
        out.checks.push_back(Check{"prop21.stabilization.x" + std::to_string(x), stab,
                                   stab_threshold, stab <= stab_threshold,
                                   "final dyadic pair"});
        const TableRow& last = table.rows.back();
        const double gap = std::abs(last.stat - rhs);
        const double bars = 3.0 * (last.se + out.rhs_se.back()) + out.rhs_bar.back();
        out.checks.push_back(Check{"prop21.level.x" + std::to_string(x), gap, bars,
                                   gap <= bars, "n a_n E[..] vs s0 u(x) integral"});
        out.tables.push_back(std::move(table));
    }

    if (x_grid.size() >= 2) {
        // stabilized-value ratio across x equals u(x2)/u(x1) within bars
        const double r_stat =
            out.tables[1].rows.back().stat / out.tables[0].rows.back().stat;
        const double r_u = u_table.at(x_grid[1]) / u_table.at(x_grid[0]);
        const double rel =
            out.tables[1].rows.back().se / out.tables[1].rows.back().stat +
            out.tables[0].rows.back().se / out.tables[0].rows.back().stat +
            u_table.se_at(x_grid[1]) / u_table.at(x_grid[1]) +
            u_table.se_at(x_grid[0]) / u_table.at(x_grid[0]) +
            (u_table.tail_bar_at(x_grid[1]) + u_table.tail_bar_at(x_grid[0])) /
                u_table.at(x_grid[0]);
        const double gap = std::abs(r_stat - r_u);
        const double bars = 3.0 * std::abs(r_u) * rel;
        out.checks.push_back(
            Check{"prop21.x_dependence", gap, bars, gap <= bars, "ratio vs u(x2)/u(x1)"});
    }
    return out;
}

} // namespace bpre
