#include "bpre/oracle.hpp"

#include <cmath>

#include "bpre/branching_engine.hpp"
#include "bpre/errors.hpp"
#include "bpre/parallel.hpp"
#include "bpre/randwalk.hpp"

namespace bpre {

namespace {

constexpr std::uint64_t kEnumBudget = 20'000'000;
// Fixed chunk count: partials are computed over the same index intervals no
// matter how many workers run them, keeping results bitwise deterministic.
constexpr std::uint64_t kChunks = 64;

std::uint64_t sequence_count(std::size_t atoms, unsigned n, std::uint64_t budget) {
    std::uint64_t total = 1;
    for (unsigned k = 0; k < n; ++k) {
        if (total > budget / atoms) throw SizeLimitError("enumeration exceeds budget");
        total *= atoms;
    }
    return total;
}

struct KahanSum {
    long double sum = 0.0L;
    long double c = 0.0L;
    void add(long double x) {
        const long double y = x - c;
        const long double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

// Visits sequences with index in [begin, end), lexicographic order, digit 0
// most significant.  visit(digits, s_prefix, w_prefix) gets prefix arrays of
// length n+1: s[k] = S_k, w[k] = product of the first k atom weights.
template <class Visit>
void enumerate_range(const EnvironmentLaw& env, unsigned n, std::uint64_t begin,
                     std::uint64_t end, Visit&& visit) {
    const std::size_t a = env.size();
    std::vector<std::uint32_t> digit(n, 0);
    std::vector<double> s(n + 1, 0.0), w(n + 1, 1.0);
    // decode the starting index
    std::uint64_t idx = begin;
    for (unsigned k = n; k-- > 0;) {
        digit[k] = static_cast<std::uint32_t>(idx % a);
        idx /= a;
    }
    auto refresh_from = [&](unsigned j) {
        for (unsigned k = j; k < n; ++k) {
            s[k + 1] = s[k] + env.log_mean(digit[k]);
            w[k + 1] = w[k] * env.weight(digit[k]);
        }
    };
    refresh_from(0);
    for (std::uint64_t i = begin; i < end; ++i) {
        visit(digit, s, w);
        if (i + 1 == end) break;
        unsigned j = n;
        while (j > 0 && digit[j - 1] + 1 == a) --j;
        // j > 0 here because i+1 < end <= a^n
        ++digit[j - 1];
        for (unsigned k = j; k < n; ++k) digit[k] = 0;
        refresh_from(j - 1);
    }
}

template <class Leaf>
double enumerate_reduce(const EnvironmentLaw& env, unsigned n, int workers,
                        std::uint64_t total, Leaf&& leaf) {
    const std::uint64_t chunks = total < kChunks ? total : kChunks;
    std::vector<KahanSum> partial(chunks);
    run_blocks(chunks, workers, [&](BlockRange br) {
        // br.index is the chunk id (block size 1)
        const std::uint64_t c = br.index;
        const std::uint64_t lo = total / chunks * c + std::min<std::uint64_t>(c, total % chunks);
        const std::uint64_t extra = c < total % chunks ? 1 : 0;
        const std::uint64_t hi = lo + total / chunks + extra;
        enumerate_range(env, n, lo, hi,
                        [&](const std::vector<std::uint32_t>& digits,
                            const std::vector<double>& s, const std::vector<double>& w) {
                            partial[c].add(leaf(digits, s, w));
                        });
    }, 1);
    KahanSum total_sum;
    for (const auto& p : partial) {
        total_sum.add(p.sum);
        total_sum.add(p.c);
    }
    return static_cast<double>(total_sum.sum);
}

} // namespace

ExactResult exact_survival(const EnvironmentLaw& env, unsigned n, int workers) {
    const std::uint64_t total = sequence_count(env.size(), n, kEnumBudget);
    ExactResult out;
    out.sequences = total;
    out.value = enumerate_reduce(
        env, n, workers, total,
        [&](const std::vector<std::uint32_t>& digits, const std::vector<double>&,
            const std::vector<double>& w) {
            const double logq = log_survival_backward(env, digits);
            return w[n] * std::exp(logq);
        });
    return out;
}

ExactResult exact_walk_functional(const EnvironmentLaw& env, unsigned n,
                                  const std::function<double(const WalkPath&)>& f,
                                  int workers) {
    const std::uint64_t total = sequence_count(env.size(), n, kEnumBudget);
    ExactResult out;
    out.sequences = total;
    out.value = enumerate_reduce(
        env, n, workers, total,
        [&](const std::vector<std::uint32_t>&, const std::vector<double>& s,
            const std::vector<double>& w) {
            WalkPath p(s);
            return w[n] * f(p);
        });
    return out;
}

std::vector<double> exact_conditional_pmf(const EnvironmentLaw& env, unsigned n,
                                          std::size_t zmax, double tail_tol,
                                          double* tail_mass_out) {
    for (std::size_t i = 0; i < env.size(); ++i)
        if (env.law(i).max_support() == UINT64_MAX)
            throw std::invalid_argument(
                "exact_conditional_pmf: finite-support offspring laws required");
    const std::uint64_t total = sequence_count(env.size(), n, kEnumBudget);
    if (double(zmax) * double(zmax) * double(total) > 4e10)
        throw SizeLimitError("exact_conditional_pmf: DP budget exceeded");

    std::vector<long double> mixed(zmax + 1, 0.0L);
    long double lost = 0.0L;

    std::vector<long double> p(zmax + 1), next(zmax + 1), convz(zmax + 1), tmp(zmax + 1);
    enumerate_range(env, n, 0, total,
                    [&](const std::vector<std::uint32_t>& digits,
                        const std::vector<double>&, const std::vector<double>& w) {
        std::fill(p.begin(), p.end(), 0.0L);
        p[1] = 1.0L; // Z_0 = 1
        long double seq_lost = 0.0L;
        std::size_t support = 1; // current max populated index
        for (unsigned k = 0; k < n; ++k) {
            const OffspringLaw& law = env.law(digits[k]);
            std::fill(next.begin(), next.end(), 0.0L);
            next[0] += p[0];
            if (law.kind() == OffspringKind::Binary) {
                // z-fold convolution of {0,2} mass is binomial: closed
                // recurrence, no intermediate table
                const long double pp = law.param();
                for (std::size_t z = 1; z <= support; ++z) {
                    if (p[z] == 0.0L) continue;
                    long double pm = std::pow(1.0L - pp, static_cast<long double>(z));
                    for (std::size_t i2 = 0;; ++i2) {
                        const std::size_t j = 2 * i2;
                        if (j > zmax) {
                            long double rest = 0.0L;
                            long double pr = pm;
                            for (std::size_t ii = i2; ii <= z; ++ii) {
                                rest += pr;
                                pr *= (long double)(z - ii) / (long double)(ii + 1) * pp /
                                      (1.0L - pp);
                            }
                            seq_lost += p[z] * rest;
                            break;
                        }
                        next[j] += p[z] * pm;
                        if (i2 == z) break;
                        pm *= (long double)(z - i2) / (long double)(i2 + 1) * pp /
                              (1.0L - pp);
                    }
                }
            } else {
                // generic finite-support law: build q^{*z} incrementally
                const std::size_t sup = static_cast<std::size_t>(law.max_support());
                std::fill(convz.begin(), convz.end(), 0.0L);
                convz[0] = 1.0L; // q^{*0}
                long double conv_lost = 0.0L;
                for (std::size_t z = 1; z <= support; ++z) {
                    std::fill(tmp.begin(), tmp.end(), 0.0L);
                    long double lost_step = 0.0L;
                    for (std::size_t x = 0; x <= zmax; ++x) {
                        if (convz[x] == 0.0L) continue;
                        for (std::size_t y = 0; y <= sup; ++y) {
                            const long double m = convz[x] * (long double)law.pmf(y);
                            if (x + y <= zmax)
                                tmp[x + y] += m;
                            else
                                lost_step += m;
                        }
                    }
                    conv_lost += lost_step;
                    convz.swap(tmp);
                    if (p[z] != 0.0L) {
                        for (std::size_t j = 0; j <= zmax; ++j) next[j] += p[z] * convz[j];
                        seq_lost += p[z] * conv_lost;
                    }
                }
            }
            p.swap(next);
            const std::uint64_t grow = law.max_support();
            support = std::min<std::size_t>(zmax, support * static_cast<std::size_t>(grow));
            if (support == 0) support = 1;
        }
        for (std::size_t j = 0; j <= zmax; ++j) mixed[j] += w[n] * p[j];
        lost += w[n] * seq_lost;
    });

    const double tail = static_cast<double>(lost);
    if (tail_mass_out) *tail_mass_out = tail;
    if (tail > tail_tol) throw TailMassError("exact_conditional_pmf: zmax too small");

    long double alive = 0.0L;
    for (std::size_t j = 1; j <= zmax; ++j) alive += mixed[j];
    std::vector<double> pmf(zmax + 1, 0.0);
    for (std::size_t j = 1; j <= zmax; ++j)
        pmf[j] = static_cast<double>(mixed[j] / alive);
    return pmf;
}

} // namespace bpre
