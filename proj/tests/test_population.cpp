#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bpre/branching_engine.hpp"
#include "test_support.hpp"

using namespace bpre;

TEST_CASE("binary offspring keep generation sizes even") {
    auto env = testsup::load_env("env_bin2.json");
    RngStream rng(12);
    std::vector<std::uint32_t> seq(12);
    for (int rep = 0; rep < 2000; ++rep) {
        env.sample_indices(seq, rng);
        PopulationPath p = simulate_population(env, seq, rng);
        for (std::size_t k = 1; k < p.z.size(); ++k)
            CHECK(p.z[k] % 2 == 0);
        // absorption
        for (std::size_t k = 1; k < p.z.size(); ++k)
            if (p.z[k - 1] == 0) CHECK(p.z[k] == 0);
    }
}

TEST_CASE("quenched mean E[Z_n | environment] = exp(S_n)") {
    auto env = testsup::load_env("env_reference.json");
    RngStream seq_rng(404);
    // 20 fixture environments, 1e5 reps each, 4 sigma band
    for (int fixture = 0; fixture < 20; ++fixture) {
        std::vector<std::uint32_t> seq(8);
        env.sample_indices(seq, seq_rng);
        QuenchedRecord rec = make_quenched(env, seq);
        const double target = std::exp(rec.s.back());
        RngStream rng(5000 + fixture);
        const std::size_t reps = 100'000;
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t i = 0; i < reps; ++i) {
            PopulationPath p = simulate_population(env, seq, rng);
            const double z = double(p.z.back());
            sum += z;
            sumsq += z * z;
        }
        const double mean = sum / reps;
        const double sd = std::sqrt((sumsq / reps - mean * mean) / reps);
        CHECK(std::abs(mean - target) < 4.0 * sd + 1e-9);
    }
}

TEST_CASE("annealed mean E[Z_n] = (E[m(Q)])^n at n = 6") {
    auto env = testsup::load_env("env_reference.json");
    const double target = std::pow(env.mean_offspring_mean(), 6.0);
    RngStream rng(606);
    const std::size_t reps = 1'000'000;
    std::vector<std::uint32_t> seq(6);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < reps; ++i) {
        env.sample_indices(seq, rng);
        PopulationPath p = simulate_population(env, seq, rng);
        const double z = double(p.z.back());
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / reps;
    const double sd = std::sqrt((sumsq / reps - mean * mean) / reps);
    CHECK(std::abs(mean - target) < 4.0 * sd);
}

TEST_CASE("population cap censors and freezes") {
    // strongly supercritical explicit law: mass at 4 only
    std::vector<double> probs(5, 0.0);
    probs[4] = 1.0;
    EnvironmentLaw env({{1.0, OffspringLaw::explicit_pmf(probs)}});
    RngStream rng(1);
    std::vector<std::uint32_t> seq(30, 0);
    PopulationPath p = simulate_population(env, seq, rng, 1'000'000);
    CHECK(p.censored);
    CHECK(p.z.back() == 1'000'000);
}

TEST_CASE("population determinism under fixed seed") {
    auto env = testsup::load_env("env_mixed.json");
    std::vector<std::uint32_t> seq(15);
    RngStream s(77);
    env.sample_indices(seq, s);
    RngStream a(8), b(8);
    PopulationPath pa = simulate_population(env, seq, a);
    PopulationPath pb = simulate_population(env, seq, b);
    CHECK(pa.z == pb.z);
}
