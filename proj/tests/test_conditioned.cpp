#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bpre/branching_engine.hpp"
#include "bpre/limit_harness.hpp"
#include "bpre/oracle.hpp"
#include "test_support.hpp"

using namespace bpre;

TEST_CASE("conditioned paths are alive at every generation") {
    auto env = testsup::load_env("env_reference.json");
    auto sol = solve_beta(env);
    auto sample = conditioned_population(env, sol, 25, 2000, 11, 2);
    CHECK(sample.weights.size() == sample.z_paths.size());
    CHECK(!sample.z_paths.empty());
    for (const auto& zp : sample.z_paths) {
        CHECK(zp.front() == 1);
        for (auto z : zp) CHECK(z > 0);
    }
}

TEST_CASE("raw mean weight reproduces the tilted-is estimate, same draws") {
    auto env = testsup::load_env("env_reference.json");
    auto sol = solve_beta(env);
    for (std::uint64_t n : {5ull, 20ull}) {
        Estimate e = estimate_survival(env, sol, n, 40'000, SurvivalMethod::TiltedIS, 123, 2);
        auto sample = conditioned_population(env, sol, n, 40'000, 123, 2);
        CHECK(std::abs(sample.mean_weight - e.value) <=
              1e-12 * std::max(1.0, std::abs(e.value)));
    }
}

TEST_CASE("weighted conditional pmf matches the exact oracle, n = 10 binary env") {
    auto env = testsup::load_env("env_bin2.json");
    auto sol = solve_beta(env);
    auto exact = exact_conditional_pmf(env, 10, 1024);
    auto mc = conditional_pmf_mc(env, sol, 10, 1'000'000, 77, 2, 1024);
    CHECK(total_variation(mc, exact) <= 0.01);
    // conditional means agree
    double me = 0.0, mm = 0.0;
    for (std::size_t j = 0; j < exact.size(); ++j) me += double(j) * exact[j];
    for (std::size_t j = 0; j < mc.size(); ++j) mm += double(j) * mc[j];
    CHECK(mm == doctest::Approx(me).epsilon(0.02));
}

TEST_CASE("ESS accounting and warning flag") {
    auto env = testsup::load_env("env_reference.json");
    auto sol = solve_beta(env);
    auto sample = conditioned_population(env, sol, 10, 5000, 5, 2);
    CHECK(sample.ess > 0.0);
    CHECK(sample.ess <= double(sample.weights.size()) + 1e-9);
    CHECK_FALSE(sample.ess_warning);
    CHECK(sample.dropped_weight_fraction < 0.01);
}

TEST_CASE("q-floor drops are accounted against the weight ledger") {
    auto env = testsup::load_env("env_reference.json");
    auto sol = solve_beta(env);
    CondOptions opt;
    opt.q_floor = 0.05; // aggressive floor to force drops
    auto sample = conditioned_population(env, sol, 30, 5000, 7, 2, opt);
    CHECK(sample.dropped_weight_fraction > 0.0);
    CHECK(sample.dropped_weight_fraction < 1.0);
    // mean weight is still the unbiased estimate (all replicas counted)
    Estimate e = estimate_survival(env, sol, 30, 5000, SurvivalMethod::TiltedIS, 7, 2);
    CHECK(std::abs(sample.mean_weight - e.value) <= 1e-12);
}

TEST_CASE("deterministic doubling environment: flat Y, certain survival") {
    std::vector<double> delta2(3, 0.0);
    delta2[2] = 1.0;
    EnvironmentLaw env({{1.0, OffspringLaw::explicit_pmf(delta2)}});
    TiltSolution sol;
    sol.beta = 0.5;
    sol.gamma = std::exp(0.5 * std::log(2.0));
    sol.tilted_weights = {1.0};
    auto sample = conditioned_population(env, sol, 16, 200, 3, 1);
    CHECK(sample.z_paths.size() == 200);
    for (const auto& zp : sample.z_paths)
        for (std::size_t k = 0; k < zp.size(); ++k)
            CHECK(zp[k] == (1ULL << k));
}

TEST_CASE("dyadic binning layout") {
    std::vector<double> pmf(10, 0.0);
    pmf[0] = 0.1;
    pmf[1] = 0.2;
    pmf[2] = 0.3;
    pmf[3] = 0.05;
    pmf[4] = 0.05;
    pmf[5] = 0.1;
    pmf[8] = 0.2;
    auto b = dyadic_binned(pmf);
    REQUIRE(b.size() == 5);
    CHECK(b[0] == doctest::Approx(0.1));
    CHECK(b[1] == doctest::Approx(0.2));
    CHECK(b[2] == doctest::Approx(0.3));
    CHECK(b[3] == doctest::Approx(0.1));  // {3,4}
    CHECK(b[4] == doctest::Approx(0.3));  // {5..8}
}
