#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bpre/branching_engine.hpp"
#include "bpre/errors.hpp"
#include "bpre/oracle.hpp"
#include "bpre/randwalk.hpp"
#include "test_support.hpp"

using namespace bpre;

TEST_CASE("exact survival at n = 1 is the one-step formula") {
    for (const char* name : {"env_pm1.json", "env_bin2.json", "env_mixed.json"}) {
        auto env = testsup::load_env(name);
        double expect = 0.0;
        for (std::size_t i = 0; i < env.size(); ++i)
            expect += env.weight(i) * (1.0 - env.law(i).pmf(0));
        CHECK(exact_survival(env, 1).value == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("exact survival n = 2 on two binary atoms, hand sum") {
    auto env = testsup::load_env("env_bin2.json");
    // survival through two steps with laws (i,j):
    // 1 - f_i(f_j(0)) over the four weighted sequences
    double expect = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            expect += env.weight(i) * env.weight(j) *
                      (1.0 - env.law(i).pgf(env.law(j).pgf(0.0)));
    CHECK(exact_survival(env, 2).value == doctest::Approx(expect).epsilon(1e-14));
    CHECK(exact_survival(env, 2).sequences == 4);
}

TEST_CASE("exact survival is strictly decreasing in n") {
    auto env = testsup::load_env("env_pm1.json");
    double prev = 1.0;
    for (unsigned n = 1; n <= 10; ++n) {
        const double cur = exact_survival(env, n).value;
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("oracle determinism across worker counts") {
    auto env = testsup::load_env("env_reference.json");
    const double v1 = exact_survival(env, 9, 1).value;
    const double v2 = exact_survival(env, 9, 2).value;
    const double v4 = exact_survival(env, 9, 4).value;
    CHECK(v1 == v2);
    CHECK(v2 == v4);
    auto f = [](const WalkPath& p) { return std::exp(0.3 * p.last()); };
    CHECK(exact_walk_functional(env, 9, f, 1).value ==
          exact_walk_functional(env, 9, f, 3).value);
}

TEST_CASE("size limit") {
    auto env = testsup::load_env("env_mixed.json"); // 4 atoms
    CHECK_THROWS_AS(exact_survival(env, 13), SizeLimitError);
}

TEST_CASE("SSRW ballot count: P{L_4 >= 0} = 6/16") {
    auto env = testsup::load_env("env_ssrw.json");
    auto r = exact_walk_functional(env, 4, [](const WalkPath& p) {
        return p.min_after_start() >= 0.0 ? 1.0 : 0.0;
    });
    CHECK(r.value == doctest::Approx(6.0 / 16.0).epsilon(1e-14));
    CHECK(r.sequences == 16);
}

TEST_CASE("functional identity E[e^{theta S_n}; M_n<0] = E[e^{theta S_n}; tau_n=n]") {
    for (const char* name : {"env_ssrw.json", "env_reference.json"}) {
        auto env = testsup::load_env(name);
        for (unsigned n : {4u, 8u, 12u}) {
            for (double theta : {0.5, 1.0}) {
                const double a =
                    exact_walk_functional(env, n, [theta](const WalkPath& p) {
                        return p.max_after_start() < 0.0 ? std::exp(theta * p.last()) : 0.0;
                    }).value;
                const double b =
                    exact_walk_functional(env, n, [theta](const WalkPath& p) {
                        return p.first_min_index() == p.steps()
                                   ? std::exp(theta * p.last())
                                   : 0.0;
                    }).value;
                CHECK(a == doctest::Approx(b).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("conditional pmf basics on binary laws") {
    // single Binary(p) atom, n = 1: survivors have exactly two members
    EnvironmentLaw bin1({{1.0, OffspringLaw::binary(0.4)}});
    auto pmf = exact_conditional_pmf(bin1, 1, 4);
    CHECK(pmf[2] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(pmf[1] == 0.0);
    CHECK(pmf[3] == 0.0);

    // two-atom binary env: support of Z_n | Z_n > 0 is even for n >= 1
    auto env = testsup::load_env("env_bin2.json");
    auto pmf6 = exact_conditional_pmf(env, 6, 64);
    double mass = 0.0;
    for (std::size_t j = 1; j < pmf6.size(); ++j) {
        if (j % 2 == 1) CHECK(pmf6[j] == 0.0);
        mass += pmf6[j];
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("conditional pmf rejects infinite support and tiny caps") {
    auto geo = testsup::load_env("env_pm1.json");
    CHECK_THROWS_AS(exact_conditional_pmf(geo, 3, 64), std::invalid_argument);
    auto env = testsup::load_env("env_bin2.json");
    CHECK_THROWS_AS(exact_conditional_pmf(env, 6, 8), TailMassError);
}

TEST_CASE("conditional pmf mass conservation against exact survival") {
    auto env = testsup::load_env("env_bin2.json");
    double tail = 0.0;
    auto pmf = exact_conditional_pmf(env, 8, 256, 1e-12, &tail);
    CHECK(tail <= 1e-12);
    // conditional mean finite and positive
    double mean = 0.0;
    for (std::size_t j = 1; j < pmf.size(); ++j) mean += double(j) * pmf[j];
    CHECK(mean > 1.0);
}
