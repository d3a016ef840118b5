// Shared helpers for the test binaries.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bpre/offspring_env.hpp"

namespace testsup {

inline std::string fixture(const std::string& name) {
    return std::string(BPRE_FIXTURE_DIR) + "/" + name;
}

inline bpre::EnvironmentLaw load_env(const std::string& name) {
    return bpre::EnvironmentLaw::load(fixture(name));
}

// Regularized upper incomplete gamma Q(a, x), series + continued fraction.
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) return NAN;
    if (x == 0.0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // lower series
        double sum = 1.0 / a, term = sum, ap = a;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-15) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Lentz continued fraction for Q
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

// chi-square upper tail p-value
inline double chi2_pvalue(double stat, int dof) { return gamma_q(dof / 2.0, stat / 2.0); }

// Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 l^2}
inline double ks_q(double lambda) {
    double s = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double t = 2.0 * std::exp(-2.0 * double(j) * double(j) * lambda * lambda);
        s += (j % 2 == 1 ? t : -t);
        if (t < 1e-12) break;
    }
    return std::min(1.0, std::max(0.0, s));
}

// two-sample KS p-value; ties are consumed as whole groups so the statistic
// compares the cdfs only at distinct observed values
inline double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = double(a.size()), nb = double(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() || j < b.size()) {
        double v;
        if (i < a.size() && j < b.size())
            v = std::min(a[i], b[j]);
        else
            v = i < a.size() ? a[i] : b[j];
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        d = std::max(d, std::abs(double(i) / na - double(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return ks_q((ne + 0.12 + 0.11 / ne) * d);
}

} // namespace testsup
