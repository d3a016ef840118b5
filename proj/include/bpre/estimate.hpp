// Monte Carlo estimate with its standard error.
#pragma once

#include <cstdint>
#include <string>

namespace bpre {

struct Estimate {
    double value = 0.0;
    double se = 0.0;          // standard error of the estimate
    std::uint64_t reps = 0;
    std::string method;
    double elapsed_ms = 0.0;
};

// Running (sum, sum of squares, count) accumulator.  Per-block instances are
// merged in block order so results do not depend on thread scheduling.
struct MeanAccumulator {
    long double sum = 0.0L;
    long double sumsq = 0.0L;
    std::uint64_t n = 0;

    void add(double x) {
        sum += x;
        sumsq += static_cast<long double>(x) * x;
        ++n;
    }
    void merge(const MeanAccumulator& o) {
        sum += o.sum;
        sumsq += o.sumsq;
        n += o.n;
    }
    double mean() const { return n ? static_cast<double>(sum / n) : 0.0; }
    double variance() const {
        if (n < 2) return 0.0;
        long double m = sum / n;
        long double v = (sumsq - n * m * m) / (n - 1);
        return v > 0 ? static_cast<double>(v) : 0.0;
    }
    double stderr_of_mean() const;
};

// Paired accumulator for ratio estimators (shared-stream numerator and
// denominator with delta-method standard error).
struct RatioAccumulator {
    long double sa = 0.0L, sb = 0.0L, saa = 0.0L, sbb = 0.0L, sab = 0.0L;
    std::uint64_t n = 0;

    void add(double a, double b) {
        sa += a;
        sb += b;
        saa += static_cast<long double>(a) * a;
        sbb += static_cast<long double>(b) * b;
        sab += static_cast<long double>(a) * b;
        ++n;
    }
    void merge(const RatioAccumulator& o) {
        sa += o.sa;
        sb += o.sb;
        saa += o.saa;
        sbb += o.sbb;
        sab += o.sab;
        n += o.n;
    }
    double mean_a() const { return n ? static_cast<double>(sa / n) : 0.0; }
    double mean_b() const { return n ? static_cast<double>(sb / n) : 0.0; }
    double ratio() const { return sb != 0.0L ? static_cast<double>(sa / sb) : 0.0; }
    // SE of (mean A)/(mean B) by the delta method.
    double ratio_stderr() const;
};

} // namespace bpre
