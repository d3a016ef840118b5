#include "bpre/estimate.hpp"

#include <cmath>

namespace bpre {

double MeanAccumulator::stderr_of_mean() const {
    return n ? std::sqrt(variance() / double(n)) : 0.0;
}

double RatioAccumulator::ratio_stderr() const {
    if (n < 2 || sb == 0.0L) return 0.0;
    const long double ma = sa / n, mb = sb / n;
    const long double va = (saa - n * ma * ma) / (n - 1);
    const long double vb = (sbb - n * mb * mb) / (n - 1);
    const long double cab = (sab - n * ma * mb) / (n - 1);
    const long double r = ma / mb;
    long double v = (va - 2.0L * r * cab + r * r * vb) / (mb * mb) / n;
    return v > 0 ? static_cast<double>(std::sqrt(double(v))) : 0.0;
}

} // namespace bpre
