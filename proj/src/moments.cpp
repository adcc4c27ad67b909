#include "expcmp/moments.hpp"

#include <cmath>

#include "expcmp/error.hpp"

namespace expcmp::stats {

double mean(std::span<const double> v) {
    if (v.empty()) throw InsufficientDataError("mean of an empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
    if (v.size() < 2) throw InsufficientDataError("sample variance needs n >= 2");
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) {
        const double d = x - m;
        ss += d * d;
    }
    return ss / static_cast<double>(v.size() - 1);
}

double sample_sd(std::span<const double> v) {
    return std::sqrt(sample_variance(v));
}

namespace {

// Central moments m2, m3, m4 with the n denominator.
struct CentralMoments {
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
};

CentralMoments central_moments(std::span<const double> v) {
    const double m = mean(v);
    CentralMoments cm;
    for (double x : v) {
        const double d = x - m;
        const double d2 = d * d;
        cm.m2 += d2;
        cm.m3 += d2 * d;
        cm.m4 += d2 * d2;
    }
    const double n = static_cast<double>(v.size());
    cm.m2 /= n;
    cm.m3 /= n;
    cm.m4 /= n;
    return cm;
}

}  // namespace

double skewness(std::span<const double> v) {
    if (v.size() < 3) throw InsufficientDataError("skewness needs n >= 3");
    const auto cm = central_moments(v);
    if (cm.m2 <= 0.0) return 0.0;
    return cm.m3 / std::pow(cm.m2, 1.5);
}

double excess_kurtosis(std::span<const double> v) {
    if (v.size() < 4) throw InsufficientDataError("kurtosis needs n >= 4");
    const auto cm = central_moments(v);
    if (cm.m2 <= 0.0) return 0.0;
    return cm.m4 / (cm.m2 * cm.m2) - 3.0;
}

}  // namespace expcmp::stats
