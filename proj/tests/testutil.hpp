#pragma once

#include <cmath>
#include <vector>

namespace testutil {

// Sequence whose every prefix of length >= 2 has sample standard deviation
// exactly 1: z_{k+1} = mean(z_1..z_k) +/- sqrt((k+1)/k), alternating sign.
// Feeding mu + sigma * z_t as observations makes estimated sds exact, so the
// adaptive sampler's stopping behavior is fully deterministic and comparable
// with the analytic optimum.
inline std::vector<double> unit_sd_sequence(int n) {
    std::vector<double> z;
    z.reserve(n);
    z.push_back(0.0);
    double sum = 0.0;
    for (int k = 1; k < n; ++k) {
        const double mean = sum / k;
        const double step = std::sqrt((k + 1.0) / k);
        const double next = k % 2 == 1 ? mean + step : mean - step;
        z.push_back(next);
        sum += next;
    }
    return z;
}

}  // namespace testutil
