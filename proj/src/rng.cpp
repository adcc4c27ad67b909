#include "expcmp/rng.hpp"

#include <cmath>

#include "expcmp/error.hpp"
#include "expcmp/tdist.hpp"

namespace expcmp::rng {

double next_normal(std::mt19937_64& eng, double location, double scale) {
    if (scale == 0.0) return location;  // degenerate point mass
    return location + scale * stats::normal_quantile(next_uniform(eng));
}

double next_lognormal(std::mt19937_64& eng, double location, double scale) {
    if (!(scale > 0.0)) throw DomainError("lognormal scale must be > 0");
    return std::exp(location + scale * stats::normal_quantile(next_uniform(eng)));
}

double next_uniform_range(std::mt19937_64& eng, double low, double width) {
    if (!(width > 0.0)) throw DomainError("uniform width must be > 0");
    return low + width * next_uniform(eng);
}

}  // namespace expcmp::rng
