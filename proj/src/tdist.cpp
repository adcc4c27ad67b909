#include "expcmp/tdist.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "expcmp/error.hpp"

namespace expcmp::stats {

namespace {

constexpr double kSqrt1_2 = 0.70710678118654752440;
constexpr double kLn2 = 0.69314718055994530942;

void require_finite(double v, const char* name) {
    if (!std::isfinite(v)) {
        throw DomainError(std::string(name) + " must be finite");
    }
}

void require_df(double df) {
    if (!std::isfinite(df) || df <= 0.0) {
        throw DomainError("degrees of freedom must be finite and > 0");
    }
}

void require_open_unit(double p, const char* name) {
    if (!std::isfinite(p) || p <= 0.0 || p >= 1.0) {
        throw DomainError(std::string(name) + " must lie strictly in (0, 1)");
    }
}

// Stirling-series remainder: lgamma(z) - [(z - 1/2) ln z - z + ln(2 pi)/2].
double stirling_tail(double z) {
    const double zi = 1.0 / z;
    const double zi2 = zi * zi;
    return zi * (1.0 / 12 + zi2 * (-1.0 / 360 + zi2 * (1.0 / 1260 - zi2 / 1680)));
}

// ln B(a, b); avoids the lgamma cancellation when one argument is large.
double lbeta(double a, double b) {
    if (a > b) std::swap(a, b);
    if (b < 16.0) return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double diff = (b - 0.5) * std::log1p(a / b) + a * std::log(b + a) - a +
                        stirling_tail(b + a) - stirling_tail(b);
    return std::lgamma(a) - diff;
}

// Continued fraction for the regularized incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
    constexpr int max_iter = 4000;
    constexpr double eps = 1e-16;
    constexpr double fp_min = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fp_min) d = fp_min;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fp_min) d = fp_min;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fp_min) c = fp_min;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fp_min) d = fp_min;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fp_min) c = fp_min;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    return h;  // converged to working precision in practice long before this
}

// Power series I_x(a, b) = x^a Gamma(a+b)/(Gamma(a)Gamma(b)) *
// sum_k (1-b)_k x^k / (k! (a+k)); effective when b*x is small and x < ~0.95.
double beta_pseries(double a, double b, double x) {
    double s = 1.0 / a;
    double t = (1.0 - b) * x;  // running (1-b)_n x^n / n!
    s += t / (a + 1.0);
    for (double n = 2.0; n < 20000.0; n += 1.0) {
        t *= (n - b) * x / n;
        const double v = t / (a + n);
        s += v;
        if (std::fabs(v) <= std::fabs(s) * 1e-17) break;
    }
    const double lfront = a * std::log(x) - lbeta(a, b);
    return std::exp(lfront) * s;
}

// Regularized incomplete beta taking the exact complement omx = 1 - x,
// which callers that compute x as a ratio can supply without rounding loss.
double incbeta_impl(double a, double b, double x, double omx) {
    if (!(a > 0.0) || !(b > 0.0)) throw DomainError("incomplete_beta: a, b must be > 0");
    if (!std::isfinite(x)) throw DomainError("incomplete_beta: x must be finite");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0 || omx <= 0.0) return 1.0;

    if (b * x <= 1.0 && x <= 0.95) return beta_pseries(a, b, x);
    if (omx * a <= 1.0 && x >= 0.05) return 1.0 - beta_pseries(b, a, omx);

    const double lfront = -lbeta(a, b) + a * std::log(x) + b * std::log(omx);
    const double front = std::exp(lfront);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cf(a, b, x) / a;
    }
    return 1.0 - front * beta_cf(b, a, omx) / b;
}

struct Bracket {
    double lo;
    double hi;
};

// Expand [lo, hi] until cdf(lo) <= p <= cdf(hi).
Bracket expand_bracket(const std::function<double(double)>& cdf, double p, double lo,
                       double hi) {
    double flo = cdf(lo);
    double fhi = cdf(hi);
    double step = hi - lo;
    for (int i = 0; i < 300 && flo > p; ++i) {
        hi = lo;
        lo -= step;
        step *= 2.0;
        flo = cdf(lo);
    }
    for (int i = 0; i < 300 && fhi < p; ++i) {
        lo = hi;
        hi += step;
        step *= 2.0;
        fhi = cdf(hi);
    }
    return {lo, hi};
}

// Invert a monotone CDF: bisection to a narrow bracket, then secant
// refinement (kept inside the bracket; falls back to bisection otherwise).
double invert_cdf(const std::function<double(double)>& cdf, double p, double lo0,
                  double hi0) {
    auto [lo, hi] = expand_bracket(cdf, p, lo0, hi0);
    double flo = cdf(lo) - p;
    double fhi = cdf(hi) - p;
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;

    while (hi - lo > 1e-6 * std::max(1.0, std::fabs(lo) + std::fabs(hi))) {
        const double mid = 0.5 * (lo + hi);
        const double fmid = cdf(mid) - p;
        if (fmid == 0.0) return mid;
        if (fmid < 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
            fhi = fmid;
        }
    }

    double x0 = lo, f0 = flo;
    double x1 = hi, f1 = fhi;
    double best_x = std::fabs(flo) < std::fabs(fhi) ? lo : hi;
    double best_f = std::min(std::fabs(flo), std::fabs(fhi));
    for (int i = 0; i < 64 && f1 != f0; ++i) {
        double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if (!(x2 > lo && x2 < hi)) x2 = 0.5 * (lo + hi);
        const double f2 = cdf(x2) - p;
        if (std::fabs(f2) < best_f) {
            best_f = std::fabs(f2);
            best_x = x2;
        }
        if (f2 == 0.0 || best_f < 1e-13 || hi - lo < 1e-14 * std::max(1.0, std::fabs(x2))) {
            return best_x;
        }
        if (f2 < 0.0) {
            lo = x2;
        } else {
            hi = x2;
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
    }
    return best_x;
}

// CDF of the noncentral t for x >= 0, as Phi(-ncp) plus a series of
// incomplete-beta terms with Poisson(lambda = ncp^2/2) style weights
// (p_j, q_j), summed outward from the dominant index j0 = floor(lambda).
// Truncation: weights not yet accumulated are bounded by the remaining
// Poisson mass times (1 + |ncp|); iteration stops once that bound is < 1e-13.
double nct_cdf_nonneg(double t, double df, double ncp) {
    const double base = normal_cdf(-ncp);
    if (t == 0.0) return base;

    const double t2 = t * t;
    // Far beyond the distribution's scale the upper tail is below double
    // precision; skip the series (its term count grows with t^2).
    if (t2 / df > 1e13 * std::max(1.0, ncp * ncp)) return 1.0;

    const double x = t2 / (t2 + df);
    const double omx = df / (t2 + df);
    const double lx = std::log(x);
    const double lomx = std::log(omx);
    const double lambda = 0.5 * ncp * ncp;
    const double llambda = std::log(lambda);
    const double half_df = 0.5 * df;

    const long j0 = static_cast<long>(lambda);
    const double lpois0 = -lambda + (j0 > 0 ? j0 * llambda : 0.0) - std::lgamma(j0 + 1.0);

    // Weights at j0 and the I_x decrement terms T(a) = x^a (1-x)^b / (a B(a, b))
    // driving the recurrence I_x(a + 1, b) = I_x(a, b) - T(a).
    double pj = std::exp(lpois0);
    double qj = (ncp < 0 ? -1.0 : 1.0) *
                std::exp(-lambda + (j0 > 0 ? j0 * llambda : 0.0) + std::log(std::fabs(ncp)) -
                         0.5 * kLn2 - std::lgamma(j0 + 1.5));
    double ip = incbeta_impl(j0 + 0.5, half_df, x, omx);
    double iq = incbeta_impl(j0 + 1.0, half_df, x, omx);
    double tp = std::exp((j0 + 0.5) * lx + half_df * lomx + std::lgamma(j0 + 0.5 + half_df) -
                         std::lgamma(j0 + 1.5) - std::lgamma(half_df));
    double tq = std::exp((j0 + 1.0) * lx + half_df * lomx + std::lgamma(j0 + 1.0 + half_df) -
                         std::lgamma(j0 + 2.0) - std::lgamma(half_df));

    constexpr double tol = 1e-14;
    const double qscale = 1.0 + std::fabs(ncp);

    double sum = 0.0;
    double pois_mass = 0.0;

    // Downward sweep from j0 - 1 first so the upward sweep's remaining-mass
    // bound sees the full accumulated weight.
    if (j0 > 0) {
        double p = pj, q = qj, ipb = ip, iqb = iq, tpd = tp, tqd = tq;
        for (long j = j0; j >= 1; --j) {
            const double jd = static_cast<double>(j);
            p *= jd / lambda;
            q *= (jd + 0.5) / lambda;
            tpd *= (jd + 0.5) / (x * (jd - 0.5 + half_df));
            tqd *= (jd + 1.0) / (x * (jd + half_df));
            ipb += tpd;
            iqb += tqd;
            if (ipb > 1.0) ipb = 1.0;
            if (iqb > 1.0) iqb = 1.0;
            sum += p * ipb + q * iqb;
            pois_mass += p;
            if ((p + std::fabs(q)) * qscale < tol * 1e-3) break;
        }
    }

    // Upward sweep from j0; remaining weight is bounded by the Poisson mass
    // not yet accumulated, scaled by (1 + |ncp|) to cover the q-weights.
    {
        double p = pj, q = qj, ipb = ip, iqb = iq, tpu = tp, tqu = tq;
        for (long j = j0;; ++j) {
            sum += p * ipb + q * iqb;
            pois_mass += p;
            if ((1.0 - pois_mass) * qscale * ipb < tol && j > j0) break;
            if (j > j0 + 100000000L) {
                throw DomainError("nct_cdf: series failed to converge");
            }
            const double jd = static_cast<double>(j);
            ipb -= tpu;
            iqb -= tqu;
            if (ipb < 0.0) ipb = 0.0;
            if (iqb < 0.0) iqb = 0.0;
            tpu *= x * (jd + 0.5 + half_df) / (jd + 1.5);
            tqu *= x * (jd + 1.0 + half_df) / (jd + 2.0);
            p *= lambda / (jd + 1.0);
            q *= lambda / (jd + 1.5);
            if (ipb == 0.0 && iqb == 0.0) break;
        }
    }

    double result = base + 0.5 * sum;
    if (result < 0.0) result = 0.0;
    if (result > 1.0) result = 1.0;
    return result;
}

}  // namespace

void DistParams::validate() const {
    require_df(df);
    require_finite(ncp, "ncp");
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * kSqrt1_2);
}

double normal_quantile(double p) {
    require_open_unit(p, "p");

    // Acklam's rational approximation, then one Halley refinement step.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double plow = 0.02425;

    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

double incomplete_beta(double a, double b, double x) {
    return incbeta_impl(a, b, x, 1.0 - x);
}

double t_cdf(double x, double df) {
    require_df(df);
    require_finite(x, "x");
    if (x == 0.0) return 0.5;
    const double x2 = x * x;
    const double tail = 0.5 * incbeta_impl(0.5 * df, 0.5, df / (df + x2), x2 / (df + x2));
    return x > 0.0 ? 1.0 - tail : tail;
}

double t_quantile(double p, double df) {
    require_df(df);
    require_open_unit(p, "p");
    if (p == 0.5) return 0.0;
    const double guess = normal_quantile(p);
    return invert_cdf([df](double x) { return t_cdf(x, df); }, p, guess - 1.0, guess + 1.0);
}

double nct_cdf(double x, double df, double ncp) {
    require_df(df);
    require_finite(ncp, "ncp");
    require_finite(x, "x");
    if (ncp == 0.0) return t_cdf(x, df);
    if (x < 0.0) return 1.0 - nct_cdf_nonneg(-x, df, -ncp);
    return nct_cdf_nonneg(x, df, ncp);
}

double nct_quantile(double p, double df, double ncp) {
    require_df(df);
    require_finite(ncp, "ncp");
    require_open_unit(p, "p");
    if (ncp == 0.0) return t_quantile(p, df);
    const double guess = ncp + normal_quantile(p);
    return invert_cdf([df, ncp](double x) { return nct_cdf(x, df, ncp); }, p, guess - 1.0,
                      guess + 1.0);
}

}  // namespace expcmp::stats
