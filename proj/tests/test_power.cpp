#include <cmath>

#include "doctest.h"
#include "expcmp/error.hpp"
#include "expcmp/power.hpp"
#include "expcmp/tdist.hpp"
#include "oracles.hpp"

using namespace expcmp;
using namespace expcmp::power;

namespace {

DesignSpec base_spec(double alpha_f, double target, double d, int K, Correction c,
                     Alternative alt = Alternative::two_sided) {
    DesignSpec s;
    s.alpha_f = alpha_f;
    s.power_target = target;
    s.mres = d;
    s.num_comparisons = K;
    s.correction = c;
    s.alternative = alt;
    return s;
}

// Monte Carlo rejection rate of the two-sided paired t test when the true
// standardized effect is d.
double mc_power(double alpha, int n, double d, long nsim, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    const double tc = stats::t_quantile(1.0 - alpha / 2.0, n - 1);
    long rejections = 0;
    for (long s = 0; s < nsim; ++s) {
        double sum = 0.0, ss = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = d + oracle::normal(eng);
            sum += x;
            ss += x * x;
        }
        const double mean = sum / n;
        const double var = (ss - n * mean * mean) / (n - 1);
        const double t = mean / std::sqrt(var / n);
        if (std::fabs(t) > tc) ++rejections;
    }
    return static_cast<double>(rejections) / static_cast<double>(nsim);
}

}  // namespace

TEST_SUITE_BEGIN("power");

TEST_CASE("size under the null") {
    CHECK(std::fabs(power_paired_t(0.05, 30, 0.0, Alternative::two_sided) - 0.05) < 1e-6);
    CHECK(std::fabs(power_paired_t(0.01, 12, 0.0, Alternative::one_sided) - 0.01) < 1e-6);
}

TEST_CASE("consistency limit") {
    CHECK(power_paired_t(0.05, 200, 0.5, Alternative::two_sided) >= 0.999);
}

TEST_CASE("power against Monte Carlo") {
    const double p = power_paired_t(0.05, 44, 0.5, Alternative::two_sided);
    CHECK(std::fabs(p - 0.9) < 0.005);  // frozen: the classic d=0.5, n=44 case
    CHECK(std::fabs(p - mc_power(0.05, 44, 0.5, 100000, 11)) < 0.005);
}

TEST_CASE("required instances for a single comparison") {
    CHECK(n_paired_t(0.05, 0.9, 0.5, Alternative::two_sided) == 44);
    CHECK(n_paired_t(0.05, 0.8, 0.5, Alternative::two_sided) == 34);
    CHECK(n_paired_t(0.05, 0.8, 10.0, Alternative::two_sided) == 5);  // enforced floor
}

TEST_CASE("instance count is monotone in effect size and target power") {
    int prev = 1000000;
    for (double d : {0.2, 0.3, 0.5, 0.8, 1.2}) {
        const int n = n_paired_t(0.05, 0.9, d, Alternative::two_sided);
        CHECK(n <= prev);
        prev = n;
    }
    prev = 0;
    for (double target : {0.5, 0.7, 0.8, 0.9, 0.95}) {
        const int n = n_paired_t(0.05, target, 0.5, Alternative::two_sided);
        CHECK(n >= prev);
        prev = n;
    }
}

TEST_CASE("overflow cap") {
    CHECK_THROWS_AS(n_paired_t(0.05, 0.9, 0.001, Alternative::two_sided, 1000),
                    OverflowError);
}

TEST_CASE("familywise error rate closed form") {
    CHECK(std::fabs(fwer(0.05, 10) - 0.401) < 5e-4);
    CHECK(fwer(0.05, 1) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(fwer(0.01, 2) == doctest::Approx(0.0199).epsilon(1e-12));
}

TEST_CASE("case-study design reproduces 57 instances") {
    const auto r = design(base_spec(0.05, 0.8, 0.5, 21, Correction::holm_mean));
    CHECK(r.n_instances == 57);
    CHECK(r.mean_power >= 0.8);
    CHECK(r.per_rank_power.size() == 21);
}

TEST_CASE("K = 1 reduces every correction to the plain design") {
    const int plain = n_paired_t(0.05, 0.9, 0.5, Alternative::two_sided);
    for (Correction c : {Correction::none, Correction::bonferroni, Correction::holm_mean,
                         Correction::holm_median, Correction::holm_worst,
                         Correction::holm_kprime}) {
        auto s = base_spec(0.05, 0.9, 0.5, 1, c);
        s.kprime = 1;
        CHECK(design(s).n_instances == plain);
    }
}

TEST_CASE("holm-worst equals bonferroni") {
    const auto worst = design(base_spec(0.05, 0.9, 0.5, 10, Correction::holm_worst));
    const auto bonf = design(base_spec(0.05, 0.9, 0.5, 10, Correction::bonferroni));
    CHECK(worst.n_instances == bonf.n_instances);
    for (double p : worst.per_rank_power) CHECK(p >= 0.9);  // least favourable design
}

TEST_CASE("design size ordering: mean <= median <= worst = bonferroni") {
    for (int K = 2; K <= 12; ++K) {
        const int nm = design(base_spec(0.05, 0.9, 0.5, K, Correction::holm_mean)).n_instances;
        const int nd =
            design(base_spec(0.05, 0.9, 0.5, K, Correction::holm_median)).n_instances;
        const int nw = design(base_spec(0.05, 0.9, 0.5, K, Correction::holm_worst)).n_instances;
        const int nb = design(base_spec(0.05, 0.9, 0.5, K, Correction::bonferroni)).n_instances;
        CHECK(nm <= nd);
        CHECK(nd <= nw);
        CHECK(nw == nb);
    }
}

TEST_CASE("per-rank power profile is nondecreasing in rank") {
    const auto r = design(base_spec(0.05, 0.8, 0.5, 9, Correction::holm_mean));
    for (std::size_t i = 1; i < r.per_rank_power.size(); ++i) {
        CHECK(r.per_rank_power[i] >= r.per_rank_power[i - 1]);
    }
    CHECK(r.min_power == r.per_rank_power.front());
    CHECK(r.max_power == r.per_rank_power.back());
    double acc = 0.0;
    for (double p : r.per_rank_power) acc += p;
    CHECK(r.mean_power == doctest::Approx(acc / 9).epsilon(1e-14));
}

TEST_CASE("holm-kprime guarantees the designed ranks") {
    // Designing for rank K' powers the K - K' + 1 least strict tests.
    for (int K : {6, 9}) {
        for (int kprime = 1; kprime <= K; ++kprime) {
            auto s = base_spec(0.05, 0.8, 0.5, K, Correction::holm_kprime);
            s.kprime = kprime;
            const auto r = design(s);
            int satisfied = 0;
            for (double p : r.per_rank_power) {
                if (p >= 0.8 - 1e-12) ++satisfied;
            }
            CHECK(satisfied >= K - kprime + 1);
        }
    }
}

TEST_CASE("holm-median equals kprime at the middle rank") {
    for (int K : {5, 6, 21}) {
        auto med = base_spec(0.05, 0.8, 0.5, K, Correction::holm_median);
        auto kp = base_spec(0.05, 0.8, 0.5, K, Correction::holm_kprime);
        kp.kprime = (K + 1) / 2;
        CHECK(design(med).n_instances == design(kp).n_instances);
    }
}

TEST_CASE("design minimality") {
    // The criterion holds at N* and fails at N* - 1.
    auto s = base_spec(0.05, 0.8, 0.5, 21, Correction::holm_mean);
    const auto r = design(s);
    auto mean_power_at = [&](int n) {
        double acc = 0.0;
        for (int rank = 1; rank <= s.num_comparisons; ++rank) {
            acc += power_paired_t(s.alpha_f / (s.num_comparisons - rank + 1), n, s.mres,
                                  s.alternative);
        }
        return acc / s.num_comparisons;
    };
    CHECK(mean_power_at(r.n_instances) >= s.power_target);
    CHECK(mean_power_at(r.n_instances - 1) < s.power_target);

    auto b = base_spec(0.05, 0.9, 0.5, 7, Correction::bonferroni);
    const auto rb = design(b);
    CHECK(power_paired_t(b.alpha_f / 7, rb.n_instances, b.mres, b.alternative) >= 0.9);
    CHECK(power_paired_t(b.alpha_f / 7, rb.n_instances - 1, b.mres, b.alternative) < 0.9);
}

TEST_CASE("one-sided designs never need more instances") {
    for (Correction c : {Correction::bonferroni, Correction::holm_mean}) {
        const int two = design(base_spec(0.05, 0.8, 0.5, 8, c)).n_instances;
        const int one =
            design(base_spec(0.05, 0.8, 0.5, 8, c, Alternative::one_sided)).n_instances;
        CHECK(one <= two);
    }
}

TEST_CASE("nonparametric families inflate the instance count") {
    auto s = base_spec(0.05, 0.9, 0.5, 1, Correction::none);
    s.test_family = TestFamily::wilcoxon;
    CHECK(design(s).n_instances == 52);  // ceil(44 / 0.86)
    s.test_family = TestFamily::sign;
    CHECK(design(s).n_instances == 70);  // ceil(44 / 0.637)
    s.test_family = TestFamily::wilcoxon;
    s.are_wilcoxon = 0.955;  // configurable constant
    CHECK(design(s).n_instances == 47);  // ceil(44 / 0.955)
}

TEST_CASE("power curve") {
    auto s = base_spec(0.05, 0.8, 0.5, 7, Correction::holm_mean);
    const auto curve = power_curve(200, s, {0.001, 0.1, 0.25, 0.4, 0.6});
    CHECK(curve[0].mean_power <= 0.06);  // null limit
    CHECK(curve[2].mean_power >= 0.83);  // follow-up case study
    CHECK(curve[2].mean_power <= 0.87);
    for (std::size_t i = 1; i < curve.size(); ++i) {
        CHECK(curve[i].mean_power >= curve[i - 1].mean_power);
    }
    CHECK_THROWS_AS(power_curve(200, s, {}), ConfigError);
    CHECK_THROWS_AS(power_curve(1, s, {0.5}), ConfigError);
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(design(base_spec(0.05, 0.8, 0.5, 3, Correction::none)), ConfigError);
    CHECK_THROWS_AS(design(base_spec(0.05, 0.8, -0.5, 3, Correction::holm_mean)), ConfigError);
    CHECK_THROWS_AS(design(base_spec(1.5, 0.8, 0.5, 3, Correction::holm_mean)), ConfigError);
    auto s = base_spec(0.05, 0.8, 0.5, 3, Correction::holm_kprime);
    s.kprime = 4;
    CHECK_THROWS_AS(design(s), ConfigError);
    s.kprime = 0;
    CHECK_THROWS_AS(design(s), ConfigError);
}

TEST_CASE("enum string round trips") {
    for (Correction c : {Correction::none, Correction::bonferroni, Correction::holm_mean,
                         Correction::holm_median, Correction::holm_worst,
                         Correction::holm_kprime}) {
        CHECK(correction_from_string(to_string(c)) == c);
    }
    CHECK(alternative_from_string("one-sided") == Alternative::one_sided);
    CHECK(test_family_from_string("wilcoxon") == TestFamily::wilcoxon);
    CHECK_THROWS_AS(correction_from_string("holm"), ConfigError);
}

TEST_SUITE_END();
