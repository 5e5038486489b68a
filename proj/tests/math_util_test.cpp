#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"

#include "starbell/math_util.hpp"

using namespace starbell;

namespace {

// Independent high-precision erfc oracle: Maclaurin series in long double
// below 2.5, backward-evaluated continued fraction above. This is a
// different evaluation path from the library implementation.
long double erfc_oracle(long double x)
{
    constexpr long double sqrt_pi = 1.77245385090551602729816748334L;
    if (x < 2.5L) {
        long double term = x;
        long double sum = x;
        for (int n = 1; n < 300; ++n) {
            term *= -x * x / n;
            sum += term / (2 * n + 1);
            if (std::fabs(term / (2 * n + 1)) < 1e-25L * std::fabs(sum)) break;
        }
        return 1.0L - 2.0L / sqrt_pi * sum;
    }
    // erfc(x) = exp(-x^2)/sqrt(pi) / (x + 1/2/(x + 2/2/(x + 3/2/(x + ...))))
    long double tail = 0.0L;
    for (int k = 4000; k >= 1; --k) tail = (k / 2.0L) / (x + tail);
    return std::exp(-x * x) / sqrt_pi / (x + tail);
}

}  // namespace

TEST_CASE("erfc matches a high-precision series oracle to 1e-10 relative")
{
    for (double x = 0.0; x <= 14.0; x += 0.0625) {
        const double mine = erfc_strict(x);
        const double oracle = static_cast<double>(erfc_oracle(x));
        CHECK(mine == doctest::Approx(oracle).epsilon(1e-10));
        // and against the C library as a third route
        CHECK(mine == doctest::Approx(std::erfc(x)).epsilon(1e-10));
    }
}

TEST_CASE("erfc handles negative arguments through the reflection")
{
    CHECK(erfc_strict(-1.0) == doctest::Approx(2.0 - erfc_strict(1.0)).epsilon(1e-14));
    CHECK(erfc_strict(0.0) == doctest::Approx(1.0));
}

TEST_CASE("log erfc stays finite and consistent far into the tail")
{
    for (double x = 0.0; x <= 25.0; x += 0.5) {
        const double direct = std::log(erfc_strict(x));
        CHECK(log_erfc(x) == doctest::Approx(direct).epsilon(1e-10));
    }
    for (double x = 26.0; x <= 40.0; x += 1.0) {
        const double value = log_erfc(x);
        CHECK(std::isfinite(value));
        // dominated by -x^2
        CHECK(value < -x * x + 10.0);
        CHECK(value > -x * x - 10.0);
    }
}

TEST_CASE("inverse log erfc round-trips")
{
    for (double x : {0.1, 0.5, 1.0, 3.0, 7.0, 12.0, 20.0, 35.0}) {
        const double target = log_erfc(x);
        CHECK(inverse_log_erfc(target) == doctest::Approx(x).epsilon(1e-10));
    }
    CHECK(inverse_log_erfc(0.0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(inverse_log_erfc(0.5), std::invalid_argument);
}

TEST_CASE("equivalent sigma inverts the one-sided tail probability")
{
    for (double nu : {1.0, 5.0, 7.31, 11.93, 20.0}) {
        const double log_p = std::log(0.5) + log_erfc(nu / std::sqrt(2.0));
        CHECK(sigma_from_log_p(log_p) == doctest::Approx(nu).epsilon(1e-9));
    }
}

TEST_CASE("chi-squared p-value with one degree of freedom")
{
    CHECK(chi2_pvalue_1dof(0.0) == doctest::Approx(1.0));
    CHECK(chi2_pvalue_1dof(1.132) == doctest::Approx(0.287).epsilon(0.01));
    CHECK(chi2_pvalue_1dof(3.841) == doctest::Approx(0.05).epsilon(0.01));
    CHECK_THROWS_AS(chi2_pvalue_1dof(-1.0), std::invalid_argument);
}

TEST_CASE("compensated summation survives adversarial orderings")
{
    // Alternating huge/tiny terms whose exact sum is the tiny parts alone.
    std::vector<double> values;
    values.reserve(300000);
    for (int k = 0; k < 100000; ++k) {
        values.push_back(1e16);
        values.push_back(1.0);
        values.push_back(-1e16);
    }
    const double sum = compensated_sum(values);
    CHECK(sum == doctest::Approx(100000.0).epsilon(1e-12));

    KahanSum acc;
    for (int k = 0; k < 10; ++k) acc.add(0.1);
    CHECK(acc.value() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("two-sided normal p-value")
{
    CHECK(two_sided_normal_p(0.0) == doctest::Approx(1.0));
    CHECK(two_sided_normal_p(1.96) == doctest::Approx(0.05).epsilon(0.01));
    CHECK(two_sided_normal_p(-1.96) == doctest::Approx(0.05).epsilon(0.01));
}
