#include "starbell/math_util.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace starbell {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

// erf via Maclaurin series; adequate for x < 2 where cancellation in
// 1 - erf costs at most ~e^4 in relative terms.
double erf_series(double x)
{
    const double x2 = x * x;
    double term = x;
    double sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x2 / n;
        const double contribution = term / (2 * n + 1);
        sum += contribution;
        if (std::abs(contribution) < 1e-18 * std::abs(sum)) break;
    }
    return 2.0 / kSqrtPi * sum;
}

// Continued fraction erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/2/(x + 2/2/(x + ...)))
// evaluated with the modified Lentz method; returns the factor multiplying
// exp(-x^2)/sqrt(pi).
double erfc_cf_factor(double x)
{
    constexpr double tiny = 1e-300;
    double f = x;
    double c = x > tiny ? x : tiny;
    double d = 0.0;
    for (int k = 1; k < 400; ++k) {
        const double a = k / 2.0;
        d = x + a * d;
        if (std::abs(d) < tiny) d = tiny;
        c = x + a / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-17) break;
    }
    return 1.0 / f;
}

// Asymptotic series S(x) = sum_k (-1)^k (2k-1)!! / (2x^2)^k, truncated at
// the smallest term. Valid for x >= 6 to well below 1e-14 relative.
double erfc_asymptotic_series(double x)
{
    const double q = 1.0 / (2.0 * x * x);
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 60; ++k) {
        const double next = -term * q * (2 * k - 1);
        if (std::abs(next) >= std::abs(term)) break;  // series started diverging
        term = next;
        sum += term;
        if (std::abs(term) < 1e-18 * sum) break;
    }
    return sum;
}

}  // namespace

double erfc_strict(double x)
{
    if (std::isnan(x)) throw std::invalid_argument("erfc_strict: NaN argument");
    if (x < 0.0) return 2.0 - erfc_strict(-x);
    if (x < 2.0) return 1.0 - erf_series(x);
    if (x < 6.0) return std::exp(-x * x) / kSqrtPi * erfc_cf_factor(x);
    return std::exp(log_erfc(x));
}

double log_erfc(double x)
{
    if (std::isnan(x)) throw std::invalid_argument("log_erfc: NaN argument");
    if (x < 6.0) return std::log(erfc_strict(x));
    return -x * x - std::log(x * kSqrtPi) + std::log(erfc_asymptotic_series(x));
}

double inverse_log_erfc(double log_target)
{
    if (log_target > 0.0) throw std::invalid_argument("inverse_log_erfc: target > 0");
    if (log_target == 0.0) return 0.0;
    // Initial bracket then Newton; log_erfc is strictly decreasing.
    double lo = 0.0;
    double hi = 1.0;
    while (log_erfc(hi) > log_target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e4) throw std::runtime_error("inverse_log_erfc: target out of range");
    }
    double x = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double g = log_erfc(x) - log_target;
        if (g > 0.0) lo = x; else hi = x;
        // d/dx log erfc = -2 exp(-x^2) / (sqrt(pi) erfc(x))
        const double slope = -2.0 / kSqrtPi * std::exp(-x * x - log_erfc(x));
        double next = x - g / slope;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) < 1e-14 * (1.0 + std::abs(x))) return next;
        x = next;
    }
    return x;
}

double sigma_from_log_p(double log_p)
{
    // p = erfc(nu/sqrt(2)) / 2  =>  log erfc(nu/sqrt(2)) = log p + log 2.
    // Tail probabilities of 1/2 or more carry no significance: nu = 0.
    if (log_p >= -std::log(2.0)) return 0.0;
    return inverse_log_erfc(log_p + std::log(2.0)) * std::sqrt(2.0);
}

double chi2_pvalue_1dof(double chi2)
{
    if (chi2 < 0.0) throw std::invalid_argument("chi2_pvalue_1dof: negative statistic");
    return erfc_strict(std::sqrt(chi2 / 2.0));
}

double two_sided_normal_p(double z)
{
    return erfc_strict(std::abs(z) / std::sqrt(2.0));
}

void KahanSum::add(double value)
{
    const double t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
        compensation_ += (sum_ - t) + value;
    } else {
        compensation_ += (value - t) + sum_;
    }
    sum_ = t;
}

double compensated_sum(std::span<const double> values)
{
    KahanSum acc;
    for (double v : values) acc.add(v);
    return acc.value();
}

}  // namespace starbell
