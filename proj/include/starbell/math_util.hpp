#pragma once

// Numerical helpers shared across the analysis modules: a self-contained
// complementary error function with a log-domain tail (two-sided Gaussian
// p-values down to ~1e-300 in value space, arbitrary sigma in log space),
// its inverse, and compensated summation.

#include <cstddef>
#include <span>

namespace starbell {

// erfc(x) for x >= 0.
// Maclaurin series below x = 2, Lentz continued fraction on [2, 6),
// asymptotic expansion evaluated in log space beyond.
double erfc_strict(double x);

// ln erfc(x) for x >= 0; finite for arguments far past the point where
// erfc itself underflows (x ~ 40 gives about -1604).
double log_erfc(double x);

// Solves log(erfc(x)) = log_target for x >= 0 (log_target <= 0).
double inverse_log_erfc(double log_target);

// Equivalent Gaussian sigma for a one-sided tail probability given as
// ln p, i.e. solves p = erfc(nu / sqrt(2)) / 2.
double sigma_from_log_p(double log_p);

// Upper-tail p-value of a chi-squared statistic with one degree of freedom.
double chi2_pvalue_1dof(double chi2);

// Two-sided p-value of a standard-normal z statistic: erfc(|z| / sqrt(2)).
double two_sided_normal_p(double z);

// Neumaier-compensated accumulator; sums of ~1e5 table-scale terms stay
// exact to the last bit.
class KahanSum {
public:
    void add(double value);
    double value() const { return sum_ + compensation_; }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

double compensated_sum(std::span<const double> values);

}  // namespace starbell
