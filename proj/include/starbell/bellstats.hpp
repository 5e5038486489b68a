#pragma once

// Statistical analysis of the coincidence data: setting probabilities and
// their independence test, CHSH estimates, excess setting predictability
// with propagated uncertainties, the optimally-weighted win statistic and
// its memory-robust significance, and no-signaling checks.

#include <array>
#include <vector>

#include "starbell/timetag.hpp"

namespace starbell {

// Row-major (i,j) order (11, 12, 21, 22) for all 4-vectors below.
using Cells = std::array<double, 4>;

struct SettingProbabilities {
    Cells q{};                    // joint setting frequencies N_ij / N
    std::array<double, 2> p_a{};  // marginals
    std::array<double, 2> p_b{};
    Cells n_ij{};
    double n_total = 0.0;
};

SettingProbabilities setting_probabilities(const CoincidenceTable& table);

struct Chi2Result {
    double chi2;
    double p_value;  // 1 degree of freedom (2x2 contingency)
};

Chi2Result chi2_independence(const SettingProbabilities& probs);

struct ChshEstimate {
    Cells p_same{};  // p(A=B | a_i b_j)
    double c = 0.0;  // win-probability form, local realism demands c <= 0
    Cells e{};       // correlation functions E_ij = 2 p_same - 1
    double s = 0.0;  // 2|-c - 1|, local realism demands s <= 2
};

ChshEstimate chsh(const CoincidenceTable& table);

struct SideRates {
    std::array<double, 2> total_hz{};
    std::array<double, 2> total_sigma_hz{};
    std::array<double, 2> noise_hz{};
    std::array<double, 2> noise_sigma_hz{};
    double f_1to2 = 0.0;  // wrong-way fractions between this side's ports
    double f_2to1 = 0.0;
    double sigma_f_over_f = 0.1;
};

struct RateBudget {
    SideRates alice;
    SideRates bob;
    double duration_total_s = 179.0;  // fills missing sigmas Poisson-style
    double duration_noise_s = 59.0;

    void validate() const;
    // sigma = sqrt(rate / duration) wherever an explicit sigma is zero.
    RateBudget with_poisson_sigmas() const;
};

struct StellarRates {
    std::array<double, 2> s_a{};  // per-port detected stellar rates
    std::array<double, 2> s_b{};
    double s_total_a = 0.0;       // sum_i (r_i - n_i); independent of f
    double s_total_b = 0.0;
};

// Inverts r_i = (1 - f_{i->i'}) s_i + f_{i'->i} s_{i'} + n_i per side.
// Throws on a singular port-mixing system; flags negative recovered rates.
StellarRates stellar_rates(const RateBudget& budget);

struct PredictabilityTable {
    std::array<double, 2> eps_a{}, sigma_eps_a{};
    std::array<double, 2> eps_b{}, sigma_eps_b{};
    Cells eps_ij{};        // eps_a_i + eps_b_j, clamped at 1
    Cells sigma_eps_ij{};
    double eps = 0.0;      // max_ij eps_ij
    double sigma_eps = 0.0;
    double eps_bar = 0.0;  // sum eps_ij / (1 - eps_ij)
    double s_total_a = 0.0, s_total_b = 0.0;
};

PredictabilityTable predictability(const RateBudget& budget);

struct WinStatistic {
    Cells n_win{};  // [N11^{A!=B}, N12^{A!=B}, N21^{A!=B}, N22^{A=B}]
    double w = 0.0;
    double w_expected = 0.0;  // N (3 + eps_bar)
    double eps_bar = 0.0;
};

WinStatistic win_statistic(const CoincidenceTable& table, const PredictabilityTable& pred);

// Loser-cell fractions maximizing sigma_W subject to sum f = 1, f >= 0;
// unconstrained stationary point first, then an active-set iteration that
// clamps the most negative component and re-solves.
Cells optimal_losers(const SettingProbabilities& probs, const PredictabilityTable& pred,
                     double n_total);

double sigma_w(const SettingProbabilities& probs, const PredictabilityTable& pred,
               const Cells& f, double n_total);

// Closed form of sigma_w at the unconstrained optimum; algebraically equal
// to sigma_w(optimal_losers(...)) whenever no clamping occurred.
double sigma_w_unconstrained_closed_form(const SettingProbabilities& probs,
                                         const PredictabilityTable& pred, double n_total);

struct SignificanceReport {
    Cells n_win{};
    double w = 0.0;
    double w_expected = 0.0;
    Cells f_opt{};
    double sigma_w_opt = 0.0;
    double nu_bar = 0.0;    // (W - <W>) / sigma_W
    double delta_nu = 0.0;  // propagated predictability uncertainty
    double nu_n = 0.0;      // nu_bar / (1 + delta_nu)
    double log_p = 0.0;     // ln p, p = erfc(nu_n / sqrt 2)
    double p = 0.0;
    double p_cond = 0.0;
    double nu_equivalent = 0.0;  // from p = erfc(nu / sqrt 2) / 2
    double chsh_c = 0.0;
    double eps = 0.0;
    bool violates_adapted_bound = false;  // C > eps
};

SignificanceReport significance(const CoincidenceTable& table,
                                const PredictabilityTable& pred);

// Standard-deviation count under the historical i.i.d. Gaussian treatment
// (binomial per-cell variance, no predictability penalty); reported for
// comparison only.
double naive_iid_sigma(const CoincidenceTable& table);

struct MemoryBound {
    std::vector<double> p_left_max;                    // index n-1
    std::vector<std::array<int, 4>> best_composition;  // loser counts per n
    double b = 0.0;
    int n_at_max = 0;
};

// Exact distribution of the running win-statistic increment after n trials,
// maximized over loser-cell compositions; B bounds the backslide
// probability of any memory strategy. Sums are accumulated on a 1e-12
// value grid (collision tolerance of the exact convolution).
MemoryBound memory_bound(const SettingProbabilities& probs, const PredictabilityTable& pred,
                         int n_max = 15);

// Single-trial increment distribution for a given loser cell, exposed for
// simulation cross-checks: (value, probability) atoms of W_alpha - (3+eps_bar).
std::vector<std::pair<double, double>> memory_step_distribution(
    const SettingProbabilities& probs, const PredictabilityTable& pred, int loser_cell);

struct MemoryAdjusted {
    double p_mem = 0.0;
    double log_p_mem = 0.0;
    double nu_equivalent = 0.0;
};

// p_mem = p / (1 - B), with the equivalent one-sided Gaussian sigma.
MemoryAdjusted memory_adjusted_p(double log_p, double b);

struct NoSignalingReport {
    // Point estimates, ordered (a1b1, a1b2, a2b1, a2b2) for Alice and
    // (b1a1, b1a2, b2a1, b2a2) for Bob.
    Cells p_a_plus{};
    Cells p_b_plus{};
    // Pooled two-proportion z-tests: A|a1 across b, A|a2 across b,
    // B|b1 across a, B|b2 across a.
    Cells z{};
    Cells p_values{};
};

NoSignalingReport no_signaling(const SinglesTable& singles);

// Same four tests evaluated on coincidence-conditioned marginals.
NoSignalingReport no_signaling_from_coincidences(const CoincidenceTable& table);

// Multiplies '+' counts by sqrt(R) and divides '-' counts by sqrt(R) per
// side, compensating known detector-efficiency imbalance.
CoincidenceTable efficiency_correction(const CoincidenceTable& table, double r_a, double r_b);

}  // namespace starbell
