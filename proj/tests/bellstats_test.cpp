#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"

#include "starbell/bellstats.hpp"
#include "starbell/math_util.hpp"

using namespace starbell;

namespace {

CoincidenceTable run1_table()
{
    CoincidenceTable table;
    table.counts = {2495, 6406, 7840, 2234, 6545, 24073, 30223, 4615,
                    1184, 4537, 5113, 959,  18451, 3512, 3949, 14196};
    return table;
}

CoincidenceTable run2_table()
{
    CoincidenceTable table;
    table.counts = {3703, 10980, 14087, 2756, 3253, 12213, 15210, 2899,
                    1084, 4105, 5442, 932,  5359, 1012, 1249, 4495};
    return table;
}

RateBudget run1_rates()
{
    RateBudget budget;
    budget.alice = {{105571, 38743}, {25, 15}, {1802, 1313}, {6, 5}, 0.0142, 0.0192, 0.1};
    budget.bob = {{26849, 93045}, {13, 23}, {756, 1008}, {4, 5}, 0.0180, 0.0146, 0.1};
    return budget;
}

RateBudget run2_rates()
{
    RateBudget budget;
    budget.alice = {{104999, 38176}, {25, 15}, {1658, 1823}, {8, 8}, 0.0139, 0.0203, 0.1};
    budget.bob = {{59513, 67880}, {19, 20}, {1731, 1414}, {8, 7}, 0.0139, 0.0160, 0.1};
    return budget;
}

SinglesTable run1_singles()
{
    SinglesTable singles;
    singles.alice = {163292, 550046, 101289, 340045, 165593, 555034, 100848, 340890};
    singles.bob = {562351, 352896, 2033046, 1279635, 480738, 302277, 1553010, 976740};
    return singles;
}

// A predictability table with chosen eps values and no uncertainty, for
// synthetic constructions.
PredictabilityTable synthetic_pred(const Cells& eps_a_b_split)
{
    PredictabilityTable pred;
    pred.eps_a = {eps_a_b_split[0], eps_a_b_split[1]};
    pred.eps_b = {eps_a_b_split[2], eps_a_b_split[3]};
    double eps_bar = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const int k = i * 2 + j;
            pred.eps_ij[k] = pred.eps_a[i] + pred.eps_b[j];
            eps_bar += pred.eps_ij[k] / (1.0 - pred.eps_ij[k]);
        }
    pred.eps_bar = eps_bar;
    pred.eps = std::max(pred.eps_a[0], pred.eps_a[1]) + std::max(pred.eps_b[0], pred.eps_b[1]);
    return pred;
}

}  // namespace

TEST_CASE("setting probabilities from the published tables")
{
    const SettingProbabilities p1 = setting_probabilities(run1_table());
    CHECK(p1.n_total == doctest::Approx(136332));
    CHECK(std::abs(p1.p_a[0] - 0.6193) < 5e-5);
    CHECK(std::abs(p1.p_a[1] - 0.3807) < 5e-5);
    CHECK(std::abs(p1.p_b[0] - 0.2257) < 5e-5);
    CHECK(std::abs(p1.p_b[1] - 0.7743) < 5e-5);

    const SettingProbabilities p2 = setting_probabilities(run2_table());
    CHECK(std::abs(p2.p_a[0] - 0.7333) < 5e-5);
    CHECK(std::abs(p2.p_b[0] - 0.4854) < 5e-5);

    CoincidenceTable uniform;
    uniform.counts.fill(10.0);
    const SettingProbabilities pu = setting_probabilities(uniform);
    for (double q : pu.q) CHECK(q == doctest::Approx(0.25));

    CoincidenceTable empty;
    CHECK_THROWS_AS(setting_probabilities(empty), std::invalid_argument);
}

TEST_CASE("settings independence chi-squared test")
{
    const Chi2Result c1 = chi2_independence(setting_probabilities(run1_table()));
    CHECK(c1.chi2 == doctest::Approx(1.132).epsilon(0.002));
    CHECK(std::abs(c1.p_value - 0.287) < 0.002);

    const Chi2Result c2 = chi2_independence(setting_probabilities(run2_table()));
    CHECK(c2.chi2 == doctest::Approx(1.158).epsilon(0.002));
    CHECK(std::abs(c2.p_value - 0.282) < 0.002);

    // exactly factorizable counts
    CoincidenceTable factorized;
    const double pa[2] = {0.6, 0.4};
    const double pb[2] = {0.3, 0.7};
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j)
            factorized.at(i, j, true, true) = 1e6 * pa[i - 1] * pb[j - 1];
    const Chi2Result cf = chi2_independence(setting_probabilities(factorized));
    CHECK(cf.chi2 == doctest::Approx(0.0).scale(1.0));
    CHECK(cf.p_value == doctest::Approx(1.0));
}

TEST_CASE("CHSH estimates for both runs")
{
    const ChshEstimate e1 = chsh(run1_table());
    CHECK(std::abs(e1.c - 0.2125) < 5e-4);
    CHECK(std::abs(e1.s - 2.425) < 5e-4);
    for (int k = 0; k < 4; ++k)
        CHECK(e1.e[k] == doctest::Approx(2.0 * e1.p_same[k] - 1.0));

    const ChshEstimate e2 = chsh(run2_table());
    CHECK(std::abs(e2.c - 0.2509) < 5e-4);
    CHECK(std::abs(e2.s - 2.502) < 5e-4);
}

TEST_CASE("fully correlated table sits at the algebraic corner")
{
    CoincidenceTable table;
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j) {
            table.at(i, j, true, true) = 50.0;
            table.at(i, j, false, false) = 50.0;
        }
    const ChshEstimate est = chsh(table);
    CHECK(est.c == doctest::Approx(-2.0));
    CHECK(est.s == doctest::Approx(2.0));

    CoincidenceTable missing = table;
    for (bool ap : {true, false})
        for (bool bp : {true, false}) missing.at(1, 2, ap, bp) = 0.0;
    CHECK_THROWS_AS(chsh(missing), std::invalid_argument);
}

TEST_CASE("stellar rates invert the port mixing")
{
    const StellarRates rates = stellar_rates(run1_rates());
    CHECK(rates.s_total_a == doctest::Approx(141199.0));
    CHECK(rates.s_total_b == doctest::Approx(118130.0));
    CHECK(rates.s_a[0] + rates.s_a[1] == doctest::Approx(rates.s_total_a).epsilon(1e-12));

    // with perfect dichroics the stellar rates are just the net rates
    RateBudget clean = run1_rates();
    clean.alice.f_1to2 = clean.alice.f_2to1 = 0.0;
    const StellarRates direct = stellar_rates(clean);
    CHECK(direct.s_a[0] == doctest::Approx(105571.0 - 1802.0));
    CHECK(direct.s_a[1] == doctest::Approx(38743.0 - 1313.0));
}

TEST_CASE("stellar rate inversion round-trips on random budgets")
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> rate(1e3, 1e5);
    std::uniform_real_distribution<double> f(0.0, 0.2);
    for (int trial = 0; trial < 50; ++trial) {
        RateBudget budget;
        for (SideRates* side : {&budget.alice, &budget.bob}) {
            const double s1 = rate(rng);
            const double s2 = rate(rng);
            side->noise_hz = {rate(rng) * 0.01, rate(rng) * 0.01};
            side->f_1to2 = f(rng);
            side->f_2to1 = f(rng);
            side->total_hz = {(1.0 - side->f_1to2) * s1 + side->f_2to1 * s2 + side->noise_hz[0],
                              side->f_1to2 * s1 + (1.0 - side->f_2to1) * s2 + side->noise_hz[1]};
        }
        const StellarRates recovered = stellar_rates(budget);
        for (const SideRates* side : {&budget.alice, &budget.bob}) {
            const auto& s = side == &budget.alice ? recovered.s_a : recovered.s_b;
            const double r1 = (1.0 - side->f_1to2) * s[0] + side->f_2to1 * s[1] + side->noise_hz[0];
            const double r2 = side->f_1to2 * s[0] + (1.0 - side->f_2to1) * s[1] + side->noise_hz[1];
            CHECK(r1 == doctest::Approx(side->total_hz[0]).epsilon(1e-9));
            CHECK(r2 == doctest::Approx(side->total_hz[1]).epsilon(1e-9));
        }
    }
}

TEST_CASE("singular port mixing is rejected")
{
    RateBudget budget = run1_rates();
    budget.alice.f_1to2 = 0.6;
    budget.alice.f_2to1 = 0.4;  // determinant 1 - f12 - f21 = 0
    CHECK_THROWS_AS(stellar_rates(budget), std::runtime_error);
}

TEST_CASE("excess predictabilities reproduce the published tables")
{
    const PredictabilityTable p1 = predictability(run1_rates());
    const double expected1[4] = {0.13521, 0.07645, 0.17791, 0.11915};
    const double sigmas1[4] = {6.92e-3, 3.44e-3, 8.24e-3, 5.65e-3};
    for (int k = 0; k < 4; ++k) {
        CHECK(std::abs(p1.eps_ij[k] - expected1[k]) < 3e-4);
        CHECK(p1.sigma_eps_ij[k] == doctest::Approx(sigmas1[k]).epsilon(0.10));
    }
    CHECK(std::abs(p1.eps - 0.1779) < 3e-4);
    CHECK(p1.sigma_eps == doctest::Approx(8.24e-3).epsilon(0.10));

    const PredictabilityTable p2 = predictability(run2_rates());
    const double expected2[4] = {0.10533, 0.08917, 0.16094, 0.14477};
    for (int k = 0; k < 4; ++k) CHECK(std::abs(p2.eps_ij[k] - expected2[k]) < 3e-4);
    CHECK(std::abs(p2.eps - 0.1609) < 3e-4);
    CHECK(std::abs(p2.sigma_eps - 6.08e-3) < 5e-4);

    // noiseless, error-free reader predicts nothing
    RateBudget clean = run1_rates();
    clean.alice.noise_hz = clean.bob.noise_hz = {0.0, 0.0};
    clean.alice.f_1to2 = clean.alice.f_2to1 = 0.0;
    clean.bob.f_1to2 = clean.bob.f_2to1 = 0.0;
    const PredictabilityTable zero = predictability(clean);
    for (double eps : zero.eps_ij) CHECK(eps == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("win statistic and its expectation for both runs")
{
    const WinStatistic w1 = win_statistic(run1_table(), predictability(run1_rates()));
    CHECK(w1.n_win[0] == doctest::Approx(14246));
    CHECK(w1.n_win[3] == doctest::Approx(32647));
    CHECK(std::abs(w1.w - 5.0249e5) / 5.0249e5 < 0.003);
    CHECK(std::abs(w1.w_expected - 4.8954e5) / 4.8954e5 < 0.003);

    const WinStatistic w2 = win_statistic(run2_table(), predictability(run2_rates()));
    CHECK(std::abs(w2.w - 3.3030e5) / 3.3030e5 < 0.003);
    CHECK(std::abs(w2.w_expected - 3.1754e5) / 3.1754e5 < 0.003);
}

TEST_CASE("with no predictability and uniform settings the local-realist bound saturates")
{
    CoincidenceTable table;
    const double n_ij = 10000.0;
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j) {
            const bool win_is_same = i == 2 && j == 2;
            // three quarters of each cell are wins
            const double win = 0.75 * n_ij;
            if (win_is_same) {
                table.at(i, j, true, true) = win / 2;
                table.at(i, j, false, false) = win / 2;
                table.at(i, j, true, false) = (n_ij - win) / 2;
                table.at(i, j, false, true) = (n_ij - win) / 2;
            } else {
                table.at(i, j, true, false) = win / 2;
                table.at(i, j, false, true) = win / 2;
                table.at(i, j, true, true) = (n_ij - win) / 2;
                table.at(i, j, false, false) = (n_ij - win) / 2;
            }
        }
    const PredictabilityTable pred = synthetic_pred({0.0, 0.0, 0.0, 0.0});
    const WinStatistic win = win_statistic(table, pred);
    CHECK(win.w == doctest::Approx(3.0 * 40000.0).epsilon(1e-12));
    CHECK(win.w_expected == doctest::Approx(3.0 * 40000.0).epsilon(1e-12));
}

TEST_CASE("fully predictable cells are rejected")
{
    const PredictabilityTable pred = synthetic_pred({0.6, 0.0, 0.4, 0.0});  // eps_11 = 1
    CHECK_THROWS_WITH_AS(win_statistic(run1_table(), pred),
                         doctest::Contains("fully predictable"), std::runtime_error);
}

TEST_CASE("optimal loser fractions for both runs")
{
    const SettingProbabilities p1 = setting_probabilities(run1_table());
    const Cells f1 = optimal_losers(p1, predictability(run1_rates()), p1.n_total);
    CHECK(std::abs(f1[0] - 0.376) < 0.003);
    CHECK(f1[1] == 0.0);
    CHECK(std::abs(f1[2] - 0.483) < 0.003);
    CHECK(std::abs(f1[3] - 0.141) < 0.003);

    const SettingProbabilities p2 = setting_probabilities(run2_table());
    const Cells f2 = optimal_losers(p2, predictability(run2_rates()), p2.n_total);
    CHECK(std::abs(f2[0] - 0.101) < 0.003);
    CHECK(std::abs(f2[1] - 0.062) < 0.003);
    CHECK(std::abs(f2[2] - 0.428) < 0.003);
    CHECK(std::abs(f2[3] - 0.409) < 0.003);
}

TEST_CASE("symmetric inputs give the symmetric optimum")
{
    CoincidenceTable uniform;
    uniform.counts.fill(100000.0 / 16.0);
    const SettingProbabilities probs = setting_probabilities(uniform);
    const Cells f = optimal_losers(probs, synthetic_pred({0, 0, 0, 0}), probs.n_total);
    for (double v : f) CHECK(v == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("loser fractions form a feasible first-order optimum")
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> count(100.0, 100000.0);
    std::uniform_real_distribution<double> eps(0.0, 0.12);
    for (int trial = 0; trial < 40; ++trial) {
        CoincidenceTable table;
        for (int k = 0; k < 16; ++k) table.counts[k] = count(rng);
        const SettingProbabilities probs = setting_probabilities(table);
        const PredictabilityTable pred = synthetic_pred({eps(rng), eps(rng), eps(rng), eps(rng)});
        const Cells f = optimal_losers(probs, pred, probs.n_total);

        double sum = 0.0;
        for (double v : f) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

        // moving mass along any feasible direction must not increase sigma_W
        const double base = sigma_w(probs, pred, f, probs.n_total);
        const double step = 1e-6;
        for (int from = 0; from < 4; ++from)
            for (int to = 0; to < 4; ++to) {
                if (from == to || f[from] < step) continue;
                Cells moved = f;
                moved[from] -= step;
                moved[to] += step;
                CHECK(sigma_w(probs, pred, moved, probs.n_total) <= base * (1.0 + 1e-9));
            }
    }
}

TEST_CASE("sigma_W for both runs and the closed-form identity")
{
    const SettingProbabilities p1 = setting_probabilities(run1_table());
    const PredictabilityTable pred1 = predictability(run1_rates());
    const Cells f1 = optimal_losers(p1, pred1, p1.n_total);
    CHECK(sigma_w(p1, pred1, f1, p1.n_total) == doctest::Approx(954.3).epsilon(0.01));

    const SettingProbabilities p2 = setting_probabilities(run2_table());
    const PredictabilityTable pred2 = predictability(run2_rates());
    const Cells f2 = optimal_losers(p2, pred2, p2.n_total);
    const double direct = sigma_w(p2, pred2, f2, p2.n_total);
    CHECK(direct == doctest::Approx(682.6).epsilon(0.01));
    // run 2 is unconstrained, so the closed form applies exactly
    CHECK(sigma_w_unconstrained_closed_form(p2, pred2, p2.n_total) ==
          doctest::Approx(direct).epsilon(1e-9));
}

TEST_CASE("closed-form sigma_W equals the direct sum wherever the optimum is interior")
{
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> count(5000.0, 20000.0);
    std::uniform_real_distribution<double> eps(0.0, 0.10);
    int interior_cases = 0;
    for (int trial = 0; trial < 60; ++trial) {
        CoincidenceTable table;
        for (int k = 0; k < 16; ++k) table.counts[k] = count(rng);
        const SettingProbabilities probs = setting_probabilities(table);
        const PredictabilityTable pred = synthetic_pred({eps(rng), eps(rng), eps(rng), eps(rng)});
        const Cells f = optimal_losers(probs, pred, probs.n_total);
        if (std::any_of(f.begin(), f.end(), [](double v) { return v == 0.0; })) continue;
        ++interior_cases;
        CHECK(sigma_w(probs, pred, f, probs.n_total) ==
              doctest::Approx(sigma_w_unconstrained_closed_form(probs, pred, probs.n_total))
                  .epsilon(1e-9));
    }
    CHECK(interior_cases > 10);
}

TEST_CASE("a deterministic loser plan with no corruption has zero variance")
{
    CoincidenceTable uniform;
    uniform.counts.fill(1000.0);
    const SettingProbabilities probs = setting_probabilities(uniform);
    const PredictabilityTable pred = synthetic_pred({0, 0, 0, 0});
    CHECK(sigma_w(probs, pred, {1.0, 0.0, 0.0, 0.0}, probs.n_total) ==
          doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("significance chain for run 1")
{
    const SignificanceReport r = significance(run1_table(), predictability(run1_rates()));
    CHECK(std::abs(r.nu_bar - 13.57) < 0.1);
    CHECK(std::abs(r.delta_nu - 0.799) < 0.01);
    CHECK(std::abs(r.nu_n - 7.54) < 0.05);
    CHECK(r.p / 4.64e-14 < 2.0);
    CHECK(r.p / 4.64e-14 > 0.5);
    CHECK(r.p == doctest::Approx(2.0 * r.p_cond));
    CHECK(r.violates_adapted_bound);  // C = 0.2125 > eps = 0.178
}

TEST_CASE("significance chain for run 2")
{
    const SignificanceReport r = significance(run2_table(), predictability(run2_rates()));
    CHECK(std::abs(r.nu_bar - 18.71) < 0.1);
    CHECK(std::abs(r.delta_nu - 0.540) < 0.01);
    CHECK(std::abs(r.nu_n - 12.15) < 0.05);
    CHECK(r.p / 5.93e-34 < 2.0);
    CHECK(r.p / 5.93e-34 > 0.5);
    CHECK(r.violates_adapted_bound);
}

TEST_CASE("vanishing predictability uncertainty collapses nu_n onto nu_bar")
{
    PredictabilityTable pred = predictability(run1_rates());
    pred.sigma_eps_a = {0.0, 0.0};
    pred.sigma_eps_b = {0.0, 0.0};
    const SignificanceReport r = significance(run1_table(), pred);
    CHECK(r.delta_nu == doctest::Approx(0.0).scale(1.0));
    CHECK(r.nu_n == doctest::Approx(r.nu_bar));
}

TEST_CASE("the historical iid estimate is reproduced for reference")
{
    CHECK(naive_iid_sigma(run1_table()) == doctest::Approx(39.8).epsilon(0.10));
    CHECK(naive_iid_sigma(run2_table()) == doctest::Approx(42.7).epsilon(0.10));
}

TEST_CASE("win statistic is bounded by the adapted expectation for CHSH-obeying data")
{
    // Construct tables from per-cell win probabilities satisfying
    // sum P_ij <= 3 and verify W <= (3 + eps_bar) N.
    std::mt19937_64 rng(63);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> eps(0.0, 0.10);
    for (int trial = 0; trial < 60; ++trial) {
        double p_win[4];
        double total = 0.0;
        for (double& p : p_win) {
            p = u(rng);
            total += p;
        }
        if (total > 3.0)
            for (double& p : p_win) p *= 3.0 / total;  // project onto the constraint

        const PredictabilityTable pred = synthetic_pred({eps(rng), eps(rng), eps(rng), eps(rng)});
        CoincidenceTable table;
        const double n_ij = 40000.0;
        for (int i = 1; i <= 2; ++i)
            for (int j = 1; j <= 2; ++j) {
                const int k = (i - 1) * 2 + (j - 1);
                // expected wins under corruption
                const double eps_ij = pred.eps_ij[k];
                const double wins = (eps_ij + (1.0 - eps_ij) * p_win[k]) * n_ij;
                if (i == 2 && j == 2) {
                    table.at(i, j, true, true) = wins;
                    table.at(i, j, true, false) = n_ij - wins;
                } else {
                    table.at(i, j, true, false) = wins;
                    table.at(i, j, true, true) = n_ij - wins;
                }
            }
        const WinStatistic win = win_statistic(table, pred);
        CHECK(win.w <= win.w_expected * (1.0 + 1e-12));
    }
}

TEST_CASE("memory step distributions are centered and normalized")
{
    const SettingProbabilities probs = setting_probabilities(run1_table());
    const PredictabilityTable pred = predictability(run1_rates());
    for (int loser = 0; loser < 4; ++loser) {
        const auto atoms = memory_step_distribution(probs, pred, loser);
        double mass = 0.0;
        double mean = 0.0;
        for (const auto& [value, p] : atoms) {
            mass += p;
            mean += value * p;
        }
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
        // <W_alpha> = 3 + eps_bar regardless of the loser plan
        CHECK(mean == doctest::Approx(0.0).scale(1.0));
    }
}

TEST_CASE("memory bound reproduces both runs and peaks at the first trial")
{
    const MemoryBound b1 = memory_bound(setting_probabilities(run1_table()),
                                        predictability(run1_rates()), 15);
    CHECK(std::abs(b1.b - 0.7393) < 0.002);
    CHECK(b1.n_at_max == 1);
    for (double p : b1.p_left_max) CHECK(p <= b1.b);

    const MemoryBound b2 = memory_bound(setting_probabilities(run2_table()),
                                        predictability(run2_rates()), 15);
    CHECK(std::abs(b2.b - 0.8500) < 0.002);
    CHECK(b2.n_at_max == 1);
}

TEST_CASE("exact convolution agrees with Monte Carlo sampling")
{
    const SettingProbabilities probs = setting_probabilities(run1_table());
    const PredictabilityTable pred = predictability(run1_rates());
    const MemoryBound bound = memory_bound(probs, pred, 10);

    std::mt19937_64 rng(8080);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int samples = 1000000;
    for (const int n : {1, 2, 5, 10}) {
        const auto& composition = bound.best_composition[n - 1];
        // per-trial sampler for each loser cell
        std::array<std::vector<std::pair<double, double>>, 4> steps;
        for (int cell = 0; cell < 4; ++cell) {
            steps[cell] = memory_step_distribution(probs, pred, cell);
            double cumulative = 0.0;
            for (auto& [value, p] : steps[cell]) {
                cumulative += p;
                p = cumulative;
            }
        }
        int left = 0;
        for (int s = 0; s < samples; ++s) {
            double sum = 0.0;
            for (int cell = 0; cell < 4; ++cell)
                for (int k = 0; k < composition[cell]; ++k) {
                    const double x = u(rng);
                    for (const auto& [value, cumulative] : steps[cell])
                        if (x <= cumulative) {
                            sum += value;
                            break;
                        }
                }
            if (sum < 0.0) ++left;
        }
        const double mc = static_cast<double>(left) / samples;
        const double exact = bound.p_left_max[n - 1];
        const double se = std::sqrt(exact * (1.0 - exact) / samples);
        CHECK(std::abs(mc - exact) < 3.0 * se + 1e-9);
    }
}

TEST_CASE("the backslide probability decays to one half for long games")
{
    const SettingProbabilities probs = setting_probabilities(run1_table());
    const PredictabilityTable pred = predictability(run1_rates());

    std::mt19937_64 rng(9090);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // all-in on the cell that achieves B at n = 1
    auto step = memory_step_distribution(probs, pred, 3);
    double cumulative = 0.0;
    for (auto& [value, p] : step) {
        cumulative += p;
        p = cumulative;
    }
    const int n = 1000;
    const int samples = 100000;
    int left = 0;
    for (int s = 0; s < samples; ++s) {
        double sum = 0.0;
        for (int k = 0; k < n; ++k) {
            const double x = u(rng);
            for (const auto& [value, c] : step)
                if (x <= c) {
                    sum += value;
                    break;
                }
        }
        if (sum < 0.0) ++left;
    }
    const double p_left = static_cast<double>(left) / samples;
    CHECK(std::abs(p_left - 0.5) < 0.01);
}

TEST_CASE("memory-adjusted p-values for both runs")
{
    const SignificanceReport r1 = significance(run1_table(), predictability(run1_rates()));
    const MemoryBound b1 = memory_bound(setting_probabilities(run1_table()),
                                        predictability(run1_rates()), 15);
    const MemoryAdjusted m1 = memory_adjusted_p(r1.log_p, b1.b);
    CHECK(m1.p_mem / 1.78e-13 < 2.0);
    CHECK(m1.p_mem / 1.78e-13 > 0.5);
    CHECK(std::abs(m1.nu_equivalent - 7.31) < 0.05);

    const SignificanceReport r2 = significance(run2_table(), predictability(run2_rates()));
    const MemoryBound b2 = memory_bound(setting_probabilities(run2_table()),
                                        predictability(run2_rates()), 15);
    const MemoryAdjusted m2 = memory_adjusted_p(r2.log_p, b2.b);
    CHECK(m2.p_mem / 3.96e-33 < 2.0);
    CHECK(m2.p_mem / 3.96e-33 > 0.5);
    CHECK(std::abs(m2.nu_equivalent - 11.93) < 0.05);

    const MemoryAdjusted none = memory_adjusted_p(r1.log_p, 0.0);
    CHECK(none.p_mem == doctest::Approx(r1.p));
    CHECK_THROWS_AS(memory_adjusted_p(r1.log_p, 1.0), std::invalid_argument);
}

TEST_CASE("no-signaling point estimates and pooled tests for run 1")
{
    const NoSignalingReport report = no_signaling(run1_singles());
    const double expected_a[4] = {0.4965, 0.4977, 0.5011, 0.4994};
    const double expected_b[4] = {0.5391, 0.5386, 0.5669, 0.5671};
    for (int k = 0; k < 4; ++k) {
        CHECK(std::abs(report.p_a_plus[k] - expected_a[k]) < 5e-4);
        CHECK(std::abs(report.p_b_plus[k] - expected_b[k]) < 5e-4);
    }
    const double expected_p[4] = {0.211, 0.177, 0.532, 0.654};
    for (int k = 0; k < 4; ++k) CHECK(std::abs(report.p_values[k] - expected_p[k]) < 0.01);
}

TEST_CASE("balanced singles show no signaling at all")
{
    SinglesTable balanced;
    balanced.alice.fill(1000.0);
    balanced.bob.fill(1000.0);
    const NoSignalingReport report = no_signaling(balanced);
    for (int k = 0; k < 4; ++k) {
        CHECK(report.z[k] == doctest::Approx(0.0).scale(1.0));
        CHECK(report.p_values[k] == doctest::Approx(1.0));
    }

    SinglesTable empty;
    CHECK_THROWS_AS(no_signaling(empty), std::invalid_argument);
}

TEST_CASE("efficiency correction scales plus and minus counts reciprocally")
{
    CoincidenceTable ones;
    ones.counts.fill(1.0);
    const CoincidenceTable same = efficiency_correction(ones, 1.0, 1.0);
    CHECK(same.counts == ones.counts);

    const CoincidenceTable scaled = efficiency_correction(ones, 4.0, 1.0);
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j) {
            CHECK(scaled.at(i, j, true, true) == doctest::Approx(2.0));
            CHECK(scaled.at(i, j, true, false) == doctest::Approx(2.0));
            CHECK(scaled.at(i, j, false, true) == doctest::Approx(0.5));
            CHECK(scaled.at(i, j, false, false) == doctest::Approx(0.5));
        }
    CHECK_THROWS_AS(efficiency_correction(ones, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("detector-efficiency correction removes the apparent marginal imbalance")
{
    // Raw coincidence-conditioned marginals fail the pooled test on Bob's
    // side; the corrected table passes everywhere.
    const NoSignalingReport raw = no_signaling_from_coincidences(run1_table());
    const bool raw_all_pass =
        std::all_of(raw.p_values.begin(), raw.p_values.end(), [](double p) { return p > 0.05; });
    CHECK(!raw_all_pass);

    const CoincidenceTable corrected = efficiency_correction(run1_table(), 1.00, 0.81);
    const NoSignalingReport fixed = no_signaling_from_coincidences(corrected);
    for (double p : fixed.p_values) CHECK(p > 0.05);
}
