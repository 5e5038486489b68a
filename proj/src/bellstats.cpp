#include "starbell/bellstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "starbell/math_util.hpp"

namespace starbell {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

int cell_index(int i, int j) { return (i - 1) * 2 + (j - 1); }

}  // namespace

SettingProbabilities setting_probabilities(const CoincidenceTable& table)
{
    table.validate();
    SettingProbabilities probs;
    KahanSum total;
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j) {
            probs.n_ij[cell_index(i, j)] = table.n_ij(i, j);
            total.add(table.n_ij(i, j));
        }
    probs.n_total = total.value();
    if (!(probs.n_total > 0.0))
        throw std::invalid_argument("setting_probabilities: empty table");
    for (int k = 0; k < 4; ++k) probs.q[k] = probs.n_ij[k] / probs.n_total;
    probs.p_a = {probs.q[0] + probs.q[1], probs.q[2] + probs.q[3]};
    probs.p_b = {probs.q[0] + probs.q[2], probs.q[1] + probs.q[3]};
    return probs;
}

Chi2Result chi2_independence(const SettingProbabilities& probs)
{
    KahanSum stat;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double expected = probs.p_a[i] * probs.p_b[j];
            if (!(expected > 0.0))
                throw std::invalid_argument("chi2_independence: degenerate marginals");
            const double diff = probs.q[i * 2 + j] - expected;
            stat.add(diff * diff / expected);
        }
    const double chi2 = probs.n_total * stat.value();
    return {chi2, chi2_pvalue_1dof(chi2)};
}

ChshEstimate chsh(const CoincidenceTable& table)
{
    table.validate();
    ChshEstimate est;
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j) {
            const double n_ij = table.n_ij(i, j);
            if (!(n_ij > 0.0))
                throw std::invalid_argument("chsh: empty settings cell");
            const double same = table.at(i, j, true, true) + table.at(i, j, false, false);
            est.p_same[cell_index(i, j)] = same / n_ij;
            est.e[cell_index(i, j)] = 2.0 * est.p_same[cell_index(i, j)] - 1.0;
        }
    est.c = -est.p_same[0] - est.p_same[1] - est.p_same[2] + est.p_same[3];
    est.s = 2.0 * std::abs(-est.c - 1.0);
    return est;
}

void RateBudget::validate() const
{
    for (const SideRates* side : {&alice, &bob}) {
        for (int i = 0; i < 2; ++i) {
            if (!(side->total_hz[i] > 0.0))
                throw std::invalid_argument("rate budget: total rate must be positive");
            if (side->noise_hz[i] < 0.0 || side->noise_hz[i] > side->total_hz[i])
                throw std::invalid_argument("rate budget: noise rate outside [0, total]");
            if (side->total_sigma_hz[i] < 0.0 || side->noise_sigma_hz[i] < 0.0)
                throw std::invalid_argument("rate budget: negative rate uncertainty");
        }
        if (side->f_1to2 < 0.0 || side->f_2to1 < 0.0 || side->f_1to2 >= 1.0 ||
            side->f_2to1 >= 1.0)
            throw std::invalid_argument("rate budget: wrong-way fraction outside [0, 1)");
        if (side->sigma_f_over_f < 0.0)
            throw std::invalid_argument("rate budget: negative wrong-way uncertainty");
    }
    if (!(duration_total_s > 0.0) || !(duration_noise_s > 0.0))
        throw std::invalid_argument("rate budget: durations must be positive");
}

RateBudget RateBudget::with_poisson_sigmas() const
{
    RateBudget out = *this;
    for (SideRates* side : {&out.alice, &out.bob}) {
        for (int i = 0; i < 2; ++i) {
            if (side->total_sigma_hz[i] == 0.0)
                side->total_sigma_hz[i] = std::sqrt(side->total_hz[i] / duration_total_s);
            if (side->noise_sigma_hz[i] == 0.0)
                side->noise_sigma_hz[i] = std::sqrt(side->noise_hz[i] / duration_noise_s);
        }
    }
    return out;
}

namespace {

std::array<double, 2> solve_side_rates(const SideRates& side, const char* label)
{
    const double det = 1.0 - side.f_1to2 - side.f_2to1;
    if (std::abs(det) < 1e-12)
        throw std::runtime_error(std::string("stellar_rates: singular port mixing on side ") +
                                 label);
    const double net1 = side.total_hz[0] - side.noise_hz[0];
    const double net2 = side.total_hz[1] - side.noise_hz[1];
    const double s1 = ((1.0 - side.f_2to1) * net1 - side.f_2to1 * net2) / det;
    const double s2 = ((1.0 - side.f_1to2) * net2 - side.f_1to2 * net1) / det;
    if (s1 < 0.0 || s2 < 0.0)
        throw std::runtime_error(std::string("stellar_rates: negative recovered rate on side ") +
                                 label);
    return {s1, s2};
}

}  // namespace

StellarRates stellar_rates(const RateBudget& budget)
{
    budget.validate();
    StellarRates rates;
    rates.s_a = solve_side_rates(budget.alice, "A");
    rates.s_b = solve_side_rates(budget.bob, "B");
    rates.s_total_a = budget.alice.total_hz[0] + budget.alice.total_hz[1] -
                      budget.alice.noise_hz[0] - budget.alice.noise_hz[1];
    rates.s_total_b = budget.bob.total_hz[0] + budget.bob.total_hz[1] -
                      budget.bob.noise_hz[0] - budget.bob.noise_hz[1];
    return rates;
}

namespace {

struct SidePredictability {
    std::array<double, 2> eps{};
    std::array<double, 2> sigma{};
};

// eps_i = (n_i + f_{i'->i} s) / r_i with the independence error propagation;
// s is the f-independent total stellar rate of the side.
SidePredictability side_predictability(const SideRates& side, double s_total)
{
    SidePredictability out;
    const std::array<double, 2> f_into = {side.f_2to1, side.f_1to2};  // f_{i'->i}
    for (int i = 0; i < 2; ++i) {
        const int other = 1 - i;
        const double r = side.total_hz[i];
        const double n = side.noise_hz[i];
        const double f = f_into[i];
        const double sigma_f = f * side.sigma_f_over_f;
        out.eps[i] = (n + f * s_total) / r;

        const double sr = side.total_sigma_hz[i];
        const double sn = side.noise_sigma_hz[i];
        const double sr_other = side.total_sigma_hz[other];
        const double sn_other = side.noise_sigma_hz[other];
        const double bracket = s_total * s_total * sigma_f * sigma_f +
                               (1.0 - f) * (1.0 - f) * sn * sn +
                               f * f * (sr_other * sr_other + sn_other * sn_other);
        const double numerator = n * (1.0 - f) + f * (side.total_hz[other] - side.noise_hz[other]);
        const double variance =
            (r * r * bracket + numerator * numerator * sr * sr) / std::pow(r, 4);
        out.sigma[i] = std::sqrt(variance);
    }
    return out;
}

}  // namespace

PredictabilityTable predictability(const RateBudget& budget_in)
{
    const RateBudget budget = budget_in.with_poisson_sigmas();
    budget.validate();
    const StellarRates stellar = stellar_rates(budget);

    PredictabilityTable table;
    table.s_total_a = stellar.s_total_a;
    table.s_total_b = stellar.s_total_b;

    const SidePredictability a = side_predictability(budget.alice, stellar.s_total_a);
    const SidePredictability b = side_predictability(budget.bob, stellar.s_total_b);
    table.eps_a = a.eps;
    table.sigma_eps_a = a.sigma;
    table.eps_b = b.eps;
    table.sigma_eps_b = b.sigma;

    KahanSum eps_bar;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const int k = i * 2 + j;
            table.eps_ij[k] = std::min(1.0, a.eps[i] + b.eps[j]);
            table.sigma_eps_ij[k] =
                std::sqrt(a.sigma[i] * a.sigma[i] + b.sigma[j] * b.sigma[j]);
            if (table.eps_ij[k] < 1.0)
                eps_bar.add(table.eps_ij[k] / (1.0 - table.eps_ij[k]));
            else
                eps_bar.add(std::numeric_limits<double>::infinity());
        }
    table.eps_bar = eps_bar.value();

    const int max_a = a.eps[0] >= a.eps[1] ? 0 : 1;
    const int max_b = b.eps[0] >= b.eps[1] ? 0 : 1;
    table.eps = std::min(1.0, a.eps[max_a] + b.eps[max_b]);
    table.sigma_eps =
        std::sqrt(a.sigma[max_a] * a.sigma[max_a] + b.sigma[max_b] * b.sigma[max_b]);
    return table;
}

WinStatistic win_statistic(const CoincidenceTable& table, const PredictabilityTable& pred)
{
    const SettingProbabilities probs = setting_probabilities(table);
    WinStatistic win;
    win.eps_bar = pred.eps_bar;
    win.n_win = {table.at(1, 1, true, false) + table.at(1, 1, false, true),
                 table.at(1, 2, true, false) + table.at(1, 2, false, true),
                 table.at(2, 1, true, false) + table.at(2, 1, false, true),
                 table.at(2, 2, true, true) + table.at(2, 2, false, false)};
    KahanSum w;
    for (int k = 0; k < 4; ++k) {
        if (!(probs.q[k] > 0.0))
            throw std::invalid_argument("win_statistic: empty settings cell");
        if (pred.eps_ij[k] >= 1.0)
            throw std::runtime_error("win_statistic: fully predictable cell");
        w.add(win.n_win[k] / (probs.q[k] * (1.0 - pred.eps_ij[k])));
    }
    win.w = w.value();
    win.w_expected = probs.n_total * (3.0 + pred.eps_bar);
    return win;
}

Cells optimal_losers(const SettingProbabilities& probs, const PredictabilityTable& pred,
                     double n_total)
{
    std::array<double, 4> odds{};  // eps / (1 - eps)
    for (int k = 0; k < 4; ++k) {
        if (pred.eps_ij[k] >= 1.0)
            throw std::runtime_error("optimal_losers: fully predictable cell");
        odds[k] = pred.eps_ij[k] / (1.0 - pred.eps_ij[k]);
    }
    const double shrink = (n_total - 1.0) / n_total;

    std::array<bool, 4> active = {true, true, true, true};
    Cells f{};
    for (int pass = 0; pass < 4; ++pass) {
        double q_active = 0.0;
        double odds_active = 0.0;
        int n_active = 0;
        for (int k = 0; k < 4; ++k)
            if (active[k]) {
                q_active += probs.q[k];
                odds_active += odds[k];
                ++n_active;
            }
        if (n_active == 0 || !(q_active > 0.0))
            throw std::runtime_error("optimal_losers: no feasible loser assignment");
        // Stationarity of the variance Lagrangian over the active set.
        const double mu = (n_active - 2.0 + shrink * odds_active) / q_active;
        int most_negative = -1;
        for (int k = 0; k < 4; ++k) {
            f[k] = active[k] ? 0.5 - 0.5 * probs.q[k] * mu + 0.5 * shrink * odds[k] : 0.0;
            if (active[k] && f[k] < -1e-12 &&
                (most_negative < 0 || f[k] < f[most_negative]))
                most_negative = k;
        }
        if (most_negative < 0) {
            for (double& v : f) v = std::max(0.0, v);
            return f;
        }
        active[most_negative] = false;
    }
    throw std::runtime_error("optimal_losers: active-set iteration failed to converge");
}

double sigma_w(const SettingProbabilities& probs, const PredictabilityTable& pred,
               const Cells& f, double n_total)
{
    KahanSum variance;
    for (int k = 0; k < 4; ++k) {
        if (!(probs.q[k] > 0.0)) throw std::invalid_argument("sigma_w: empty settings cell");
        variance.add(n_total * n_total / (n_total - 1.0) * f[k] * (1.0 - f[k]) / probs.q[k]);
        variance.add(n_total * f[k] * pred.eps_ij[k] /
                     (probs.q[k] * (1.0 - pred.eps_ij[k])));
    }
    return std::sqrt(variance.value());
}

double sigma_w_unconstrained_closed_form(const SettingProbabilities& probs,
                                         const PredictabilityTable& pred, double n_total)
{
    const double n = n_total;
    double inv_q = 0.0;
    double odds_term = 0.0;
    double last_term = 0.0;
    for (int k = 0; k < 4; ++k) {
        const double eps = pred.eps_ij[k];
        inv_q += 1.0 / probs.q[k];
        odds_term += eps / (probs.q[k] * (1.0 - eps));
        last_term += (n - eps) * eps / (probs.q[k] * (1.0 - eps) * (1.0 - eps));
    }
    const double eps_bar = pred.eps_bar;
    const double variance = n * n / (4.0 * (n - 1.0)) * (inv_q - 4.0) - n * eps_bar +
                            n / 4.0 * odds_term - 0.25 * (n - 1.0) * eps_bar * eps_bar +
                            0.25 * last_term;
    return std::sqrt(variance);
}

SignificanceReport significance(const CoincidenceTable& table,
                                const PredictabilityTable& pred)
{
    const SettingProbabilities probs = setting_probabilities(table);
    const WinStatistic win = win_statistic(table, pred);
    const double n = probs.n_total;

    SignificanceReport report;
    report.n_win = win.n_win;
    report.w = win.w;
    report.w_expected = win.w_expected;
    report.f_opt = optimal_losers(probs, pred, n);
    report.sigma_w_opt = sigma_w(probs, pred, report.f_opt, n);
    if (!(report.sigma_w_opt > 0.0))
        throw std::runtime_error("significance: vanishing sigma_W");
    report.nu_bar = (report.w - report.w_expected) / report.sigma_w_opt;

    // Predictability-uncertainty propagation into nu.
    Cells d{};
    for (int k = 0; k < 4; ++k) {
        const double eps = pred.eps_ij[k];
        const double residual = win.n_win[k] - n * probs.q[k] -
                                report.nu_bar * n / (2.0 * report.sigma_w_opt) * report.f_opt[k];
        d[k] = residual / (probs.q[k] * (1.0 - eps) * (1.0 - eps));
    }
    double delta2 = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double row = d[i * 2] + d[i * 2 + 1];
        const double scaled = pred.sigma_eps_a[i] / report.sigma_w_opt;
        delta2 += scaled * scaled * row * row;
    }
    for (int j = 0; j < 2; ++j) {
        const double column = d[j] + d[2 + j];
        const double scaled = pred.sigma_eps_b[j] / report.sigma_w_opt;
        delta2 += scaled * scaled * column * column;
    }
    report.delta_nu = std::sqrt(delta2);
    report.nu_n = report.nu_bar / (1.0 + report.delta_nu);

    report.log_p = log_erfc(std::max(0.0, report.nu_n) / kSqrt2);
    report.p = std::exp(report.log_p);
    report.p_cond = 0.5 * report.p;
    report.nu_equivalent = sigma_from_log_p(report.log_p);

    report.chsh_c = chsh(table).c;
    report.eps = pred.eps;
    report.violates_adapted_bound = report.chsh_c > pred.eps;
    return report;
}

double naive_iid_sigma(const CoincidenceTable& table)
{
    const ChshEstimate est = chsh(table);
    double variance = 0.0;
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j) {
            const double p = est.p_same[cell_index(i, j)];
            variance += p * (1.0 - p) / table.n_ij(i, j);
        }
    return est.c / std::sqrt(variance);
}

std::vector<std::pair<double, double>> memory_step_distribution(
    const SettingProbabilities& probs, const PredictabilityTable& pred, int loser_cell)
{
    if (loser_cell < 0 || loser_cell > 3)
        throw std::out_of_range("memory_step_distribution: loser cell outside 0..3");
    const double mean = 3.0 + pred.eps_bar;
    std::vector<std::pair<double, double>> atoms;
    for (int k = 0; k < 4; ++k) {
        const double value = 1.0 / (probs.q[k] * (1.0 - pred.eps_ij[k])) - mean;
        if (k == loser_cell) {
            atoms.emplace_back(value, probs.q[k] * pred.eps_ij[k]);      // corrupt: still a win
            atoms.emplace_back(-mean, probs.q[k] * (1.0 - pred.eps_ij[k]));  // honest loss
        } else {
            atoms.emplace_back(value, probs.q[k]);
        }
    }
    return atoms;
}

namespace {

// Exact distributions on a fixed value grid: key = round(value * 1e12).
using GridDist = std::vector<std::pair<std::int64_t, double>>;
constexpr double kValueGrid = 1e12;

GridDist to_grid(const std::vector<std::pair<double, double>>& atoms)
{
    std::map<std::int64_t, double> acc;
    for (const auto& [value, p] : atoms)
        if (p > 0.0) acc[std::llround(value * kValueGrid)] += p;
    return {acc.begin(), acc.end()};
}

GridDist convolve(const GridDist& x, const GridDist& y)
{
    std::unordered_map<std::int64_t, double> acc;
    acc.reserve(x.size() * 2);
    for (const auto& [vx, px] : x)
        for (const auto& [vy, py] : y) acc[vx + vy] += px * py;
    GridDist out(acc.begin(), acc.end());
    std::sort(out.begin(), out.end());
    return out;
}

// P(X + Y < 0) via the CDF of Y; avoids materializing the full convolution
// for every loser composition.
double probability_sum_below_zero(const GridDist& x, const GridDist& y)
{
    std::vector<double> y_prefix(y.size() + 1, 0.0);
    for (std::size_t k = 0; k < y.size(); ++k) y_prefix[k + 1] = y_prefix[k] + y[k].second;
    KahanSum p;
    for (const auto& [vx, px] : x) {
        // P(Y < -vx): strict inequality on the exact integer grid.
        const auto it = std::lower_bound(
            y.begin(), y.end(), -vx,
            [](const std::pair<std::int64_t, double>& atom, std::int64_t key) {
                return atom.first < key;
            });
        p.add(px * y_prefix[static_cast<std::size_t>(it - y.begin())]);
    }
    return p.value();
}

}  // namespace

MemoryBound memory_bound(const SettingProbabilities& probs, const PredictabilityTable& pred,
                         int n_max)
{
    if (n_max < 1) throw std::invalid_argument("memory_bound: n_max must be >= 1");

    // Per loser cell: k-fold convolutions of the single-trial distribution.
    std::array<std::vector<GridDist>, 4> folds;
    for (int cell = 0; cell < 4; ++cell) {
        const GridDist step = to_grid(memory_step_distribution(probs, pred, cell));
        folds[cell].resize(n_max + 1);
        folds[cell][0] = {{0, 1.0}};
        for (int k = 1; k <= n_max; ++k)
            folds[cell][k] = convolve(folds[cell][k - 1], step);
    }

    // Pairwise caches keyed by the two counts.
    std::map<std::pair<int, int>, GridDist> front_cache, back_cache;
    const auto front = [&](int n1, int n2) -> const GridDist& {
        auto it = front_cache.find({n1, n2});
        if (it == front_cache.end())
            it = front_cache.emplace(std::pair{n1, n2}, convolve(folds[0][n1], folds[1][n2]))
                     .first;
        return it->second;
    };
    const auto back = [&](int n3, int n4) -> const GridDist& {
        auto it = back_cache.find({n3, n4});
        if (it == back_cache.end())
            it = back_cache.emplace(std::pair{n3, n4}, convolve(folds[2][n3], folds[3][n4]))
                     .first;
        return it->second;
    };

    MemoryBound bound;
    bound.p_left_max.assign(n_max, 0.0);
    bound.best_composition.assign(n_max, {0, 0, 0, 0});
    for (int n = 1; n <= n_max; ++n) {
        double best = -1.0;
        std::array<int, 4> best_comp{};
        for (int n1 = 0; n1 <= n; ++n1)
            for (int n2 = 0; n2 <= n - n1; ++n2)
                for (int n3 = 0; n3 <= n - n1 - n2; ++n3) {
                    const int n4 = n - n1 - n2 - n3;
                    const double p_left =
                        probability_sum_below_zero(front(n1, n2), back(n3, n4));
                    if (p_left > best) {
                        best = p_left;
                        best_comp = {n1, n2, n3, n4};
                    }
                }
        bound.p_left_max[n - 1] = best;
        bound.best_composition[n - 1] = best_comp;
        if (best > bound.b) {
            bound.b = best;
            bound.n_at_max = n;
        }
    }
    return bound;
}

MemoryAdjusted memory_adjusted_p(double log_p, double b)
{
    if (!(b >= 0.0) || b >= 1.0)
        throw std::invalid_argument("memory_adjusted_p: B must lie in [0, 1)");
    MemoryAdjusted adjusted;
    adjusted.log_p_mem = std::min(0.0, log_p - std::log1p(-b));  // a probability bound
    adjusted.p_mem = std::exp(adjusted.log_p_mem);
    adjusted.nu_equivalent = sigma_from_log_p(adjusted.log_p_mem);
    return adjusted;
}

namespace {

struct PooledTest {
    double z;
    double p_value;
};

PooledTest pooled_two_proportion(double x1, double n1, double x2, double n2)
{
    if (!(n1 > 0.0) || !(n2 > 0.0))
        throw std::invalid_argument("no_signaling: empty cell");
    const double p1 = x1 / n1;
    const double p2 = x2 / n2;
    const double pooled = (x1 + x2) / (n1 + n2);
    const double variance = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2);
    if (!(variance > 0.0)) return {0.0, 1.0};  // all outcomes identical
    const double z = (p1 - p2) / std::sqrt(variance);
    return {z, two_sided_normal_p(z)};
}

}  // namespace

NoSignalingReport no_signaling(const SinglesTable& singles)
{
    NoSignalingReport report;
    const auto a_plus = [&](int i, int j) { return singles.alice[SinglesTable::index(true, i, j)]; };
    const auto a_minus = [&](int i, int j) { return singles.alice[SinglesTable::index(false, i, j)]; };
    const auto b_plus = [&](int j, int i) { return singles.bob[SinglesTable::index(true, j, i)]; };
    const auto b_minus = [&](int j, int i) { return singles.bob[SinglesTable::index(false, j, i)]; };

    int slot = 0;
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j) {
            const double total = a_plus(i, j) + a_minus(i, j);
            if (!(total > 0.0)) throw std::invalid_argument("no_signaling: empty cell");
            report.p_a_plus[slot++] = a_plus(i, j) / total;
        }
    slot = 0;
    for (int j = 1; j <= 2; ++j)
        for (int i = 1; i <= 2; ++i) {
            const double total = b_plus(j, i) + b_minus(j, i);
            if (!(total > 0.0)) throw std::invalid_argument("no_signaling: empty cell");
            report.p_b_plus[slot++] = b_plus(j, i) / total;
        }

    for (int i = 1; i <= 2; ++i) {
        const PooledTest t = pooled_two_proportion(
            a_plus(i, 1), a_plus(i, 1) + a_minus(i, 1), a_plus(i, 2),
            a_plus(i, 2) + a_minus(i, 2));
        report.z[i - 1] = t.z;
        report.p_values[i - 1] = t.p_value;
    }
    for (int j = 1; j <= 2; ++j) {
        const PooledTest t = pooled_two_proportion(
            b_plus(j, 1), b_plus(j, 1) + b_minus(j, 1), b_plus(j, 2),
            b_plus(j, 2) + b_minus(j, 2));
        report.z[1 + j] = t.z;
        report.p_values[1 + j] = t.p_value;
    }
    return report;
}

NoSignalingReport no_signaling_from_coincidences(const CoincidenceTable& table)
{
    // Coincidence-conditioned marginals as effective singles.
    SinglesTable singles;
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j) {
            const double ap = table.at(i, j, true, true) + table.at(i, j, true, false);
            const double am = table.at(i, j, false, true) + table.at(i, j, false, false);
            const double bp = table.at(i, j, true, true) + table.at(i, j, false, true);
            const double bm = table.at(i, j, true, false) + table.at(i, j, false, false);
            singles.alice[SinglesTable::index(true, i, j)] = ap;
            singles.alice[SinglesTable::index(false, i, j)] = am;
            singles.bob[SinglesTable::index(true, j, i)] = bp;
            singles.bob[SinglesTable::index(false, j, i)] = bm;
        }
    return no_signaling(singles);
}

CoincidenceTable efficiency_correction(const CoincidenceTable& table, double r_a, double r_b)
{
    if (!(r_a > 0.0) || !(r_b > 0.0))
        throw std::invalid_argument("efficiency_correction: ratios must be positive");
    const double sqrt_a = std::sqrt(r_a);
    const double sqrt_b = std::sqrt(r_b);
    CoincidenceTable corrected = table;
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    const bool a_plus = a == 0;
                    const bool b_plus = b == 0;
                    double& cell = corrected.at(i, j, a_plus, b_plus);
                    cell *= (a_plus ? sqrt_a : 1.0 / sqrt_a) * (b_plus ? sqrt_b : 1.0 / sqrt_b);
                }
    return corrected;
}

}  // namespace starbell
