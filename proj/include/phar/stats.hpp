#pragma once

// Nonparametric comparisons of rule sets across datasets: Wilcoxon signed-rank,
// Friedman, and Nemenyi post-hoc with critical-difference data.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "core.hpp"

namespace phar::stats {

struct StatsError : Error {
    using Error::Error;
};

/// Average ranks (1-based) of `values`; ties share the mean of their positions.
/// With `descending`, the largest value gets rank 1.
inline std::vector<double> average_ranks(std::span<const double> values, bool descending = false) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return descending ? values[a] > values[b] : values[a] < values[b];
    });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        double r = 0.5 * double(i + j + 2);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

struct PairedSample {
    std::string name_a, name_b;
    std::vector<double> a, b;
};

struct WilcoxonResult {
    double w_plus = 0.0;
    double w_minus = 0.0;
    double statistic = 0.0;  // min(W+, W-)
    double p_value = 1.0;    // two-sided
    std::size_t n_effective = 0;
    bool exact = false;
};

/// Largest effective N handled by exact enumeration of sign patterns.
constexpr std::size_t kWilcoxonExactMax = 15;

inline WilcoxonResult wilcoxon(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw StatsError("wilcoxon: samples differ in length");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
    if (d.empty()) throw StatsError("wilcoxon: all differences are zero, statistic undefined");
    const std::size_t n = d.size();

    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(d[i]);
    auto ranks = average_ranks(mag);

    WilcoxonResult res;
    res.n_effective = n;
    for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? res.w_plus : res.w_minus) += ranks[i];
    res.statistic = std::min(res.w_plus, res.w_minus);

    if (n <= kWilcoxonExactMax) {
        // Tie-averaged ranks are multiples of 1/2, so doubled ranks are integers and the
        // null distribution of 2 W+ can be counted exactly.
        std::vector<std::size_t> doubled(n);
        std::size_t total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            doubled[i] = std::size_t(std::llround(2.0 * ranks[i]));
            total += doubled[i];
        }
        std::vector<double> count(total + 1, 0.0);
        count[0] = 1.0;
        for (auto r : doubled)
            for (std::size_t s = total; s >= r; --s) {
                count[s] += count[s - r];
                if (s == r) break;
            }
        const auto observed = std::size_t(std::llround(2.0 * res.statistic));
        double extreme = 0.0;
        for (std::size_t s = 0; s <= total; ++s)
            if (std::min(s, total - s) <= observed) extreme += count[s];
        res.p_value = std::min(1.0, extreme / std::ldexp(1.0, int(n)));
        res.exact = true;
    } else {
        const double nn = double(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        std::vector<double> sorted = mag;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            double t = double(j - i + 1);
            var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
        double z = var > 0 ? std::max(0.0, std::abs(res.statistic - mean) - 0.5) / std::sqrt(var) : 0.0;
        res.p_value = std::min(1.0, 2.0 * normal_sf(z));
    }
    return res;
}

inline WilcoxonResult wilcoxon(const PairedSample& s) { return wilcoxon(s.a, s.b); }

// ---------------------------------------------------------------------------
// Friedman
// ---------------------------------------------------------------------------

/// Datasets x methods table of metric values.
struct ScoreTable {
    std::vector<std::string> methods;
    std::vector<std::vector<double>> rows;  // one row per dataset, one column per method
};

struct RankTable {
    std::vector<std::string> methods;
    std::vector<std::vector<double>> ranks;
    std::vector<double> mean_ranks;
    double cd_value = 0.0;

    std::size_t datasets() const noexcept { return ranks.size(); }
    std::size_t k() const noexcept { return methods.size(); }
};

/// Ranks each row (rank 1 = best). Higher scores are better unless `higher_is_better` is false.
inline RankTable rank_table(const ScoreTable& table, bool higher_is_better = true) {
    RankTable rt;
    rt.methods = table.methods;
    const std::size_t k = table.methods.size();
    rt.mean_ranks.assign(k, 0.0);
    for (const auto& row : table.rows) {
        if (row.size() != k) throw StatsError("score table row has " + std::to_string(row.size()) + " values, expected " + std::to_string(k));
        rt.ranks.push_back(average_ranks(row, higher_is_better));
        for (std::size_t j = 0; j < k; ++j) rt.mean_ranks[j] += rt.ranks.back()[j];
    }
    if (!rt.ranks.empty())
        for (auto& r : rt.mean_ranks) r /= double(rt.ranks.size());
    return rt;
}

struct FriedmanResult {
    double chi2 = 0.0;
    double p_value = 1.0;
    std::size_t dof = 0;
    RankTable ranks;
};

inline double chi2_sf(double x, double dof) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

/// chi2_F = 12 D / (K (K + 1)) * sum_j (Rbar_j - (K + 1) / 2)^2 with K - 1 degrees of freedom.
inline FriedmanResult friedman(const ScoreTable& table, bool higher_is_better = true) {
    const std::size_t k = table.methods.size();
    const std::size_t d = table.rows.size();
    if (k < 3) throw StatsError("friedman needs at least 3 methods");
    if (d < 2) throw StatsError("friedman needs at least 2 datasets");
    FriedmanResult res;
    res.ranks = rank_table(table, higher_is_better);
    const double kk = double(k);
    double ss = 0.0;
    for (double r : res.ranks.mean_ranks) ss += (r - (kk + 1.0) / 2.0) * (r - (kk + 1.0) / 2.0);
    res.chi2 = 12.0 * double(d) / (kk * (kk + 1.0)) * ss;
    res.dof = k - 1;
    res.p_value = chi2_sf(res.chi2, double(res.dof));
    return res;
}

// ---------------------------------------------------------------------------
// Nemenyi
// ---------------------------------------------------------------------------

/// Studentized-range quantiles divided by sqrt(2) (infinite degrees of freedom), K = 2..20.
inline constexpr std::array<double, 19> kNemenyiQ05 = {
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878, 3.101730, 3.163684, 3.218654,
    3.268004, 3.312739, 3.353618, 3.391230, 3.426041, 3.458425, 3.488685, 3.517073, 3.543799};
inline constexpr std::array<double, 19> kNemenyiQ10 = {
    1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889, 2.977768,
    3.029694, 3.076733, 3.119693, 3.159199, 3.195743, 3.229723, 3.261461, 3.291224, 3.319233};

inline double nemenyi_q(std::size_t k, double alpha) {
    if (k < 2 || k > 20) throw StatsError("nemenyi supports 2..20 methods, got " + std::to_string(k));
    if (alpha == 0.05) return kNemenyiQ05[k - 2];
    if (alpha == 0.10) return kNemenyiQ10[k - 2];
    throw StatsError("nemenyi critical values are tabulated for alpha 0.05 and 0.10 only");
}

/// P(Q <= q) for the range of k standard normals:
/// k * integral phi(z) [Phi(z) - Phi(z - q)]^(k - 1) dz, composite Simpson on [-9, 9 + q].
inline double studentized_range_cdf(double q, std::size_t k) {
    if (q <= 0.0) return 0.0;
    auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
    auto Phi = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
    auto f = [&](double z) { return phi(z) * std::pow(Phi(z) - Phi(z - q), double(k - 1)); };
    const double lo = -9.0, hi = 9.0 + q;
    const int steps = 4000;
    const double h = (hi - lo) / steps;
    double s = f(lo) + f(hi);
    for (int i = 1; i < steps; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return std::clamp(double(k) * s * h / 3.0, 0.0, 1.0);
}

/// Cap applied to reported p-values, mirroring common post-hoc tables.
constexpr double kNemenyiReportCap = 0.9;

struct NemenyiResult {
    std::vector<std::string> methods;
    std::vector<std::vector<double>> p_raw;
    std::vector<std::vector<double>> p_capped;
    double cd_value = 0.0;
    double alpha = 0.05;
};

/// Pairwise p from q = |Rbar_i - Rbar_j| / sqrt(K (K + 1) / (12 D));
/// CD = q_alpha,K * sqrt(K (K + 1) / (6 D)).
inline NemenyiResult nemenyi(RankTable& table, double alpha = 0.05) {
    const std::size_t k = table.k();
    const std::size_t d = table.datasets();
    if (d == 0) throw StatsError("nemenyi needs at least one dataset");
    NemenyiResult res;
    res.methods = table.methods;
    res.alpha = alpha;
    const double kk = double(k), dd = double(d);
    res.cd_value = nemenyi_q(k, alpha) * std::sqrt(kk * (kk + 1.0) / (6.0 * dd));
    table.cd_value = res.cd_value;
    const double se = std::sqrt(kk * (kk + 1.0) / (12.0 * dd));
    res.p_raw.assign(k, std::vector<double>(k, 1.0));
    res.p_capped.assign(k, std::vector<double>(k, 1.0));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            double q = std::abs(table.mean_ranks[i] - table.mean_ranks[j]) / se;
            double p = 1.0 - studentized_range_cdf(q, k);
            res.p_raw[i][j] = res.p_raw[j][i] = p;
            res.p_capped[i][j] = res.p_capped[j][i] = std::min(p, kNemenyiReportCap);
        }
    return res;
}

inline json cd_diagram_json(const RankTable& table) {
    json out = json::array();
    for (std::size_t j = 0; j < table.k(); ++j)
        out.push_back({{"method", table.methods[j]}, {"mean_rank", table.mean_ranks[j]}, {"cd", table.cd_value}});
    return out;
}

} // namespace phar::stats
