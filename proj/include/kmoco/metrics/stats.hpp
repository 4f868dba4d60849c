#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>

#include "kmoco/error.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

inline double mean_of(const std::vector<double>& v) {
    require(!v.empty(), ErrorCategory::invalid_argument, "mean of an empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of a sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    require(!sorted.empty(), ErrorCategory::invalid_argument, "quantile of an empty sample");
    require(q >= 0.0 && q <= 1.0, ErrorCategory::invalid_argument, "quantile level outside [0, 1]");
    const double h = (double(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

struct ConfidenceInterval {
    double low = 0.0;
    double mean = 0.0;
    double high = 0.0;
};

inline constexpr int default_bootstrap_iters = 10000;

/// Percentile bootstrap interval of the mean at level 1 - alpha. The
/// bounds are widened to the sample mean if resampling left it outside.
inline ConfidenceInterval bootstrap_ci(const std::vector<double>& samples, Rng& rng,
                                       int iters = default_bootstrap_iters, double alpha = 0.05) {
    require(!samples.empty(), ErrorCategory::invalid_argument, "bootstrap_ci: empty sample");
    require(iters >= 1, ErrorCategory::invalid_argument, "bootstrap_ci: iters must be positive");
    require(alpha > 0.0 && alpha < 1.0, ErrorCategory::invalid_argument, "bootstrap_ci: alpha must lie in (0, 1)");
    for (double v : samples)
        require(std::isfinite(v), ErrorCategory::non_finite, "bootstrap_ci: non-finite sample");
    const double m = mean_of(samples);
    const int n = static_cast<int>(samples.size());
    std::vector<double> means(static_cast<std::size_t>(iters));
    for (auto& out : means) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += samples[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
        out = acc / n;
    }
    std::sort(means.begin(), means.end());
    return {std::min(m, quantile_sorted(means, alpha / 2)), m, std::max(m, quantile_sorted(means, 1 - alpha / 2))};
}

struct AnovaResult {
    double f = 0.0;
    double p = 1.0;
    int df_between = 0;
    int df_within = 0;
    double ss_between = 0.0;
    double ss_within = 0.0;
};

namespace detail {

inline void check_groups(const std::vector<std::vector<double>>& groups, const char* what) {
    require(groups.size() >= 2, ErrorCategory::invalid_argument, std::string(what) + ": need at least two groups");
    for (std::size_t g = 0; g < groups.size(); ++g) {
        require(groups[g].size() >= 2, ErrorCategory::invalid_argument,
                std::string(what) + ": group " + std::to_string(g) + " has fewer than two observations");
        for (double v : groups[g])
            require(std::isfinite(v), ErrorCategory::non_finite, std::string(what) + ": non-finite observation");
    }
}

} // namespace detail

/// Classical one-way ANOVA; p from the F(k-1, N-k) upper tail.
inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    detail::check_groups(groups, "anova_oneway");
    std::size_t N = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        N += g.size();
        grand += std::accumulate(g.begin(), g.end(), 0.0);
    }
    grand /= double(N);
    AnovaResult r;
    for (const auto& g : groups) {
        const double m = mean_of(g);
        r.ss_between += double(g.size()) * (m - grand) * (m - grand);
        for (double v : g) r.ss_within += (v - m) * (v - m);
    }
    r.df_between = static_cast<int>(groups.size()) - 1;
    r.df_within = static_cast<int>(N - groups.size());
    const double msb = r.ss_between / r.df_between, msw = r.ss_within / r.df_within;
    if (msb == 0.0) {
        r.f = 0.0;
        r.p = 1.0;
    } else if (msw == 0.0) {
        r.f = std::numeric_limits<double>::infinity();
        r.p = 0.0;
    } else {
        r.f = msb / msw;
        boost::math::fisher_f dist(r.df_between, r.df_within);
        r.p = std::clamp(boost::math::cdf(boost::math::complement(dist, r.f)), 0.0, 1.0);
    }
    return r;
}

/// Monte Carlo sample of the studentized range Q(k, df): the range of k
/// standard normals over sqrt(chi^2_df / df). Sorted ascending.
class StudentizedRange {
public:
    static constexpr int default_draws = 200000;

    StudentizedRange(int k, int df, Rng& rng, int draws = default_draws) : k_(k), df_(df) {
        require(k >= 2 && df >= 1, ErrorCategory::invalid_argument, "studentized range needs k >= 2 and df >= 1");
        require(draws >= 1000, ErrorCategory::invalid_argument, "studentized range needs at least 1000 draws");
        draws_.resize(static_cast<std::size_t>(draws));
        for (auto& q : draws_) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (int i = 0; i < k; ++i) {
                const double z = rng.normal();
                lo = std::min(lo, z);
                hi = std::max(hi, z);
            }
            q = (hi - lo) / std::sqrt(rng.chi_squared(df) / df);
        }
        std::sort(draws_.begin(), draws_.end());
    }

    int k() const noexcept { return k_; }
    int df() const noexcept { return df_; }
    std::size_t draws() const noexcept { return draws_.size(); }

    /// Upper-alpha critical value.
    double critical(double alpha) const { return quantile_sorted(draws_, 1.0 - alpha); }

    /// P(Q >= q).
    double upper_tail(double q) const {
        const auto it = std::lower_bound(draws_.begin(), draws_.end(), q);
        return double(draws_.end() - it) / double(draws_.size());
    }

private:
    int k_, df_;
    std::vector<double> draws_;
};

struct PairwiseComparison {
    std::size_t a = 0, b = 0;
    double mean_diff = 0.0;  ///< mean(a) - mean(b)
    double q = 0.0;
    double p_adjusted = 1.0;
    bool significant = false;
};

struct TestResult {
    double anova_f = 0.0;
    double anova_p = 1.0;
    double q_critical = 0.0;
    double alpha = 0.05;
    std::vector<PairwiseComparison> pairwise;
};

/// One-way ANOVA followed by Tukey-Kramer pairwise comparisons with
/// Monte Carlo p-values.
inline TestResult tukey_hsd(const std::vector<std::vector<double>>& groups, Rng& rng, double alpha = 0.05,
                            int draws = StudentizedRange::default_draws) {
    detail::check_groups(groups, "tukey_hsd");
    require(alpha > 0.0 && alpha < 1.0, ErrorCategory::invalid_argument, "tukey_hsd: alpha must lie in (0, 1)");
    const auto a = anova_oneway(groups);
    const double msw = a.ss_within / a.df_within;
    StudentizedRange dist(static_cast<int>(groups.size()), a.df_within, rng, draws);
    TestResult r{a.f, a.p, dist.critical(alpha), alpha, {}};
    for (std::size_t i = 0; i < groups.size(); ++i)
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            PairwiseComparison c{i, j, mean_of(groups[i]) - mean_of(groups[j])};
            const double se = std::sqrt(msw / 2.0 * (1.0 / double(groups[i].size()) + 1.0 / double(groups[j].size())));
            if (c.mean_diff == 0.0) c.q = 0.0;
            else c.q = se > 0.0 ? std::abs(c.mean_diff) / se : std::numeric_limits<double>::infinity();
            c.p_adjusted = c.q == 0.0 ? 1.0 : dist.upper_tail(c.q);
            c.significant = c.q > r.q_critical;
            r.pairwise.push_back(c);
        }
    return r;
}

} // namespace kmoco
