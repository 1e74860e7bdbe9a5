#include "apdlh/stats.hpp"

#include "apdlh/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace apdlh {

double cliffs_delta(std::span<const double> x, std::span<const double> y) {
    if (x.empty() || y.empty()) throw EmptySample("cliffs_delta needs two non-empty samples");
    std::vector<double> ys(y.begin(), y.end());
    std::sort(ys.begin(), ys.end());
    long long net = 0;
    for (double xi : x) {
        const auto lt = std::lower_bound(ys.begin(), ys.end(), xi) - ys.begin();
        const auto le = std::upper_bound(ys.begin(), ys.end(), xi) - ys.begin();
        net += lt;                                         // y below xi
        net -= static_cast<long long>(ys.size()) - le;     // y above xi
    }
    return static_cast<double>(net) / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

std::string_view to_string(EffectLabel l) noexcept {
    switch (l) {
        case EffectLabel::Negligible: return "negligible";
        case EffectLabel::Small: return "small";
        case EffectLabel::Medium: return "medium";
        case EffectLabel::Large: return "large";
    }
    return "negligible";
}

EffectLabel effect_label(double delta) {
    const double d = std::fabs(delta);
    if (d < 0.147) return EffectLabel::Negligible;
    if (d < 0.33) return EffectLabel::Small;
    if (d < 0.474) return EffectLabel::Medium;
    return EffectLabel::Large;
}

double prob_superiority(double delta) { return (delta + 1.0) / 2.0; }

namespace {

double u_statistic(std::span<const double> x, std::span<const double> y) {
    double u = 0;
    for (double xi : x) {
        for (double yj : y) {
            if (xi > yj) u += 1;
            else if (xi == yj) u += 0.5;
        }
    }
    return u;
}

double exact_p(std::span<const double> x, std::span<const double> y, double u_obs) {
    std::vector<double> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    const std::size_t N = pooled.size(), n = x.size();
    const double mu = static_cast<double>(n * y.size()) / 2.0;
    const double obs = std::fabs(u_obs - mu) - 1e-9;

    std::vector<bool> pick(N, false);
    std::fill(pick.begin(), pick.begin() + static_cast<long>(n), true);
    std::vector<double> a, b;
    long total = 0, extreme = 0;
    // prev_permutation over a sorted-descending mask walks every n-subset once.
    do {
        a.clear();
        b.clear();
        for (std::size_t i = 0; i < N; ++i) (pick[i] ? a : b).push_back(pooled[i]);
        ++total;
        if (std::fabs(u_statistic(a, b) - mu) >= obs) ++extreme;
    } while (std::prev_permutation(pick.begin(), pick.end()));
    return static_cast<double>(extreme) / static_cast<double>(total);
}

double normal_p(std::span<const double> x, std::span<const double> y, double u) {
    const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
    const double N = n + m;
    std::map<double, long> ties;
    for (double v : x) ++ties[v];
    for (double v : y) ++ties[v];
    double tie_sum = 0;
    for (const auto& [_, t] : ties) tie_sum += static_cast<double>(t * t * t - t);
    const double var = n * m / 12.0 * ((N + 1.0) - tie_sum / (N * (N - 1.0)));
    if (!(var > 0)) return 1.0;
    const double mu = n * m / 2.0;
    const double z = std::max(0.0, std::fabs(u - mu) - 0.5) / std::sqrt(var);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

MannWhitney mann_whitney_u(std::span<const double> x, std::span<const double> y, MwMode mode) {
    if (x.empty() || y.empty()) throw EmptySample("mann_whitney_u needs two non-empty samples");
    MannWhitney r;
    r.u = u_statistic(x, y);
    if (mode == MwMode::Exact) {
        if (x.size() + y.size() > kMaxExactPooled) {
            throw SampleTooLargeForExact("exact enumeration supports n + m <= 16");
        }
        r.p = exact_p(x, y, r.u);
    } else {
        r.p = normal_p(x, y, r.u);
    }
    return r;
}

double weighted_kappa(std::span<const std::pair<int, int>> pairs, int k) {
    if (pairs.size() < 2) throw EmptySample("weighted_kappa needs at least two pairs");
    if (k < 2) throw std::invalid_argument("weighted_kappa needs k >= 2");
    const std::size_t K = static_cast<std::size_t>(k);
    std::vector<double> obs(K * K, 0.0), ra(K, 0.0), rb(K, 0.0);
    for (auto [a, b] : pairs) {
        if (a < 0 || a >= k || b < 0 || b >= k) throw std::out_of_range("rating outside 0..k-1");
        obs[static_cast<std::size_t>(a) * K + static_cast<std::size_t>(b)] += 1;
        ra[static_cast<std::size_t>(a)] += 1;
        rb[static_cast<std::size_t>(b)] += 1;
    }
    const auto used = [](const std::vector<double>& m) { return std::count_if(m.begin(), m.end(), [](double c) { return c > 0; }); };
    if (used(ra) < 2 || used(rb) < 2) throw DegenerateMarginals("a rater used a single category");

    const double n = static_cast<double>(pairs.size());
    const double denom_w = static_cast<double>((k - 1) * (k - 1));
    double vo = 0, ve = 0;
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            const double v = d * d / denom_w;
            vo += v * obs[i * K + j] / n;
            ve += v * (ra[i] / n) * (rb[j] / n);
        }
    }
    if (!(ve > 0)) throw DegenerateMarginals("no chance disagreement");
    return 1.0 - vo / ve;
}

double within_one_point_rate(std::span<const std::pair<int, int>> pairs) {
    if (pairs.empty()) throw EmptySample("within_one_point_rate needs pairs");
    const auto close = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return std::abs(p.first - p.second) <= 1; });
    return static_cast<double>(close) / static_cast<double>(pairs.size());
}

double z_critical(double level) {
    if (!(level > 0 && level < 1)) throw std::invalid_argument("confidence level must be in (0, 1)");
    if (level == 0.95) return 1.959964;
    boost::math::normal_distribution<double> nd;
    return boost::math::quantile(nd, 1.0 - (1.0 - level) / 2.0);
}

Interval binomial_ci(long successes, long n, double level) {
    if (n <= 0) throw EmptySample("binomial_ci needs n > 0");
    if (successes < 0 || successes > n) throw std::invalid_argument("successes must lie in 0..n");
    const double p = static_cast<double>(successes) / static_cast<double>(n);
    const double half = z_critical(level) * std::sqrt(p * (1 - p) / static_cast<double>(n));
    return {std::clamp(p - half, 0.0, 1.0), std::clamp(p + half, 0.0, 1.0)};
}

double quantile_linear(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw EmptySample("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Quartiles quartiles(std::vector<double> values) {
    if (values.empty()) throw EmptySample("quartiles of empty sample");
    std::sort(values.begin(), values.end());
    return {quantile_linear(values, 0.25), quantile_linear(values, 0.5), quantile_linear(values, 0.75)};
}

double mean(std::span<const double> v) {
    if (v.empty()) throw EmptySample("mean of empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace apdlh
