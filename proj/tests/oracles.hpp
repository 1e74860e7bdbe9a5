#pragma once

// Reference implementations used only to check the library. Each one takes
// the slowest, most literal route to the definition.

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace oracle {

inline int sgn(double v) { return (v > 0) - (v < 0); }

// (1/nm) * sum over all pairs of sgn(x - y)
inline double cliffs_delta(const std::vector<double>& x, const std::vector<double>& y) {
    long long s = 0;
    for (double a : x)
        for (double b : y) s += sgn(a - b);
    return static_cast<double>(s) / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

inline double u_stat(const std::vector<double>& x, const std::vector<double>& y) {
    double u = 0;
    for (double a : x)
        for (double b : y) u += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    return u;
}

// Two-sided exact p by recursive choice of which pooled positions form X.
inline double mw_exact_p(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> pooled = x;
    pooled.insert(pooled.end(), y.begin(), y.end());
    const std::size_t n = x.size();
    const double mu = static_cast<double>(x.size() * y.size()) / 2.0;
    const double obs = std::fabs(u_stat(x, y) - mu);
    long total = 0, hits = 0;
    std::vector<double> a, b;
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (a.size() > n || b.size() > pooled.size() - n) return;
        if (i == pooled.size()) {
            ++total;
            if (std::fabs(u_stat(a, b) - mu) >= obs - 1e-12) ++hits;
            return;
        }
        a.push_back(pooled[i]);
        rec(i + 1);
        a.pop_back();
        b.push_back(pooled[i]);
        rec(i + 1);
        b.pop_back();
    };
    rec(0);
    return static_cast<double>(hits) / static_cast<double>(total);
}

// Agreement-weight form: kappa = (p_o - p_e) / (1 - p_e) with
// w_ij = 1 - (i-j)^2/(k-1)^2.
inline double weighted_kappa(const std::vector<std::pair<int, int>>& pairs, int k) {
    const double n = static_cast<double>(pairs.size());
    std::vector<std::vector<double>> o(k, std::vector<double>(k, 0.0));
    std::vector<double> ra(k, 0.0), rb(k, 0.0);
    for (auto [a, b] : pairs) {
        o[a][b] += 1.0 / n;
        ra[a] += 1.0 / n;
        rb[b] += 1.0 / n;
    }
    double po = 0, pe = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double w = 1.0 - static_cast<double>((i - j) * (i - j)) / static_cast<double>((k - 1) * (k - 1));
            po += w * o[i][j];
            pe += w * ra[i] * rb[j];
        }
    }
    return (po - pe) / (1.0 - pe);
}

inline std::pair<double, double> wald(long s, long n) {
    const double p = static_cast<double>(s) / n;
    const double h = 1.959964 * std::sqrt(p * (1 - p) / n);
    return {std::max(0.0, p - h), std::min(1.0, p + h)};
}

// Hyndman-Fan type 7, written from the definition.
inline double quantile7(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (v.size() - 1) * p;
    const double lo = std::floor(h);
    const double frac = h - lo;
    const std::size_t i = static_cast<std::size_t>(lo);
    if (i + 1 >= v.size()) return v.back();
    return v[i] * (1 - frac) + v[i + 1] * frac;
}

}  // namespace oracle
