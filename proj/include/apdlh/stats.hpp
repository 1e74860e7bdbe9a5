#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace apdlh {

// (1/nm) * sum sgn(x_i - y_j). Throws EmptySample.
double cliffs_delta(std::span<const double> x, std::span<const double> y);

enum class EffectLabel { Negligible, Small, Medium, Large };

std::string_view to_string(EffectLabel l) noexcept;
EffectLabel effect_label(double delta);

// P(X > Y) + P(X = Y)/2 = (delta + 1) / 2
double prob_superiority(double delta);

enum class MwMode { Exact, NormalApprox };

struct MannWhitney {
    double u = 0;  // X wins plus half ties
    double p = 1;  // two-sided
};

inline constexpr std::size_t kMaxExactPooled = 16;

// Exact mode enumerates every split of the pooled sample (ties kept as
// observed) and needs n + m <= 16, else SampleTooLargeForExact.
MannWhitney mann_whitney_u(std::span<const double> x, std::span<const double> y, MwMode mode);

// Squared-error weighted kappa over categories 0..k-1. Throws EmptySample for
// fewer than two pairs and DegenerateMarginals when a rater uses a single
// category.
double weighted_kappa(std::span<const std::pair<int, int>> pairs, int k = 5);

double within_one_point_rate(std::span<const std::pair<int, int>> pairs);

struct Interval {
    double lo = 0;
    double hi = 0;
};

// Wald interval clamped to [0, 1]. Throws EmptySample for n = 0.
Interval binomial_ci(long successes, long n, double level = 0.95);

// Two-sided normal critical value for `level`; 0.95 gives 1.959964.
double z_critical(double level);

struct Quartiles {
    double q1 = 0;
    double median = 0;
    double q3 = 0;
};

// Linear interpolation between order statistics (h = (n-1)p).
Quartiles quartiles(std::vector<double> values);
double quantile_linear(const std::vector<double>& sorted, double p);

double mean(std::span<const double> v);

}  // namespace apdlh
