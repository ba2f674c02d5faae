#pragma once

#include <span>

namespace symx::stats {

double mean(std::span<const double> values);
/// Sample variance (n - 1 denominator); 0 for fewer than two values.
double variance(std::span<const double> values);

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // two-sided
};

/// Welch's unequal-variance two-sample t-test of mean(a) - mean(b).
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// Cohen's d with the pooled standard deviation, mean(a) - mean(b).
double cohens_d(std::span<const double> a, std::span<const double> b);

}  // namespace symx::stats
