#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace symx {

struct LinearFit {
  std::vector<double> coefficients;
  double intercept = 0.0;
  // True when the response was constant or the design rank deficient; the
  // fit is then the response mean with zero coefficients.
  bool intercept_only = false;
};

/// Ordinary least squares with an intercept. `design` is row-major,
/// `rows` x `columns`. A constant response or a rank-deficient design
/// yields an intercept-only fit at the response mean.
LinearFit fit_ols(std::span<const double> design, std::size_t rows, std::size_t columns,
                  std::span<const double> response);

double predict(const LinearFit& fit, std::span<const double> regressors);

/// Nearest integer with halves toward the lower score, clipped to 0..4.
int round_to_score(double value);

}  // namespace symx
