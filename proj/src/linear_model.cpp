#include "symx/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "symx/error.hpp"
#include "symx/inventory.hpp"

namespace symx {

LinearFit fit_ols(std::span<const double> design, std::size_t rows, std::size_t columns,
                  std::span<const double> response) {
  if (design.size() != rows * columns || response.size() != rows) {
    throw ValidationError("design matrix shape does not match response length");
  }
  if (rows == 0) throw NumericError("least squares needs at least one observation");

  const double mean = std::accumulate(response.begin(), response.end(), 0.0) / static_cast<double>(rows);
  LinearFit fit;
  fit.coefficients.assign(columns, 0.0);

  Eigen::MatrixXd x(rows, columns + 1);
  Eigen::VectorXd y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    x(static_cast<Eigen::Index>(r), 0) = 1.0;
    for (std::size_t c = 0; c < columns; ++c) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c + 1)) = design[r * columns + c];
    }
    y(static_cast<Eigen::Index>(r)) = response[r];
  }
  const bool constant = std::all_of(response.begin(), response.end(), [&](double v) { return v == response[0]; });
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (constant || qr.rank() < x.cols()) {
    fit.intercept = mean;
    fit.intercept_only = true;
    return fit;
  }
  const Eigen::VectorXd beta = qr.solve(y);
  fit.intercept = beta(0);
  for (std::size_t c = 0; c < columns; ++c) fit.coefficients[c] = beta(static_cast<Eigen::Index>(c + 1));
  const bool finite = std::isfinite(fit.intercept) &&
                      std::all_of(fit.coefficients.begin(), fit.coefficients.end(),
                                  [](double v) { return std::isfinite(v); });
  if (!finite) {
    fit.coefficients.assign(columns, 0.0);
    fit.intercept = mean;
    fit.intercept_only = true;
  }
  return fit;
}

double predict(const LinearFit& fit, std::span<const double> regressors) {
  if (regressors.size() != fit.coefficients.size()) {
    throw ValidationError("regressor count does not match the fitted model");
  }
  double value = fit.intercept;
  for (std::size_t i = 0; i < regressors.size(); ++i) value += fit.coefficients[i] * regressors[i];
  return value;
}

int round_to_score(double value) {
  if (std::isnan(value)) return kMinScore;
  const double rounded = std::ceil(value - 0.5);
  return static_cast<int>(std::clamp(rounded, static_cast<double>(kMinScore), static_cast<double>(kMaxScore)));
}

}  // namespace symx
