#pragma once

// Binomial estimates with exact confidence intervals, and small fitting helpers.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace anderson {

/// Two-sided Clopper-Pearson interval at the given confidence level.
std::pair<double, double> clopper_pearson(std::uint64_t hits, std::uint64_t trials, double level = 0.95);

/// A bound is numerically vacuous outside [1e-300, 1]; NaN counts as vacuous.
bool bound_is_vacuous(double bound_log10);

struct MonteCarloEstimate {
  std::uint64_t hits = 0;
  std::uint64_t trials = 0;
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  double bound_log10 = 0.0;  // NaN when the bound has no explicit constants
  bool vacuous = true;
  std::string bound_ref;

  static MonteCarloEstimate make(std::uint64_t hits, std::uint64_t trials, double bound_log10, std::string ref);
  /// The bound as a plain number; 0 or inf when it under/overflows.
  double bound() const;
};

void to_json(nlohmann::json& j, const MonteCarloEstimate& e);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares of y on x; needs two distinct x values.
LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

double median(std::vector<double> v);
/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> v, double q);

}  // namespace anderson
