#include "anderson/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/beta.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace anderson {

std::pair<double, double> clopper_pearson(std::uint64_t hits, std::uint64_t trials, double level) {
  if (trials == 0) throw std::invalid_argument("clopper_pearson: trials must be positive");
  if (hits > trials) throw std::invalid_argument("clopper_pearson: hits exceed trials");
  const double a = 1.0 - level;
  const auto k = static_cast<double>(hits);
  const auto n = static_cast<double>(trials);
  double lo = 0.0, hi = 1.0;
  if (hits > 0) lo = boost::math::quantile(boost::math::beta_distribution<double>(k, n - k + 1), a / 2);
  if (hits < trials) hi = boost::math::quantile(boost::math::beta_distribution<double>(k + 1, n - k), 1 - a / 2);
  return {lo, hi};
}

bool bound_is_vacuous(double bound_log10) {
  if (std::isnan(bound_log10)) return true;
  return bound_log10 > 0.0 || bound_log10 < -300.0;
}

MonteCarloEstimate MonteCarloEstimate::make(std::uint64_t hits, std::uint64_t trials, double bound_log10,
                                            std::string ref) {
  MonteCarloEstimate e;
  e.hits = hits;
  e.trials = trials;
  e.point = static_cast<double>(hits) / static_cast<double>(trials);
  std::tie(e.ci_low, e.ci_high) = clopper_pearson(hits, trials);
  // Guard the ordering against quantile round-off at the extremes.
  e.ci_low = std::min(e.ci_low, e.point);
  e.ci_high = std::max(e.ci_high, e.point);
  e.bound_log10 = bound_log10;
  e.vacuous = bound_is_vacuous(bound_log10);
  e.bound_ref = std::move(ref);
  return e;
}

double MonteCarloEstimate::bound() const {
  if (std::isnan(bound_log10)) return std::numeric_limits<double>::quiet_NaN();
  return std::pow(10.0, bound_log10);
}

void to_json(nlohmann::json& j, const MonteCarloEstimate& e) {
  j = {{"hits", e.hits},         {"trials", e.trials},   {"point", e.point},
       {"ci_low", e.ci_low},     {"ci_high", e.ci_high}, {"bound_log10", nullptr},
       {"vacuous", e.vacuous},   {"bound_ref", e.bound_ref}};
  if (!std::isnan(e.bound_log10)) j["bound_log10"] = e.bound_log10;
}

LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("least_squares: need two matching points");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("least_squares: x values coincide");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  return f;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace anderson
