#pragma once

#include <span>
#include <vector>

namespace ris {

/// Prefix means: out[i] = (x[0] + ... + x[i]) / (i + 1). Throws on empty input.
std::vector<double> average_reward(std::span<const double> instant);

struct CdfPoint {
  double value;
  double cdf;
};

/// Empirical CDF F(v) = #{x <= v} / n at every grid value. Throws on empty values.
std::vector<CdfPoint> sum_rate_cdf(std::span<const double> values, std::span<const double> grid);

/// Empirical CDF evaluated at each distinct sample value, ascending.
std::vector<CdfPoint> sum_rate_cdf(std::span<const double> values);

double mean(std::span<const double> xs);

}  // namespace ris
