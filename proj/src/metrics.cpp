#include "ris/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace ris {

std::vector<double> average_reward(std::span<const double> instant) {
  if (instant.empty()) throw std::invalid_argument("average_reward: empty series");
  std::vector<double> out(instant.size());
  double running = 0.0;
  for (std::size_t i = 0; i < instant.size(); ++i) {
    running += instant[i];
    out[i] = running / static_cast<double>(i + 1);
  }
  return out;
}

std::vector<CdfPoint> sum_rate_cdf(std::span<const double> values, std::span<const double> grid) {
  if (values.empty()) throw std::invalid_argument("sum_rate_cdf: empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<CdfPoint> out;
  out.reserve(grid.size());
  for (double g : grid) {
    const auto below = std::upper_bound(sorted.begin(), sorted.end(), g) - sorted.begin();
    out.push_back({g, static_cast<double>(below) / n});
  }
  return out;
}

std::vector<CdfPoint> sum_rate_cdf(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("sum_rate_cdf: empty sample");
  std::vector<double> grid(values.begin(), values.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return sum_rate_cdf(values, grid);
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty series");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace ris
