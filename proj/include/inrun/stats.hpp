#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace inrun {

struct CorrelationReport {
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
  std::size_t n = 0;
};

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> x);

/// Sample Pearson correlation. Throws DegenerateError on constant input or n < 2.
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of midranks (ties share the average rank).
double spearman(std::span<const double> x, std::span<const double> y);
CorrelationReport correlate(std::span<const double> x, std::span<const double> y);

/// 1-based ranks; tied values receive the mean of the ranks they span.
std::vector<double> midranks(std::span<const double> x);

/// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> x, double q);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace inrun
