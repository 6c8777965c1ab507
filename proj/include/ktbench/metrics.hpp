#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "ktbench/core.hpp"

namespace ktbench {

// Raised when a metric is undefined for its input (e.g. AUC with one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kDefaultThreshold = 0.5;

struct MetricResult {
  double auc = 0.0;
  double accuracy = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

// Mann-Whitney statistic with average ranks for tied scores.
double auc(std::span<const double> scores, std::span<const int> labels);

// Fraction of items where (score >= threshold) matches the label.
double accuracy(std::span<const double> scores, std::span<const int> labels,
                double threshold = kDefaultThreshold);

MetricResult evaluate_metrics(std::span<const double> scores, std::span<const int> labels,
                              double threshold = kDefaultThreshold);

enum class Significance { Superior, Equal, Inferior };

const char* to_string(Significance s);
// Table markers: '*' superior, 'o' equal, '.' inferior.
const char* marker_symbol(Significance s);

struct TTestResult {
  double mean_difference = 0.0;
  double t_statistic = 0.0;  // +/-inf when the differences have zero variance
  double critical_value = 0.0;
  std::size_t df = 0;
  Significance marker = Significance::Equal;
};

// Two-sided paired t-test of a against b, paired by index. alpha must be 0.01
// or 0.05; df is limited to the built-in table (1..30).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha = 0.01);

double t_critical_two_sided(std::size_t df, double alpha);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};

MeanStd mean_std(std::span<const double> values);

// "0.7541±0.0011"
std::string format_mean_std(const MeanStd& ms, int precision = 4);

}  // namespace ktbench
