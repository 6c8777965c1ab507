#include "ktbench/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <vector>

namespace ktbench {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw MetricError("scores and labels differ in length");
  for (int l : labels)
    if (l != 0 && l != 1) throw MetricError("labels must be binary");
}

// two-sided critical values t_{1 - alpha/2, df}, df = 1..30
constexpr std::array<double, 30> kT01 = {
    63.657, 9.925, 5.841, 4.604, 4.032, 3.707, 3.499, 3.355, 3.250, 3.169,
    3.106,  3.055, 3.012, 2.977, 2.947, 2.921, 2.898, 2.878, 2.861, 2.845,
    2.831,  2.819, 2.807, 2.797, 2.787, 2.779, 2.771, 2.763, 2.756, 2.750};
constexpr std::array<double, 30> kT05 = {
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
    2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const std::size_t n = scores.size();
  const std::size_t n_pos = std::size_t(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("AUC undefined: need both positive and negative labels");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (average) ranks of positives; ranks are 1-based.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    i = j;
  }
  const double np = double(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * double(n_neg));
}

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_lengths(scores, labels);
  if (scores.empty()) throw MetricError("accuracy undefined on empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (int(scores[i] >= threshold) == labels[i]) ++hits;
  return double(hits) / double(scores.size());
}

MetricResult evaluate_metrics(std::span<const double> scores, std::span<const int> labels,
                              double threshold) {
  MetricResult r;
  r.auc = auc(scores, labels);
  r.accuracy = accuracy(scores, labels, threshold);
  r.n_pos = std::size_t(std::count(labels.begin(), labels.end(), 1));
  r.n_neg = labels.size() - r.n_pos;
  return r;
}

const char* to_string(Significance s) {
  switch (s) {
    case Significance::Superior: return "superior";
    case Significance::Equal: return "equal";
    case Significance::Inferior: return "inferior";
  }
  return "equal";
}

const char* marker_symbol(Significance s) {
  switch (s) {
    case Significance::Superior: return "*";
    case Significance::Equal: return "o";
    case Significance::Inferior: return ".";
  }
  return "o";
}

double t_critical_two_sided(std::size_t df, double alpha) {
  if (df < 1 || df > kT01.size())
    throw Error("t critical table covers df 1..30, got " + std::to_string(df));
  if (alpha == 0.01) return kT01[df - 1];
  if (alpha == 0.05) return kT05[df - 1];
  throw Error("unsupported significance level; use 0.01 or 0.05");
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.size() != b.size() || a.size() < 2)
    throw Error("paired_t_test needs two equal-length samples of size >= 2");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];

  TTestResult r;
  r.df = n - 1;
  r.critical_value = t_critical_two_sided(r.df, alpha);
  const auto ms = mean_std(d);
  r.mean_difference = ms.mean;

  if (ms.std == 0.0) {
    if (ms.mean == 0.0) {
      r.t_statistic = 0.0;
      r.marker = Significance::Equal;
    } else {
      r.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), ms.mean);
      r.marker = ms.mean > 0 ? Significance::Superior : Significance::Inferior;
    }
    return r;
  }

  r.t_statistic = ms.mean / (ms.std / std::sqrt(double(n)));
  if (std::abs(r.t_statistic) > r.critical_value)
    r.marker = r.t_statistic > 0 ? Significance::Superior : Significance::Inferior;
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd ms;
  if (values.empty()) return ms;
  ms.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  if (values.size() < 2) return ms;
  double ss = 0.0;
  for (double v : values) ss += (v - ms.mean) * (v - ms.mean);
  ms.std = std::sqrt(ss / double(values.size() - 1));
  return ms;
}

std::string format_mean_std(const MeanStd& ms, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f±%.*f", precision, ms.mean, precision, ms.std);
  return buf;
}

}  // namespace ktbench
