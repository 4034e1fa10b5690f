#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ctt {

// Five-number summary of one VA-gap group.
struct GroupStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

// Gap statistics for samples grouped by true postoperative VA: the high
// group is strictly above the split, ties go to the low group. An empty
// group is reported as absent, never as zeros.
struct GapDistribution {
  double split = 0.7;
  std::optional<GroupStats> high;
  std::optional<GroupStats> low;
};

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double acc = 0.0;
  double f1 = 0.0;
  std::vector<double> gaps;  // true - pred, per sample
  GapDistribution distribution;
};

// Quantile by linear interpolation of order statistics (inclusive): the
// p-quantile of n sorted values sits at position p*(n-1).
double quantile_linear(const std::vector<double>& sorted_values, double p);

GapDistribution gap_distribution(const std::vector<double>& preds,
                                 const std::vector<double>& trues,
                                 double split = 0.7);

// MAE, RMSE, plus recovery-classification ACC and F1. F1 takes label 1
// (recovered) as the positive class and is 0 when precision + recall is 0.
MetricsReport compute_metrics(const std::vector<double>& preds,
                              const std::vector<double>& trues,
                              const std::vector<double>& pre_vas,
                              double threshold);

// Fixed-key JSON document for a report.
std::string metrics_to_json(const MetricsReport& report, int indent = 2);
std::string distribution_to_json(const GapDistribution& dist, int indent = 2);
// Plain-text table of the grouped five-number summaries.
std::string distribution_to_text(const GapDistribution& dist);

}  // namespace ctt
