#include "ctt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ctt/losses.hpp"
#include "internal/json_util.hpp"

namespace ctt {

double quantile_linear(const std::vector<double>& sorted_values, double p) {
  if (sorted_values.empty()) {
    throw std::invalid_argument("quantile_linear: empty input");
  }
  const std::size_t n = sorted_values.size();
  if (n == 1) return sorted_values[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

namespace {

GroupStats five_number_summary(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  GroupStats s;
  s.count = values.size();
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_linear(values, 0.25);
  s.median = quantile_linear(values, 0.5);
  s.q3 = quantile_linear(values, 0.75);
  return s;
}

}  // namespace

GapDistribution gap_distribution(const std::vector<double>& preds,
                                 const std::vector<double>& trues,
                                 double split) {
  if (preds.size() != trues.size()) {
    throw std::invalid_argument("gap_distribution: length mismatch");
  }
  if (preds.empty()) {
    throw std::invalid_argument("gap_distribution: empty input");
  }
  std::vector<double> high_gaps, low_gaps;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double gap = trues[i] - preds[i];
    if (trues[i] > split) {
      high_gaps.push_back(gap);
    } else {
      low_gaps.push_back(gap);
    }
  }
  GapDistribution dist;
  dist.split = split;
  if (!high_gaps.empty()) dist.high = five_number_summary(std::move(high_gaps));
  if (!low_gaps.empty()) dist.low = five_number_summary(std::move(low_gaps));
  return dist;
}

MetricsReport compute_metrics(const std::vector<double>& preds,
                              const std::vector<double>& trues,
                              const std::vector<double>& pre_vas,
                              double threshold) {
  const std::size_t n = preds.size();
  if (n == 0) throw std::invalid_argument("compute_metrics: empty input");
  if (trues.size() != n || pre_vas.size() != n) {
    throw std::invalid_argument("compute_metrics: length mismatch");
  }

  MetricsReport report;
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  report.gaps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double err = preds[i] - trues[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    report.gaps.push_back(trues[i] - preds[i]);
    const int truth = recovery_label(trues[i], pre_vas[i], threshold);
    const int guess = recovery_label(preds[i], pre_vas[i], threshold);
    if (truth == 1 && guess == 1) ++tp;
    else if (truth == 0 && guess == 0) ++tn;
    else if (truth == 0 && guess == 1) ++fp;
    else ++fn;
  }
  report.mae = abs_sum / static_cast<double>(n);
  report.rmse = std::sqrt(sq_sum / static_cast<double>(n));
  report.acc = static_cast<double>(tp + tn) / static_cast<double>(n);
  const double precision =
      tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall =
      tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  report.f1 = precision + recall == 0.0
                  ? 0.0
                  : 2.0 * precision * recall / (precision + recall);
  report.distribution = gap_distribution(preds, trues);
  return report;
}

namespace internal {

nlohmann::ordered_json group_to_json(const std::optional<GroupStats>& group) {
  if (!group) return nullptr;
  nlohmann::ordered_json j;
  j["median"] = group->median;
  j["q1"] = group->q1;
  j["q3"] = group->q3;
  j["min"] = group->min;
  j["max"] = group->max;
  j["count"] = group->count;
  return j;
}

nlohmann::ordered_json distribution_json(const GapDistribution& dist) {
  nlohmann::ordered_json j;
  j["split"] = dist.split;
  j["high"] = group_to_json(dist.high);
  j["low"] = group_to_json(dist.low);
  return j;
}

nlohmann::ordered_json metrics_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["mae"] = report.mae;
  j["rmse"] = report.rmse;
  j["acc"] = report.acc;
  j["f1"] = report.f1;
  j["gaps"] = report.gaps;
  j["distribution"] = distribution_json(report.distribution);
  return j;
}

}  // namespace internal

std::string metrics_to_json(const MetricsReport& report, int indent) {
  return internal::metrics_json(report).dump(indent);
}

std::string distribution_to_json(const GapDistribution& dist, int indent) {
  return internal::distribution_json(dist).dump(indent);
}

std::string distribution_to_text(const GapDistribution& dist) {
  char line[192];
  std::string out;
  std::snprintf(line, sizeof(line), "group   %10s %10s %10s %10s %10s %8s\n",
                "median", "q1", "q3", "min", "max", "count");
  out += line;
  const auto append = [&](const char* name, const std::optional<GroupStats>& g) {
    if (g) {
      std::snprintf(line, sizeof(line),
                    "%-7s %10.6f %10.6f %10.6f %10.6f %10.6f %8zu\n", name,
                    g->median, g->q1, g->q3, g->min, g->max, g->count);
    } else {
      std::snprintf(line, sizeof(line), "%-7s %10s\n", name, "(absent)");
    }
    out += line;
  };
  append("high", dist.high);
  append("low", dist.low);
  return out;
}

}  // namespace ctt
