#pragma once

#include <span>
#include <string>
#include <vector>

namespace miqa {

struct MetricsReport {
  double krcc = 0.0;
  double srcc = 0.0;
  double plcc = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
};

/// Pearson correlation of raw values. Throws UndefinedMetricError when either
/// side has zero variance.
double plcc(std::span<const double> pred, std::span<const double> truth);

/// Spearman correlation: Pearson over average ranks.
double srcc(std::span<const double> pred, std::span<const double> truth);

/// Kendall tau-b, computed in O(n log n).
double krcc(std::span<const double> pred, std::span<const double> truth);

double rmse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);

/// 1-based fractional ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

MetricsReport evaluate_metrics(std::span<const double> pred, std::span<const double> truth);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& r);

}  // namespace miqa
