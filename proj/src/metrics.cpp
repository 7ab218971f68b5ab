#include "miqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>

#include "miqa/errors.hpp"

namespace miqa {

namespace {

void check_pairs(std::span<const double> a, std::span<const double> b, std::size_t min_len, const char* name) {
  if (a.size() != b.size())
    throw DimensionError(std::string(name) + ": " + std::to_string(a.size()) + " predictions vs " +
                         std::to_string(b.size()) + " ground truths");
  if (a.size() < min_len)
    throw DimensionError(std::string(name) + ": need at least " + std::to_string(min_len) + " pairs");
}

double pearson(std::span<const double> a, std::span<const double> b, const char* name) {
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedMetricError(std::string(name) + ": zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Pairs among runs of equal values in a sorted sequence.
template <class Eq>
std::int64_t tied_pairs(std::size_t n, Eq&& equal_to_prev) {
  std::int64_t total = 0, run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (equal_to_prev(i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

// Sorts `v` and returns the number of inversions it had.
std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const auto mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return swaps;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1..j
    for (auto k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double plcc(std::span<const double> pred, std::span<const double> truth) {
  check_pairs(pred, truth, 2, "plcc");
  return pearson(pred, truth, "plcc");
}

double srcc(std::span<const double> pred, std::span<const double> truth) {
  check_pairs(pred, truth, 2, "srcc");
  const auto rp = average_ranks(pred), rt = average_ranks(truth);
  return pearson(rp, rt, "srcc");
}

double krcc(std::span<const double> pred, std::span<const double> truth) {
  check_pairs(pred, truth, 2, "krcc");
  const auto n = pred.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return pred[a] < pred[b] || (pred[a] == pred[b] && truth[a] < truth[b]);
  });
  const auto px = [&](std::size_t i) { return pred[order[i]]; };
  const auto py = [&](std::size_t i) { return truth[order[i]]; };

  const std::int64_t n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t ties_x = tied_pairs(n, [&](std::size_t i) { return px(i) == px(i - 1); });
  const std::int64_t ties_xy =
      tied_pairs(n, [&](std::size_t i) { return px(i) == px(i - 1) && py(i) == py(i - 1); });

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = py(i);
  const std::int64_t swaps = merge_count(ys, buf, 0, n);
  const std::int64_t ties_y = tied_pairs(n, [&](std::size_t i) { return ys[i] == ys[i - 1]; });

  const double denom = std::sqrt(static_cast<double>(n0 - ties_x) * static_cast<double>(n0 - ties_y));
  if (denom == 0.0) throw UndefinedMetricError("krcc: a sequence is entirely tied");
  const std::int64_t num = n0 - ties_x - ties_y + ties_xy - 2 * swaps;
  return std::clamp(static_cast<double>(num) / denom, -1.0, 1.0);
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_pairs(pred, truth, 1, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  check_pairs(pred, truth, 1, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

MetricsReport evaluate_metrics(std::span<const double> pred, std::span<const double> truth) {
  return {krcc(pred, truth), srcc(pred, truth), plcc(pred, truth), rmse(pred, truth), mae(pred, truth)};
}

std::string metrics_csv_header() { return "krcc,srcc,plcc,rmse,mae"; }

std::string metrics_csv_row(const MetricsReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f", r.krcc, r.srcc, r.plcc, r.rmse, r.mae);
  return buf;
}

}  // namespace miqa
