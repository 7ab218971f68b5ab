#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "miqa/config.hpp"
#include "miqa/metrics.hpp"
#include "miqa/model.hpp"
#include "miqa/synth.hpp"

namespace miqa {

/// (1/M) * sum_i MSE(teacher_i, student_i), opinions matched by index.
template <class T>
Tensor<T> loss_distill(const std::vector<Tensor<T>>& teacher, const std::vector<Tensor<T>>& student) {
  if (teacher.empty() || teacher.size() != student.size())
    throw DimensionError("loss_distill: " + std::to_string(teacher.size()) + " teacher vs " +
                         std::to_string(student.size()) + " student opinion features");
  Tensor<T> total = mse(teacher[0], student[0]);
  for (std::size_t i = 1; i < teacher.size(); ++i) total = add(total, mse(teacher[i], student[i]));
  return scale(total, T(1) / static_cast<T>(teacher.size()));
}

/// l_d + alpha * score_mse
template <class T>
Tensor<T> loss_total(const Tensor<T>& distill, const Tensor<T>& score_mse, T alpha) {
  return add(distill, scale(score_mse, alpha));
}

inline double loss_total(double distill, double predicted, double truth, double alpha) {
  return distill + alpha * (predicted - truth) * (predicted - truth);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;        // l
  double distill_loss = 0.0;  // l_d (0 when not distilling)
  double score_loss = 0.0;  // MSE(P, G)
  double val_srcc = 0.0;    // NaN when undefined
  double val_plcc = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  /// Mean opinion MSE over the train split before the first and after the
  /// last update (distillation only).
  double initial_distill_loss = 0.0;
  double final_distill_loss = 0.0;
  std::string checkpoint_path;
};

struct TrainOptions {
  /// When set, checkpoint.miqa and report.csv are written here.
  std::optional<std::filesystem::path> out_dir;
  /// Invoked after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

std::string report_csv_header();
std::string report_csv_row(const EpochRecord& r);

/// Optimizes MSE(P, G) only.
TrainReport train_teacher(Model<float>& model, const Dataset& data, const TrainConfig& cfg,
                          const TrainOptions& opts = {});

/// Updates the student only. With cfg.kd the objective is
/// l_d + alpha * MSE(P, G); without it, alpha * MSE(P, G).
TrainReport distill_student(Model<float>& student, const Model<float>& teacher, const Dataset& data,
                            const TrainConfig& cfg, const TrainOptions& opts = {});

/// No-grad predictions on prepared inputs.
std::vector<double> predict(const Model<float>& model, const std::vector<Sample>& samples);

MetricsReport evaluate_model(const Model<float>& model, const std::vector<Sample>& samples);

/// Mean of loss_distill over the samples (no gradients).
double mean_distill_loss(const Model<float>& teacher, const Model<float>& student, const std::vector<Sample>& samples);

}  // namespace miqa
