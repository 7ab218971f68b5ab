#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "miqa/checkpoint.hpp"
#include "miqa/distill.hpp"
#include "miqa/image_io.hpp"
#include "miqa/optim.hpp"

namespace miqa {

namespace fs = std::filesystem;

std::string report_csv_header() { return "epoch,l,l_d,score_loss,val_srcc,val_plcc,lr"; }

std::string report_csv_row(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.6f,%.6f,%.9g", r.epoch, r.loss, r.distill_loss, r.score_loss,
                r.val_srcc, r.val_plcc, r.lr);
  return buf;
}

std::vector<double> predict(const Model<float>& model, const std::vector<Sample>& samples) {
  NoGradGuard guard;
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.forward(prepare_input(s.image, model.config())).score.item());
  return out;
}

MetricsReport evaluate_model(const Model<float>& model, const std::vector<Sample>& samples) {
  const auto pred = predict(model, samples);
  std::vector<double> truth;
  for (const auto& s : samples) truth.push_back(s.mos);
  return evaluate_metrics(pred, truth);
}

double mean_distill_loss(const Model<float>& teacher, const Model<float>& student, const std::vector<Sample>& samples) {
  NoGradGuard guard;
  double acc = 0.0;
  for (const auto& s : samples) {
    const auto t = teacher.forward(prepare_input(s.image, teacher.config())).opinions;
    const auto st = student.forward(prepare_input(s.image, student.config())).opinions;
    acc += loss_distill(t, st).item();
  }
  return acc / static_cast<double>(samples.size());
}

namespace {

double safe_metric(double (*fn)(std::span<const double>, std::span<const double>), std::span<const double> p,
                   std::span<const double> g) {
  try {
    return fn(p, g);
  } catch (const UndefinedMetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// Variant v of a C x H x W image: bit 0 mirrors columns, bit 1 mirrors rows.
Tensor<float> flipped(const Tensor<float>& img, unsigned v) {
  const auto c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<float> out(img.numel());
  const auto& src = img.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const auto sy = (v & 2u) ? h - 1 - y : y, sx = (v & 1u) ? w - 1 - x : x;
        out[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
      }
  return Tensor<float>(img.shape(), std::move(out));
}

void check_distill_pair(const Model<float>& teacher, const Model<float>& student) {
  const auto& t = teacher.config();
  const auto& s = student.config();
  if (t.ablation != Ablation::none || s.ablation != Ablation::none)
    throw ConfigError("distillation needs opinion MALs in both models");
  if (t.opinions != s.opinions || t.c_mal != s.c_mal || t.tokens != s.tokens)
    throw ConfigError("teacher opinions (" + std::to_string(t.opinions) + " x " + std::to_string(t.c_mal) + "x" +
                      std::to_string(t.tokens) + ") do not match student (" + std::to_string(s.opinions) + " x " +
                      std::to_string(s.c_mal) + "x" + std::to_string(s.tokens) + ")");
}

TrainReport run_training(Model<float>& model, const Model<float>* teacher, const Dataset& data, const TrainConfig& cfg,
                         const TrainOptions& opts) {
  cfg.validate();
  if (data.train.empty() || data.val.empty()) throw ConfigError("training needs non-empty train and val splits");
  if (teacher) check_distill_pair(*teacher, model);

  // inputs[v][i]: flip variant v of training sample i (one variant without flips).
  const unsigned variants = cfg.flip ? 4 : 1;
  std::vector<std::vector<Tensor<float>>> inputs(variants);
  std::vector<std::vector<std::vector<Tensor<float>>>> teacher_opinions(variants);
  std::vector<Tensor<float>> targets;
  for (const auto& s : data.train) targets.push_back(Tensor<float>::scalar(s.mos));
  for (unsigned v = 0; v < variants; ++v)
    for (const auto& s : data.train) {
      const auto img = v == 0 ? s.image : flipped(s.image, v);
      inputs[v].push_back(prepare_input(img, model.config()));
      if (teacher) {
        NoGradGuard guard;
        teacher_opinions[v].push_back(teacher->forward(prepare_input(img, teacher->config())).opinions);
      }
    }
  std::vector<double> val_truth;
  for (const auto& s : data.val) val_truth.push_back(s.mos);

  TrainReport report;
  if (teacher) report.initial_distill_loss = mean_distill_loss(*teacher, model, data.train);

  std::string csv;
  if (opts.out_dir) {
    fs::create_directories(*opts.out_dir);
    csv = report_csv_header() + "\n";
    write_file(*opts.out_dir / "report.csv", csv);
  }

  Adam<float> adam(model.parameters(), cfg.lr, cfg.weight_decay);
  Rng shuffle = Rng::derive(cfg.seed, 0x7261696EULL);
  Rng flips = Rng::derive(cfg.seed, 0x666C6970ULL);
  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), 0);
  const bool use_kd = teacher && cfg.kd;
  const auto alpha = static_cast<float>(cfg.alpha);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cosine_lr(epoch, cfg.cosine_period, cfg.lr, cfg.lr_min);
    adam.set_lr(rec.lr);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto stop = std::min(order.size(), start + cfg.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(stop - start);
      for (auto k = start; k < stop; ++k) {
        const auto idx = order[k];
        const auto v = variants > 1 ? static_cast<unsigned>(flips.below(variants)) : 0u;
        const auto out = model.forward(inputs[v][idx]);
        const auto score_loss = mse(out.score, targets[idx]);
        Tensor<float> loss;
        double ld = 0.0;
        if (use_kd) {
          const auto distill = loss_distill(teacher_opinions[v][idx], out.opinions);
          ld = distill.item();
          loss = loss_total(distill, score_loss, alpha);
        } else if (teacher) {
          loss = scale(score_loss, alpha);
        } else {
          loss = score_loss;
        }
        rec.loss += loss.item();
        rec.distill_loss += ld;
        rec.score_loss += score_loss.item();
        backward(scale(loss, inv_batch));
      }
      adam.step();
    }
    const auto n = static_cast<double>(order.size());
    rec.loss /= n;
    rec.distill_loss /= n;
    rec.score_loss /= n;

    const auto pred = predict(model, data.val);
    rec.val_srcc = safe_metric(&srcc, pred, val_truth);
    rec.val_plcc = safe_metric(&plcc, pred, val_truth);

    report.epochs.push_back(rec);
    if (opts.out_dir) {
      csv += report_csv_row(rec) + "\n";
      write_file(*opts.out_dir / "report.csv", csv);
    }
    if (opts.on_epoch) opts.on_epoch(rec);
  }

  if (teacher) report.final_distill_loss = mean_distill_loss(*teacher, model, data.train);
  if (opts.out_dir) {
    const auto path = *opts.out_dir / "checkpoint.miqa";
    save_model(model, path);
    report.checkpoint_path = path.string();
  }
  return report;
}

}  // namespace

TrainReport train_teacher(Model<float>& model, const Dataset& data, const TrainConfig& cfg, const TrainOptions& opts) {
  return run_training(model, nullptr, data, cfg, opts);
}

TrainReport distill_student(Model<float>& student, const Model<float>& teacher, const Dataset& data,
                            const TrainConfig& cfg, const TrainOptions& opts) {
  return run_training(student, &teacher, data, cfg, opts);
}

}  // namespace miqa
