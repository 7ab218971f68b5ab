// miqa: data generation, teacher training, distillation, evaluation,
// inspection and cost accounting for the diverse-opinion IQA model.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "miqa/checkpoint.hpp"
#include "miqa/distill.hpp"
#include "miqa/inspect.hpp"
#include "miqa/macs.hpp"
#include "miqa/synth.hpp"

namespace fs = std::filesystem;
using namespace miqa;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string teacher;
  std::string ablation;
  std::vector<std::string> overrides;
  bool quiet = false;
};

/// Builds the run configuration and echoes it into the output directory:
/// config.input.json verbatim (when a file was given), config.resolved.json
/// with every default filled in.
RunConfig resolve_config(const RunArgs& args) {
  RunConfig cfg;
  std::string verbatim;
  if (!args.config.empty()) {
    verbatim = read_file(args.config);
    cfg = run_config_from_json(verbatim);
  }
  for (const auto& o : args.overrides) apply_override(cfg, o);
  if (args.ablation == "no-mal") {
    cfg.model.ablation = Ablation::no_mal;
  } else if (args.ablation == "no-kd") {
    cfg.train.kd = false;
  } else if (!args.ablation.empty() && args.ablation != "none") {
    throw ConfigError("unknown ablation '" + args.ablation + "' (expected none, no-mal or no-kd)");
  }
  fs::create_directories(args.out);
  if (!args.config.empty()) write_file(fs::path(args.out) / "config.input.json", verbatim);
  return cfg;
}

void echo_resolved(const RunConfig& cfg, const RunArgs& args) {
  write_file(fs::path(args.out) / "config.resolved.json", run_config_to_json(cfg));
}

TrainOptions train_options(const RunArgs& args) {
  TrainOptions opts;
  opts.out_dir = fs::path(args.out);
  if (!args.quiet)
    opts.on_epoch = [](const EpochRecord& r) { std::cerr << report_csv_row(r) << "\n"; };
  return opts;
}

int cmd_gen_data(std::uint64_t seed, std::size_t count, std::size_t size, double ratio, const std::string& out) {
  DataConfig dc{seed, count, size, ratio};
  dc.validate();
  const auto data = make_dataset(seed, count, size, size, ratio);
  write_dataset(data, out);
  std::cout << "wrote " << data.train.size() << " train and " << data.val.size() << " val samples to " << out << "\n";
  return 0;
}

int cmd_train_teacher(const RunArgs& args) {
  auto cfg = resolve_config(args);
  cfg.model.backbone.global_mixing = true;
  echo_resolved(cfg, args);
  const auto data = read_dataset(args.data);
  Model<float> model(cfg.model, cfg.train.seed);
  const auto report = train_teacher(model, data, cfg.train, train_options(args));
  const auto& last = report.epochs.back();
  std::cout << "teacher: final loss " << last.loss << ", val srcc " << last.val_srcc << ", checkpoint "
            << report.checkpoint_path << "\n";
  return 0;
}

int cmd_distill(const RunArgs& args) {
  if (args.teacher.empty()) throw UsageError("distill requires --teacher <checkpoint>");
  auto cfg = resolve_config(args);
  cfg.model.backbone.global_mixing = false;
  echo_resolved(cfg, args);
  const auto data = read_dataset(args.data);
  auto teacher_cfg = cfg.model.backbone;
  teacher_cfg.global_mixing = true;
  const auto teacher = load_model_expecting(args.teacher, teacher_cfg);
  Model<float> student(cfg.model, cfg.train.seed);
  const auto report = distill_student(student, teacher, data, cfg.train, train_options(args));
  const auto& last = report.epochs.back();
  std::cout << "student: l_d " << report.initial_distill_loss << " -> " << report.final_distill_loss
            << ", val srcc " << last.val_srcc << ", checkpoint " << report.checkpoint_path << "\n";
  return 0;
}

std::vector<Sample> pick_split(const Dataset& data, const std::string& split) {
  if (split == "val") return data.val;
  if (split == "train") return data.train;
  if (split == "all") {
    auto all = data.train;
    all.insert(all.end(), data.val.begin(), data.val.end());
    return all;
  }
  throw UsageError("--split must be val, train or all");
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    const auto v = std::stoul(item, &pos);
    if (pos != item.size() || v == 0) throw UsageError("--resize expects positive integers, got '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--resize list is empty");
  return out;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out, const std::string& split,
             const std::string& resize) {
  const auto model = load_model(ckpt);
  const auto samples = pick_split(read_dataset(data_dir), split);
  std::vector<double> truth;
  for (const auto& s : samples) truth.push_back(s.mos);

  std::string csv;
  if (resize.empty()) {
    const auto report = evaluate_model(model, samples);
    csv = metrics_csv_header() + "\n" + metrics_csv_row(report) + "\n";
  } else {
    csv = "resolution," + metrics_csv_header() + "\n";
    for (auto r : parse_list(resize)) {
      auto input_cfg = model.config();
      input_cfg.height = input_cfg.width = r;
      std::vector<double> pred;
      {
        NoGradGuard guard;
        for (const auto& s : samples) pred.push_back(model.forward(prepare_input(s.image, input_cfg)).score.item());
      }
      csv += std::to_string(r) + "," + metrics_csv_row(evaluate_metrics(pred, truth)) + "\n";
    }
  }
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_file(out, csv);
  std::cout << csv;
  return 0;
}

int cmd_inspect(const std::string& ckpt, const std::string& teacher_ckpt, const std::string& data_dir,
                const std::string& out, std::size_t probes, std::size_t maps) {
  const auto model = load_model(ckpt);
  const auto data = read_dataset(data_dir);
  std::vector<Tensor<float>> batch;
  for (std::size_t i = 0; i < std::min(probes, data.val.size()); ++i) batch.push_back(data.val[i].image);
  if (batch.empty()) throw UsageError("--probes must be positive");
  fs::create_directories(out);

  if (model.config().ablation != Ablation::none) throw ConfigError("inspect needs a model with opinion MALs");
  const auto self = mal_similarity(model, batch);
  write_file(fs::path(out) / "similarity.csv", self.to_csv());
  std::cout << "self-similarity\n" << self.to_csv();
  if (!teacher_ckpt.empty()) {
    const auto teacher = load_model(teacher_ckpt);
    const auto cross = mal_cross_similarity(teacher, model, batch);
    write_file(fs::path(out) / "cross_similarity.csv", cross.to_csv());
    std::cout << "teacher-vs-student similarity\n" << cross.to_csv();
  }
  for (std::size_t p = 0; p < std::min(maps, batch.size()); ++p) {
    char dir[32];
    std::snprintf(dir, sizeof dir, "probe_%03zu", p);
    const auto probe_dir = fs::path(out) / "maps" / dir;
    fs::create_directories(probe_dir);
    const auto imgs = attention_maps(model, batch[p]);
    for (std::size_t i = 0; i < imgs.size(); ++i) write_pgm(probe_dir / ("mal_" + std::to_string(i) + ".pgm"), imgs[i]);
  }
  return 0;
}

std::pair<std::size_t, std::size_t> parse_resolution(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) {
      const auto v = std::stoul(text);
      return {v, v};
    }
    return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("--resolution expects N or HxW, got '" + text + "'");
  }
}

int cmd_count_macs(const std::string& config, const std::string& resolution, const std::string& role) {
  RunConfig cfg;
  if (!config.empty()) cfg = run_config_from_json(read_file(config));
  if (!resolution.empty()) {
    const auto [h, w] = parse_resolution(resolution);
    cfg.model.height = h;
    cfg.model.width = w;
  }
  cfg.model.validate();
  std::vector<std::pair<std::string, bool>> roles;
  if (role == "teacher" || role == "both") roles.emplace_back("teacher", true);
  if (role == "student" || role == "both") roles.emplace_back("student", false);
  if (roles.empty()) throw UsageError("--role must be teacher, student or both");
  std::vector<std::uint64_t> totals;
  for (const auto& [name, mixing] : roles) {
    auto m = cfg.model;
    m.backbone.global_mixing = mixing;
    const auto breakdown = count_macs(m);
    std::cout << "## " << name << " @ " << m.input_height() << "x" << m.input_width() << "\n" << breakdown.table();
    totals.push_back(breakdown.total());
  }
  if (totals.size() == 2)
    std::cout << "teacher/student ratio " << static_cast<double>(totals[0]) / static_cast<double>(totals[1]) << "\n";
  return 0;
}

void add_run_options(CLI::App* cmd, RunArgs& args) {
  cmd->add_option("--config", args.config, "JSON run configuration (model/train/data sections)");
  cmd->add_option("--data", args.data, "dataset directory written by gen-data")->required();
  cmd->add_option("--out", args.out, "output directory")->required();
  cmd->add_option("--set", args.overrides, "override, e.g. train.alpha=0 (repeatable)");
  cmd->add_option("--ablation", args.ablation, "none | no-mal | no-kd");
  cmd->add_flag("--quiet", args.quiet, "suppress per-epoch log lines");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diverse-opinion no-reference IQA: training, distillation and inspection"};
  app.require_subcommand(1);

  std::uint64_t gen_seed = 0;
  std::size_t gen_count = 500, gen_size = 64;
  double gen_ratio = 0.8;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic distortion dataset");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--count", gen_count);
  gen->add_option("--size", gen_size, "square image extent");
  gen->add_option("--split-ratio", gen_ratio);
  gen->add_option("--out", gen_out)->required();

  RunArgs teacher_args;
  auto* train = app.add_subcommand("train-teacher", "train the global-mixing teacher on MSE(P, G)");
  add_run_options(train, teacher_args);

  RunArgs distill_args;
  auto* distill = app.add_subcommand("distill", "distill a student from a teacher checkpoint");
  add_run_options(distill, distill_args);
  distill->add_option("--teacher", distill_args.teacher, "teacher checkpoint");

  std::string eval_ckpt, eval_data, eval_out, eval_split = "val", eval_resize;
  auto* eval = app.add_subcommand("eval", "compute KRCC/SRCC/PLCC/RMSE/MAE");
  eval->add_option("--ckpt", eval_ckpt)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--out", eval_out, "CSV report path")->required();
  eval->add_option("--split", eval_split, "val | train | all");
  eval->add_option("--resize", eval_resize, "comma-separated square input resolutions");

  std::string insp_ckpt, insp_teacher, insp_data, insp_out;
  std::size_t insp_probes = 32, insp_maps = 4;
  auto* inspect = app.add_subcommand("inspect", "MAL similarity matrices and attention maps");
  inspect->add_option("--ckpt", insp_ckpt)->required();
  inspect->add_option("--teacher", insp_teacher, "teacher checkpoint for the cross-model matrix");
  inspect->add_option("--data", insp_data)->required();
  inspect->add_option("--out", insp_out)->required();
  inspect->add_option("--probes", insp_probes, "probe images from the val split");
  inspect->add_option("--maps", insp_maps, "probe images to dump attention maps for");

  std::string macs_config, macs_resolution, macs_role = "both";
  auto* macs = app.add_subcommand("count-macs", "multiply-accumulate breakdown of one forward pass");
  macs->add_option("--config", macs_config);
  macs->add_option("--resolution", macs_resolution, "N or HxW");
  macs->add_option("--role", macs_role, "teacher | student | both");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_seed, gen_count, gen_size, gen_ratio, gen_out);
    if (*train) return cmd_train_teacher(teacher_args);
    if (*distill) return cmd_distill(distill_args);
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_split, eval_resize);
    if (*inspect) return cmd_inspect(insp_ckpt, insp_teacher, insp_data, insp_out, insp_probes, insp_maps);
    if (*macs) return cmd_count_macs(macs_config, macs_resolution, macs_role);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
