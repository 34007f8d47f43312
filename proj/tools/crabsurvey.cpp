// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: data preparation, training, evaluation and survey mapping.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crabsurvey/config.hpp"
#include "crabsurvey/det_eval.hpp"
#include "crabsurvey/detector.hpp"
#include "crabsurvey/errors.hpp"
#include "crabsurvey/harness.hpp"
#include "crabsurvey/imaging.hpp"
#include "crabsurvey/iq_metrics.hpp"
#include "crabsurvey/nn/checkpoint.hpp"
#include "crabsurvey/srr.hpp"
#include "crabsurvey/survey.hpp"
#include "crabsurvey/synthetic.hpp"
#include "crabsurvey/tiling.hpp"

namespace cs = crabsurvey;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::int64_t seed = -1;
  std::string out = "out";
};

/// Shared state of one invocation: configuration, output directory and manifest.
class Run {
 public:
  Run(const Globals& g, std::string command) : out_(g.out) {
    config_ = g.config_path.empty() ? cs::Config::defaults() : cs::Config::load(g.config_path);
    if (g.seed >= 0) config_.set("seed", std::to_string(g.seed));
    fs::create_directories(out_);
    manifest_.command = std::move(command);
    manifest_.tool_version = CRABSURVEY_VERSION;
    manifest_.seed = config_.get_u64("seed");
    manifest_.config = config_.entries();
    if (!g.config_path.empty()) manifest_.add_input(g.config_path);
  }

  const cs::Config& config() const { return config_; }
  const fs::path& out() const { return out_; }

  void input(const fs::path& p) { manifest_.add_input(p); }
  void output(const fs::path& p) { manifest_.outputs.push_back(p.string()); }
  void outputs(const std::vector<fs::path>& ps) {
    for (const auto& p : ps) output(p);
  }

  template <class F>
  auto stage(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      manifest_.stage_seconds.emplace_back(name, dt.count());
    };
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      finish();
    } else {
      auto r = f();
      finish();
      return r;
    }
  }

  void finish() const {
    manifest_.write(out_ / (manifest_.command + ".manifest.json"));
  }

 private:
  cs::Config config_;
  fs::path out_;
  cs::survey::RunManifest manifest_;
};

std::vector<cs::ImageBuffer> images_of(const std::vector<cs::LabeledImage>& data) {
  std::vector<cs::ImageBuffer> out;
  for (const auto& s : data) out.push_back(s.image);
  return out;
}

std::unique_ptr<cs::det::Detector> load_detector_file(Run& run, const fs::path& path) {
  if (!fs::exists(path))
    throw cs::MissingInputError("detector checkpoint not found: " + path.string());
  run.input(path);
  return cs::det::load_detector(cs::nn::read_checkpoint(path));
}

std::unique_ptr<cs::srr::SRModel> load_sr_file(Run& run, const fs::path& path) {
  if (!fs::exists(path)) throw cs::MissingInputError("SR checkpoint not found: " + path.string());
  run.input(path);
  return cs::srr::load_sr_model(cs::nn::read_checkpoint(path));
}

/// Every SR checkpoint for `m` present in `dir`, in benchmark order.
std::map<cs::srr::SRArchitecture, std::unique_ptr<cs::srr::SRModel>> load_sr_dir(
    Run& run, const fs::path& dir, int m) {
  std::map<cs::srr::SRArchitecture, std::unique_ptr<cs::srr::SRModel>> models;
  for (auto arch : cs::harness::kBenchmarkOrder) {
    const auto p = dir / cs::harness::sr_checkpoint_name(arch, m);
    if (fs::exists(p)) models[arch] = load_sr_file(run, p);
  }
  return models;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_det_loss_log(const std::vector<double>& history, const fs::path& path) {
  std::string text = "epoch,mean_loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    text += std::to_string(i + 1) + ',' + cs::iq::format_number(history[i]) + '\n';
  }
  write_text(path, text);
}

std::vector<fs::path> sorted_pngs(const fs::path& input) {
  if (!fs::exists(input)) throw cs::MissingInputError("input not found: " + input.string());
  if (!fs::is_directory(input)) return {input};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw cs::MissingInputError("no PNG images in " + input.string());
  return out;
}

// Subcommands ---------------------------------------------------------------------------

void cmd_synth(Run& run) {
  const auto& c = run.config();
  const auto data = run.stage("synthesize", [&] {
    return cs::synthesize_dataset(c.scene(), c.get_int("synth.count"), c.get_u64("seed"));
  });
  const fs::path dir = run.out() / "synth";
  run.stage("write", [&] { cs::harness::save_labeled_dir(data, dir); });
  run.output(dir);
}

void cmd_tile(Run& run, const fs::path& input) {
  const auto grid = run.config().tile_grid();
  const fs::path dir = run.out() / "tiles";
  fs::create_directories(dir);
  std::vector<cs::TileManifestRow> rows;
  run.stage("tile", [&] {
    for (const auto& frame_path : sorted_pngs(input)) {
      run.input(frame_path);
      const auto frame = cs::load_image(frame_path);
      const std::string id = frame_path.stem().string();
      auto label_path = frame_path;
      label_path.replace_extension(".txt");
      std::vector<cs::BoundingBox> frame_boxes;
      if (fs::exists(label_path)) {
        for (auto b : cs::read_labels(label_path)) {
          b.cx *= frame.width();
          b.w *= frame.width();
          b.cy *= frame.height();
          b.h *= frame.height();
          frame_boxes.push_back(b);
        }
      }
      for (const auto& t : cs::plan_tiles(frame.width(), frame.height(), grid, id)) {
        const std::string name =
            id + "_" + std::to_string(t.x0) + "_" + std::to_string(t.y0) + ".png";
        cs::save_image(cs::extract_tile(frame, t), dir / name);
        if (!frame_boxes.empty()) {
          auto stem = dir / name;
          cs::write_labels(cs::labels_for_tile(frame_boxes, t), stem.replace_extension(".txt"));
        }
        rows.push_back({t, name});
      }
    }
  });
  cs::write_tile_manifest(rows, dir / "tiles.csv");
  run.output(dir);
  run.output(dir / "tiles.csv");
  std::cout << rows.size() << " tiles\n";
}

void cmd_degrade(Run& run, const fs::path& input) {
  run.input(input);
  const int factor = run.config().get_int("degrade.factor");
  const fs::path dir = run.out() / ("lr_x" + std::to_string(factor));
  fs::create_directories(dir);
  run.stage("degrade", [&] {
    for (const auto& p : sorted_pngs(input)) {
      const auto hr = cs::center_crop_divisible(cs::load_image(p), factor);
      cs::save_image(cs::degrade(hr, factor), dir / p.filename());
      auto labels = p;
      labels.replace_extension(".txt");
      if (fs::exists(labels)) fs::copy_file(labels, dir / labels.filename(),
                                            fs::copy_options::overwrite_existing);
    }
  });
  run.output(dir);
}

void cmd_augment(Run& run, const fs::path& input) {
  run.input(input);
  const auto data = cs::harness::load_labeled_dir(input);
  const auto expanded =
      run.stage("augment", [&] { return cs::expand_dataset(data, cs::default_recipe()); });
  std::vector<cs::LabeledImage> samples;
  for (const auto& a : expanded) {
    cs::LabeledImage s = a.sample;
    s.id = data[a.source_index].id + "_" + a.op.name();
    samples.push_back(std::move(s));
  }
  const fs::path dir = run.out() / "augmented";
  run.stage("write", [&] { cs::harness::save_labeled_dir(samples, dir); });
  run.output(dir);
  std::cout << data.size() << " -> " << samples.size() << " samples\n";
}

void cmd_train_sr(Run& run, const fs::path& data_dir) {
  run.input(data_dir);
  const auto& c = run.config();
  const auto model_cfg = c.sr_model();
  const auto train_cfg = c.sr_train();
  const auto hr = images_of(cs::harness::load_labeled_dir(data_dir));
  const auto pairs = cs::srr::make_pairs(hr, model_cfg.magnification);
  auto model = cs::srr::build_sr_model(model_cfg);
  const auto ckpt = run.stage("train", [&] {
    return cs::srr::train_sr(*model, pairs, train_cfg, [](int epoch, double l1) {
      if (epoch % 10 == 0) std::cout << "epoch " << epoch << " l1 " << l1 << '\n';
    });
  });
  const fs::path path =
      run.out() / cs::harness::sr_checkpoint_name(model_cfg.architecture, model_cfg.magnification);
  cs::nn::write_checkpoint(ckpt, path);
  auto log = path;
  log.replace_extension(".loss.csv");
  cs::srr::write_loss_log(ckpt.loss_history, log);
  run.output(path);
  run.output(log);
}

void cmd_eval_sr(Run& run, const fs::path& data_dir, const fs::path& ckpt_dir) {
  run.input(data_dir);
  const auto& c = run.config();
  const int m = c.get_int("sr.magnification");
  const auto test = cs::harness::load_labeled_dir(data_dir);
  const auto owned = load_sr_dir(run, ckpt_dir, m);
  std::map<cs::srr::SRArchitecture, const cs::srr::SRModel*> models;
  for (const auto& [a, p] : owned) models[a] = p.get();
  std::unique_ptr<cs::det::Detector> detector;
  if (fs::exists(ckpt_dir / cs::harness::kDetectorCheckpoint)) {
    detector = load_detector_file(run, ckpt_dir / cs::harness::kDetectorCheckpoint);
  }
  const auto bench = run.stage("benchmark", [&] {
    return cs::harness::run_srr_benchmark(test, models, m, detector.get(),
                                          c.get_double("eval.iou"));
  });
  run.outputs(bench.image_quality.write(run.out(), "sr_image_quality"));
  if (detector) run.outputs(bench.detection.write(run.out(), "sr_detection"));
  std::cout << bench.image_quality.render_text();
}

void cmd_train_det(Run& run, const fs::path& data_dir) {
  run.input(data_dir);
  const auto& c = run.config();
  const auto data = cs::harness::load_labeled_dir(data_dir);
  auto model = cs::det::build_detector(c.detector());
  std::cout << "parameters " << model->parameter_count() << '\n';
  const auto ckpt = run.stage("train", [&] {
    return cs::det::train_detector(*model, data, c.det_train(), [](int epoch, double loss) {
      if (epoch % 10 == 0) std::cout << "epoch " << epoch << " loss " << loss << '\n';
    });
  });
  const fs::path path = run.out() / cs::harness::kDetectorCheckpoint;
  cs::nn::write_checkpoint(ckpt, path);
  write_det_loss_log(ckpt.loss_history, run.out() / "detector.loss.csv");
  run.output(path);
  run.output(run.out() / "detector.loss.csv");
}

void cmd_eval_det(Run& run, const fs::path& data_dir, const fs::path& detector_path,
                  const std::string& testset) {
  run.input(data_dir);
  const auto data = cs::harness::load_labeled_dir(data_dir);
  const auto model = load_detector_file(run, detector_path);
  const fs::path pred_dir = run.out() / "predictions";
  fs::create_directories(pred_dir);
  std::vector<std::vector<cs::BoundingBox>> found, truth;
  run.stage("detect", [&] {
    for (const auto& s : data) {
      found.push_back(cs::det::detect(*model, s.image));
      truth.push_back(s.boxes);
      cs::write_predictions(found.back(), pred_dir / (s.id + ".txt"));
    }
  });
  const auto report = cs::eval::evaluate_dataset(found, truth, run.config().get_double("eval.iou"));
  write_text(run.out() / "eval.json", report.to_json() + "\n");
  write_text(run.out() / "eval.csv", cs::eval::eval_csv_header() + "\n" +
                                         cs::eval::eval_csv_row("detector", testset, report) +
                                         "\n");
  run.output(pred_dir);
  run.output(run.out() / "eval.json");
  run.output(run.out() / "eval.csv");
  std::cout << report.to_json() << '\n';
}

void cmd_ablate(Run& run, const fs::path& train_dir, const fs::path& test_dir) {
  run.input(train_dir);
  run.input(test_dir);
  const auto& c = run.config();
  const auto train = cs::harness::load_labeled_dir(train_dir);
  const auto test = cs::harness::load_labeled_dir(test_dir);
  const auto rows = run.stage("ablation", [&] {
    return cs::harness::run_ablation(train, test, c.detector(), c.det_train(),
                                     c.get_double("eval.iou"));
  });
  const auto table = cs::harness::ablation_table(rows);
  run.outputs(table.write(run.out(), "ablation"));
  std::cout << table.render_text();
}

cs::harness::MagnificationSweep sweep_from(Run& run, const std::vector<cs::LabeledImage>& lr,
                                           const fs::path& ckpt_dir,
                                           const cs::det::Detector& detector) {
  const auto arch = cs::srr::parse_architecture(run.config().get("sr.arch"));
  std::vector<std::unique_ptr<cs::srr::SRModel>> owned;
  std::map<int, const cs::srr::SRModel*> models;
  for (int m = 2; m <= 5; ++m) {
    owned.push_back(load_sr_file(run, ckpt_dir / cs::harness::sr_checkpoint_name(arch, m)));
    models[m] = owned.back().get();
  }
  return run.stage("sweep", [&] {
    return cs::harness::run_magnification_sweep(lr, models, detector, {2, 3, 4, 5},
                                                run.config().get_double("eval.iou"));
  });
}

void cmd_sweep(Run& run, const fs::path& lr_dir, const fs::path& ckpt_dir) {
  run.input(lr_dir);
  const auto lr = cs::harness::load_labeled_dir(lr_dir);
  const auto detector = load_detector_file(run, ckpt_dir / cs::harness::kDetectorCheckpoint);
  const auto sweep = sweep_from(run, lr, ckpt_dir, *detector);
  const auto table = sweep.table();
  run.outputs(table.write(run.out(), "magnification_sweep"));
  std::cout << table.render_text();
}

void cmd_merge(Run& run, const fs::path& tiles_csv, const fs::path& pred_dir) {
  run.input(tiles_csv);
  run.input(pred_dir);
  std::map<std::string, std::vector<cs::survey::TileDetections>> by_frame;
  for (const auto& row : cs::read_tile_manifest(tiles_csv)) {
    auto p = pred_dir / row.tile_path;
    p.replace_extension(".txt");
    if (!fs::exists(p)) throw cs::MissingInputError("tile predictions not found: " + p.string());
    by_frame[row.tile.source_id].push_back({row.tile, cs::read_predictions(p)});
  }
  const fs::path dir = run.out() / "merged";
  fs::create_directories(dir);
  const double iou = run.config().get_double("merge.iou");
  run.stage("merge", [&] {
    for (const auto& [frame, tiles] : by_frame) {
      const auto merged = cs::survey::merge_tile_detections(tiles, iou);
      cs::write_predictions(merged, dir / (frame + ".txt"));
      std::cout << frame << ": " << merged.size() << " detections\n";
    }
  });
  run.output(dir);
}

void cmd_density(Run& run, const fs::path& predictions, int width, int height) {
  run.input(predictions);
  const auto& c = run.config();
  const auto boxes = cs::read_predictions(predictions);
  const auto grid = run.stage("density", [&] {
    return cs::survey::build_density_map(boxes, c.get_int("density.cell"), width, height);
  });
  const double gsd = cs::survey::ground_sample_distance(
      c.get_double("density.altitude_m"), c.get_double("density.fov_deg"), width);
  const fs::path png = run.out() / (predictions.stem().string() + "_density.png");
  cs::survey::save_heatmap(grid, png, gsd, c.get_int("density.px_per_cell"));
  auto csv = png;
  csv.replace_extension(".csv");
  run.output(png);
  run.output(csv);
  std::cout << grid.total() << " detections in " << grid.rows() << "x" << grid.cols()
            << " cells, gsd " << gsd << " m/px\n";
}

/// Inference-only tables from fixed checkpoints; every CSV depends only on inputs and seed.
void cmd_report(Run& run, const fs::path& data_dir, const fs::path& ckpt_dir) {
  cmd_eval_sr(run, data_dir, ckpt_dir);
  const auto arch = cs::srr::parse_architecture(run.config().get("sr.arch"));
  bool have_sweep = fs::exists(ckpt_dir / cs::harness::kDetectorCheckpoint);
  for (int m = 2; m <= 5; ++m) {
    have_sweep = have_sweep && fs::exists(ckpt_dir / cs::harness::sr_checkpoint_name(arch, m));
  }
  if (!have_sweep) {
    std::cout << "sweep skipped: needs " << cs::harness::kDetectorCheckpoint << " and "
              << cs::srr::architecture_name(arch) << " checkpoints for x2..x5\n";
    return;
  }
  const int factor = run.config().get_int("sweep.lr_factor");
  std::vector<cs::LabeledImage> lr;
  for (auto s : cs::harness::load_labeled_dir(data_dir)) {
    s.image = cs::degrade(cs::center_crop_divisible(s.image, factor), factor);
    lr.push_back(std::move(s));
  }
  const auto detector = load_detector_file(run, ckpt_dir / cs::harness::kDetectorCheckpoint);
  const auto table = sweep_from(run, lr, ckpt_dir, *detector).table();
  run.outputs(table.write(run.out(), "magnification_sweep"));
  std::cout << table.render_text();
}

void cmd_config(Run& run) {
  write_text(run.out() / "config.cfg", run.config().to_text());
  run.output(run.out() / "config.cfg");
  std::cout << run.config().to_text();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crabsurvey: super-resolution and small-object detection for UAV crab surveys"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(CRABSURVEY_VERSION));
  Globals g;
  app.add_option("--config", g.config_path, "Key = value configuration file");
  app.add_option("--seed", g.seed, "Overrides the configured seed")->check(CLI::NonNegativeNumber);
  app.add_option("--out", g.out, "Output directory");

  std::string input, data, test, checkpoints, detector_path, tiles, preds, testset = "test";
  int width = 0, height = 0;
  std::function<void(Run&)> action;
  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };

  auto* synth = sub("synth", "Write a labeled synthetic dataset");
  synth->callback([&] { action = cmd_synth; });

  auto* tile = sub("tile", "Cut frames into overlapping tiles with remapped labels");
  tile->add_option("--input", input, "Frame PNG or directory")->required();
  tile->callback([&] { action = [&](Run& r) { cmd_tile(r, input); }; });

  auto* degrade = sub("degrade", "Bicubic-downsample HR images (labels copied)");
  degrade->add_option("--input", input, "HR image directory")->required();
  degrade->callback([&] { action = [&](Run& r) { cmd_degrade(r, input); }; });

  auto* augment = sub("augment", "Expand a labeled set with the default recipe");
  augment->add_option("--input", input, "Labeled directory")->required();
  augment->callback([&] { action = [&](Run& r) { cmd_augment(r, input); }; });

  auto* train_sr = sub("train-sr", "Train the configured SR model on HR images");
  train_sr->add_option("--data", data, "HR image directory")->required();
  train_sr->callback([&] { action = [&](Run& r) { cmd_train_sr(r, data); }; });

  auto* eval_sr = sub("eval-sr", "Score bicubic and every SR checkpoint on an HR test set");
  eval_sr->add_option("--data", data, "Labeled HR test directory")->required();
  eval_sr->add_option("--checkpoints", checkpoints, "Checkpoint directory")->required();
  eval_sr->callback([&] { action = [&](Run& r) { cmd_eval_sr(r, data, checkpoints); }; });

  auto* train_det = sub("train-det", "Train the configured detector");
  train_det->add_option("--data", data, "Labeled training directory")->required();
  train_det->callback([&] { action = [&](Run& r) { cmd_train_det(r, data); }; });

  auto* eval_det = sub("eval-det", "Detect on a labeled set and score P, R and AP@50");
  eval_det->add_option("--data", data, "Labeled test directory")->required();
  eval_det->add_option("--detector", detector_path, "Detector checkpoint")->required();
  eval_det->add_option("--testset", testset, "Test set name for the CSV row");
  eval_det->callback(
      [&] { action = [&](Run& r) { cmd_eval_det(r, data, detector_path, testset); }; });

  auto* ablate = sub("ablate", "Train and score the four detector variants");
  ablate->add_option("--data", data, "Labeled training directory")->required();
  ablate->add_option("--test", test, "Labeled test directory")->required();
  ablate->callback([&] { action = [&](Run& r) { cmd_ablate(r, data, test); }; });

  auto* sweep = sub("sweep", "Score the detector on an LR set reconstructed at x2..x5");
  sweep->add_option("--data", data, "Labeled LR test directory")->required();
  sweep->add_option("--checkpoints", checkpoints, "Checkpoint directory")->required();
  sweep->callback([&] { action = [&](Run& r) { cmd_sweep(r, data, checkpoints); }; });

  auto* merge = sub("merge", "Merge per-tile predictions into frame detections");
  merge->add_option("--tiles", tiles, "Tile manifest CSV")->required();
  merge->add_option("--predictions", preds, "Directory of per-tile prediction files")->required();
  merge->callback([&] { action = [&](Run& r) { cmd_merge(r, tiles, preds); }; });

  auto* density = sub("density", "Grid frame detections into a density CSV and heatmap");
  density->add_option("--predictions", preds, "Frame prediction file")->required();
  density->add_option("--width", width, "Frame width in pixels")
      ->required()
      ->check(CLI::PositiveNumber);
  density->add_option("--height", height, "Frame height in pixels")
      ->required()
      ->check(CLI::PositiveNumber);
  density->callback([&] { action = [&](Run& r) { cmd_density(r, preds, width, height); }; });

  auto* report = sub("report", "Inference-only SR, detection and sweep tables");
  report->add_option("--data", data, "Labeled HR test directory")->required();
  report->add_option("--checkpoints", checkpoints, "Checkpoint directory")->required();
  report->callback([&] { action = [&](Run& r) { cmd_report(r, data, checkpoints); }; });

  auto* config = sub("config", "Print the effective configuration");
  config->callback([&] { action = cmd_config; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Run run(g, app.get_subcommands().front()->get_name());
    action(run);
    run.finish();
    return 0;
  } catch (const cs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const cs::MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << '\n';
    return 3;
  } catch (const cs::TrainingDivergence& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
