// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/harness.hpp"

#include <filesystem>

#include <gtest/gtest.h>

#include "crabsurvey/errors.hpp"
#include "crabsurvey/synthetic.hpp"

namespace crabsurvey::harness {
namespace {

namespace fs = std::filesystem;

std::vector<LabeledImage> scenes(int side, int count, std::uint64_t seed) {
  SceneSpec spec;
  spec.width = spec.height = side;
  spec.min_radius = 0.06;
  spec.max_radius = 0.1;
  return synthesize_dataset(spec, count, seed);
}

det::DetectorConfig tiny_detector(int side) {
  auto cfg = det::DetectorConfig::tiny();
  cfg.input_side = side;
  cfg.four_heads = cfg.gsconv = cfg.eca = true;
  cfg.conf_threshold = 0.01f;
  return cfg;
}

TEST(Table, CsvAndAlignedText) {
  Table t;
  t.title = "T";
  t.header = {"a", "long_name"};
  t.rows = {{"xyz", "1"}, {"p", "22"}};
  t.footer = {"note"};
  EXPECT_EQ(t.to_csv(), "a,long_name\nxyz,1\np,22\n");
  EXPECT_EQ(t.render_text(), "T\na    long_name\n--------------\nxyz  1\np    22\nnote\n");
}

TEST(LabeledDir, RoundTripAndErrors) {
  const auto dir = fs::temp_directory_path() / "crabsurvey_labeled";
  fs::remove_all(dir);
  const auto data = scenes(32, 3, 5);
  save_labeled_dir(data, dir);
  const auto back = load_labeled_dir(dir);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, data[i].id);
    EXPECT_EQ(back[i].boxes.size(), data[i].boxes.size());
    EXPECT_EQ(back[i].image.width(), 32);
  }
  fs::remove(dir / (data[1].id + ".txt"));
  EXPECT_THROW(load_labeled_dir(dir), MissingInputError);
  fs::remove_all(dir);
  EXPECT_THROW(load_labeled_dir(dir), MissingInputError);
}

TEST(SRBenchmark, BicubicFirstThenFixedOrder) {
  const auto test = scenes(48, 2, 11);
  std::vector<std::unique_ptr<srr::SRModel>> owned;
  std::map<srr::SRArchitecture, const srr::SRModel*> models;
  for (auto arch : {srr::SRArchitecture::kRDN, srr::SRArchitecture::kSRCNN,
                    srr::SRArchitecture::kEDSR}) {
    owned.push_back(srr::build_sr_model(srr::SRModelConfig::desk(arch, 2)));
    models[arch] = owned.back().get();
  }
  auto detector = det::build_detector(tiny_detector(32));
  const auto a = run_srr_benchmark(test, models, 2, detector.get());
  ASSERT_EQ(a.image_quality.rows.size(), 4u);
  EXPECT_EQ(a.image_quality.rows[0][0], "Bicubic");
  EXPECT_EQ(a.image_quality.rows[1][0], "SRCNN");
  EXPECT_EQ(a.image_quality.rows[2][0], "EDSR");
  EXPECT_EQ(a.image_quality.rows[3][0], "RDN");
  ASSERT_EQ(a.detection.rows.size(), 5u);
  EXPECT_EQ(a.detection.rows[0][0], "HR");
  EXPECT_EQ(a.detection.rows[1][0], "Bicubic");

  const auto b = run_srr_benchmark(test, models, 2, detector.get());
  EXPECT_EQ(a.image_quality.to_csv(), b.image_quality.to_csv());
  EXPECT_EQ(a.detection.to_csv(), b.detection.to_csv());

  const auto no_det = run_srr_benchmark(test, {}, 2);
  EXPECT_EQ(no_det.image_quality.rows.size(), 1u);
  EXPECT_TRUE(no_det.detection.rows.empty());
}

TEST(SRBenchmark, Errors) {
  const auto test = scenes(48, 1, 2);
  auto x3 = srr::build_sr_model(srr::SRModelConfig::desk(srr::SRArchitecture::kSRCNN, 3));
  EXPECT_THROW(run_srr_benchmark(test, {{srr::SRArchitecture::kSRCNN, x3.get()}}, 2),
               ConfigError);
  EXPECT_THROW(run_srr_benchmark({}, {}, 2), MissingInputError);
  EXPECT_THROW(run_srr_benchmark(scenes(45, 1, 2), {}, 2), ShapeError);
}

TEST(Ablation, FourRowsLatticeAndGrowingParams) {
  const auto data = scenes(32, 2, 4);
  det::DetTrainConfig train;
  train.epochs = 1;
  const auto rows = run_ablation(data, data, tiny_detector(32), train);
  const Table t = ablation_table(rows);
  ASSERT_EQ(t.rows.size(), 4u);
  const std::vector<std::vector<std::string>> lattice = {
      {"×", "×", "×"}, {"√", "×", "×"}, {"√", "√", "×"}, {"√", "√", "√"}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(std::vector<std::string>(t.rows[i].begin() + 1, t.rows[i].begin() + 4), lattice[i]);
  }
  EXPECT_LT(rows[0].parameters, rows[1].parameters);
  EXPECT_NE(t.render_text().find("93.1"), std::string::npos);
}

TEST(MagnificationSweep, RowsAndReconstructedSizes) {
  const auto lr = scenes(160, 1, 9);
  std::vector<std::unique_ptr<srr::SRModel>> owned;
  std::map<int, const srr::SRModel*> models;
  for (int m = 2; m <= 5; ++m) {
    auto cfg = srr::SRModelConfig::desk(srr::SRArchitecture::kSRCNN, m);
    owned.push_back(srr::build_sr_model(cfg));
    models[m] = owned.back().get();
  }
  auto detector = det::build_detector(tiny_detector(32));
  const auto sweep = run_magnification_sweep(lr, models, *detector);
  ASSERT_EQ(sweep.rows.size(), 5u);
  const std::vector<std::string> names = {"x1-LR", "x2-SR", "x3-SR", "x4-SR", "x5-SR"};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(sweep.rows[i].setting, names[i]);
    EXPECT_EQ(sweep.rows[i].width, 160 * static_cast<int>(i + 1));
    EXPECT_EQ(sweep.rows[i].height, 160 * static_cast<int>(i + 1));
  }
  EXPECT_NE(sweep.table().render_text().find("peak magnification"), std::string::npos);

  models.erase(4);
  EXPECT_THROW(run_magnification_sweep(lr, models, *detector), MissingInputError);
}

TEST(CheckpointNames, LowerCaseArchAndFactor) {
  EXPECT_EQ(sr_checkpoint_name(srr::SRArchitecture::kRDN, 4), "rdn_x4.ckpt");
  EXPECT_EQ(sr_checkpoint_name(srr::SRArchitecture::kSRFBN, 2), "srfbn_x2.ckpt");
}

}  // namespace
}  // namespace crabsurvey::harness
