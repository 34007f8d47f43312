// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/config.hpp"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "crabsurvey/errors.hpp"

namespace crabsurvey {
namespace {

namespace fs = std::filesystem;

fs::path write_temp(const std::string& name, const std::string& text) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

TEST(Config, DefaultsBuildEveryStage) {
  const Config c = Config::defaults();
  EXPECT_EQ(c.tile_grid().window, 640);
  EXPECT_EQ(c.tile_grid().stride, 320);
  EXPECT_NO_THROW(c.sr_model());
  EXPECT_NO_THROW(c.sr_train());
  const auto d = c.detector();
  EXPECT_TRUE(d.four_heads && d.gsconv && d.eca);
  EXPECT_EQ(c.det_train().batch_size, 8);
  EXPECT_EQ(c.scene().width, 640);
}

TEST(Config, FileOverridesAndComments) {
  const auto path = write_temp("crabsurvey_cfg_ok.cfg",
                               "# run settings\n"
                               "seed = 17\n"
                               "\n"
                               "tile.stride=160   # overlap 75%\n"
                               "det.gsconv = false\n");
  const Config c = Config::load(path);
  EXPECT_EQ(c.get_u64("seed"), 17u);
  EXPECT_EQ(c.tile_grid().stride, 160);
  EXPECT_FALSE(c.detector().gsconv);
  EXPECT_EQ(c.detector().seed, 17u);
  fs::remove(path);
}

TEST(Config, TextRoundTrip) {
  Config c = Config::defaults();
  c.set("sr.arch", "EDSR");
  c.set("density.cell", "256");
  const auto path = write_temp("crabsurvey_cfg_rt.cfg", c.to_text());
  EXPECT_EQ(Config::load(path).entries(), c.entries());
  fs::remove(path);
}

TEST(Config, Errors) {
  Config c = Config::defaults();
  EXPECT_THROW(c.set("tile.widow", "5"), ConfigError);
  EXPECT_THROW(c.get("nope"), ConfigError);
  c.set("tile.window", "12x");
  EXPECT_THROW(c.tile_grid(), ConfigError);
  c.set("tile.window", "-4");
  EXPECT_THROW(c.tile_grid(), ConfigError);
  c = Config::defaults();
  c.set("det.gsconv", "maybe");
  EXPECT_THROW(c.detector(), ConfigError);
  c = Config::defaults();
  c.set("sr.arch", "VDSR");
  EXPECT_THROW(c.sr_model(), ConfigError);
  c = Config::defaults();
  c.set("tile.edge_policy", "wrap");
  EXPECT_THROW(c.tile_grid(), ConfigError);

  EXPECT_THROW(Config::load("/nonexistent/run.cfg"), MissingInputError);
  const auto bad = write_temp("crabsurvey_cfg_bad.cfg", "seed 3\n");
  EXPECT_THROW(Config::load(bad), ConfigError);
  fs::remove(bad);
}

}  // namespace
}  // namespace crabsurvey
