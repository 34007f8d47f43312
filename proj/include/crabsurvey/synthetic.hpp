// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crabsurvey/tiling.hpp"

namespace crabsurvey {

/// Procedural beach scenes: a wavy waterline over sand, hermit-crab-like shells with
/// claws, and pebbles. Crabs whose center lies in the water are labeled underwater.
struct SceneSpec {
  int width = 640;
  int height = 640;
  int min_crabs = 3;
  int max_crabs = 8;
  /// Shell radius as a fraction of the shorter side.
  double min_radius = 0.03;
  double max_radius = 0.06;
  /// Fraction of the height covered by water, drawn uniformly per scene.
  double min_water = 0.2;
  double max_water = 0.6;
  /// Amplitude of the low-frequency background texture.
  double texture = 0.06;
  int pebbles = 30;
};

/// Labels are tile-normalized.
LabeledImage synthesize_scene(const SceneSpec& spec, std::mt19937_64& rng, std::string id);

std::vector<LabeledImage> synthesize_dataset(const SceneSpec& spec, int count,
                                             std::uint64_t seed);

}  // namespace crabsurvey
