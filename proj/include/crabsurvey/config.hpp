// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "crabsurvey/detector.hpp"
#include "crabsurvey/srr.hpp"
#include "crabsurvey/synthetic.hpp"
#include "crabsurvey/tiling.hpp"

namespace crabsurvey {

/// Flat key/value run configuration.
///
/// File syntax: one `key = value` per line; `#` starts a comment; blank lines are
/// ignored. Only known keys are accepted, so a typo fails loudly with ConfigError.
/// `defaults()` lists every key with its default value.
class Config {
 public:
  static Config defaults();
  /// Defaults overlaid with the file. MissingInputError if the file does not exist.
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Canonical rendering, sorted by key; parses back to the same entries.
  std::string to_text() const;

  TileGrid tile_grid() const;
  srr::SRModelConfig sr_model() const;
  srr::SRTrainConfig sr_train() const;
  det::DetectorConfig detector() const;
  det::DetTrainConfig det_train() const;
  SceneSpec scene() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace crabsurvey
