// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "crabsurvey/nn/module.hpp"

namespace crabsurvey::nn {

/// Serialized model state.
///
/// File layout: a text header (magic, kind, fingerprint, one-line config, epoch, loss
/// history, parameter table) terminated by a line "end", followed by the parameters as
/// little-endian float32 in table order.
struct Checkpoint {
  std::string kind;
  std::string fingerprint;
  std::string config;
  int epoch = 0;
  std::vector<double> loss_history;
  std::vector<std::pair<std::string, std::vector<float>>> parameters;
};

/// Copies current parameter values of `model` into a checkpoint.
Checkpoint snapshot(const Module& model, std::string kind, std::string fingerprint,
                    std::string config, int epoch, std::vector<double> loss_history);

/// Writes parameter values into `model`. Names and sizes must match exactly.
void restore(Module& model, const Checkpoint& ckpt);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a, lower-case hex.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace crabsurvey::nn
