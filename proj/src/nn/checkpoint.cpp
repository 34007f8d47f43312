// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crabsurvey/errors.hpp"

namespace crabsurvey::nn {

namespace {
constexpr const char* kMagic = "CRABSURVEY-CHECKPOINT 1";
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");
}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Checkpoint snapshot(const Module& model, std::string kind, std::string fingerprint,
                    std::string config, int epoch, std::vector<double> loss_history) {
  Checkpoint ckpt{std::move(kind), std::move(fingerprint), std::move(config), epoch,
                  std::move(loss_history), {}};
  for (const auto& [name, t] : model.named_parameters()) {
    ckpt.parameters.emplace_back(name, std::vector<float>(t.data().begin(), t.data().end()));
  }
  return ckpt;
}

void restore(Module& model, const Checkpoint& ckpt) {
  auto params = model.named_parameters();
  if (params.size() != ckpt.parameters.size()) {
    throw ConfigError("checkpoint has " + std::to_string(ckpt.parameters.size()) +
                      " parameter tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    const auto& [cname, values] = ckpt.parameters[i];
    if (name != cname || values.size() != t.numel()) {
      throw ConfigError("checkpoint parameter mismatch at " + name + " (file has " + cname + ")");
    }
    std::copy(values.begin(), values.end(), t.data().begin());
  }
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << kMagic << '\n'
      << "kind " << ckpt.kind << '\n'
      << "fingerprint " << ckpt.fingerprint << '\n'
      << "config " << ckpt.config << '\n'
      << "epoch " << ckpt.epoch << '\n'
      << "loss_history " << ckpt.loss_history.size();
  out.precision(17);
  for (double v : ckpt.loss_history) out << ' ' << v;
  out << '\n' << "parameters " << ckpt.parameters.size() << '\n';
  for (const auto& [name, values] : ckpt.parameters) out << name << ' ' << values.size() << '\n';
  out << "end\n";
  for (const auto& [name, values] : ckpt.parameters) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("short write on checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("checkpoint not found: " + path.string());
  auto fail = [&](const std::string& what) {
    return ConfigError("malformed checkpoint " + path.string() + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw fail("bad magic");
  auto field = [&](const std::string& key) {
    if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0) throw fail("expected " + key);
    return line.substr(key.size() + 1);
  };
  Checkpoint ckpt;
  ckpt.kind = field("kind");
  ckpt.fingerprint = field("fingerprint");
  ckpt.config = field("config");
  ckpt.epoch = std::stoi(field("epoch"));
  {
    std::istringstream hs(field("loss_history"));
    std::size_t n = 0;
    hs >> n;
    ckpt.loss_history.resize(n);
    for (auto& v : ckpt.loss_history) hs >> v;
    if (!hs) throw fail("loss history");
  }
  const std::size_t count = std::stoul(field("parameters"));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw fail("parameter table");
    std::istringstream ps(line);
    std::string name;
    std::size_t n = 0;
    if (!(ps >> name >> n)) throw fail("parameter entry");
    ckpt.parameters.emplace_back(name, std::vector<float>(n));
  }
  if (!std::getline(in, line) || line != "end") throw fail("missing end marker");
  for (auto& [name, values] : ckpt.parameters) {
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!in) throw fail("truncated payload at " + name);
  }
  return ckpt;
}

}  // namespace crabsurvey::nn
