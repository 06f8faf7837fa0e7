#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdfl/autograd.hpp"
#include "mdfl/config.hpp"
#include "mdfl/optim.hpp"

namespace mdfl {

struct LogRow {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> train_oa;
  bool operator==(const LogRow&) const = default;
};

/// CSV with header epoch,lr,loss,train_oa; an absent accuracy is an empty cell.
std::string log_csv(const std::vector<LogRow>& rows);

/// On disk: "MDCK", u32 version, u64 header length, JSON header, then every
/// tensor as little-endian f32 in header order.
struct Checkpoint {
  std::string stage;     // "diffusion" or "classifier"
  std::string modality;  // diffusion only: "hsi" or "lidar"
  std::size_t epoch = 0;  // completed epochs
  bool complete = false;
  RunConfig config;
  std::uint64_t rng_seed = 0;
  std::size_t hsi_channels = 0, lidar_channels = 0, num_classes = 0;
  std::size_t adam_steps = 0, adam_skipped = 0;
  std::vector<LogRow> log;
  std::map<std::string, Tensor<float>> tensors;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameter values in under their names.
void store_params(Checkpoint& ckpt, const ParamList<float>& params);
/// Restores every parameter by name; missing names or shape changes throw.
void restore_params(const Checkpoint& ckpt, const ParamList<float>& params);

/// Moment tensors go in as "adam.m/<name>" and "adam.v/<name>".
void store_adam(Checkpoint& ckpt, Adam<float>& adam);
void restore_adam(const Checkpoint& ckpt, Adam<float>& adam);

}  // namespace mdfl
