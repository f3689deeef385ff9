#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uuconv/augment.hpp"
#include "uuconv/data.hpp"
#include "uuconv/losses.hpp"
#include "uuconv/model.hpp"
#include "uuconv/optimizer.hpp"
#include "uuconv/rng.hpp"

namespace uuconv {

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  int batch_size_seg = 4;
  int batch_size_cls = 4;
  LossWeights loss_weights;
  std::uint64_t seed = 0;
  int eval_every = 10;          // epochs between val evaluations; 0 = off
  AugmentConfig augment;
  bool augment_enabled = true;
  double grad_clip_norm = 0.0;  // 0 = no clipping

  AdamWConfig adamw() const {
    return {learning_rate, beta1, beta2, adam_eps, weight_decay};
  }
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);

// Combined config file: {"model": {...}, "train": {...}}. Either section
// may be omitted, leaving defaults.
struct CombinedConfig {
  ModelConfig model;
  TrainConfig train;
};
CombinedConfig load_combined_config(const std::filesystem::path& path);

struct TrainState {
  ModelConfig model_config;
  ModelParams params;
  AdamW optimizer;
  std::uint64_t epoch = 0;
  std::uint64_t step_seg = 0;
  std::uint64_t step_cls = 0;
  Rng rng;
};

TrainState init_train_state(const ModelConfig& model_config,
                            const TrainConfig& train_config);

struct EpochReport {
  std::uint64_t epoch = 0;
  double mean_seg_loss = 0.0;  // unweighted task losses
  double mean_cls_loss = 0.0;
  std::size_t seg_batches = 0;
  std::size_t cls_batches = 0;
};

// One alternating multi-task epoch: all segmentation batches first, then
// all classification batches, one optimizer step per batch. Batch order and
// per-sample augmentation derive from (seed, epoch, sample id), so the
// trajectory is reproducible and resumable.
EpochReport train_epoch(TrainState& state, const DatasetManifest& seg_data,
                        const DatasetManifest& cls_data,
                        const TrainConfig& config);

struct MetricRow {
  std::string dataset;
  std::string task;
  std::string metric;
  double value = 0.0;
};

std::string format_metric_row(const MetricRow& row);

// Deterministic, mutation-free evaluation: mean per-sample foreground Dice
// on argmax masks for seg samples, accuracy per way for cls samples.
std::vector<MetricRow> evaluate(const TrainState& state,
                                const DatasetManifest& data,
                                const std::string& dataset_name);

}  // namespace uuconv
