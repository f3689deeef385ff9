#include "uuconv/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uuconv/errors.hpp"
#include "uuconv/metrics.hpp"
#include "uuconv/ops.hpp"

namespace uuconv {

using nlohmann::json;

void TrainConfig::validate() const {
  adamw().validate();
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size_seg < 1 || batch_size_cls < 1) {
    throw ValidationError("batch sizes must be >= 1");
  }
  loss_weights.validate();
  augment.validate();
  if (eval_every < 0) throw ValidationError("eval_every must be >= 0");
  if (grad_clip_norm < 0) throw ValidationError("grad_clip_norm must be >= 0");
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const char* where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ValidationError(std::string("unknown key '") + key + "' in " +
                            where);
    }
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: invalid JSON: ") +
                          e.what());
  }
  if (j.contains("train")) j = j.at("train");
  reject_unknown(j,
                 {"epochs", "learning_rate", "beta1", "beta2", "adam_eps",
                  "weight_decay", "batch_size_seg", "batch_size_cls",
                  "loss_weights", "seed", "eval_every", "augment",
                  "augment_enabled", "grad_clip_norm"},
                 "train config");
  TrainConfig c;
  try {
    read_if(j, "epochs", c.epochs);
    read_if(j, "learning_rate", c.learning_rate);
    read_if(j, "beta1", c.beta1);
    read_if(j, "beta2", c.beta2);
    read_if(j, "adam_eps", c.adam_eps);
    read_if(j, "weight_decay", c.weight_decay);
    read_if(j, "batch_size_seg", c.batch_size_seg);
    read_if(j, "batch_size_cls", c.batch_size_cls);
    if (j.contains("loss_weights")) {
      const json& lw = j.at("loss_weights");
      reject_unknown(lw, {"w_ce", "w_dice", "lambda_cls", "lambda_seg",
                          "dice_smooth"},
                     "loss_weights");
      read_if(lw, "w_ce", c.loss_weights.w_ce);
      read_if(lw, "w_dice", c.loss_weights.w_dice);
      read_if(lw, "lambda_cls", c.loss_weights.lambda_cls);
      read_if(lw, "lambda_seg", c.loss_weights.lambda_seg);
      read_if(lw, "dice_smooth", c.loss_weights.dice_smooth);
    }
    read_if(j, "seed", c.seed);
    read_if(j, "eval_every", c.eval_every);
    if (j.contains("augment")) {
      const json& a = j.at("augment");
      reject_unknown(a, {"flip_prob", "max_rotation_deg", "crop_fraction"},
                     "augment");
      read_if(a, "flip_prob", c.augment.flip_prob);
      read_if(a, "max_rotation_deg", c.augment.max_rotation_deg);
      read_if(a, "crop_fraction", c.augment.crop_fraction);
    }
    read_if(j, "augment_enabled", c.augment_enabled);
    read_if(j, "grad_clip_norm", c.grad_clip_norm);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["weight_decay"] = c.weight_decay;
  j["batch_size_seg"] = c.batch_size_seg;
  j["batch_size_cls"] = c.batch_size_cls;
  j["loss_weights"] = {{"w_ce", c.loss_weights.w_ce},
                       {"w_dice", c.loss_weights.w_dice},
                       {"lambda_cls", c.loss_weights.lambda_cls},
                       {"lambda_seg", c.loss_weights.lambda_seg},
                       {"dice_smooth", c.loss_weights.dice_smooth}};
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["augment"] = {{"flip_prob", c.augment.flip_prob},
                  {"max_rotation_deg", c.augment.max_rotation_deg},
                  {"crop_fraction", c.augment.crop_fraction}};
  j["augment_enabled"] = c.augment_enabled;
  j["grad_clip_norm"] = c.grad_clip_norm;
  return j.dump(2);
}

CombinedConfig load_combined_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  CombinedConfig c;
  if (j.contains("model") || j.contains("train")) {
    reject_unknown(j, {"model", "train"}, "combined config");
    if (j.contains("model")) {
      c.model = model_config_from_json(j.at("model").dump());
    }
    if (j.contains("train")) {
      c.train = train_config_from_json(j.at("train").dump());
    }
  } else {
    // A bare model config is accepted for convenience.
    c.model = model_config_from_json(text);
  }
  return c;
}

TrainState init_train_state(const ModelConfig& model_config,
                            const TrainConfig& train_config) {
  model_config.validate();
  train_config.validate();
  TrainState state;
  state.model_config = model_config;
  state.params = build_model(model_config, train_config.seed);
  state.optimizer = AdamW(state.params, train_config.adamw());
  state.rng = Rng(Rng::mix(train_config.seed, 0x7374617465ULL));  // "state"
  return state;
}

namespace {

constexpr std::uint64_t kSegOrderTag = 0x7365676f72646572ULL;
constexpr std::uint64_t kClsOrderTag = 0x636c736f72646572ULL;
constexpr std::uint64_t kAugmentTag = 0x6175676d656e74ULL;

std::vector<std::size_t> capable_indices(const DatasetManifest& data,
                                         TaskKind task) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const SampleTask t = data.samples[i].task;
    const bool ok = task == TaskKind::kSeg
                        ? (t == SampleTask::kSeg || t == SampleTask::kBoth)
                        : (t == SampleTask::kCls || t == SampleTask::kBoth);
    if (ok) idx.push_back(i);
  }
  return idx;
}

struct LoadedBatch {
  Tensor images;                  // [N,C,S,S]
  std::vector<int> seg_targets;   // N*S*S, seg batches only
  std::vector<int> labels;        // cls batches only
  std::vector<int> ways;
  std::vector<PromptSet> prompts;
};

LoadedBatch load_batch(const DatasetManifest& data,
                       const std::vector<std::size_t>& rows, TaskKind task,
                       const ModelConfig& model_cfg, const TrainConfig& cfg,
                       std::uint64_t epoch, bool with_augment) {
  const int s = model_cfg.input_size;
  LoadedBatch batch;
  const std::size_t n = rows.size();
  batch.images = Tensor::zeros({n, static_cast<std::size_t>(model_cfg.in_channels),
                                static_cast<std::size_t>(s),
                                static_cast<std::size_t>(s)});
  double* dst = batch.images.values().data();
  const std::size_t sample_span = batch.images.size() / n;

  for (std::size_t i = 0; i < n; ++i) {
    const SampleRecord& rec = data.samples[rows[i]];
    LoadedSample loaded = load_sample(data, rec, s, model_cfg.in_channels,
                                      model_cfg.seg_classes);
    if (with_augment) {
      Rng rng(Rng::mix(cfg.seed ^ kAugmentTag, Rng::hash_string(rec.id),
                       epoch));
      augment(loaded.image,
              loaded.mask.empty() ? nullptr : &loaded.mask, cfg.augment, rng);
    }
    std::copy(loaded.image.values().begin(), loaded.image.values().end(),
              dst + i * sample_span);
    if (task == TaskKind::kSeg) {
      if (loaded.mask.empty()) {
        throw ValidationError("sample '" + rec.id +
                              "' missing mask in a segmentation batch");
      }
      batch.seg_targets.insert(batch.seg_targets.end(), loaded.mask.begin(),
                               loaded.mask.end());
    } else {
      if (!loaded.label.has_value()) {
        throw ValidationError("sample '" + rec.id +
                              "' missing label in a classification batch");
      }
      batch.labels.push_back(*loaded.label);
      batch.ways.push_back(rec.way);
    }
    batch.prompts.push_back(rec.prompts);
  }
  return batch;
}

void clip_gradients(ModelParams& params, double max_norm) {
  if (max_norm <= 0) return;
  double sq = 0.0;
  for (auto& [name, p] : params.entries()) {
    (void)name;
    if (!p.grad_allocated()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double factor = max_norm / norm;
  for (auto& [name, p] : params.entries()) {
    (void)name;
    if (!p.grad_allocated()) continue;
    for (double& g : p.grad()) g *= factor;
  }
}

std::vector<int> argmax_channel(const Tensor& logits) {
  // [N,K] -> N labels, or [N,K,H,W] -> N*H*W labels in [N,H,W] order.
  const std::size_t n = logits.extent(0);
  const std::size_t k = logits.extent(1);
  const std::size_t span =
      logits.rank() == 4 ? logits.extent(2) * logits.extent(3) : 1;
  std::vector<int> labels(n * span);
  const double* v = logits.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < span; ++p) {
      const std::size_t base = (i * k) * span + p;
      int best = 0;
      double best_v = v[base];
      for (std::size_t j = 1; j < k; ++j) {
        const double val = v[base + j * span];
        if (val > best_v) {
          best_v = val;
          best = static_cast<int>(j);
        }
      }
      labels[i * span + p] = best;
    }
  }
  return labels;
}

}  // namespace

EpochReport train_epoch(TrainState& state, const DatasetManifest& seg_data,
                        const DatasetManifest& cls_data,
                        const TrainConfig& config) {
  config.validate();
  Model model(state.model_config, state.params);

  const auto seg_idx = capable_indices(seg_data, TaskKind::kSeg);
  const auto cls_idx = capable_indices(cls_data, TaskKind::kCls);
  if (seg_idx.empty() && cls_idx.empty()) {
    throw ValidationError("train_epoch: both loaders are empty");
  }

  EpochReport report;
  report.epoch = state.epoch;
  const LossWeights& lw = config.loss_weights;

  auto run_batches = [&](const DatasetManifest& data,
                         std::vector<std::size_t> order, TaskKind task,
                         std::size_t batch_size, std::uint64_t order_tag,
                         double& loss_sum, std::size_t& batches) {
    Rng rng(Rng::mix(config.seed ^ order_tag, state.epoch));
    rng.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += batch_size) {
      const std::size_t hi = std::min(at + batch_size, order.size());
      const std::vector<std::size_t> rows(order.begin() + at,
                                          order.begin() + hi);
      LoadedBatch batch =
          load_batch(data, rows, task, state.model_config, config, state.epoch,
                     config.augment_enabled);
      state.params.zero_grad();
      Tape tape;
      ForwardResult fwd =
          model.forward(&tape, batch.images, batch.prompts, task);
      Tensor task_loss =
          task == TaskKind::kSeg
              ? seg_loss(&tape, fwd.seg_logits, batch.seg_targets, lw)
              : cls_loss(&tape, fwd.cls.two_way, fwd.cls.four_way,
                         batch.labels, batch.ways);
      Tensor total = final_loss(&tape, task, task_loss, lw);
      tape.backward(total);
      clip_gradients(state.params, config.grad_clip_norm);
      state.optimizer.step(state.params);
      loss_sum += task_loss.item();
      ++batches;
      (task == TaskKind::kSeg ? state.step_seg : state.step_cls) += 1;
    }
  };

  double seg_sum = 0.0, cls_sum = 0.0;
  run_batches(seg_data, seg_idx, TaskKind::kSeg,
              static_cast<std::size_t>(config.batch_size_seg), kSegOrderTag,
              seg_sum, report.seg_batches);
  run_batches(cls_data, cls_idx, TaskKind::kCls,
              static_cast<std::size_t>(config.batch_size_cls), kClsOrderTag,
              cls_sum, report.cls_batches);

  if (report.seg_batches) {
    report.mean_seg_loss = seg_sum / static_cast<double>(report.seg_batches);
  }
  if (report.cls_batches) {
    report.mean_cls_loss = cls_sum / static_cast<double>(report.cls_batches);
  }
  state.epoch += 1;
  return report;
}

std::string format_metric_row(const MetricRow& row) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", row.value);
  return row.dataset + "\t" + row.task + "\t" + row.metric + "\t" + buf;
}

std::vector<MetricRow> evaluate(const TrainState& state,
                                const DatasetManifest& data,
                                const std::string& dataset_name) {
  Model model(state.model_config, state.params);
  TrainConfig plain;  // evaluation never augments
  plain.seed = 0;

  std::vector<MetricRow> rows;
  const auto seg_idx = capable_indices(data, TaskKind::kSeg);
  const auto cls_idx = capable_indices(data, TaskKind::kCls);
  if (seg_idx.empty() && cls_idx.empty()) {
    throw ValidationError("evaluate: no usable samples in '" + dataset_name +
                          "'");
  }

  if (!seg_idx.empty()) {
    const int k = state.model_config.seg_classes;
    double dice_sum = 0.0;
    for (std::size_t row : seg_idx) {
      LoadedBatch b = load_batch(data, {row}, TaskKind::kSeg,
                                 state.model_config, plain, 0, false);
      ForwardResult fwd =
          model.forward(nullptr, b.images, b.prompts, TaskKind::kSeg);
      const std::vector<int> pred = argmax_channel(fwd.seg_logits);
      // Foreground Dice: classes 1..K-1 averaged (class 1 alone for the
      // default two-class setup).
      double d = 0.0;
      for (int c = 1; c < k; ++c) {
        d += dice_score(pred, b.seg_targets, c);
      }
      dice_sum += d / static_cast<double>(k - 1);
    }
    rows.push_back({dataset_name, "seg", "dice_fg",
                    dice_sum / static_cast<double>(seg_idx.size())});
    rows.push_back({dataset_name, "seg", "samples",
                    static_cast<double>(seg_idx.size())});
  }

  if (!cls_idx.empty()) {
    std::vector<int> pred2, tgt2, pred4, tgt4;
    for (std::size_t row : cls_idx) {
      LoadedBatch b = load_batch(data, {row}, TaskKind::kCls,
                                 state.model_config, plain, 0, false);
      ForwardResult fwd =
          model.forward(nullptr, b.images, b.prompts, TaskKind::kCls);
      if (b.ways[0] == kTwoWay) {
        pred2.push_back(argmax_channel(fwd.cls.two_way)[0]);
        tgt2.push_back(b.labels[0]);
      } else {
        pred4.push_back(argmax_channel(fwd.cls.four_way)[0]);
        tgt4.push_back(b.labels[0]);
      }
    }
    if (!pred2.empty()) {
      rows.push_back({dataset_name, "cls", "acc2", accuracy(pred2, tgt2)});
    }
    if (!pred4.empty()) {
      rows.push_back({dataset_name, "cls", "acc4", accuracy(pred4, tgt4)});
    }
    rows.push_back({dataset_name, "cls", "samples",
                    static_cast<double>(cls_idx.size())});
  }
  return rows;
}

}  // namespace uuconv
