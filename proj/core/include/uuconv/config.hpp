#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace uuconv {

enum class TaskKind { kSeg, kCls };

std::string task_name(TaskKind task);

// Head widths are fixed by the task family: binary and four-class disease
// prediction.
inline constexpr int kTwoWay = 2;
inline constexpr int kFourWay = 4;

struct PromptCardinalities {
  int nature = 2;
  int position = 7;
  int task = 2;
  int type = 2;

  int total() const { return nature + position + task + type; }
  void validate() const;
  bool operator==(const PromptCardinalities&) const = default;
};

// The four categorical prompts of one sample, as category indices.
struct PromptSet {
  int nature = 0;
  int position = 0;
  int task = 0;
  int type = 0;

  // Concatenated one-hot encoding (nature | position | task | type);
  // exactly four ones. Throws if any index is out of range.
  std::vector<double> one_hot(const PromptCardinalities& cards) const;
  bool operator==(const PromptSet&) const = default;
};

struct ModelConfig {
  int in_channels = 3;
  int input_size = 224;  // square, must be divisible by 32
  std::array<int, 4> stage_depths{3, 3, 9, 3};
  std::array<int, 4> stage_dims{96, 192, 384, 768};
  int decoder_channels = 512;
  std::vector<int> ppm_bins{1, 2, 3, 6};
  int seg_classes = 2;
  PromptCardinalities prompt_cardinalities;
  bool prompts_enabled = true;
  double drop_path = 0.0;  // reserved; only 0.0 is accepted
  double layer_scale_init = 1e-6;
  double ln_eps = 1e-6;

  static ModelConfig full_scale();
  // Desk-scale variant: 64x64 input, single block per stage, narrow dims.
  static ModelConfig toy();

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// JSON round-trip for the config file interface. Unknown keys are rejected.
// A top-level "model" object is accepted and unwrapped, so a combined
// model+train file can be reused.
ModelConfig model_config_from_json(const std::string& text);
ModelConfig load_model_config(const std::filesystem::path& path);
std::string model_config_to_json(const ModelConfig& config);

}  // namespace uuconv
