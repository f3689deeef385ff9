#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uuconv/config.hpp"
#include "uuconv/tensor.hpp"

namespace uuconv {

// Named parameter tensors with deterministic iteration order.
class ModelParams {
 public:
  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t tensor_count() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct ParamSpec {
  enum class Init { kTruncNormal, kZeros, kOnes, kLayerScale };
  std::string name;
  Shape shape;
  Init init = Init::kTruncNormal;
};

// Declarative list of every parameter implied by the config, in the fixed
// build order. Single source of truth for shapes, counting and checkpoints.
std::vector<ParamSpec> parameter_plan(const ModelConfig& config);

// Allocates and initializes all parameters (trunc-normal std 0.02 weights,
// zero biases, unit norm gains, layer scale at its init value);
// deterministic in the seed. Every tensor has requires_grad set.
ModelParams build_model(const ModelConfig& config, std::uint64_t seed);

struct ParamBreakdown {
  std::size_t encoder = 0;
  std::size_t prompt = 0;
  std::size_t decoder = 0;
  std::size_t heads = 0;
  std::size_t total = 0;
};

std::size_t count_params(const ModelParams& params);
ParamBreakdown count_params_by_group(const ModelParams& params);

// Same numbers straight from the plan, without allocating buffers.
std::size_t planned_param_count(const ModelConfig& config);
ParamBreakdown planned_breakdown(const ModelConfig& config);

struct ClsLogits {
  Tensor two_way;   // [N,2]
  Tensor four_way;  // [N,4]
};

struct ForwardResult {
  TaskKind task;
  Tensor seg_logits;  // defined for seg
  ClsLogits cls;      // defined for cls
};

// UltraUPConvNet graph: ConvNeXt-style encoder, per-scale prompt projection
// offsets, UPerNet (PPM+FPN) segmentation decoder, and two classification
// heads fed by the deepest map.
class Model {
 public:
  Model(ModelConfig config, ModelParams params);

  static Model create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  // Four pyramid features, scale i at input_size/(4*2^i) with stage_dims[i]
  // channels.
  std::array<Tensor, 4> forward_encoder(Tape* tape, const Tensor& image) const;

  // Adds the prompt projection offset at every scale. `prompts` holds one
  // PromptSet per sample (or a single shared set). Pass-through when
  // prompts are disabled.
  std::array<Tensor, 4> embed_prompts(
      Tape* tape, const std::array<Tensor, 4>& features,
      const std::vector<PromptSet>& prompts) const;

  // Segmentation logits [N, seg_classes, S, S].
  Tensor forward_seg_decoder(Tape* tape,
                             const std::array<Tensor, 4>& features) const;

  // Both heads, always computed; loss-side dispatch picks one.
  ClsLogits forward_cls_heads(Tape* tape,
                              const std::array<Tensor, 4>& features) const;

  ForwardResult forward(Tape* tape, const Tensor& image,
                        const std::vector<PromptSet>& prompts,
                        TaskKind task) const;

 private:
  ModelConfig config_;
  ModelParams params_;
};

}  // namespace uuconv
