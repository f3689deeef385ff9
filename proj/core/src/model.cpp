#include "uuconv/model.hpp"

#include <algorithm>

#include "uuconv/errors.hpp"
#include "uuconv/ops.hpp"
#include "uuconv/rng.hpp"

namespace uuconv {

void ModelParams::add(std::string name, Tensor tensor) {
  if (contains(name)) {
    throw ValidationError("duplicate parameter name '" + name + "'");
  }
  entries_.emplace_back(std::move(name), std::move(tensor));
}

bool ModelParams::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ValidationError("unknown parameter '" + name + "'");
}

Tensor& ModelParams::at(const std::string& name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ValidationError("unknown parameter '" + name + "'");
}

void ModelParams::zero_grad() {
  for (auto& [n, t] : entries_) {
    (void)n;
    t.zero_grad();
  }
}

namespace {

std::size_t u(int v) { return static_cast<std::size_t>(v); }

void add_conv(std::vector<ParamSpec>& plan, const std::string& prefix,
              int cout, int cin, int k) {
  plan.push_back({prefix + ".weight", {u(cout), u(cin), u(k), u(k)},
                  ParamSpec::Init::kTruncNormal});
  plan.push_back({prefix + ".bias", {u(cout)}, ParamSpec::Init::kZeros});
}

void add_linear(std::vector<ParamSpec>& plan, const std::string& prefix,
                int dout, int din) {
  plan.push_back({prefix + ".weight", {u(dout), u(din)},
                  ParamSpec::Init::kTruncNormal});
  plan.push_back({prefix + ".bias", {u(dout)}, ParamSpec::Init::kZeros});
}

void add_norm(std::vector<ParamSpec>& plan, const std::string& prefix,
              int c) {
  plan.push_back({prefix + ".gamma", {u(c)}, ParamSpec::Init::kOnes});
  plan.push_back({prefix + ".beta", {u(c)}, ParamSpec::Init::kZeros});
}

}  // namespace

std::vector<ParamSpec> parameter_plan(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> plan;
  const auto& dims = cfg.stage_dims;

  add_conv(plan, "encoder.stem.conv", dims[0], cfg.in_channels, 4);
  add_norm(plan, "encoder.stem.norm", dims[0]);
  for (int s = 0; s < 4; ++s) {
    const int c = dims[u(s)];
    for (int b = 0; b < cfg.stage_depths[u(s)]; ++b) {
      const std::string p = "encoder.stage" + std::to_string(s) + ".block" +
                            std::to_string(b);
      // Depthwise 7x7: weight [C,1,7,7].
      plan.push_back({p + ".dwconv.weight", {u(c), 1, 7, 7},
                      ParamSpec::Init::kTruncNormal});
      plan.push_back({p + ".dwconv.bias", {u(c)}, ParamSpec::Init::kZeros});
      add_norm(plan, p + ".norm", c);
      add_linear(plan, p + ".pwconv1", 4 * c, c);
      add_linear(plan, p + ".pwconv2", c, 4 * c);
      plan.push_back({p + ".layerscale.gamma", {u(c)},
                      ParamSpec::Init::kLayerScale});
    }
    if (s < 3) {
      const std::string p = "encoder.down" + std::to_string(s);
      add_norm(plan, p + ".norm", c);
      add_conv(plan, p + ".conv", dims[u(s) + 1], c, 2);
    }
  }

  if (cfg.prompts_enabled) {
    const int p_total = cfg.prompt_cardinalities.total();
    for (int i = 0; i < 4; ++i) {
      add_linear(plan, "prompt.proj" + std::to_string(i), dims[u(i)], p_total);
    }
  }

  const int dc = cfg.decoder_channels;
  for (std::size_t j = 0; j < cfg.ppm_bins.size(); ++j) {
    const std::string p = "decoder.ppm.branch" + std::to_string(j);
    add_conv(plan, p + ".conv", dc, dims[3], 1);
    add_norm(plan, p + ".norm", dc);
  }
  const int ppm_cat = dims[3] + static_cast<int>(cfg.ppm_bins.size()) * dc;
  add_conv(plan, "decoder.ppm.fuse.conv", dc, ppm_cat, 3);
  add_norm(plan, "decoder.ppm.fuse.norm", dc);
  for (int i = 0; i < 3; ++i) {
    const std::string lp = "decoder.lateral" + std::to_string(i);
    add_conv(plan, lp + ".conv", dc, dims[u(i)], 1);
    add_norm(plan, lp + ".norm", dc);
    const std::string fp = "decoder.fpn" + std::to_string(i);
    add_conv(plan, fp + ".conv", dc, dc, 3);
    add_norm(plan, fp + ".norm", dc);
  }
  add_conv(plan, "decoder.fuse.conv", dc, 4 * dc, 3);
  add_norm(plan, "decoder.fuse.norm", dc);
  add_conv(plan, "decoder.classifier", cfg.seg_classes, dc, 1);

  add_norm(plan, "head.norm", dims[3]);
  add_linear(plan, "head.cls2", kTwoWay, dims[3]);
  add_linear(plan, "head.cls4", kFourWay, dims[3]);
  return plan;
}

ModelParams build_model(const ModelConfig& cfg, std::uint64_t seed) {
  const auto plan = parameter_plan(cfg);
  Rng rng(seed);
  ModelParams params;
  for (const auto& spec : plan) {
    Tensor t;
    switch (spec.init) {
      case ParamSpec::Init::kTruncNormal: {
        t = Tensor::zeros(spec.shape);
        for (double& v : t.values()) v = rng.truncated_normal(0.02);
        break;
      }
      case ParamSpec::Init::kZeros:
        t = Tensor::zeros(spec.shape);
        break;
      case ParamSpec::Init::kOnes:
        t = Tensor::full(spec.shape, 1.0);
        break;
      case ParamSpec::Init::kLayerScale:
        t = Tensor::full(spec.shape, cfg.layer_scale_init);
        break;
    }
    t.set_requires_grad(true);
    params.add(spec.name, std::move(t));
  }
  return params;
}

std::size_t count_params(const ModelParams& params) {
  std::size_t total = 0;
  for (const auto& [n, t] : params.entries()) {
    (void)n;
    total += t.size();
  }
  return total;
}

namespace {

ParamBreakdown breakdown_from(
    const std::vector<std::pair<std::string, std::size_t>>& sizes) {
  ParamBreakdown b;
  for (const auto& [name, count] : sizes) {
    if (name.starts_with("encoder.")) {
      b.encoder += count;
    } else if (name.starts_with("prompt.")) {
      b.prompt += count;
    } else if (name.starts_with("decoder.")) {
      b.decoder += count;
    } else if (name.starts_with("head.")) {
      b.heads += count;
    } else {
      throw ValidationError("parameter '" + name +
                            "' has no top-level group prefix");
    }
    b.total += count;
  }
  return b;
}

}  // namespace

ParamBreakdown count_params_by_group(const ModelParams& params) {
  std::vector<std::pair<std::string, std::size_t>> sizes;
  sizes.reserve(params.entries().size());
  for (const auto& [n, t] : params.entries()) sizes.emplace_back(n, t.size());
  return breakdown_from(sizes);
}

std::size_t planned_param_count(const ModelConfig& cfg) {
  return planned_breakdown(cfg).total;
}

ParamBreakdown planned_breakdown(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::size_t>> sizes;
  for (const auto& spec : parameter_plan(cfg)) {
    sizes.emplace_back(spec.name, shape_numel(spec.shape));
  }
  return breakdown_from(sizes);
}

// ---------------------------------------------------------------------------
// forward graph

Model::Model(ModelConfig config, ModelParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto plan = parameter_plan(config_);
  if (params_.tensor_count() != plan.size()) {
    throw ValidationError("model has " +
                          std::to_string(params_.tensor_count()) +
                          " parameter tensors, config implies " +
                          std::to_string(plan.size()));
  }
  for (const auto& spec : plan) {
    if (!params_.contains(spec.name)) {
      throw ValidationError("missing parameter '" + spec.name + "'");
    }
    if (params_.at(spec.name).shape() != spec.shape) {
      throw ValidationError("parameter '" + spec.name + "' has shape " +
                            shape_str(params_.at(spec.name).shape()) +
                            ", expected " + shape_str(spec.shape));
    }
  }
}

Model Model::create(const ModelConfig& config, std::uint64_t seed) {
  return Model(config, build_model(config, seed));
}

namespace {

// Layer norm over the channel axis of an NCHW map.
Tensor ln_cf(Tape* tape, const Tensor& x, const Tensor& gamma,
             const Tensor& beta, double eps) {
  Tensor nhwc = permute(tape, x, {0, 2, 3, 1});
  Tensor normed = layer_norm(tape, nhwc, gamma, beta, eps);
  return permute(tape, normed, {0, 3, 1, 2});
}

}  // namespace

std::array<Tensor, 4> Model::forward_encoder(Tape* tape,
                                             const Tensor& image) const {
  if (image.rank() != 4 || image.extent(1) != u(config_.in_channels) ||
      image.extent(2) != u(config_.input_size) ||
      image.extent(3) != u(config_.input_size)) {
    throw ValidationError(
        "encoder input must be [N," + std::to_string(config_.in_channels) +
        "," + std::to_string(config_.input_size) + "," +
        std::to_string(config_.input_size) + "], got " +
        shape_str(image.shape()));
  }
  const auto& P = params_;
  const double eps = config_.ln_eps;

  Tensor x = conv2d(tape, image, P.at("encoder.stem.conv.weight"),
                    P.at("encoder.stem.conv.bias"), 4, 0, 1);
  x = ln_cf(tape, x, P.at("encoder.stem.norm.gamma"),
            P.at("encoder.stem.norm.beta"), eps);

  std::array<Tensor, 4> features;
  for (int s = 0; s < 4; ++s) {
    const std::size_t c = x.extent(1);
    for (int b = 0; b < config_.stage_depths[u(s)]; ++b) {
      const std::string p = "encoder.stage" + std::to_string(s) + ".block" +
                            std::to_string(b);
      Tensor r = conv2d(tape, x, P.at(p + ".dwconv.weight"),
                        P.at(p + ".dwconv.bias"), 1, 3, c);
      r = permute(tape, r, {0, 2, 3, 1});
      r = layer_norm(tape, r, P.at(p + ".norm.gamma"), P.at(p + ".norm.beta"),
                     eps);
      r = linear(tape, r, P.at(p + ".pwconv1.weight"),
                 P.at(p + ".pwconv1.bias"));
      r = gelu(tape, r);
      r = linear(tape, r, P.at(p + ".pwconv2.weight"),
                 P.at(p + ".pwconv2.bias"));
      r = scale_channels_last(tape, r, P.at(p + ".layerscale.gamma"));
      r = permute(tape, r, {0, 3, 1, 2});
      x = add(tape, x, r);
    }
    features[u(s)] = x;
    if (s < 3) {
      const std::string p = "encoder.down" + std::to_string(s);
      x = ln_cf(tape, x, P.at(p + ".norm.gamma"), P.at(p + ".norm.beta"), eps);
      x = conv2d(tape, x, P.at(p + ".conv.weight"), P.at(p + ".conv.bias"), 2,
                 0, 1);
    }
  }
  return features;
}

std::array<Tensor, 4> Model::embed_prompts(
    Tape* tape, const std::array<Tensor, 4>& features,
    const std::vector<PromptSet>& prompts) const {
  if (!config_.prompts_enabled) return features;
  if (prompts.empty()) {
    throw ValidationError("embed_prompts: prompts enabled but none supplied");
  }
  const std::size_t n = features[0].extent(0);
  if (prompts.size() != 1 && prompts.size() != n) {
    throw ValidationError("embed_prompts: got " +
                          std::to_string(prompts.size()) +
                          " prompt sets for batch of " + std::to_string(n));
  }
  const auto& cards = config_.prompt_cardinalities;
  const std::size_t p_total = u(cards.total());
  std::vector<double> onehots;
  onehots.reserve(n * p_total);
  for (std::size_t i = 0; i < n; ++i) {
    const PromptSet& ps = prompts.size() == 1 ? prompts[0] : prompts[i];
    const auto row = ps.one_hot(cards);
    onehots.insert(onehots.end(), row.begin(), row.end());
  }
  Tensor onehot = Tensor::from_values({n, p_total}, std::move(onehots));

  std::array<Tensor, 4> out;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "prompt.proj" + std::to_string(i);
    Tensor offsets = linear(tape, onehot, params_.at(p + ".weight"),
                            params_.at(p + ".bias"));
    out[u(i)] = broadcast_add_channels(tape, features[u(i)], offsets);
  }
  return out;
}

Tensor Model::forward_seg_decoder(Tape* tape,
                                  const std::array<Tensor, 4>& f) const {
  const auto& P = params_;
  const double eps = config_.ln_eps;
  auto conv_norm_act = [&](const Tensor& x, const std::string& prefix,
                           std::size_t pad) {
    Tensor y = conv2d(tape, x, P.at(prefix + ".conv.weight"),
                      P.at(prefix + ".conv.bias"), 1, pad, 1);
    y = ln_cf(tape, y, P.at(prefix + ".norm.gamma"),
              P.at(prefix + ".norm.beta"), eps);
    return gelu(tape, y);
  };

  // PPM over the deepest map.
  const Tensor& deepest = f[3];
  const std::size_t s3 = deepest.extent(2);
  std::vector<Tensor> ppm_parts{deepest};
  for (std::size_t j = 0; j < config_.ppm_bins.size(); ++j) {
    const std::size_t bin = u(config_.ppm_bins[j]);
    Tensor pooled = pool_avg2d(tape, deepest, bin, bin);
    Tensor branch =
        conv_norm_act(pooled, "decoder.ppm.branch" + std::to_string(j), 0);
    ppm_parts.push_back(upsample_bilinear(tape, branch, s3, s3));
  }
  Tensor p3 = conv_norm_act(concat(tape, ppm_parts, 1), "decoder.ppm.fuse", 1);

  // FPN top-down pathway with lateral connections.
  std::array<Tensor, 3> laterals;
  for (int i = 0; i < 3; ++i) {
    laterals[u(i)] =
        conv_norm_act(f[u(i)], "decoder.lateral" + std::to_string(i), 0);
  }
  std::array<Tensor, 4> tops;
  tops[3] = p3;
  for (int i = 2; i >= 0; --i) {
    const Tensor& lat = laterals[u(i)];
    Tensor up = upsample_bilinear(tape, tops[u(i) + 1], lat.extent(2),
                                  lat.extent(3));
    tops[u(i)] = add(tape, lat, up);
  }
  const std::size_t s0 = tops[0].extent(2);
  std::vector<Tensor> levels;
  for (int i = 0; i < 3; ++i) {
    Tensor smooth =
        conv_norm_act(tops[u(i)], "decoder.fpn" + std::to_string(i), 1);
    levels.push_back(i == 0 ? smooth
                            : upsample_bilinear(tape, smooth, s0, s0));
  }
  levels.push_back(upsample_bilinear(tape, tops[3], s0, s0));

  Tensor fused = conv_norm_act(concat(tape, levels, 1), "decoder.fuse", 1);
  Tensor logits = conv2d(tape, fused, P.at("decoder.classifier.weight"),
                         P.at("decoder.classifier.bias"), 1, 0, 1);
  return upsample_bilinear(tape, logits, u(config_.input_size),
                           u(config_.input_size));
}

ClsLogits Model::forward_cls_heads(Tape* tape,
                                   const std::array<Tensor, 4>& f) const {
  const auto& P = params_;
  Tensor pooled = global_avg_pool(tape, f[3]);
  Tensor normed = layer_norm(tape, pooled, P.at("head.norm.gamma"),
                             P.at("head.norm.beta"), config_.ln_eps);
  ClsLogits logits;
  logits.two_way =
      linear(tape, normed, P.at("head.cls2.weight"), P.at("head.cls2.bias"));
  logits.four_way =
      linear(tape, normed, P.at("head.cls4.weight"), P.at("head.cls4.bias"));
  return logits;
}

ForwardResult Model::forward(Tape* tape, const Tensor& image,
                             const std::vector<PromptSet>& prompts,
                             TaskKind task) const {
  auto features = forward_encoder(tape, image);
  if (config_.prompts_enabled) {
    features = embed_prompts(tape, features, prompts);
  }
  ForwardResult result;
  result.task = task;
  switch (task) {
    case TaskKind::kSeg:
      result.seg_logits = forward_seg_decoder(tape, features);
      break;
    case TaskKind::kCls:
      result.cls = forward_cls_heads(tape, features);
      break;
  }
  return result;
}

}  // namespace uuconv
