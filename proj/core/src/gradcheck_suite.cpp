#include "uuconv/gradcheck_suite.hpp"

#include <functional>

#include "uuconv/gradcheck.hpp"
#include "uuconv/losses.hpp"
#include "uuconv/model.hpp"
#include "uuconv/ops.hpp"
#include "uuconv/rng.hpp"

namespace uuconv {

namespace {

constexpr double kH = 1e-5;
constexpr double kTolSmooth = 1e-7;
constexpr double kTolDefault = 1e-4;

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
             bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = rng.normal() * stddev;
  return t;
}

std::vector<int> rand_labels(std::size_t n, int k, Rng& rng) {
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.below(k));
  return labels;
}

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Reduces an op output to a scalar against fixed random weights, so the
// check is not blind to directions the plain sum cancels (softmax rows).
std::function<Tensor(Tape*)> weighted(const std::function<Tensor(Tape*)>& f,
                                      const Tensor& w) {
  return [f, w](Tape* tape) { return sum_all(tape, mul(tape, f(tape), w)); };
}

GradCheckResult check(const std::string& name, double tol,
                      const std::function<Tensor(Tape*)>& loss_fn,
                      const NamedParams& params, std::uint64_t seed,
                      double h = kH) {
  const FiniteDiffReport report = finite_diff_check(loss_fn, params, h, seed);
  return {name, report.worst(), tol};
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite() {
  std::vector<GradCheckResult> results;
  Rng rng(20240901);

  {
    Tensor x = randn({2, 3, 8, 8}, rng, 0.5);
    Tensor w = randn({4, 3, 3, 3}, rng, 0.3);
    Tensor b = randn({4}, rng, 0.1);
    Tensor red = randn({2, 4, 8, 8}, rng, 1.0, false);
    results.push_back(check(
        "conv2d",
        kTolDefault,
        weighted([=](Tape* t) { return conv2d(t, x, w, b, 1, 1, 1); }, red),
        {{"input", x}, {"weight", w}, {"bias", b}}, 1));
  }
  {
    Tensor x = randn({2, 4, 9, 9}, rng, 0.5);
    Tensor w = randn({6, 2, 3, 3}, rng, 0.3);
    Tensor b = randn({6}, rng, 0.1);
    Tensor red = randn({2, 6, 5, 5}, rng, 1.0, false);
    results.push_back(check(
        "conv2d_strided_grouped",
        kTolDefault,
        weighted([=](Tape* t) { return conv2d(t, x, w, b, 2, 1, 2); }, red),
        {{"input", x}, {"weight", w}, {"bias", b}}, 2));
  }
  {
    Tensor x = randn({2, 4, 8, 8}, rng, 0.5);
    Tensor w = randn({4, 1, 7, 7}, rng, 0.2);
    Tensor b = randn({4}, rng, 0.1);
    Tensor red = randn({2, 4, 8, 8}, rng, 1.0, false);
    results.push_back(check(
        "conv2d_depthwise",
        kTolDefault,
        weighted([=](Tape* t) { return conv2d(t, x, w, b, 1, 3, 4); }, red),
        {{"input", x}, {"weight", w}, {"bias", b}}, 3));
  }
  {
    Tensor x = randn({3, 5}, rng);
    Tensor w = randn({4, 5}, rng, 0.4);
    Tensor b = randn({4}, rng, 0.1);
    Tensor red = randn({3, 4}, rng, 1.0, false);
    results.push_back(check(
        "linear",
        kTolDefault,
        weighted([=](Tape* t) { return linear(t, x, w, b); }, red),
        {{"input", x}, {"weight", w}, {"bias", b}}, 4));
  }
  {
    Tensor x = randn({4, 7}, rng);
    Tensor g = randn({7}, rng, 0.3);
    Tensor b = randn({7}, rng, 0.3);
    Tensor red = randn({4, 7}, rng, 1.0, false);
    results.push_back(check(
        "layer_norm",
        kTolDefault,
        weighted([=](Tape* t) { return layer_norm(t, x, g, b, 1e-6); }, red),
        {{"input", x}, {"gamma", g}, {"beta", b}}, 5));
  }
  {
    // gelu' vanishes near x = -0.75; sample away from it (and use bounded
    // reduction weights) so the 1e-7 bound is measurable above the double
    // rounding floor of the difference quotient.
    Tensor x = Tensor::zeros({64}, true);
    for (double& v : x.values()) {
      v = rng.bernoulli(0.3) ? rng.uniform(-2.2, -1.3)
                             : rng.uniform(-0.4, 2.2);
    }
    Tensor red = Tensor::zeros({64});
    for (double& v : red.values()) {
      v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.5, 1.5);
    }
    results.push_back(check(
        "gelu",
        kTolSmooth,
        weighted([=](Tape* t) { return gelu(t, x); }, red), {{"input", x}},
        6));
  }
  {
    Tensor x = randn({3, 5}, rng);
    Tensor red = randn({3, 5}, rng, 1.0, false);
    results.push_back(check(
        "softmax",
        kTolSmooth,
        weighted([=](Tape* t) { return softmax(t, x, 1); }, red),
        {{"input", x}}, 7));
  }
  {
    Tensor x = randn({2, 3, 4, 4}, rng);
    Tensor red = randn({2, 3, 4, 4}, rng, 1.0, false);
    results.push_back(check(
        "softmax_channel_axis",
        kTolSmooth,
        weighted([=](Tape* t) { return softmax(t, x, 1); }, red),
        {{"input", x}}, 8));
  }
  {
    Tensor x = randn({1, 2, 7, 7}, rng);
    Tensor red = randn({1, 2, 3, 3}, rng, 1.0, false);
    results.push_back(check(
        "pool_avg2d",
        kTolDefault,
        weighted([=](Tape* t) { return pool_avg2d(t, x, 3, 3); }, red),
        {{"input", x}}, 9));
  }
  {
    Tensor x = randn({1, 2, 3, 4}, rng);
    Tensor red = randn({1, 2, 6, 9}, rng, 1.0, false);
    results.push_back(check(
        "upsample_bilinear",
        kTolDefault,
        weighted([=](Tape* t) { return upsample_bilinear(t, x, 6, 9); }, red),
        {{"input", x}}, 10));
  }
  {
    Tensor a = randn({3, 4}, rng);
    Tensor b = randn({3, 4}, rng);
    Tensor red = randn({3, 4}, rng, 1.0, false);
    results.push_back(check(
        "add_mul_scale",
        kTolDefault,
        weighted(
            [=](Tape* t) {
              return scale(t, add(t, mul(t, a, b), a), 0.7);
            },
            red),
        {{"a", a}, {"b", b}}, 11));
  }
  {
    Tensor x = randn({2, 3, 4, 4}, rng);
    Tensor v = randn({2, 3}, rng, 0.5);
    Tensor red = randn({2, 3, 4, 4}, rng, 1.0, false);
    results.push_back(check(
        "broadcast_add_channels",
        kTolDefault,
        weighted([=](Tape* t) { return broadcast_add_channels(t, x, v); },
                 red),
        {{"x", x}, {"v", v}}, 12));
  }
  {
    Tensor x = randn({3, 4, 5}, rng);
    Tensor v = randn({5}, rng, 0.5);
    Tensor red = randn({3, 4, 5}, rng, 1.0, false);
    results.push_back(check(
        "scale_channels_last",
        kTolDefault,
        weighted([=](Tape* t) { return scale_channels_last(t, x, v); }, red),
        {{"x", x}, {"v", v}}, 13));
  }
  {
    Tensor a = randn({2, 2, 3, 3}, rng);
    Tensor b = randn({2, 3, 3, 3}, rng);
    Tensor red = randn({2, 5, 3, 3}, rng, 1.0, false);
    results.push_back(check(
        "concat_slice",
        kTolDefault,
        weighted(
            [=](Tape* t) {
              Tensor c = concat(t, {a, b}, 1);
              Tensor s = slice(t, c, 1, 1, 4);
              return concat(t, {s, slice(t, c, 1, 0, 1)}, 1) /* re-pack */;
            },
            red),
        {{"a", a}, {"b", b}}, 14));
  }
  {
    Tensor x = randn({2, 3, 2, 4}, rng);
    Tensor red = randn({2, 2, 4, 3}, rng, 1.0, false);
    results.push_back(check(
        "permute_reshape",
        kTolDefault,
        weighted(
            [=](Tape* t) {
              Tensor p = permute(t, x, {0, 2, 3, 1});
              return reshape(t, p, {2, 2, 4, 3});
            },
            red),
        {{"x", x}}, 15));
  }
  {
    Tensor x = randn({2, 3, 4, 4}, rng);
    Tensor red = randn({2, 3}, rng, 1.0, false);
    results.push_back(check(
        "global_avg_pool",
        kTolDefault,
        weighted([=](Tape* t) { return global_avg_pool(t, x); }, red),
        {{"x", x}}, 16));
  }
  {
    Tensor x = randn({5, 3}, rng);
    Tensor red = randn({3, 3}, rng, 1.0, false);
    const std::vector<std::size_t> rows{4, 0, 2};
    results.push_back(check(
        "select_rows",
        kTolDefault,
        weighted([=](Tape* t) { return select_rows(t, x, rows); }, red),
        {{"x", x}}, 17));
  }
  {
    Tensor z = randn({3, 4}, rng);
    const auto labels = rand_labels(3, 4, rng);
    results.push_back(check(
        "cross_entropy",
        kTolDefault,
        [=](Tape* t) { return cross_entropy(t, z, labels); }, {{"logits", z}},
        18));
  }
  {
    Tensor z = randn({2, 3, 4, 4}, rng);
    const auto labels = rand_labels(2 * 4 * 4, 3, rng);
    results.push_back(check(
        "cross_entropy_dense",
        kTolDefault,
        [=](Tape* t) { return cross_entropy(t, z, labels); }, {{"logits", z}},
        19));
  }
  {
    Tensor z = randn({1, 3, 4, 4}, rng);
    const auto labels = rand_labels(16, 3, rng);
    results.push_back(check(
        "soft_dice_loss",
        kTolDefault,
        [=](Tape* t) { return soft_dice_loss(t, z, labels, 1e-5); },
        {{"logits", z}}, 20));
  }
  {
    Tensor z = randn({2, 2, 4, 4}, rng);
    const auto labels = rand_labels(32, 2, rng);
    const LossWeights lw;
    results.push_back(check(
        "seg_loss",
        kTolDefault,
        [=](Tape* t) { return seg_loss(t, z, labels, lw); }, {{"logits", z}},
        21));
  }
  {
    Tensor z2 = randn({4, 2}, rng);
    Tensor z4 = randn({4, 4}, rng);
    const std::vector<int> ways{2, 4, 2, 4};
    const std::vector<int> labels{1, 3, 0, 2};
    results.push_back(check(
        "cls_loss_mixed",
        kTolDefault,
        [=](Tape* t) { return cls_loss(t, z2, z4, labels, ways); },
        {{"logits2", z2}, {"logits4", z4}}, 22));
  }
  {
    // conv -> layer_norm -> gelu -> linear -> cross entropy.
    Tensor x = randn({2, 2, 6, 6}, rng, 0.5);
    Tensor cw = randn({3, 2, 3, 3}, rng, 0.3);
    Tensor cb = randn({3}, rng, 0.1);
    Tensor lg = Tensor::full({3}, 1.0, true);
    Tensor lb = Tensor::zeros({3}, true);
    Tensor fw = randn({4, 3 * 6 * 6}, rng, 0.2);
    Tensor fb = randn({4}, rng, 0.1);
    const std::vector<int> labels{1, 3};
    results.push_back(check(
        "composite_conv_norm_gelu_linear_ce",
        kTolDefault,
        [=](Tape* t) {
          Tensor h = conv2d(t, x, cw, cb, 1, 1, 1);
          h = permute(t, h, {0, 2, 3, 1});
          h = layer_norm(t, h, lg, lb, 1e-6);
          h = gelu(t, h);
          h = reshape(t, h, {2, 3 * 6 * 6});
          h = linear(t, h, fw, fb);
          return cross_entropy(t, h, labels);
        },
        {{"input", x},
         {"conv.weight", cw},
         {"conv.bias", cb},
         {"norm.gamma", lg},
         {"norm.beta", lb},
         {"fc.weight", fw},
         {"fc.bias", fb}},
        23));
  }
  {
    // Full model loss on a 2-sample desk-scale batch, both task paths.
    ModelConfig cfg;
    cfg.input_size = 32;
    cfg.stage_depths = {1, 1, 1, 1};
    cfg.stage_dims = {4, 8, 12, 24};
    cfg.decoder_channels = 8;
    cfg.ppm_bins = {1};
    cfg.layer_scale_init = 1.0;
    Model model = Model::create(cfg, 99);
    // The training init (std 0.02) attenuates deep gradient paths to ~1e-8,
    // where the FD numerator is dominated by rounding in the O(1) loss.
    // The backward is point-agnostic, so the check runs at a healthy
    // parameter point and a wider step.
    Rng prng(55);
    for (auto& [name, p] : model.params().entries()) {
      const bool unit_centered = name.find("norm.gamma") != std::string::npos ||
                                 name.find("layerscale") != std::string::npos;
      for (double& v : p.values()) {
        v = unit_centered ? 1.0 + 0.2 * prng.normal() : 0.3 * prng.normal();
      }
    }
    const double model_h = 1e-4;
    Tensor image = randn({2, 3, 32, 32}, rng, 1.0, false);
    const std::vector<PromptSet> prompts{{0, 1, 0, 1}, {1, 4, 1, 0}};
    const auto seg_targets = rand_labels(2 * 32 * 32, cfg.seg_classes, rng);
    const std::vector<int> cls_labels{1, 2};
    const std::vector<int> ways{2, 4};
    const LossWeights lw;

    NamedParams named;
    for (const auto& [name, p] : model.params().entries()) {
      named.emplace_back(name, p);
    }
    results.push_back(check(
        "model_seg_loss",
        kTolDefault,
        [=, &model](Tape* t) {
          ForwardResult fwd = model.forward(t, image, prompts, TaskKind::kSeg);
          return final_loss(t, TaskKind::kSeg,
                            seg_loss(t, fwd.seg_logits, seg_targets, lw), lw);
        },
        named, 24, model_h));
    results.push_back(check(
        "model_cls_loss",
        kTolDefault,
        [=, &model](Tape* t) {
          ForwardResult fwd = model.forward(t, image, prompts, TaskKind::kCls);
          return final_loss(
              t, TaskKind::kCls,
              cls_loss(t, fwd.cls.two_way, fwd.cls.four_way, cls_labels, ways),
              lw);
        },
        named, 25, model_h));
  }
  return results;
}

}  // namespace uuconv
