#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "uuconv/errors.hpp"
#include "uuconv/losses.hpp"
#include "uuconv/metrics.hpp"
#include "uuconv/ops.hpp"
#include "uuconv/rng.hpp"

using namespace uuconv;

namespace {

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.normal() * stddev;
  return t;
}

// Direct -log(exp/sum exp) evaluation, no max-shift trick.
double ce_oracle(const Tensor& logits, const std::vector<int>& targets) {
  const std::size_t n = logits.extent(0);
  const std::size_t k = logits.extent(1);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0;
    for (std::size_t j = 0; j < k; ++j) {
      denom += std::exp(logits.values()[i * k + j]);
    }
    total -= std::log(
        std::exp(logits.values()[i * k + targets[i]]) / denom);
  }
  return total / static_cast<double>(n);
}

// Materializes softmax and one-hots, then applies the dice formula.
double dice_oracle(const Tensor& logits, const std::vector<int>& targets,
                   double smooth) {
  const std::size_t n = logits.extent(0), k = logits.extent(1),
                    h = logits.extent(2), w = logits.extent(3);
  const std::size_t span = h * w;
  std::vector<double> probs(logits.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < span; ++p) {
      double denom = 0;
      for (std::size_t j = 0; j < k; ++j) {
        denom += std::exp(logits.values()[(i * k + j) * span + p]);
      }
      for (std::size_t j = 0; j < k; ++j) {
        probs[(i * k + j) * span + p] =
            std::exp(logits.values()[(i * k + j) * span + p]) / denom;
      }
    }
  }
  double mean_dice = 0;
  for (std::size_t j = 0; j < k; ++j) {
    double inter = 0, psum = 0, tsum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < span; ++p) {
        const double pr = probs[(i * k + j) * span + p];
        const double t =
            targets[i * span + p] == static_cast<int>(j) ? 1.0 : 0.0;
        inter += pr * t;
        psum += pr;
        tsum += t;
      }
    }
    mean_dice += (2 * inter + smooth) / (psum + tsum + smooth);
  }
  return 1.0 - mean_dice / static_cast<double>(k);
}

}  // namespace

TEST_CASE("cross entropy on uniform logits equals ln K") {
  Tensor z2 = Tensor::zeros({1, 2});
  CHECK(cross_entropy(nullptr, z2, {0}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Tensor z4 = Tensor::zeros({1, 4});
  CHECK(cross_entropy(nullptr, z4, {2}).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy is stable for huge logits") {
  Tensor z = Tensor::from_values({1, 2}, {1000, 0});
  const double loss = cross_entropy(nullptr, z, {0}).item();
  CHECK(std::isfinite(loss));
  CHECK(loss < 1e-9);
}

TEST_CASE("cross entropy matches the direct oracle") {
  Rng rng(50);
  Tensor z = randn({3, 4}, rng);
  const std::vector<int> t{1, 3, 0};
  CHECK(std::abs(cross_entropy(nullptr, z, t).item() - ce_oracle(z, t)) <
        1e-12);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(cross_entropy(nullptr, z, {0, 3}), ValidationError);
  CHECK_THROWS_AS(cross_entropy(nullptr, z, {-1, 0}), ValidationError);
  CHECK_THROWS_AS(cross_entropy(nullptr, z, std::vector<int>{}),
                  ValidationError);
}

TEST_CASE("cross entropy decreases when the true logit grows") {
  Tensor z = Tensor::from_values({1, 3}, {0.2, -0.1, 0.4});
  double prev = cross_entropy(nullptr, z, {1}).item();
  for (int step = 0; step < 5; ++step) {
    z.values()[1] += 0.5;
    const double cur = cross_entropy(nullptr, z, {1}).item();
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("soft dice: perfect prediction and total miss") {
  // Logits strongly favoring the target everywhere.
  Tensor z = Tensor::zeros({1, 2, 2, 2});
  const std::vector<int> t{0, 1, 1, 0};
  for (int p = 0; p < 4; ++p) {
    z.values()[t[p] * 4 + p] = 40.0;
  }
  CHECK(soft_dice_loss(nullptr, z, t, 1e-5).item() < 1e-3);

  // All probability mass on the wrong class of a single-pixel problem.
  Tensor miss = Tensor::from_values({1, 2, 1, 1}, {40.0, -40.0});
  CHECK(soft_dice_loss(nullptr, miss, {1}, 1e-5).item() > 0.99);
}

TEST_CASE("soft dice matches the materialized oracle") {
  Rng rng(51);
  Tensor z = randn({1, 2, 4, 4}, rng);
  std::vector<int> t(16);
  for (auto& v : t) v = static_cast<int>(rng.below(2));
  CHECK(std::abs(soft_dice_loss(nullptr, z, t, 1e-5).item() -
                 dice_oracle(z, t, 1e-5)) < 1e-12);
}

TEST_CASE("soft dice is equivariant under class relabeling") {
  Rng rng(52);
  Tensor z = randn({1, 3, 4, 4}, rng);
  std::vector<int> t(16);
  for (auto& v : t) v = static_cast<int>(rng.below(3));
  const double base = soft_dice_loss(nullptr, z, t, 1e-5).item();

  // Swap classes 0 and 2 in both logits and targets.
  Tensor zs = Tensor::zeros({1, 3, 4, 4});
  const std::size_t span = 16;
  const int perm[3] = {2, 1, 0};
  for (int j = 0; j < 3; ++j) {
    for (std::size_t p = 0; p < span; ++p) {
      zs.values()[static_cast<std::size_t>(perm[j]) * span + p] =
          z.values()[static_cast<std::size_t>(j) * span + p];
    }
  }
  std::vector<int> ts(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) ts[i] = perm[t[i]];
  CHECK(soft_dice_loss(nullptr, zs, ts, 1e-5).item() ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("seg loss recomposes as 0.4 CE + 0.6 Dice") {
  Rng rng(53);
  Tensor z = randn({2, 2, 4, 4}, rng);
  std::vector<int> t(32);
  for (auto& v : t) v = static_cast<int>(rng.below(2));
  const LossWeights w;
  const double ce = cross_entropy(nullptr, z, t).item();
  const double dice = soft_dice_loss(nullptr, z, t, w.dice_smooth).item();
  CHECK(std::abs(seg_loss(nullptr, z, t, w).item() -
                 (0.4 * ce + 0.6 * dice)) < 1e-12);
}

TEST_CASE("seg loss arithmetic fixture 0.4*1.0 + 0.6*0.5 = 0.7") {
  CHECK(0.4 * 1.0 + 0.6 * 0.5 == doctest::Approx(0.7).epsilon(1e-15));
  // and through final_loss with lambda_seg = 1:
  const LossWeights w;
  Tensor fixture = Tensor::scalar(0.7);
  CHECK(final_loss(nullptr, TaskKind::kSeg, fixture, w).item() ==
        doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("seg loss on near-perfect predictions is tiny") {
  Tensor z = Tensor::zeros({1, 2, 2, 2});
  const std::vector<int> t{1, 0, 0, 1};
  for (int p = 0; p < 4; ++p) z.values()[t[p] * 4 + p] = 40.0;
  CHECK(seg_loss(nullptr, z, t, LossWeights{}).item() < 1e-3);
}

TEST_CASE("cls loss dispatches on the way flag") {
  Tensor z2 = Tensor::zeros({2, 2});
  Tensor z4 = Tensor::zeros({2, 4});

  CHECK(cls_loss(nullptr, z2, z4, {0, 1}, {2, 2}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cls_loss(nullptr, z2, z4, {0, 3}, {4, 4}).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  // Mixed batch: sum of the two sub-batch losses.
  CHECK(cls_loss(nullptr, z2, z4, {0, 3}, {2, 4}).item() ==
        doctest::Approx(std::log(2.0) + std::log(4.0)).epsilon(1e-12));

  CHECK_THROWS_AS(cls_loss(nullptr, z2, z4, {2, 0}, {2, 2}),
                  ValidationError);
  CHECK_THROWS_AS(cls_loss(nullptr, z2, z4, {0, 0}, {3, 2}),
                  ValidationError);
}

TEST_CASE("final loss scales by the task lambda") {
  const LossWeights w;
  CHECK(final_loss(nullptr, TaskKind::kSeg, Tensor::scalar(0.7), w).item() ==
        doctest::Approx(0.7));
  CHECK(final_loss(nullptr, TaskKind::kCls, Tensor::scalar(0.5), w).item() ==
        doctest::Approx(5.0).epsilon(1e-15));

  LossWeights unit = w;
  unit.lambda_cls = 1.0;
  CHECK(final_loss(nullptr, TaskKind::kCls, Tensor::scalar(0.5), unit).item()
        == doctest::Approx(0.5));
}

TEST_CASE("final_loss(cls)/cls_loss is exactly lambda_cls") {
  Rng rng(54);
  Tensor z2 = randn({3, 2}, rng);
  Tensor z4 = randn({3, 4}, rng);
  const std::vector<int> labels{0, 2, 1};
  const std::vector<int> ways{2, 4, 2};
  const LossWeights w;
  const double base = cls_loss(nullptr, z2, z4, labels, ways).item();
  const double total =
      final_loss(nullptr, TaskKind::kCls,
                 cls_loss(nullptr, z2, z4, labels, ways), w)
          .item();
  // Exact as doubles: the scaling is the single multiplication 10.0 * base.
  CHECK(total == 10.0 * base);
}

TEST_CASE("lambda_cls scales gradient magnitude but not direction") {
  Rng rng(55);
  Tensor z2 = randn({2, 2}, rng);
  Tensor z4 = randn({2, 4}, rng);
  z2.set_requires_grad(true);
  z4.set_requires_grad(true);
  const std::vector<int> labels{1, 3};
  const std::vector<int> ways{2, 4};

  auto grads_for = [&](double lambda) {
    LossWeights w;
    w.lambda_cls = lambda;
    z2.zero_grad();
    z4.zero_grad();
    Tape tape;
    tape.backward(final_loss(&tape, TaskKind::kCls,
                             cls_loss(&tape, z2, z4, labels, ways), w));
    std::vector<double> g = z2.grad();
    g.insert(g.end(), z4.grad().begin(), z4.grad().end());
    return g;
  };
  const auto g1 = grads_for(10.0);
  const auto g2 = grads_for(20.0);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
  }
}

TEST_CASE("loss weights validate their invariants") {
  LossWeights w;
  w.w_ce = 0.5;
  CHECK_THROWS_AS(w.validate(), ValidationError);  // w_ce + w_dice != 1
  w = LossWeights{};
  w.lambda_cls = -1;
  CHECK_THROWS_AS(w.validate(), ValidationError);
}

TEST_CASE("hard dice score fixtures") {
  const std::vector<int> a{0, 1, 1, 0};
  CHECK(dice_score(a, a, 1) == 1.0);

  const std::vector<int> p{1, 1, 0, 0};
  const std::vector<int> t{0, 0, 1, 1};
  CHECK(dice_score(p, t, 1) == 0.0);

  // |P| = |T| = 4 on a 4x4 grid, overlap 2 -> dice 0.5.
  std::vector<int> pred(16, 0), target(16, 0);
  pred[0] = pred[1] = pred[2] = pred[3] = 1;
  target[2] = target[3] = target[4] = target[5] = 1;
  CHECK(dice_score(pred, target, 1) == 0.5);

  // Both empty -> 1.0 by convention.
  const std::vector<int> zeros(8, 0);
  CHECK(dice_score(zeros, zeros, 1) == 1.0);
}

TEST_CASE("accuracy fixtures") {
  CHECK(accuracy({1, 0, 1}, {1, 0, 1}) == 1.0);
  CHECK(accuracy({1, 1, 1}, {0, 0, 0}) == 0.0);
  CHECK(accuracy({1, 0, 1, 2}, {1, 0, 1, 3}) == 0.75);
}
