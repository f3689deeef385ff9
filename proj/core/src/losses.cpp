#include "uuconv/losses.hpp"

#include <algorithm>
#include <cmath>

#include "uuconv/errors.hpp"
#include "uuconv/ops.hpp"

namespace uuconv {

void LossWeights::validate() const {
  if (w_ce < 0 || w_dice < 0 || lambda_cls < 0 || lambda_seg < 0) {
    throw ValidationError("loss weights must be non-negative");
  }
  if (std::abs(w_ce + w_dice - 1.0) > 1e-12) {
    throw ValidationError("w_ce + w_dice must equal 1, got " +
                          std::to_string(w_ce + w_dice));
  }
  if (dice_smooth < 0) {
    throw ValidationError("dice_smooth must be non-negative");
  }
}

namespace {

struct LogitLayout {
  std::size_t n, k, span;  // span = H*W (1 for [N,K] logits)
  std::size_t positions() const { return n * span; }
};

LogitLayout logit_layout(const Tensor& logits, std::size_t n_targets,
                         const char* op) {
  LogitLayout l{};
  if (logits.rank() == 2) {
    l = {logits.extent(0), logits.extent(1), 1};
  } else if (logits.rank() == 4) {
    l = {logits.extent(0), logits.extent(1),
         logits.extent(2) * logits.extent(3)};
  } else {
    throw ValidationError(std::string(op) + ": logits must be [N,K] or "
                          "[N,K,H,W], got " + shape_str(logits.shape()));
  }
  if (n_targets != l.positions()) {
    throw ValidationError(std::string(op) + ": " + std::to_string(n_targets) +
                          " targets for " + std::to_string(l.positions()) +
                          " labeled positions");
  }
  return l;
}

void check_labels(const std::vector<int>& targets, std::size_t k,
                  const char* op) {
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      throw ValidationError(std::string(op) + ": label " + std::to_string(t) +
                            " out of range [0, " + std::to_string(k) + ")");
    }
  }
}

}  // namespace

Tensor cross_entropy(Tape* tape, const Tensor& logits,
                     const std::vector<int>& targets) {
  if (targets.empty()) {
    throw ValidationError("cross_entropy: empty target list");
  }
  const LogitLayout l = logit_layout(logits, targets.size(), "cross_entropy");
  check_labels(targets, l.k, "cross_entropy");

  const double* zv = logits.values().data();
  double total = 0.0;
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t p = 0; p < l.span; ++p) {
      const std::size_t base = (n * l.k) * l.span + p;
      double mx = zv[base];
      for (std::size_t j = 1; j < l.k; ++j) {
        mx = std::max(mx, zv[base + j * l.span]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < l.k; ++j) {
        sum += std::exp(zv[base + j * l.span] - mx);
      }
      const double lse = mx + std::log(sum);
      const int t = targets[n * l.span + p];
      total += lse - zv[base + static_cast<std::size_t>(t) * l.span];
    }
  }
  const double m = static_cast<double>(l.positions());
  Tensor out = Tensor::scalar(total / m);

  if (tape && logits.requires_grad()) {
    tape->record(out, [logits, out, targets, l, m]() {
      const double g = out.grad()[0];
      const double* zv2 = logits.values().data();
      std::vector<double> gz(logits.size());
      for (std::size_t n = 0; n < l.n; ++n) {
        for (std::size_t p = 0; p < l.span; ++p) {
          const std::size_t base = (n * l.k) * l.span + p;
          double mx = zv2[base];
          for (std::size_t j = 1; j < l.k; ++j) {
            mx = std::max(mx, zv2[base + j * l.span]);
          }
          double sum = 0.0;
          for (std::size_t j = 0; j < l.k; ++j) {
            sum += std::exp(zv2[base + j * l.span] - mx);
          }
          const int t = targets[n * l.span + p];
          for (std::size_t j = 0; j < l.k; ++j) {
            const double prob = std::exp(zv2[base + j * l.span] - mx) / sum;
            const double onehot =
                (j == static_cast<std::size_t>(t)) ? 1.0 : 0.0;
            gz[base + j * l.span] = g * (prob - onehot) / m;
          }
        }
      }
      logits.accumulate_grad(gz);
    });
  }
  return out;
}

Tensor soft_dice_loss(Tape* tape, const Tensor& logits,
                      const std::vector<int>& targets, double smooth) {
  if (logits.rank() != 4) {
    throw ValidationError("soft_dice_loss: logits must be [N,K,H,W], got " +
                          shape_str(logits.shape()));
  }
  const LogitLayout l = logit_layout(logits, targets.size(), "soft_dice_loss");
  if (l.k < 2) {
    throw ValidationError("soft_dice_loss: needs at least 2 classes, got " +
                          std::to_string(l.k));
  }
  check_labels(targets, l.k, "soft_dice_loss");
  if (smooth < 0) {
    throw ValidationError("soft_dice_loss: smooth must be non-negative");
  }

  // Softmax probabilities materialized once; reused by the backward rule.
  std::vector<double> probs(logits.size());
  const double* zv = logits.values().data();
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t p = 0; p < l.span; ++p) {
      const std::size_t base = (n * l.k) * l.span + p;
      double mx = zv[base];
      for (std::size_t j = 1; j < l.k; ++j) {
        mx = std::max(mx, zv[base + j * l.span]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < l.k; ++j) {
        const double e = std::exp(zv[base + j * l.span] - mx);
        probs[base + j * l.span] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < l.k; ++j) probs[base + j * l.span] /= sum;
    }
  }

  std::vector<double> inter(l.k, 0.0), psum(l.k, 0.0), tsum(l.k, 0.0);
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t p = 0; p < l.span; ++p) {
      const std::size_t base = (n * l.k) * l.span + p;
      const int t = targets[n * l.span + p];
      for (std::size_t j = 0; j < l.k; ++j) {
        const double pr = probs[base + j * l.span];
        psum[j] += pr;
        if (j == static_cast<std::size_t>(t)) {
          inter[j] += pr;
          tsum[j] += 1.0;
        }
      }
    }
  }
  double mean_dice = 0.0;
  for (std::size_t j = 0; j < l.k; ++j) {
    mean_dice +=
        (2.0 * inter[j] + smooth) / (psum[j] + tsum[j] + smooth);
  }
  mean_dice /= static_cast<double>(l.k);
  Tensor out = Tensor::scalar(1.0 - mean_dice);

  if (tape && logits.requires_grad()) {
    tape->record(out, [logits, out, targets, l, smooth, probs, inter, psum,
                       tsum]() {
      const double g = out.grad()[0];
      const double kf = static_cast<double>(l.k);
      // dL/dp_{k,i} = -(1/K) * (2*t_{k,i}*(U_k+s) - (2*I_k+s)) / (U_k+s)^2,
      // then the softmax Jacobian maps it onto the logits.
      std::vector<double> denom(l.k), num_const(l.k);
      for (std::size_t j = 0; j < l.k; ++j) {
        const double u = psum[j] + tsum[j] + smooth;
        denom[j] = u * u;
        num_const[j] = 2.0 * inter[j] + smooth;
      }
      std::vector<double> gz(logits.size());
      std::vector<double> gp(l.k);
      for (std::size_t n = 0; n < l.n; ++n) {
        for (std::size_t p = 0; p < l.span; ++p) {
          const std::size_t base = (n * l.k) * l.span + p;
          const int t = targets[n * l.span + p];
          double dot = 0.0;
          for (std::size_t j = 0; j < l.k; ++j) {
            const double tkj = (j == static_cast<std::size_t>(t)) ? 1.0 : 0.0;
            const double u = psum[j] + tsum[j] + smooth;
            gp[j] = -(2.0 * tkj * u - num_const[j]) / (kf * denom[j]);
            dot += gp[j] * probs[base + j * l.span];
          }
          for (std::size_t j = 0; j < l.k; ++j) {
            gz[base + j * l.span] =
                g * probs[base + j * l.span] * (gp[j] - dot);
          }
        }
      }
      logits.accumulate_grad(gz);
    });
  }
  return out;
}

Tensor seg_loss(Tape* tape, const Tensor& logits,
                const std::vector<int>& targets, const LossWeights& weights) {
  weights.validate();
  Tensor ce = cross_entropy(tape, logits, targets);
  Tensor dice = soft_dice_loss(tape, logits, targets, weights.dice_smooth);
  return add(tape, scale(tape, ce, weights.w_ce),
             scale(tape, dice, weights.w_dice));
}

Tensor cls_loss(Tape* tape, const Tensor& logits2, const Tensor& logits4,
                const std::vector<int>& labels, const std::vector<int>& ways) {
  if (labels.size() != ways.size() || labels.empty()) {
    throw ValidationError("cls_loss: labels and ways must be equal-length "
                          "and non-empty");
  }
  std::vector<std::size_t> rows2, rows4;
  for (std::size_t i = 0; i < ways.size(); ++i) {
    if (ways[i] == kTwoWay) {
      rows2.push_back(i);
    } else if (ways[i] == kFourWay) {
      rows4.push_back(i);
    } else {
      throw ValidationError("cls_loss: way flag must be 2 or 4, got " +
                            std::to_string(ways[i]));
    }
    if (labels[i] < 0 || labels[i] >= ways[i]) {
      throw ValidationError("cls_loss: label " + std::to_string(labels[i]) +
                            " out of range for " + std::to_string(ways[i]) +
                            "-way sample");
    }
  }
  auto sub_loss = [&](const Tensor& logits,
                      const std::vector<std::size_t>& rows) {
    std::vector<int> sub_labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      sub_labels[i] = labels[rows[i]];
    }
    return cross_entropy(tape, select_rows(tape, logits, rows), sub_labels);
  };
  if (rows4.empty()) return sub_loss(logits2, rows2);
  if (rows2.empty()) return sub_loss(logits4, rows4);
  return add(tape, sub_loss(logits2, rows2), sub_loss(logits4, rows4));
}

Tensor final_loss(Tape* tape, TaskKind task, const Tensor& task_loss,
                  const LossWeights& weights) {
  weights.validate();
  const double lambda =
      task == TaskKind::kSeg ? weights.lambda_seg : weights.lambda_cls;
  return scale(tape, task_loss, lambda);
}

}  // namespace uuconv
