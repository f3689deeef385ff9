#pragma once

#include <vector>

#include "uuconv/config.hpp"
#include "uuconv/tensor.hpp"

namespace uuconv {

struct LossWeights {
  double w_ce = 0.4;
  double w_dice = 0.6;
  double lambda_cls = 10.0;
  double lambda_seg = 1.0;
  double dice_smooth = 1e-5;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// Mean over all labeled positions of -log softmax(logits)[target], computed
// with log-sum-exp. Logits are [N,K] with N targets, or [N,K,H,W] with
// N*H*W targets in row-major [N,H,W] order.
Tensor cross_entropy(Tape* tape, const Tensor& logits,
                     const std::vector<int>& targets);

// Soft Dice over softmax probabilities, uniformly averaged over all K
// classes (background included): 1 - mean_k (2*I_k + s) / (P_k + T_k + s).
Tensor soft_dice_loss(Tape* tape, const Tensor& logits,
                      const std::vector<int>& targets, double smooth);

// w_ce * CE + w_dice * Dice.
Tensor seg_loss(Tape* tape, const Tensor& logits,
                const std::vector<int>& targets, const LossWeights& weights);

// Per-sample dispatch on the way flag (2 or 4): 2-way samples contribute CE
// on logits2, 4-way on logits4; a mixed batch yields the sum of the two
// sub-batch losses.
Tensor cls_loss(Tape* tape, const Tensor& logits2, const Tensor& logits4,
                const std::vector<int>& labels, const std::vector<int>& ways);

// lambda_seg * L for segmentation batches, lambda_cls * L for
// classification batches.
Tensor final_loss(Tape* tape, TaskKind task, const Tensor& task_loss,
                  const LossWeights& weights);

}  // namespace uuconv
