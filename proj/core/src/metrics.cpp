#include "uuconv/metrics.hpp"

#include "uuconv/errors.hpp"

namespace uuconv {

double dice_score(const std::vector<int>& pred_labels,
                  const std::vector<int>& target_labels, int class_k) {
  if (pred_labels.size() != target_labels.size()) {
    throw ValidationError("dice_score: prediction and target sizes differ");
  }
  std::size_t inter = 0, p = 0, t = 0;
  for (std::size_t i = 0; i < pred_labels.size(); ++i) {
    const bool in_p = pred_labels[i] == class_k;
    const bool in_t = target_labels[i] == class_k;
    p += in_p;
    t += in_t;
    inter += in_p && in_t;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(p + t);
}

double accuracy(const std::vector<int>& pred_labels,
                const std::vector<int>& target_labels) {
  if (pred_labels.empty() || pred_labels.size() != target_labels.size()) {
    throw ValidationError("accuracy: need equal-length non-empty label lists");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred_labels.size(); ++i) {
    hits += pred_labels[i] == target_labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(pred_labels.size());
}

}  // namespace uuconv
