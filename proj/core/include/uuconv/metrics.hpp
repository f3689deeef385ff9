#pragma once

#include <vector>

namespace uuconv {

// Hard Dice 2|P∩T| / (|P|+|T|) for class_k over argmax label maps.
// Returns 1.0 when both sets are empty.
double dice_score(const std::vector<int>& pred_labels,
                  const std::vector<int>& target_labels, int class_k);

// Fraction of exact matches.
double accuracy(const std::vector<int>& pred_labels,
                const std::vector<int>& target_labels);

}  // namespace uuconv
