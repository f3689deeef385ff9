#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "uuconv/tensor.hpp"

namespace uuconv {

struct FiniteDiffEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

struct FiniteDiffReport {
  std::vector<FiniteDiffEntry> entries;
  double worst() const;
};

// Central-difference gradient verification. `loss_fn` must be a
// deterministic scalar function of the given parameter tensors: called with
// a tape it is differentiated once to get analytic gradients, then re-run
// tapeless at perturbed coordinates. Tensors larger than
// max_coords_per_tensor are checked on a seeded coordinate subsample.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
FiniteDiffReport finite_diff_check(
    const std::function<Tensor(Tape*)>& loss_fn,
    const std::vector<std::pair<std::string, Tensor>>& params, double h,
    std::uint64_t seed = 0, std::size_t max_coords_per_tensor = 32);

}  // namespace uuconv
