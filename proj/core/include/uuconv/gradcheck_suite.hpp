#pragma once

#include <string>
#include <vector>

namespace uuconv {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

// Canned finite-difference suite covering every differentiable op, the
// losses, a conv->norm->gelu->linear->CE composite, and the full model loss
// on a 2-sample desk-scale batch. Smooth elementwise ops are held to 1e-7,
// everything else to 1e-4.
std::vector<GradCheckResult> run_gradcheck_suite();

}  // namespace uuconv
