#include "uuconv/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "uuconv/errors.hpp"
#include "uuconv/rng.hpp"

namespace uuconv {

double FiniteDiffReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

FiniteDiffReport finite_diff_check(
    const std::function<Tensor(Tape*)>& loss_fn,
    const std::vector<std::pair<std::string, Tensor>>& params, double h,
    std::uint64_t seed, std::size_t max_coords_per_tensor) {
  if (h <= 0) throw ValidationError("finite_diff_check: h must be positive");
  if (max_coords_per_tensor < 32) max_coords_per_tensor = 32;

  for (const auto& [name, p] : params) {
    (void)name;
    p.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = loss_fn(&tape);
    tape.backward(loss);
    analytic.reserve(params.size());
    for (const auto& [name, p] : params) {
      (void)name;
      analytic.push_back(p.grad_allocated()
                             ? p.grad()
                             : std::vector<double>(p.size(), 0.0));
    }
  }

  Rng rng(seed);
  FiniteDiffReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& name = params[pi].first;
    // The handle is const but the shared buffer is intentionally perturbed
    // in place and restored.
    Tensor p = params[pi].second;
    std::vector<std::size_t> coords;
    if (p.size() <= max_coords_per_tensor) {
      coords.resize(p.size());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    } else {
      // Sampling with replacement across a large tensor; duplicates are
      // harmless and vanishingly rare.
      coords.resize(max_coords_per_tensor);
      for (auto& c : coords) {
        c = static_cast<std::size_t>(rng.below(p.size()));
      }
    }

    FiniteDiffEntry entry;
    entry.name = name;
    entry.coords_checked = coords.size();
    for (std::size_t c : coords) {
      const double saved = p.values()[c];
      p.values()[c] = saved + h;
      const double f_plus = loss_fn(nullptr).item();
      p.values()[c] = saved - h;
      const double f_minus = loss_fn(nullptr).item();
      p.values()[c] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double exact = analytic[pi][c];
      const double denom =
          std::max({std::abs(numeric), std::abs(exact), 1e-8});
      entry.max_rel_error =
          std::max(entry.max_rel_error, std::abs(numeric - exact) / denom);
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace uuconv
