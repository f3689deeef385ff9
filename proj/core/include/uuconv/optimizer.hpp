#pragma once

#include <cstdint>
#include <vector>

#include "uuconv/model.hpp"

namespace uuconv {

struct AdamWConfig {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
  bool operator==(const AdamWConfig&) const = default;
};

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   p <- p - lr * mhat/(sqrt(vhat)+eps) - lr * wd * p
// Parameters whose grad buffer is unallocated this step are skipped
// entirely (no moment update, no decay); bias correction uses a
// per-parameter step count so skipped steps do not distort it.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ModelParams& params, AdamWConfig config);

  void step(ModelParams& params);

  const AdamWConfig& config() const { return config_; }
  std::uint64_t global_step() const { return global_step_; }

  // Checkpoint access.
  const std::vector<std::vector<double>>& moment1() const { return m_; }
  const std::vector<std::vector<double>>& moment2() const { return v_; }
  const std::vector<std::uint64_t>& step_counts() const { return t_; }
  void restore_state(std::vector<std::vector<double>> m,
                     std::vector<std::vector<double>> v,
                     std::vector<std::uint64_t> t, std::uint64_t global_step,
                     const ModelParams& params);

 private:
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::vector<std::uint64_t> t_;
  std::uint64_t global_step_ = 0;
};

}  // namespace uuconv
