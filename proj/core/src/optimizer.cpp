#include "uuconv/optimizer.hpp"

#include <cmath>

#include "uuconv/errors.hpp"

namespace uuconv {

void AdamWConfig::validate() const {
  if (learning_rate <= 0) {
    throw ValidationError("learning_rate must be positive");
  }
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw ValidationError("adamw betas must be in [0,1)");
  }
  if (eps <= 0) throw ValidationError("adamw eps must be positive");
  if (weight_decay < 0) throw ValidationError("weight_decay must be >= 0");
}

AdamW::AdamW(const ModelParams& params, AdamWConfig config)
    : config_(config) {
  config_.validate();
  m_.reserve(params.tensor_count());
  v_.reserve(params.tensor_count());
  t_.assign(params.tensor_count(), 0);
  for (const auto& [name, p] : params.entries()) {
    (void)name;
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step(ModelParams& params) {
  if (params.tensor_count() != m_.size()) {
    throw ValidationError("AdamW::step: optimizer state tracks " +
                          std::to_string(m_.size()) + " tensors, got " +
                          std::to_string(params.tensor_count()));
  }
  ++global_step_;
  const double lr = config_.learning_rate;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double wd = config_.weight_decay;
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    Tensor& p = params.entries()[i].second;
    if (!p.grad_allocated()) continue;
    const auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    if (m.size() != g.size()) {
      throw ValidationError("AdamW::step: moment shape mismatch on '" +
                            params.entries()[i].first + "'");
    }
    ++t_[i];
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_[i]));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_[i]));
    auto& pv = p.values();
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      pv[j] -= lr * (mhat / (std::sqrt(vhat) + config_.eps)) + lr * wd * pv[j];
    }
  }
}

void AdamW::restore_state(std::vector<std::vector<double>> m,
                          std::vector<std::vector<double>> v,
                          std::vector<std::uint64_t> t,
                          std::uint64_t global_step,
                          const ModelParams& params) {
  if (m.size() != params.tensor_count() || v.size() != params.tensor_count() ||
      t.size() != params.tensor_count()) {
    throw ValidationError("AdamW::restore_state: entry count mismatch");
  }
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    const std::size_t want = params.entries()[i].second.size();
    if (m[i].size() != want || v[i].size() != want) {
      throw ValidationError("AdamW::restore_state: moment size mismatch on '" +
                            params.entries()[i].first + "'");
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = std::move(t);
  global_step_ = global_step;
}

}  // namespace uuconv
