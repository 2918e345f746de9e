#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "scenesynth/diffcore.hpp"

namespace scenesynth::diffcore {

/// Plain gradient descent: w -= lr * g.
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}

  void step(std::span<Param* const> params) const;
  double lr() const noexcept { return lr_; }

 private:
  double lr_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// First and second moments per parameter, keyed by Param::name.
struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Matrix> first_moment;
  std::map<std::string, Matrix> second_moment;
};

/// Adam with decoupled weight decay:
///   w -= lr * wd * w
///   w -= lr * m̂ / (sqrt(v̂) + eps)
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) { state_.config = config; }
  explicit AdamW(AdamWState state) : state_(std::move(state)) {}

  void step(std::span<Param* const> params);

  const AdamWState& state() const noexcept { return state_; }
  const AdamWConfig& config() const noexcept { return state_.config; }
  void set_lr(double lr) noexcept { state_.config.lr = lr; }

 private:
  AdamWState state_;
};

}  // namespace scenesynth::diffcore
