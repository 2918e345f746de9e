#include "scenesynth/optim.hpp"

#include <cmath>

namespace scenesynth::diffcore {

void Sgd::step(std::span<Param* const> params) const {
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->value[i] -= lr_ * p->grad[i];
    }
  }
}

void AdamW::step(std::span<Param* const> params) {
  const AdamWConfig& cfg = state_.config;
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (Param* p : params) {
    const std::size_t rows = p->value.rows();
    const std::size_t cols = p->value.cols();
    auto [m_it, m_new] = state_.first_moment.try_emplace(p->name, rows, cols);
    auto [v_it, v_new] = state_.second_moment.try_emplace(p->name, rows, cols);
    Matrix& m = m_it->second;
    Matrix& v = v_it->second;
    if (!m.same_shape(p->value) || !v.same_shape(p->value)) {
      throw DiffError(DiffErrc::ShapeMismatch,
                      "optimizer state for '" + p->name +
                          "' does not match the parameter shape");
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      double w = p->value[i];
      w -= cfg.lr * cfg.weight_decay * w;
      w -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
      p->value[i] = w;
    }
  }
}

}  // namespace scenesynth::diffcore
