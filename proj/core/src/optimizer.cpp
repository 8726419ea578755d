#include "binadapt/optimizer.hpp"

#include <cmath>

#include "binadapt/error.hpp"

namespace binadapt {

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  set_learning_rate(config.learning_rate);
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 &&
        config_.beta2 < 1.0 && config_.epsilon > 0.0))
    throw InvalidArgument("Adam betas must be in [0, 1) and epsilon positive");
}

void Optimizer::set_learning_rate(double lr) {
  if (!(lr > 0.0 && std::isfinite(lr)))
    throw InvalidArgument("learning rate must be positive, got " + std::to_string(lr));
  config_.learning_rate = lr;
}

void Optimizer::step(ParameterSet& params, const GradientSet& grads) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw InvalidArgument("gradient for unknown parameter '" + name + "'");
    if (!it->second.same_shape(g))
      throw ShapeError("gradient for '" + name + "' has shape " + to_string(g.shape()) +
                       ", parameter has " + to_string(it->second.shape()));
    if (!g.all_finite()) throw InvalidArgument("non-finite gradient for '" + name + "'");
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgd) {
    for (const auto& [name, g] : grads) {
      auto p = params.at(name).values();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
    return;
  }

  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (const auto& [name, g] : grads) {
    auto p = params.at(name).values();
    Moments& m = moments_[name];
    if (m.first.size() != p.size()) {
      m.first.assign(p.size(), 0.0);
      m.second.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m.first[i] = b1 * m.first[i] + (1.0 - b1) * g[i];
      m.second[i] = b2 * m.second[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m.first[i] / correction1;
      const double v_hat = m.second[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "sgd") return OptimizerKind::kSgd;
  throw InvalidArgument("unknown optimizer '" + text + "' (expected adam or sgd)");
}

const char* to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

}  // namespace binadapt
