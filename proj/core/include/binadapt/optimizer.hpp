#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "binadapt/tensor.hpp"

namespace binadapt {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Gradient-descent updates over a named parameter set. SGD: p -= lr * g.
/// Adam keeps first/second moment buffers per parameter with bias correction.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {});

  // Parameters with no entry in `grads` are left untouched.
  void step(ParameterSet& params, const GradientSet& grads);

  const OptimizerConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return steps_; }
  void set_learning_rate(double lr);

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

OptimizerKind parse_optimizer_kind(const std::string& text);
const char* to_string(OptimizerKind kind);

}  // namespace binadapt
