#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "binadapt/dataset.hpp"
#include "binadapt/image.hpp"
#include "binadapt/model.hpp"
#include "binadapt/optimizer.hpp"

namespace binadapt {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 8;
  double sweep_step = 0.05;
  std::uint64_t seed = 1;
  OptimizerConfig optimizer;
  // GRL schedule: lambda0 + lambda_increment * epoch (epochs count from 0).
  double lambda0 = 0.1;
  double lambda_increment = 0.01;
  // Overrides the schedule with a constant when set.
  std::optional<double> fixed_lambda;
  // Worker cap for per-sample gradients; 0 uses thread_budget().
  std::size_t threads = 0;
  // Called after every optimizer step with the global step index.
  std::function<void(std::size_t step, const Model& model)> on_step;

  double lambda_at(std::size_t epoch) const;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double bin_loss = 0.0;
  double domain_loss = 0.0;
  double lambda = 0.0;
  double val_f1 = 0.0;
  double threshold = 0.0;
};

struct TrainedBinarizer {
  Model model;
  // th_s: the swept threshold with the best validation F1 at the best epoch.
  double threshold = 0.5;
  double validation_f1 = 0.0;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

struct SweepResult {
  double threshold = 0.0;
  double f1 = 0.0;
  // (threshold, F1) for every grid point.
  std::vector<std::pair<double, double>> curve;
};

// Grid {step, 2*step, ...} strictly below 1.
std::vector<double> threshold_grid(double step);

// Pixel-level F1 over all maps at each grid threshold; ties go to the lowest.
SweepResult sweep_threshold(const std::vector<ProbabilityMap>& maps,
                            const std::vector<BinaryMask>& truth, double step);
SweepResult sweep_threshold(const Model& model, const std::vector<Page>& pages,
                            const std::vector<BinaryMask>& truth, double step);

// Foreground where p >= threshold.
BinaryMask binarize(const ProbabilityMap& map, double threshold);

TrainedBinarizer train_sae(const Dataset& source, const SaeConfig& model, const TrainConfig& cfg);
TrainedBinarizer train_bindann(const Dataset& source, const Dataset& target,
                               const SaeConfig& model, const TrainConfig& cfg);

// Columns: epoch,bin_loss,domain_loss,lambda,val_f1,th_s
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace binadapt
