#pragma once

#include <optional>
#include <vector>

#include "binadapt/dataset.hpp"
#include "binadapt/similarity.hpp"
#include "binadapt/trainer.hpp"

namespace binadapt {

struct AutoBinConfig {
  SaeConfig model;
  TrainConfig train;
  double h_prec = kDefaultHistogramPrecision;
  double rho_th = kDefaultGateThreshold;
};

struct AutoBinResult {
  // One mask per target page, in dataset order.
  std::vector<BinaryMask> binarized;
  SimilarityReport report;
  DomainHistogram source_histogram;
  DomainHistogram target_histogram;
  TrainedBinarizer sae;
  // Present only when the gate chose adaptation.
  std::optional<TrainedBinarizer> bindann;

  const TrainedBinarizer& chosen() const { return bindann ? *bindann : sae; }
};

// Normalized histogram of the model's probability maps over the pages.
DomainHistogram domain_histogram(const Model& model, const std::vector<Page>& pages,
                                 double h_prec);

// Trains an SAE on the source, compares source-validation and target
// histograms, and binarizes the target with either the SAE or a Bin-DANN.
// Target ground truth is never read.
AutoBinResult run_autobindann(const Dataset& source, const Dataset& target,
                              const AutoBinConfig& cfg);

}  // namespace binadapt
