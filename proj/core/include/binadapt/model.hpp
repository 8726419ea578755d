#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "binadapt/checkpoint.hpp"
#include "binadapt/graph.hpp"
#include "binadapt/image.hpp"
#include "binadapt/rng.hpp"

namespace binadapt {

/// Selectional auto-encoder geometry. Every encoder block is a strided
/// conv + ReLU + dropout; every decoder block the transposed counterpart.
struct SaeConfig {
  std::size_t depth = 3;
  std::size_t filters = 8;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride_h = 2;
  std::size_t stride_w = 2;
  double dropout_rate = 0.2;
  std::size_t patch_h = 32;
  std::size_t patch_w = 32;
  std::size_t channels = 1;

  // Six blocks of 64 filters on 256x256 patches.
  static SaeConfig full_scale();
  static SaeConfig desk_scale() { return {}; }

  void validate() const;
};

struct BinDannConfig {
  SaeConfig sae;
  double lambda0 = 0.1;
  double lambda_increment = 0.01;

  double lambda_at(std::size_t epoch) const {
    return lambda0 + lambda_increment * static_cast<double>(epoch);
  }
  void validate() const;
};

enum class ModelKind { kSae, kBinDann };

// Graph input and output names shared by both architectures.
namespace io {
inline constexpr char kImage[] = "image";
inline constexpr char kTruth[] = "truth";
inline constexpr char kDomainLabel[] = "domain_label";
inline constexpr char kProbability[] = "prob";
inline constexpr char kBinLoss[] = "bin_loss";
inline constexpr char kLoss[] = "loss";
inline constexpr char kDomain[] = "domain";
inline constexpr char kDomainLoss[] = "domain_loss";
inline constexpr char kDomainTerm[] = "domain_term";
}  // namespace io

// Weight of the domain loss in the combined objective; the domain loss is
// averaged over twice as many patches (source and target) as the
// binarization loss.
inline constexpr double kDomainLossWeight = 0.5;

class Model {
 public:
  ModelKind kind() const noexcept { return kind_; }
  const SaeConfig& sae_config() const noexcept { return dann_.sae; }
  const BinDannConfig& dann_config() const noexcept { return dann_; }

  Graph& graph() noexcept { return graph_; }
  const Graph& graph() const noexcept { return graph_; }

  std::size_t parameter_count() const { return graph_.parameter_count(); }
  std::size_t parameter_count(std::string_view prefix) const;

  // Parameter-name prefixes of the last decoder block and the output conv,
  // i.e. the part of the SAE that the domain branch replicates.
  std::vector<std::string> replicated_tail_prefixes() const;
  static constexpr std::string_view kDomainPrefix = "domain.";

  void set_lambda(double lambda);
  Shape output_shape(const std::string& output) const;

 private:
  friend Model build_sae(const SaeConfig&, Rng&);
  friend Model build_bindann(const BinDannConfig&, Rng&);

  ModelKind kind_ = ModelKind::kSae;
  BinDannConfig dann_;
  Graph graph_;
};

Model build_sae(const SaeConfig& config, Rng& rng);
Model build_bindann(const BinDannConfig& config, Rng& rng);

// Tiles the page, runs every patch in inference mode and reassembles.
ProbabilityMap predict_prob_map(Model& model, const Page& page);
// Same, over several pages on up to thread_budget() worker copies.
std::vector<ProbabilityMap> predict_prob_maps(const Model& model, const std::vector<Page>& pages);

// Checkpoint records: "@model" holds the architecture, "@threshold" the
// binarization threshold, followed by every parameter.
NamedTensors model_records(const Model& model, double threshold);
Model model_from_records(const NamedTensors& records, double* threshold = nullptr);

void save_model(const std::filesystem::path& path, const Model& model, double threshold);
Model load_model(const std::filesystem::path& path, double* threshold = nullptr);

}  // namespace binadapt
