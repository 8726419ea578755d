#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "binadapt/image.hpp"

namespace binadapt {

enum class DomainRole { kSource, kTarget };
enum class Partition { kTrain, kValidation };

/// A domain's pages. Source datasets carry one ground-truth mask per page;
/// target datasets carry none.
struct Dataset {
  DomainRole role = DomainRole::kSource;
  std::vector<std::string> stems;
  std::vector<Page> pages;
  std::vector<BinaryMask> ground_truth;
  std::vector<Partition> partition;

  std::size_t size() const noexcept { return pages.size(); }
  std::vector<std::size_t> indices(Partition which) const;
  std::vector<Page> pages_in(Partition which) const;
  void validate() const;
};

// Seeded shuffle, then the first round(n * fraction) pages go to validation.
void assign_partitions(Dataset& dataset, double validation_fraction, std::uint64_t seed);

// Layout: <root>/images/*.pgm (or .ppm) and, for sources, <root>/gt/*.pgm with
// matching stems. Color pages are converted to luma; gt is thresholded at 128.
// Target datasets never read gt/.
Dataset load_dataset(const std::filesystem::path& root, DomainRole role,
                     double validation_fraction, std::uint64_t seed);

// Post-hoc evaluation masks for the given stems from <root>/gt. Returns an
// empty vector when the directory is absent.
std::vector<BinaryMask> load_evaluation_truth(const std::filesystem::path& root,
                                              const std::vector<std::string>& stems);

// Writes images/ and, when masks are given, gt/.
void save_dataset(const std::filesystem::path& root, const std::vector<std::string>& stems,
                  const std::vector<Page>& pages, const std::vector<BinaryMask>& truth);

}  // namespace binadapt
