#pragma once

#include <cstdint>
#include <vector>

#include "binadapt/dataset.hpp"

namespace binadapt {

struct SyntheticOptions {
  std::size_t pages = 12;
  std::size_t width = 128;
  std::size_t height = 128;
  double validation_fraction = 0.25;
};

// Rendering parameters for one synthetic domain.
struct PageStyle {
  double background_lo = 0.78;
  double background_hi = 0.90;
  double ink_lo = 0.08;
  double ink_hi = 0.25;
  double noise_sigma = 0.04;
  double illumination = 0.05;
  bool inverted = false;
  // Bleed-through: mirrored strokes from a second layout, not part of the
  // ground truth.
  bool ghosting = false;
  double ghost_strength = 0.5;
};

PageStyle source_style();
PageStyle near_style();
PageStyle far_style();

struct SyntheticPage {
  Page page;
  BinaryMask truth;
};

SyntheticPage render_synthetic_page(std::uint64_t seed, std::size_t width, std::size_t height,
                                    const PageStyle& style);

/// Three desk-scale domains: a labeled source, a near target rendered by the
/// same generator with a higher noise level, and a far target with inverted
/// contrast and ghosting. Target datasets carry no ground truth; their masks
/// are returned separately for evaluation only.
struct SyntheticDomains {
  Dataset source;
  Dataset target_near;
  Dataset target_far;
  std::vector<BinaryMask> target_near_truth;
  std::vector<BinaryMask> target_far_truth;
};

SyntheticDomains make_synthetic_domains(std::uint64_t seed, const SyntheticOptions& options = {});

}  // namespace binadapt
