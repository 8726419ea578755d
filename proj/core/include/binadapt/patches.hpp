#pragma once

#include <cstddef>
#include <vector>

#include "binadapt/image.hpp"
#include "binadapt/tensor.hpp"

namespace binadapt {

/// Non-overlapping tiling of a page. The page is edge-padded on the right and
/// bottom to a multiple of the patch size; patches are stored row-major as
/// [channels, patch_h, patch_w] tensors.
struct PatchGrid {
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t pad_right = 0;
  std::size_t pad_bottom = 0;
  std::size_t page_width = 0;
  std::size_t page_height = 0;
  std::size_t channels = 1;
  std::vector<Tensor> patches;

  std::size_t count() const noexcept { return rows * cols; }
};

PatchGrid split_patches(const Page& page, std::size_t patch_h, std::size_t patch_w);

// Inverse of split_patches on unmodified patches; crops the padding.
Page assemble_page(const PatchGrid& grid);
// For grids of single-channel probability patches.
ProbabilityMap assemble(const PatchGrid& grid);

Tensor mask_patch(const BinaryMask& mask, std::size_t row, std::size_t col, std::size_t patch_h,
                  std::size_t patch_w);

}  // namespace binadapt
