#include "binadapt/patches.hpp"

#include <algorithm>

#include "binadapt/error.hpp"

namespace binadapt {

PatchGrid split_patches(const Page& page, std::size_t patch_h, std::size_t patch_w) {
  page.validate();
  if (patch_h == 0 || patch_w == 0) throw InvalidArgument("patch size must be positive");
  if (page.width == 0 || page.height == 0) throw InvalidArgument("cannot split an empty page");
  PatchGrid grid;
  grid.patch_h = patch_h;
  grid.patch_w = patch_w;
  grid.rows = (page.height + patch_h - 1) / patch_h;
  grid.cols = (page.width + patch_w - 1) / patch_w;
  grid.pad_bottom = grid.rows * patch_h - page.height;
  grid.pad_right = grid.cols * patch_w - page.width;
  grid.page_width = page.width;
  grid.page_height = page.height;
  grid.channels = page.channels;
  grid.patches.reserve(grid.count());

  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      Tensor t({page.channels, patch_h, patch_w});
      for (std::size_t ch = 0; ch < page.channels; ++ch)
        for (std::size_t y = 0; y < patch_h; ++y) {
          const std::size_t sy = std::min(r * patch_h + y, page.height - 1);
          for (std::size_t x = 0; x < patch_w; ++x) {
            const std::size_t sx = std::min(c * patch_w + x, page.width - 1);
            t.at(ch, y, x) = page.at(ch, sy, sx);
          }
        }
      grid.patches.push_back(std::move(t));
    }
  }
  return grid;
}

Page assemble_page(const PatchGrid& grid) {
  if (grid.patches.size() != grid.count())
    throw InvalidArgument("patch grid expects " + std::to_string(grid.count()) +
                          " patches, has " + std::to_string(grid.patches.size()));
  const Shape want{grid.channels, grid.patch_h, grid.patch_w};
  for (std::size_t i = 0; i < grid.patches.size(); ++i)
    if (grid.patches[i].shape() != want)
      throw ShapeError("patch " + std::to_string(i) + " has shape " +
                       to_string(grid.patches[i].shape()) + ", expected " + to_string(want));

  Page page(grid.page_width, grid.page_height, grid.channels);
  for (std::size_t ch = 0; ch < grid.channels; ++ch)
    for (std::size_t y = 0; y < grid.page_height; ++y)
      for (std::size_t x = 0; x < grid.page_width; ++x) {
        const Tensor& t = grid.patches[(y / grid.patch_h) * grid.cols + x / grid.patch_w];
        page.at(ch, y, x) = t.at(ch, y % grid.patch_h, x % grid.patch_w);
      }
  return page;
}

ProbabilityMap assemble(const PatchGrid& grid) {
  if (grid.channels != 1) throw InvalidArgument("probability maps have a single channel");
  Page page = assemble_page(grid);
  ProbabilityMap map;
  map.width = page.width;
  map.height = page.height;
  map.values = std::move(page.pixels);
  return map;
}

Tensor mask_patch(const BinaryMask& mask, std::size_t row, std::size_t col, std::size_t patch_h,
                  std::size_t patch_w) {
  Tensor t({1, patch_h, patch_w});
  for (std::size_t y = 0; y < patch_h; ++y) {
    const std::size_t sy = std::min(row * patch_h + y, mask.height - 1);
    for (std::size_t x = 0; x < patch_w; ++x) {
      const std::size_t sx = std::min(col * patch_w + x, mask.width - 1);
      t.at(0, y, x) = mask.at(sy, sx);
    }
  }
  return t;
}

}  // namespace binadapt
