#include "binadapt/image.hpp"

#include <algorithm>
#include <numeric>

#include "binadapt/error.hpp"

namespace binadapt {

void Page::validate() const {
  if (channels != 1 && channels != 3)
    throw InvalidArgument("pages have 1 or 3 channels, got " + std::to_string(channels));
  if (pixels.size() != width * height * channels)
    throw ShapeError("page pixel count does not match " + std::to_string(width) + "x" +
                     std::to_string(height) + "x" + std::to_string(channels));
}

std::size_t BinaryMask::foreground() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Page to_grayscale(const Page& page) {
  page.validate();
  if (page.channels == 1) return page;
  Page out(page.width, page.height, 1);
  const std::size_t n = page.width * page.height;
  for (std::size_t i = 0; i < n; ++i)
    out.pixels[i] = 0.299 * page.pixels[i] + 0.587 * page.pixels[n + i] +
                    0.114 * page.pixels[2 * n + i];
  return out;
}

double mean_intensity(const Page& page) {
  if (page.pixels.empty()) return 0.0;
  return std::accumulate(page.pixels.begin(), page.pixels.end(), 0.0) /
         static_cast<double>(page.pixels.size());
}

}  // namespace binadapt
