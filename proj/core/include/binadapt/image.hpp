#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace binadapt {

/// A document page. Pixels are 8-bit intensities scaled to [0, 1], stored
/// planar: channel, then row, then column.
struct Page {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Page() = default;
  Page(std::size_t w, std::size_t h, std::size_t c = 1, double fill = 0.0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  void validate() const;
};

/// Per-pixel foreground labels; 1 marks ink.
struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), bits(w * h, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  std::size_t foreground() const;
};

/// Per-pixel probability of being ink, in [0, 1].
struct ProbabilityMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  ProbabilityMap() = default;
  ProbabilityMap(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), values(w * h, fill) {}

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

// BT.601 luma for 3-channel pages; 1-channel pages are returned unchanged.
Page to_grayscale(const Page& page);

double mean_intensity(const Page& page);

}  // namespace binadapt
