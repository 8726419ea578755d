#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "binadapt/image.hpp"

namespace binadapt {

// Binary (P5) or ASCII (P2) graymap with maxval 255. Throws ParseError with
// the byte offset of the first problem.
Page read_pgm(std::span<const std::uint8_t> bytes);
// Also accepts P3/P6 pixmaps, producing a 3-channel page.
Page read_pnm(std::span<const std::uint8_t> bytes);

// Always emits P5. Values are quantized with round(255 * v) after clamping.
std::vector<std::uint8_t> write_pgm(const Page& page);
std::vector<std::uint8_t> write_pgm(const ProbabilityMap& map);
// Ink is written as 255, background as 0.
std::vector<std::uint8_t> write_pgm(const BinaryMask& mask);

// Foreground where the stored value is >= 128.
BinaryMask mask_from_page(const Page& page);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Page load_page(const std::filesystem::path& path);

}  // namespace binadapt
