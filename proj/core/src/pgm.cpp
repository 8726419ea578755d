#include "binadapt/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "binadapt/error.hpp"

namespace binadapt {
namespace {

bool is_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

class HeaderScanner {
 public:
  HeaderScanner(std::span<const std::uint8_t> bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    if (pos_ >= bytes_.size())
      throw ParseError(std::string("unexpected end of data, expected ") + what, pos_);
    if (bytes_[pos_] < '0' || bytes_[pos_] > '9')
      throw ParseError(std::string("expected ") + what, pos_);
    unsigned long v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000UL) throw ParseError(std::string(what) + " is too large", start);
      ++pos_;
    }
    return v;
  }

  // The single whitespace byte that separates a binary header from the raster.
  void raster_separator() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_]))
      throw ParseError("expected whitespace before raster data", pos_);
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Page parse(std::span<const std::uint8_t> bytes, bool allow_color) {
  if (bytes.size() < 2 || bytes[0] != 'P')
    throw ParseError("missing PNM magic number", 0);
  const char kind = static_cast<char>(bytes[1]);
  const bool gray = kind == '2' || kind == '5';
  const bool color = kind == '3' || kind == '6';
  if (!gray && !(allow_color && color))
    throw ParseError(std::string("unsupported format P") + kind, 1);
  const bool ascii = kind == '2' || kind == '3';

  HeaderScanner body(bytes, 2);
  const std::size_t width_pos = body.pos();
  const std::size_t width = body.number("width");
  const std::size_t height = body.number("height");
  if (width == 0 || height == 0) throw ParseError("image dimensions must be positive", width_pos);
  body.skip_space_and_comments();
  const std::size_t maxval_pos = body.pos();
  const unsigned long maxval = body.number("maxval");
  if (maxval != 255)
    throw ParseError("maxval must be 255, got " + std::to_string(maxval), maxval_pos);

  const std::size_t channels = color ? 3 : 1;
  const std::size_t count = width * height * channels;
  Page page(width, height, channels);
  auto store = [&](std::size_t i, unsigned long v) {
    // Interleaved file order -> planar storage.
    const std::size_t pixel = i / channels;
    const std::size_t c = i % channels;
    page.pixels[c * width * height + pixel] = static_cast<double>(v) / 255.0;
  };

  if (ascii) {
    for (std::size_t i = 0; i < count; ++i) {
      body.skip_space_and_comments();
      const std::size_t at = body.pos();
      const unsigned long v = body.number("pixel value");
      if (v > 255) throw ParseError("pixel value " + std::to_string(v) + " exceeds maxval", at);
      store(i, v);
    }
  } else {
    body.raster_separator();
    const std::size_t start = body.pos();
    if (bytes.size() < start + count)
      throw ParseError("truncated raster: need " + std::to_string(count) + " bytes, have " +
                           std::to_string(bytes.size() - start),
                       bytes.size());
    for (std::size_t i = 0; i < count; ++i) store(i, bytes[start + i]);
  }
  return page;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> encode(std::size_t width, std::size_t height,
                                 const std::vector<std::uint8_t>& raster) {
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.begin(), raster.end());
  return out;
}

}  // namespace

Page read_pgm(std::span<const std::uint8_t> bytes) { return parse(bytes, false); }

Page read_pnm(std::span<const std::uint8_t> bytes) { return parse(bytes, true); }

std::vector<std::uint8_t> write_pgm(const Page& page) {
  page.validate();
  if (page.channels != 1) throw InvalidArgument("write_pgm needs a single-channel page");
  std::vector<std::uint8_t> raster(page.pixels.size());
  std::transform(page.pixels.begin(), page.pixels.end(), raster.begin(), quantize);
  return encode(page.width, page.height, raster);
}

std::vector<std::uint8_t> write_pgm(const ProbabilityMap& map) {
  std::vector<std::uint8_t> raster(map.values.size());
  std::transform(map.values.begin(), map.values.end(), raster.begin(), quantize);
  return encode(map.width, map.height, raster);
}

std::vector<std::uint8_t> write_pgm(const BinaryMask& mask) {
  std::vector<std::uint8_t> raster(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), raster.begin(),
                 [](std::uint8_t b) { return b ? std::uint8_t{255} : std::uint8_t{0}; });
  return encode(mask.width, mask.height, raster);
}

BinaryMask mask_from_page(const Page& page) {
  const Page gray = to_grayscale(page);
  BinaryMask mask(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i)
    mask.bits[i] = std::lround(gray.pixels[i] * 255.0) >= 128 ? 1 : 0;
  return mask;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Page load_page(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return read_pnm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

}  // namespace binadapt
