#include "binadapt/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <string>

#include "binadapt/error.hpp"
#include "binadapt/rng.hpp"

namespace binadapt {
namespace {

struct Canvas {
  std::size_t width;
  std::size_t height;
  std::vector<std::uint8_t> covered;
  std::vector<double> level;
};

void draw_segment(Canvas& canvas, double x0, double y0, double x1, double y1, double radius,
                  double level) {
  const double min_x = std::min(x0, x1) - radius - 1.0;
  const double max_x = std::max(x0, x1) + radius + 1.0;
  const double min_y = std::min(y0, y1) - radius - 1.0;
  const double max_y = std::max(y0, y1) + radius + 1.0;
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  for (long y = std::max(0L, static_cast<long>(min_y));
       y <= std::min(static_cast<long>(canvas.height) - 1, static_cast<long>(max_y)); ++y) {
    for (long x = std::max(0L, static_cast<long>(min_x));
         x <= std::min(static_cast<long>(canvas.width) - 1, static_cast<long>(max_x)); ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      double t = len2 > 0.0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = x0 + t * dx - px, ey = y0 + t * dy - py;
      if (ex * ex + ey * ey <= radius * radius) {
        const std::size_t i = static_cast<std::size_t>(y) * canvas.width + static_cast<std::size_t>(x);
        canvas.covered[i] = 1;
        canvas.level[i] = level;
      }
    }
  }
}

// Lines of pseudo-glyphs, each glyph a handful of thick strokes.
Canvas draw_text(Rng& rng, std::size_t width, std::size_t height, const PageStyle& style) {
  Canvas canvas{width, height, std::vector<std::uint8_t>(width * height, 0),
                std::vector<double>(width * height, 0.0)};
  const double margin = 4.0;
  double y = margin + rng.uniform(0.0, 4.0);
  while (true) {
    const double glyph_h = rng.uniform(9.0, 13.0);
    if (y + glyph_h > static_cast<double>(height) - margin) break;
    double x = margin + rng.uniform(0.0, 6.0);
    while (true) {
      const double glyph_w = rng.uniform(5.0, 10.0);
      if (x + glyph_w > static_cast<double>(width) - margin) break;
      const double level = rng.uniform(style.ink_lo, style.ink_hi);
      const int strokes = 2 + static_cast<int>(rng.index(2));
      for (int s = 0; s < strokes; ++s) {
        const double x0 = x + rng.uniform(0.0, glyph_w), y0 = y + rng.uniform(0.0, glyph_h);
        const double x1 = x + rng.uniform(0.0, glyph_w), y1 = y + rng.uniform(0.0, glyph_h);
        draw_segment(canvas, x0, y0, x1, y1, rng.uniform(0.8, 1.4), level);
      }
      x += glyph_w + rng.uniform(2.0, 4.0);
      if (rng.uniform() < 0.2) x += rng.uniform(4.0, 9.0);
    }
    y += glyph_h + rng.uniform(6.0, 10.0);
  }
  return canvas;
}

Dataset make_domain(std::uint64_t seed, const SyntheticOptions& options, const PageStyle& style,
                    DomainRole role, const std::string& prefix, std::vector<BinaryMask>* truth) {
  Dataset ds;
  ds.role = role;
  for (std::size_t i = 0; i < options.pages; ++i) {
    SyntheticPage sp =
        render_synthetic_page(mix_seed(seed, i), options.width, options.height, style);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%s%03zu", prefix.c_str(), i);
    ds.stems.emplace_back(stem);
    ds.pages.push_back(std::move(sp.page));
    if (role == DomainRole::kSource)
      ds.ground_truth.push_back(std::move(sp.truth));
    else if (truth)
      truth->push_back(std::move(sp.truth));
  }
  assign_partitions(ds, options.validation_fraction, seed);
  ds.validate();
  return ds;
}

}  // namespace

PageStyle source_style() { return PageStyle{}; }

PageStyle near_style() {
  PageStyle s;
  s.noise_sigma = 0.08;
  return s;
}

PageStyle far_style() {
  PageStyle s;
  s.inverted = true;
  s.ghosting = true;
  return s;
}

SyntheticPage render_synthetic_page(std::uint64_t seed, std::size_t width, std::size_t height,
                                    const PageStyle& style) {
  if (width < 16 || height < 16) throw InvalidArgument("synthetic pages must be at least 16x16");
  Rng rng(seed);
  const Canvas text = draw_text(rng, width, height, style);
  Rng ghost_rng(mix_seed(seed, stable_hash("ghost")));
  const Canvas ghost = style.ghosting ? draw_text(ghost_rng, width, height, style) : Canvas{};

  const double background = rng.uniform(style.background_lo, style.background_hi);
  const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  SyntheticPage out{Page(width, height, 1), BinaryMask(width, height)};
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i = y * width + x;
      const double u = static_cast<double>(x) / static_cast<double>(width) - 0.5;
      const double v = static_cast<double>(y) / static_cast<double>(height) - 0.5;
      const double shade =
          style.illumination * (0.5 * (gx * u + gy * v) + 0.5 * std::sin(phase + 3.0 * u + 2.0 * v));
      double value = background + shade;
      if (style.ghosting) {
        // Mirrored layout seen through the sheet.
        const std::size_t mirror = y * width + (width - 1 - x);
        if (ghost.covered[mirror])
          value = (1.0 - style.ghost_strength) * value + style.ghost_strength * ghost.level[mirror];
      }
      if (text.covered[i]) {
        value = text.level[i];
        out.truth.bits[i] = 1;
      }
      if (style.inverted) value = 1.0 - value;
      value += style.noise_sigma * rng.normal();
      value = std::clamp(value, 0.0, 1.0);
      out.page.pixels[i] = std::round(value * 255.0) / 255.0;
    }
  }
  return out;
}

SyntheticDomains make_synthetic_domains(std::uint64_t seed, const SyntheticOptions& options) {
  if (options.pages == 0) throw InvalidArgument("synthetic domains need at least one page");
  SyntheticDomains d;
  d.source = make_domain(mix_seed(seed, stable_hash("source")), options, source_style(),
                         DomainRole::kSource, "src", nullptr);
  d.target_near = make_domain(mix_seed(seed, stable_hash("near")), options, near_style(),
                              DomainRole::kTarget, "near", &d.target_near_truth);
  d.target_far = make_domain(mix_seed(seed, stable_hash("far")), options, far_style(),
                             DomainRole::kTarget, "far", &d.target_far_truth);
  return d;
}

}  // namespace binadapt
