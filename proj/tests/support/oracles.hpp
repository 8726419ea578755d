#pragma once

// Independent reference implementations used to check the library. They are
// written as plain nested loops over the definitions and share no code with
// the kernels under test.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "binadapt/image.hpp"
#include "binadapt/layers.hpp"
#include "binadapt/metrics.hpp"
#include "binadapt/rng.hpp"
#include "binadapt/tensor.hpp"

namespace oracle {

using binadapt::ConvSpec;
using binadapt::Tensor;

// out[o, y, x] = b[o] + sum w[o, i, ky, kx] * in[i, y*s + ky - pad, x*s + kx - pad]
inline Tensor direct_conv(const Tensor& in, const ConvSpec& s, const Tensor& w, const Tensor& b) {
  const long H = static_cast<long>(in.dim(1)), W = static_cast<long>(in.dim(2));
  const long oh = (H + static_cast<long>(s.pad_top + s.pad_bottom) - static_cast<long>(s.kernel_h)) /
                      static_cast<long>(s.stride_h) + 1;
  const long ow = (W + static_cast<long>(s.pad_left + s.pad_right) - static_cast<long>(s.kernel_w)) /
                      static_cast<long>(s.stride_w) + 1;
  Tensor out({s.out_channels, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (std::size_t o = 0; o < s.out_channels; ++o)
    for (long y = 0; y < oh; ++y)
      for (long x = 0; x < ow; ++x) {
        double acc = b[o];
        for (std::size_t i = 0; i < s.in_channels; ++i)
          for (std::size_t ky = 0; ky < s.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
              const long iy = y * static_cast<long>(s.stride_h) + static_cast<long>(ky) -
                              static_cast<long>(s.pad_top);
              const long ix = x * static_cast<long>(s.stride_w) + static_cast<long>(kx) -
                              static_cast<long>(s.pad_left);
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              acc += w[((o * s.in_channels + i) * s.kernel_h + ky) * s.kernel_w + kx] *
                     in.at(i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
        out.at(o, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
      }
  return out;
}

// Every input pixel scatters w[i, o, :, :] * in onto the full (unpadded)
// canvas at (y*s, x*s); the padding is then cropped away.
inline Tensor scatter_transpose(const Tensor& in, const ConvSpec& s, const Tensor& w,
                                const Tensor& b) {
  const std::size_t H = in.dim(1), W = in.dim(2);
  const std::size_t fh = (H - 1) * s.stride_h + s.kernel_h;
  const std::size_t fw = (W - 1) * s.stride_w + s.kernel_w;
  std::vector<double> full(s.out_channels * fh * fw, 0.0);
  for (std::size_t i = 0; i < s.in_channels; ++i)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t o = 0; o < s.out_channels; ++o)
          for (std::size_t ky = 0; ky < s.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < s.kernel_w; ++kx)
              full[(o * fh + y * s.stride_h + ky) * fw + x * s.stride_w + kx] +=
                  in.at(i, y, x) * w[((i * s.out_channels + o) * s.kernel_h + ky) * s.kernel_w + kx];
  const std::size_t oh = fh - s.pad_top - s.pad_bottom, ow = fw - s.pad_left - s.pad_right;
  Tensor out({s.out_channels, oh, ow});
  for (std::size_t o = 0; o < s.out_channels; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        out.at(o, y, x) = b[o] + full[(o * fh + y + s.pad_top) * fw + x + s.pad_left];
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline Tensor random_tensor(binadapt::Shape shape, binadapt::Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Pearson correlation written as the textbook ratio of population moments.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  long double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const long double ma = sa / n, mb = sb / n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

inline double kl(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) acc += p[i] * std::log(p[i] / q[i]);
  return acc;
}

inline std::vector<double> smooth(std::vector<double> p, double add) {
  double sum = 0.0;
  for (double& v : p) {
    v += add;
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

inline std::vector<double> random_histogram(binadapt::Rng& rng, std::size_t bins) {
  std::vector<double> h(bins);
  double sum = 0.0;
  for (double& v : h) sum += (v = rng.uniform());
  for (double& v : h) v /= sum;
  return h;
}

inline binadapt::Confusion count(const binadapt::BinaryMask& pred, const binadapt::BinaryMask& gt) {
  binadapt::Confusion c;
  for (std::size_t y = 0; y < gt.height; ++y)
    for (std::size_t x = 0; x < gt.width; ++x) {
      const bool p = pred.at(y, x) != 0, t = gt.at(y, x) != 0;
      c.tp += p && t;
      c.fp += p && !t;
      c.fn += !p && t;
      c.tn += !p && !t;
    }
  return c;
}

}  // namespace oracle
