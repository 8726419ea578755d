#include "binadapt/layers.hpp"

#include <algorithm>
#include <cmath>

#include "binadapt/error.hpp"

namespace binadapt {
namespace {

std::size_t conv_extent(std::size_t in, std::size_t pad, std::size_t k, std::size_t s,
                        const char* axis) {
  if (in + pad < k)
    throw ShapeError(std::string("convolution ") + axis + " extent " + std::to_string(in) +
                     " with padding " + std::to_string(pad) + " is smaller than kernel " +
                     std::to_string(k));
  return (in + pad - k) / s + 1;
}

std::size_t transpose_extent(std::size_t in, std::size_t pad, std::size_t k, std::size_t s,
                             const char* axis) {
  const std::size_t full = (in - 1) * s + k;
  if (full <= pad)
    throw ShapeError(std::string("transposed convolution ") + axis +
                     " padding removes the whole output");
  return full - pad;
}

// Output indices o with 0 <= o*s + tap - pad < extent and 0 <= o < out.
struct Range {
  std::size_t lo;
  std::size_t hi;  // exclusive
};

Range valid_range(std::size_t out, std::size_t extent, std::size_t tap, std::size_t pad,
                  std::size_t s) {
  const long long first = static_cast<long long>(pad) - static_cast<long long>(tap);
  std::size_t lo = first <= 0 ? 0 : static_cast<std::size_t>((first + s - 1) / s);
  const long long last = static_cast<long long>(extent) - 1 + first;
  if (last < 0) return {0, 0};
  std::size_t hi = std::min(out, static_cast<std::size_t>(last) / s + 1);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

void check_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3)
    throw ShapeError(std::string(what) + " must be [c,h,w], got " + to_string(t.shape()));
}

void check_params(const Tensor& weights, const Shape& want, const Tensor& bias,
                  std::size_t bias_len, const char* op) {
  if (weights.shape() != want)
    throw ShapeError(std::string(op) + " weights expected " + to_string(want) + ", got " +
                     to_string(weights.shape()));
  if (bias.size() != bias_len)
    throw ShapeError(std::string(op) + " bias expected " + std::to_string(bias_len) +
                     " values, got " + std::to_string(bias.size()));
}

}  // namespace

ConvSpec ConvSpec::same(std::size_t in, std::size_t out, std::size_t kernel) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = kernel;
  s.stride_h = s.stride_w = 1;
  s.pad_top = s.pad_left = (kernel - 1) / 2;
  s.pad_bottom = s.pad_right = kernel - 1 - (kernel - 1) / 2;
  return s;
}

ConvSpec ConvSpec::halving(std::size_t in, std::size_t out, std::size_t kernel,
                           std::size_t stride) {
  if (kernel < stride) throw InvalidArgument("halving convolution needs kernel >= stride");
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = kernel;
  s.stride_h = s.stride_w = stride;
  const std::size_t total = kernel - stride;
  s.pad_top = s.pad_left = total / 2;
  s.pad_bottom = s.pad_right = total - total / 2;
  return s;
}

std::size_t ConvSpec::conv_out_h(std::size_t in_h) const {
  return conv_extent(in_h, pad_top + pad_bottom, kernel_h, stride_h, "height");
}
std::size_t ConvSpec::conv_out_w(std::size_t in_w) const {
  return conv_extent(in_w, pad_left + pad_right, kernel_w, stride_w, "width");
}
std::size_t ConvSpec::transpose_out_h(std::size_t in_h) const {
  return transpose_extent(in_h, pad_top + pad_bottom, kernel_h, stride_h, "height");
}
std::size_t ConvSpec::transpose_out_w(std::size_t in_w) const {
  return transpose_extent(in_w, pad_left + pad_right, kernel_w, stride_w, "width");
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 ||
      stride_h == 0 || stride_w == 0)
    throw InvalidArgument("convolution channels, kernel and stride must be positive");
}

Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias) {
  spec.validate();
  check_rank3(input, "conv2d input");
  if (input.dim(0) != spec.in_channels)
    throw ShapeError("conv2d expects " + std::to_string(spec.in_channels) +
                     " input channels, got " + std::to_string(input.dim(0)));
  check_params(weights, spec.conv_weight_shape(), bias, spec.out_channels, "conv2d");

  const std::size_t ih = input.dim(1), iw = input.dim(2);
  const std::size_t oh = spec.conv_out_h(ih), ow = spec.conv_out_w(iw);
  const std::size_t kh = spec.kernel_h, kw = spec.kernel_w;
  const std::size_t sh = spec.stride_h, sw = spec.stride_w;
  Tensor out({spec.out_channels, oh, ow});
  const double* in = input.values().data();
  const double* w = weights.values().data();
  double* o = out.values().data();

  for (std::size_t co = 0; co < spec.out_channels; ++co) {
    double* oplane = o + co * oh * ow;
    std::fill(oplane, oplane + oh * ow, bias[co]);
    for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
      const double* iplane = in + ci * ih * iw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const Range ry = valid_range(oh, ih, ky, spec.pad_top, sh);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const Range rx = valid_range(ow, iw, kx, spec.pad_left, sw);
          const double wv = w[((co * spec.in_channels + ci) * kh + ky) * kw + kx];
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const double* irow = iplane + (oy * sh + ky - spec.pad_top) * iw;
            double* orow = oplane + oy * ow;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox)
              orow[ox] += wv * irow[ox * sw + kx - spec.pad_left];
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
                     std::span<const double> grad_out, std::span<double> grad_input,
                     std::span<double> grad_weights, std::span<double> grad_bias) {
  const std::size_t ih = input.dim(1), iw = input.dim(2);
  const std::size_t oh = spec.conv_out_h(ih), ow = spec.conv_out_w(iw);
  const std::size_t kh = spec.kernel_h, kw = spec.kernel_w;
  const std::size_t sh = spec.stride_h, sw = spec.stride_w;
  if (grad_out.size() != spec.out_channels * oh * ow)
    throw ShapeError("conv2d backward: upstream gradient has wrong size");
  const double* in = input.values().data();
  const double* w = weights.values().data();

  for (std::size_t co = 0; co < spec.out_channels; ++co) {
    const double* gplane = grad_out.data() + co * oh * ow;
    if (!grad_bias.empty()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) acc += gplane[i];
      grad_bias[co] += acc;
    }
    for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
      const double* iplane = in + ci * ih * iw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const Range ry = valid_range(oh, ih, ky, spec.pad_top, sh);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const Range rx = valid_range(ow, iw, kx, spec.pad_left, sw);
          const std::size_t widx = ((co * spec.in_channels + ci) * kh + ky) * kw + kx;
          const double wv = w[widx];
          double wacc = 0.0;
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const std::size_t row = (oy * sh + ky - spec.pad_top) * iw;
            const double* grow = gplane + oy * ow;
            const double* irow = iplane + row;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) {
              const std::size_t ix = ox * sw + kx - spec.pad_left;
              wacc += grow[ox] * irow[ix];
            }
            if (!grad_input.empty()) {
              double* girow = grad_input.data() + ci * ih * iw + row;
              for (std::size_t ox = rx.lo; ox < rx.hi; ++ox)
                girow[ox * sw + kx - spec.pad_left] += wv * grow[ox];
            }
          }
          if (!grad_weights.empty()) grad_weights[widx] += wacc;
        }
      }
    }
  }
}

Tensor conv2d_transpose(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
                        const Tensor& bias) {
  spec.validate();
  check_rank3(input, "conv2d_transpose input");
  if (input.dim(0) != spec.in_channels)
    throw ShapeError("conv2d_transpose expects " + std::to_string(spec.in_channels) +
                     " input channels, got " + std::to_string(input.dim(0)));
  check_params(weights, spec.transpose_weight_shape(), bias, spec.out_channels,
               "conv2d_transpose");

  const std::size_t ih = input.dim(1), iw = input.dim(2);
  const std::size_t oh = spec.transpose_out_h(ih), ow = spec.transpose_out_w(iw);
  const std::size_t kh = spec.kernel_h, kw = spec.kernel_w;
  const std::size_t sh = spec.stride_h, sw = spec.stride_w;
  Tensor out({spec.out_channels, oh, ow});
  const double* in = input.values().data();
  const double* w = weights.values().data();
  double* o = out.values().data();

  for (std::size_t co = 0; co < spec.out_channels; ++co)
    std::fill(o + co * oh * ow, o + (co + 1) * oh * ow, bias[co]);

  // Scatter each input pixel; the valid input range for a tap is the same
  // index algebra as conv2d with the roles of input and output swapped.
  for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
    const double* iplane = in + ci * ih * iw;
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
      double* oplane = o + co * oh * ow;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const Range ry = valid_range(ih, oh, ky, spec.pad_top, sh);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const Range rx = valid_range(iw, ow, kx, spec.pad_left, sw);
          const double wv = w[((ci * spec.out_channels + co) * kh + ky) * kw + kx];
          for (std::size_t iy = ry.lo; iy < ry.hi; ++iy) {
            double* orow = oplane + (iy * sh + ky - spec.pad_top) * ow;
            const double* irow = iplane + iy * iw;
            for (std::size_t ix = rx.lo; ix < rx.hi; ++ix)
              orow[ix * sw + kx - spec.pad_left] += wv * irow[ix];
          }
        }
      }
    }
  }
  return out;
}

void conv2d_transpose_backward(const Tensor& input, const ConvSpec& spec,
                               const Tensor& weights, std::span<const double> grad_out,
                               std::span<double> grad_input, std::span<double> grad_weights,
                               std::span<double> grad_bias) {
  const std::size_t ih = input.dim(1), iw = input.dim(2);
  const std::size_t oh = spec.transpose_out_h(ih), ow = spec.transpose_out_w(iw);
  const std::size_t kh = spec.kernel_h, kw = spec.kernel_w;
  const std::size_t sh = spec.stride_h, sw = spec.stride_w;
  if (grad_out.size() != spec.out_channels * oh * ow)
    throw ShapeError("conv2d_transpose backward: upstream gradient has wrong size");
  const double* in = input.values().data();
  const double* w = weights.values().data();

  if (!grad_bias.empty()) {
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
      double acc = 0.0;
      const double* gplane = grad_out.data() + co * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) acc += gplane[i];
      grad_bias[co] += acc;
    }
  }
  for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
    const double* iplane = in + ci * ih * iw;
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
      const double* gplane = grad_out.data() + co * oh * ow;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const Range ry = valid_range(ih, oh, ky, spec.pad_top, sh);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const Range rx = valid_range(iw, ow, kx, spec.pad_left, sw);
          const std::size_t widx = ((ci * spec.out_channels + co) * kh + ky) * kw + kx;
          const double wv = w[widx];
          double wacc = 0.0;
          for (std::size_t iy = ry.lo; iy < ry.hi; ++iy) {
            const double* grow = gplane + (iy * sh + ky - spec.pad_top) * ow;
            const double* irow = iplane + iy * iw;
            for (std::size_t ix = rx.lo; ix < rx.hi; ++ix)
              wacc += grow[ix * sw + kx - spec.pad_left] * irow[ix];
            if (!grad_input.empty()) {
              double* girow = grad_input.data() + ci * ih * iw + iy * iw;
              for (std::size_t ix = rx.lo; ix < rx.hi; ++ix)
                girow[ix] += wv * grow[ix * sw + kx - spec.pad_left];
            }
          }
          if (!grad_weights.empty()) grad_weights[widx] += wacc;
        }
      }
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  out.drop_grad();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  out.drop_grad();
  for (double& v : out.values()) {
    // Split by sign so exp never overflows.
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return out;
}

DropoutMask draw_dropout_mask(std::size_t n, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw InvalidArgument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  DropoutMask mask;
  mask.keep.assign(n, 1);
  mask.scale = 1.0 / (1.0 - rate);
  if (rate == 0.0) return mask;
  for (auto& k : mask.keep) k = rng.uniform() >= rate ? 1 : 0;
  return mask;
}

Tensor apply_dropout(const Tensor& x, const DropoutMask& mask) {
  if (mask.keep.size() != x.size()) throw ShapeError("dropout mask does not match input size");
  Tensor out = x;
  out.drop_grad();
  if (mask.scale == 1.0) return out;
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask.keep[i] ? v[i] * mask.scale : 0.0;
  return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw InvalidArgument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) {
    Tensor out = x;
    out.drop_grad();
    return out;
  }
  return apply_dropout(x, draw_dropout_mask(x.size(), rate, rng));
}

Tensor gradient_reversal(const Tensor& x, const GrlSpec& spec) {
  if (!(spec.lambda >= 0.0)) throw InvalidArgument("gradient reversal lambda must be >= 0");
  Tensor out = x;
  out.drop_grad();
  return out;
}

Tensor gradient_reversal_backward(const Tensor& upstream, const GrlSpec& spec) {
  Tensor out = upstream;
  out.drop_grad();
  const double factor = -spec.lambda;
  for (double& v : out.values()) v *= factor;
  return out;
}

std::vector<double> bce_terms(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw ShapeError("bce_loss: prediction " + to_string(pred.shape()) + " vs target " +
                     to_string(target.shape()));
  std::vector<double> terms(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kBceClamp, 1.0 - kBceClamp);
    const double t = target[i];
    terms[i] = -(t * std::log(p) + (1.0 - t) * std::log1p(-p));
  }
  return terms;
}

double bce_loss(const Tensor& pred, const Tensor& target) {
  return accurate_sum(bce_terms(pred, target)) / static_cast<double>(pred.size());
}

Tensor bce_loss_grad(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw ShapeError("bce_loss: prediction " + to_string(pred.shape()) + " vs target " +
                     to_string(target.shape()));
  Tensor g(pred.shape());
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    if (p < kBceClamp || p > 1.0 - kBceClamp) continue;
    const double t = target[i];
    g[i] = (-t / p + (1.0 - t) / (1.0 - p)) * inv_n;
  }
  return g;
}

}  // namespace binadapt
