#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "binadapt/rng.hpp"
#include "binadapt/tensor.hpp"

namespace binadapt {

/// Geometry of a 2-D convolution over [c, h, w] tensors. Padding is given
/// per side so stride-2 layers can pad asymmetrically.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_top = 0;
  std::size_t pad_bottom = 0;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;

  // Stride 1 with (k-1)/2 padding per side; preserves spatial size for odd k.
  static ConvSpec same(std::size_t in, std::size_t out, std::size_t kernel);
  // Pads k-s in total, extra pixel on the bottom/right, so even inputs
  // shrink by exactly the stride factor.
  static ConvSpec halving(std::size_t in, std::size_t out, std::size_t kernel,
                          std::size_t stride);

  // floor((in + pad_total - k) / s) + 1; throws if no output position fits.
  std::size_t conv_out_h(std::size_t in_h) const;
  std::size_t conv_out_w(std::size_t in_w) const;
  // (in - 1) * s + k - pad_total
  std::size_t transpose_out_h(std::size_t in_h) const;
  std::size_t transpose_out_w(std::size_t in_w) const;

  // conv2d weights are [out, in, kh, kw]; conv2d_transpose weights are
  // [in, out, kh, kw], so the same tensor serves a conv and its adjoint.
  Shape conv_weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
  Shape transpose_weight_shape() const {
    return {in_channels, out_channels, kernel_h, kernel_w};
  }
  std::size_t weight_count() const { return in_channels * out_channels * kernel_h * kernel_w; }

  void validate() const;
};

struct GrlSpec {
  double lambda = 0.1;
};

Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias);

// Accumulates (+=) into the gradient spans; any span may be empty to skip it.
void conv2d_backward(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
                     std::span<const double> grad_out, std::span<double> grad_input,
                     std::span<double> grad_weights, std::span<double> grad_bias);

Tensor conv2d_transpose(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
                        const Tensor& bias);

void conv2d_transpose_backward(const Tensor& input, const ConvSpec& spec,
                               const Tensor& weights, std::span<const double> grad_out,
                               std::span<double> grad_input, std::span<double> grad_weights,
                               std::span<double> grad_bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Keep flags for inverted dropout; survivors are scaled by 1 / (1 - rate).
struct DropoutMask {
  std::vector<std::uint8_t> keep;
  double scale = 1.0;
};

DropoutMask draw_dropout_mask(std::size_t n, double rate, Rng& rng);
Tensor apply_dropout(const Tensor& x, const DropoutMask& mask);
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// Identity forward; the backward pass multiplies by -lambda.
Tensor gradient_reversal(const Tensor& x, const GrlSpec& spec);
Tensor gradient_reversal_backward(const Tensor& upstream, const GrlSpec& spec);

inline constexpr double kBceClamp = 1e-7;

// Per-element binary cross-entropy with predictions clamped to
// [1e-7, 1 - 1e-7].
std::vector<double> bce_terms(const Tensor& pred, const Tensor& target);
// Mean of bce_terms.
double bce_loss(const Tensor& pred, const Tensor& target);
// d(bce_loss)/d(pred); zero where the clamp is active.
Tensor bce_loss_grad(const Tensor& pred, const Tensor& target);

}  // namespace binadapt
