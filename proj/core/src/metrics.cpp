#include "binadapt/metrics.hpp"

#include "binadapt/error.hpp"

namespace binadapt {

Confusion confusion(const BinaryMask& predicted, const BinaryMask& truth) {
  if (predicted.width != truth.width || predicted.height != truth.height ||
      predicted.bits.size() != truth.bits.size())
    throw ShapeError("confusion: prediction " + std::to_string(predicted.width) + "x" +
                     std::to_string(predicted.height) + " vs truth " +
                     std::to_string(truth.width) + "x" + std::to_string(truth.height));
  Confusion c;
  for (std::size_t i = 0; i < truth.bits.size(); ++i) {
    const bool p = predicted.bits[i] != 0;
    const bool t = truth.bits[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double precision(const Confusion& c) {
  if (c.tp + c.fp == 0) return c.fn == 0 ? 1.0 : 0.0;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall(const Confusion& c) {
  if (c.tp + c.fn == 0) return c.fp == 0 ? 1.0 : 0.0;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double f1(const Confusion& c) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

}  // namespace binadapt
