#pragma once

#include <cstdint>

#include "binadapt/image.hpp"

namespace binadapt {

// Pixel counts with ink (foreground) as the positive class.
struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& other) noexcept {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
    return *this;
  }
  friend Confusion operator+(Confusion a, const Confusion& b) noexcept { return a += b; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion(const BinaryMask& predicted, const BinaryMask& truth);

// A zero denominator yields 1.0 when the matching error count is also zero
// (nothing to find and nothing falsely found), else 0.0.
double precision(const Confusion& c);
double recall(const Confusion& c);
double f1(const Confusion& c);

}  // namespace binadapt
