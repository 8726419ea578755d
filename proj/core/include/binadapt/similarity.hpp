#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "binadapt/image.hpp"

namespace binadapt {

inline constexpr double kDefaultHistogramPrecision = 0.1;
inline constexpr double kDefaultGateThreshold = 0.25;
// Added to every bin before KL/JS so empty bins stay finite.
inline constexpr double kKlSmoothing = 1e-10;

/// Probability-value histogram of a whole domain. `counts` holds raw pixel
/// counts until normalize_histogram fills `mass`.
struct DomainHistogram {
  double precision = kDefaultHistogramPrecision;
  std::vector<std::uint64_t> counts;
  std::vector<double> mass;
  bool normalized = false;

  DomainHistogram() = default;
  explicit DomainHistogram(double h_prec);

  std::size_t bins() const noexcept { return counts.size(); }
  std::uint64_t total() const noexcept;
  DomainHistogram& operator+=(const DomainHistogram& other);
};

// Number of bins for a precision; precision must divide 1 into an integer.
std::size_t bin_count(double h_prec);
// Bin of a value in [0, 1]; 1.0 goes to the top bin.
std::size_t bin_index(double p, double h_prec, std::size_t bins);

DomainHistogram& accumulate_histogram(const ProbabilityMap& map, double h_prec,
                                      DomainHistogram& acc);
DomainHistogram normalize_histogram(const DomainHistogram& h);

// Population Pearson correlation of bin masses. Throws
// DegenerateDistributionError when either side is constant.
double pearson(const DomainHistogram& s, const DomainHistogram& t);
double pearson(std::span<const double> a, std::span<const double> b);

// Inputs must be normalized (sum to 1 within 1e-9); KL and JS smooth first.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double js_divergence(std::span<const double> p, std::span<const double> q);
double hist_intersection(std::span<const double> p, std::span<const double> q);

enum class GateDecision { kUseSae, kUseDa };
std::string to_string(GateDecision d);

// UseDA iff rho <= rho_th.
GateDecision gate_decision(double rho, double rho_th = kDefaultGateThreshold);

struct SimilarityReport {
  double rho = 0.0;
  double kl_st = 0.0;
  double kl_ts = 0.0;
  double js = 0.0;
  double hist_intersection = 0.0;
  double rho_th = kDefaultGateThreshold;
  GateDecision decision = GateDecision::kUseSae;
  // Set when a histogram is constant; rho is then reported as 0 and the
  // gate falls back to UseSAE.
  bool degenerate = false;
};

// Both histograms are normalized here if they are not already.
SimilarityReport compare_domains(const DomainHistogram& hs, const DomainHistogram& ht,
                                 double rho_th = kDefaultGateThreshold);

std::string report_json(const SimilarityReport& report);
// Columns: bin_low,bin_high,mass
void write_histogram_csv(std::ostream& out, const DomainHistogram& h);

}  // namespace binadapt
