#include "binadapt/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <ostream>

#include "binadapt/error.hpp"

namespace binadapt {
namespace {

void check_pair(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty())
    throw InvalidArgument("histograms must be non-empty with equal bin counts");
}

void check_normalized(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw InvalidArgument("histogram mass must be non-negative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("histogram is not normalized");
}

std::vector<double> smoothed(std::span<const double> p) {
  std::vector<double> out(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : out) sum += (v += kKlSmoothing);
  for (double& v : out) v /= sum;
  return out;
}

double raw_kl(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  return std::max(kl, 0.0);
}

}  // namespace

DomainHistogram::DomainHistogram(double h_prec)
    : precision(h_prec), counts(bin_count(h_prec), 0) {}

std::uint64_t DomainHistogram::total() const noexcept {
  std::uint64_t t = 0;
  for (std::uint64_t c : counts) t += c;
  return t;
}

DomainHistogram& DomainHistogram::operator+=(const DomainHistogram& other) {
  if (other.counts.size() != counts.size())
    throw InvalidArgument("cannot merge histograms with different bin counts");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  normalized = false;
  mass.clear();
  return *this;
}

std::size_t bin_count(double h_prec) {
  if (!(h_prec > 0.0 && h_prec <= 1.0)) throw InvalidArgument("histogram precision must be in (0, 1]");
  const double n = 1.0 / h_prec;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9 * r) throw InvalidArgument("histogram precision must divide 1 evenly");
  return static_cast<std::size_t>(r);
}

std::size_t bin_index(double p, double h_prec, std::size_t bins) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("probability outside [0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(p / h_prec));
  return std::min(k, bins - 1);
}

DomainHistogram& accumulate_histogram(const ProbabilityMap& map, double h_prec,
                                      DomainHistogram& acc) {
  const std::size_t bins = bin_count(h_prec);
  if (acc.counts.empty()) acc = DomainHistogram(h_prec);
  if (acc.counts.size() != bins) throw InvalidArgument("histogram precision mismatch");
  for (double p : map.values) ++acc.counts[bin_index(p, h_prec, bins)];
  acc.normalized = false;
  acc.mass.clear();
  return acc;
}

DomainHistogram normalize_histogram(const DomainHistogram& h) {
  const std::uint64_t total = h.total();
  if (total == 0) throw InvalidArgument("cannot normalize an empty histogram");
  DomainHistogram out = h;
  out.mass.resize(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out.mass[i] = static_cast<double>(h.counts[i]) / static_cast<double>(total);
  out.normalized = true;
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0)
    throw DegenerateDistributionError("histogram has zero variance; correlation undefined");
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

double pearson(const DomainHistogram& s, const DomainHistogram& t) {
  if (!s.normalized || !t.normalized) throw InvalidArgument("pearson needs normalized histograms");
  return pearson(std::span<const double>(s.mass), std::span<const double>(t.mass));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q);
  check_normalized(p);
  check_normalized(q);
  return raw_kl(smoothed(p), smoothed(q));
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q);
  check_normalized(p);
  check_normalized(q);
  const std::vector<double> ps = smoothed(p), qs = smoothed(q);
  std::vector<double> m(ps.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (ps[i] + qs[i]);
  const double js = 0.5 * raw_kl(ps, m) + 0.5 * raw_kl(qs, m);
  return std::clamp(js, 0.0, std::log(2.0));
}

double hist_intersection(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q);
  check_normalized(p);
  check_normalized(q);
  double hi = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) hi += std::min(p[i], q[i]);
  return std::clamp(hi, 0.0, 1.0);
}

std::string to_string(GateDecision d) { return d == GateDecision::kUseDa ? "UseDA" : "UseSAE"; }

GateDecision gate_decision(double rho, double rho_th) {
  return rho <= rho_th ? GateDecision::kUseDa : GateDecision::kUseSae;
}

SimilarityReport compare_domains(const DomainHistogram& hs, const DomainHistogram& ht,
                                 double rho_th) {
  const DomainHistogram s = hs.normalized ? hs : normalize_histogram(hs);
  const DomainHistogram t = ht.normalized ? ht : normalize_histogram(ht);
  SimilarityReport r;
  r.rho_th = rho_th;
  try {
    r.rho = pearson(s, t);
    r.decision = gate_decision(r.rho, rho_th);
  } catch (const DegenerateDistributionError&) {
    r.rho = 0.0;
    r.degenerate = true;
    r.decision = GateDecision::kUseSae;
  }
  r.kl_st = kl_divergence(s.mass, t.mass);
  r.kl_ts = kl_divergence(t.mass, s.mass);
  r.js = js_divergence(s.mass, t.mass);
  r.hist_intersection = hist_intersection(s.mass, t.mass);
  return r;
}

std::string report_json(const SimilarityReport& r) {
  nlohmann::ordered_json j;
  j["rho"] = r.rho;
  j["kl_st"] = r.kl_st;
  j["kl_ts"] = r.kl_ts;
  j["js"] = r.js;
  j["hist_intersection"] = r.hist_intersection;
  j["rho_th"] = r.rho_th;
  j["decision"] = to_string(r.decision);
  j["degenerate_flag"] = r.degenerate;
  return j.dump(2) + "\n";
}

void write_histogram_csv(std::ostream& out, const DomainHistogram& h) {
  const DomainHistogram n = h.normalized ? h : normalize_histogram(h);
  out << "bin_low,bin_high,mass\n";
  char line[128];
  for (std::size_t i = 0; i < n.mass.size(); ++i) {
    const double lo = static_cast<double>(i) * n.precision;
    const double hi = i + 1 == n.mass.size() ? 1.0 : static_cast<double>(i + 1) * n.precision;
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", lo, hi, n.mass[i]);
    out << line;
  }
}

}  // namespace binadapt
