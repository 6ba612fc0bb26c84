#include "cascadeserve/workload.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cascadeserve {

QpsDistribution zipf_distribution(int n_ranges, double s) {
  if (n_ranges < 1) throw Error("zipf_distribution: n_ranges must be >= 1");
  if (!(s > 0.0)) throw Error("zipf_distribution: exponent must be > 0");
  QpsDistribution dist;
  dist.weights.resize(static_cast<std::size_t>(n_ranges));
  double total = 0.0;
  for (int i = 0; i < n_ranges; ++i) {
    dist.weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), s);
    total += dist.weights[i];
  }
  for (double& w : dist.weights) w /= total;
  return dist;
}

WorkloadTrace scale_trace(const WorkloadTrace& trace, double max_qps) {
  if (trace.empty()) {
    throw Error("cannot scale an empty trace to a maximum QPS");
  }
  if (!(max_qps > 0.0)) throw Error("scale target must be positive");
  const auto counts = trace.per_second_counts();
  const int peak = *std::max_element(counts.begin(), counts.end());
  const double factor = max_qps / peak;

  WorkloadTrace out;
  out.duration_us = trace.duration_us;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    const auto n = std::llround(counts[s] * factor);
    const Micros second_start = static_cast<Micros>(s) * kMicrosPerSecond;
    const Micros second_end = std::min(second_start + kMicrosPerSecond, trace.duration_us);
    const Micros span = second_end - second_start;
    for (long long k = 0; k < n; ++k) {
      out.arrivals.push_back(second_start + k * span / n);
    }
  }
  return out;
}

WorkloadTrace constant_rate_trace(double qps, Micros duration_us, Micros start_us) {
  WorkloadTrace out;
  out.duration_us = start_us + duration_us;
  if (!(qps > 0.0)) return out;
  const double interval = kMicrosPerSecond / qps;
  for (long long k = 0;; ++k) {
    const Micros t = start_us + static_cast<Micros>(std::llround(k * interval));
    if (t >= out.duration_us) break;
    out.arrivals.push_back(t);
  }
  return out;
}

WorkloadTrace step_trace(const std::vector<TraceSegment>& segments) {
  WorkloadTrace out;
  Micros start = 0;
  for (const auto& seg : segments) {
    const auto part = constant_rate_trace(seg.qps, seg.duration_us, start);
    out.arrivals.insert(out.arrivals.end(), part.arrivals.begin(), part.arrivals.end());
    start += seg.duration_us;
  }
  out.duration_us = start;
  return out;
}

ZipfTrace zipf_trace(const QpsDistribution& dist, double qps_max, int seconds,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick(dist.weights.begin(), dist.weights.end());
  const double width = qps_max / static_cast<double>(dist.size());
  ZipfTrace out;
  out.trace.duration_us = static_cast<Micros>(seconds) * kMicrosPerSecond;
  for (int s = 0; s < seconds; ++s) {
    const int range = pick(rng);
    // Keep the integer per-second count clear of the range boundaries.
    const double lo = range * width + 0.1 * width;
    const double hi = (range + 1) * width - 0.1 * width;
    std::uniform_real_distribution<double> rate(lo, hi);
    const auto n = static_cast<long long>(std::llround(rate(rng)));
    const Micros start = static_cast<Micros>(s) * kMicrosPerSecond;
    for (long long k = 0; k < n; ++k) {
      out.trace.arrivals.push_back(start + k * kMicrosPerSecond / std::max(n, 1LL));
    }
    out.second_ranges.push_back(range);
  }
  return out;
}

std::vector<double> observed_range_fractions(const WorkloadTrace& trace,
                                             double qps_max, int n_ranges,
                                             Micros period_us) {
  if (period_us <= 0) throw Error("measurement period must be positive");
  GearPlan ranges;
  ranges.qps_max = qps_max;
  ranges.n_ranges = n_ranges;
  const auto periods = static_cast<std::size_t>(trace.duration_us / period_us);
  std::vector<double> fractions(static_cast<std::size_t>(n_ranges), 0.0);
  if (periods == 0) return fractions;
  std::vector<long long> counts(periods, 0);
  for (Micros t : trace.arrivals) {
    const auto p = static_cast<std::size_t>(t / period_us);
    if (p < periods) ++counts[p];
  }
  const double period_s = static_cast<double>(period_us) / kMicrosPerSecond;
  for (long long c : counts) {
    fractions[ranges.range_index(static_cast<double>(c) / period_s)] += 1.0;
  }
  for (double& f : fractions) f /= static_cast<double>(periods);
  return fractions;
}

}  // namespace cascadeserve
