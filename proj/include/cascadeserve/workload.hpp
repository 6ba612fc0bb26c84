#pragma once

#include <cstdint>
#include <vector>

#include "cascadeserve/domain.hpp"

namespace cascadeserve {

/// weight_i proportional to 1 / (i + 1)^s; the lowest range is the most
/// frequent.
QpsDistribution zipf_distribution(int n_ranges, double s = 1.1);

/// Rebuilds a trace so that each second's count is round(count * target / max)
/// with the new arrivals spread evenly inside the second.
WorkloadTrace scale_trace(const WorkloadTrace& trace, double max_qps);

/// Evenly spaced open-loop arrivals at a fixed rate.
WorkloadTrace constant_rate_trace(double qps, Micros duration_us,
                                  Micros start_us = 0);

struct TraceSegment {
  double qps = 0.0;
  Micros duration_us = 0;
};

/// Piecewise-constant rate, segments back to back.
WorkloadTrace step_trace(const std::vector<TraceSegment>& segments);

/// One second at a time: draw a QPS range from the distribution, then a rate
/// uniformly inside it. The returned per-second ranges are what a monitor
/// should observe.
struct ZipfTrace {
  WorkloadTrace trace;
  std::vector<int> second_ranges;
};
ZipfTrace zipf_trace(const QpsDistribution& dist, double qps_max, int seconds,
                     std::uint64_t seed);

/// Fraction of measurement periods whose measured QPS falls into each range.
std::vector<double> observed_range_fractions(const WorkloadTrace& trace,
                                             double qps_max, int n_ranges,
                                             Micros period_us);

}  // namespace cascadeserve
