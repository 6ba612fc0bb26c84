#pragma once

#include <cstdint>
#include <vector>

#include "cascadeserve/domain.hpp"

namespace cascadeserve {

/// Mock model zoo. Model i (cheapest first) runs size_ratios[i] times slower
/// and uses that many times more memory than the base. A fraction of the
/// samples is easy: every model gets those right and the cheapest is already
/// confident. The rest are difficult: only models skilled enough to beat the
/// sample's difficulty get them right, and wrong answers come with low
/// certainty.
struct SyntheticSpec {
  int n_models = 3;
  std::vector<double> size_ratios{1.0, 4.0, 16.0};
  double easy_fraction = 0.8;
  int n_samples = 2000;
  int n_classes = 3;
  Micros base_runtime_us = 1000;
  std::int64_t base_memory_bytes = 256LL << 20;
  int max_batch = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticWorkload {
  ProfileSet profiles;
  ValidationSet validation;
  /// Per sample: 1 if easy.
  std::vector<char> easy;
};

/// Deterministic for a fixed spec. Models are named m0, m1, ... in cost
/// order. Exactly round(easy_fraction * n_samples) samples are easy.
SyntheticWorkload generate_synthetic(const SyntheticSpec& spec);

/// Devices d0..d{n-1} with equal memory. Throws ValidationError for n < 1.
std::vector<Device> uniform_devices(int n, std::int64_t memory_capacity_bytes);

}  // namespace cascadeserve
