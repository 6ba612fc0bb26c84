#include "cascadeserve/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace cascadeserve {

void SyntheticSpec::validate() const {
  if (n_models < 1) throw ValidationError("synthetic workload needs at least one model");
  if (size_ratios.size() != static_cast<std::size_t>(n_models)) {
    throw ValidationError("synthetic workload has " + std::to_string(size_ratios.size()) +
                          " size ratios for " + std::to_string(n_models) + " models");
  }
  for (std::size_t i = 0; i < size_ratios.size(); ++i) {
    if (!(size_ratios[i] > 0.0)) throw ValidationError("size ratios must be positive");
    if (i > 0 && size_ratios[i] < size_ratios[i - 1]) {
      throw ValidationError("size ratios must be non-decreasing");
    }
  }
  if (!(easy_fraction >= 0.0 && easy_fraction <= 1.0)) {
    throw ValidationError("easy fraction must lie in [0, 1]");
  }
  if (n_samples < 1) throw ValidationError("synthetic workload needs at least one sample");
  if (n_classes < 2) throw ValidationError("synthetic workload needs at least two classes");
  if (base_runtime_us < 1) throw ValidationError("base runtime must be positive");
  if (base_memory_bytes < 1) throw ValidationError("base memory must be positive");
  if (max_batch < 1) throw ValidationError("max batch must be positive");
}

SyntheticWorkload generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);

  std::vector<ModelProfile> models;
  for (int i = 0; i < spec.n_models; ++i) {
    const double ratio = spec.size_ratios[static_cast<std::size_t>(i)];
    ModelProfile p;
    p.model_id = "m" + std::to_string(i);
    p.memory_bytes =
        static_cast<std::int64_t>(std::llround(spec.base_memory_bytes * ratio));
    const double rt1 = static_cast<double>(spec.base_runtime_us) * ratio;
    for (int b = 1; b <= spec.max_batch; b *= 2) {
      p.runtime_table[b] =
          std::max<Micros>(1, std::llround(rt1 * (1.0 + 0.25 * (b - 1))));
    }
    if (p.runtime_table.rbegin()->first != spec.max_batch) {
      p.runtime_table[spec.max_batch] =
          std::max<Micros>(1, std::llround(rt1 * (1.0 + 0.25 * (spec.max_batch - 1))));
    }
    models.push_back(std::move(p));
  }

  const auto n = static_cast<std::size_t>(spec.n_samples);
  const auto n_easy = static_cast<std::size_t>(std::llround(spec.easy_fraction * spec.n_samples));
  std::vector<char> easy(n, 0);
  std::fill(easy.begin(), easy.begin() + static_cast<std::ptrdiff_t>(n_easy), 1);
  std::shuffle(easy.begin(), easy.end(), rng);

  std::vector<ValidationRecord> records;
  records.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double difficulty = easy[s] ? 0.45 * unit(rng) : 0.5 + 0.5 * unit(rng);
    ValidationRecord rec;
    rec.sample_id = static_cast<std::int64_t>(s);
    for (int i = 0; i < spec.n_models; ++i) {
      const double skill =
          spec.n_models == 1 ? 0.95 : 0.5 + 0.45 * i / (spec.n_models - 1);
      const double margin = skill - difficulty;
      ModelOutput out;
      out.correct = margin > 0.0;
      double cert = out.correct
                        ? std::clamp(0.25 + 1.5 * margin + noise(rng), 0.25, 0.98)
                        : 0.3 * unit(rng);
      // Winning class first, the others share what is left evenly.
      const double rest = (1.0 - cert) / spec.n_classes;
      out.scores.assign(static_cast<std::size_t>(spec.n_classes), rest);
      out.scores[0] = cert + rest;
      std::shuffle(out.scores.begin(), out.scores.end(), rng);
      rec.per_model[models[static_cast<std::size_t>(i)].model_id] = std::move(out);
    }
    records.push_back(std::move(rec));
  }
  return {ProfileSet(std::move(models)), ValidationSet(std::move(records)), std::move(easy)};
}

std::vector<Device> uniform_devices(int n, std::int64_t memory_capacity_bytes) {
  if (n < 1) throw ValidationError("need at least one device");
  if (memory_capacity_bytes < 1) throw ValidationError("device memory must be positive");
  std::vector<Device> devices;
  for (int i = 0; i < n; ++i) {
    devices.push_back({"d" + std::to_string(i), memory_capacity_bytes});
  }
  return devices;
}

}  // namespace cascadeserve
