#include "cascadeserve/domain.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "cascadeserve/cascade_eval.hpp"

namespace cascadeserve {

Micros ModelProfile::runtime_us(int batch) const {
  if (batch < 1) {
    throw Error("model " + model_id + ": batch size must be positive, got " +
                std::to_string(batch));
  }
  if (batch > max_profiled_batch()) {
    throw Error("model " + model_id + ": batch " + std::to_string(batch) +
                " exceeds max profiled batch " +
                std::to_string(max_profiled_batch()));
  }
  auto hi = runtime_table.lower_bound(batch);
  if (hi->first == batch) return hi->second;
  if (hi == runtime_table.begin()) {
    throw Error("model " + model_id + ": batch " + std::to_string(batch) +
                " below smallest profiled batch");
  }
  auto lo = std::prev(hi);
  const double frac = static_cast<double>(batch - lo->first) /
                      static_cast<double>(hi->first - lo->first);
  return lo->second +
         static_cast<Micros>(std::llround(frac * static_cast<double>(
                                                     hi->second - lo->second)));
}

void ModelProfile::validate() const {
  if (model_id.empty()) throw ValidationError("model with empty id");
  if (memory_bytes <= 0) {
    throw ValidationError("model " + model_id + ": memory_bytes must be > 0");
  }
  if (runtime_table.count(1) == 0) {
    throw ValidationError("model " + model_id +
                          ": runtime table must contain batch 1");
  }
  std::pair<int, Micros> prev{0, 0};
  for (const auto& [batch, latency] : runtime_table) {
    if (batch < 1) {
      throw ValidationError("model " + model_id + ": invalid batch size " +
                            std::to_string(batch));
    }
    if (latency <= 0) {
      throw ValidationError("model " + model_id +
                            ": non-positive latency at batch " +
                            std::to_string(batch));
    }
    if (prev.first > 0) {
      if (latency < prev.second) {
        throw ValidationError("model " + model_id +
                              ": total latency decreased at batch " +
                              std::to_string(batch));
      }
      // latency / batch <= prev_latency / prev_batch, cross-multiplied.
      if (static_cast<long double>(latency) * prev.first >
          static_cast<long double>(prev.second) * batch) {
        throw ValidationError("model " + model_id +
                              ": per-sample latency increased at batch " +
                              std::to_string(batch));
      }
    }
    prev = {batch, latency};
  }
}

ProfileSet::ProfileSet(std::vector<ModelProfile> models)
    : models_(std::move(models)) {
  for (std::size_t i = 0; i < models_.size(); ++i) {
    models_[i].validate();
    if (!index_.emplace(models_[i].model_id, i).second) {
      throw ValidationError("duplicate model id " + models_[i].model_id);
    }
  }
}

const ModelProfile& ProfileSet::at(const std::string& model_id) const {
  auto it = index_.find(model_id);
  if (it == index_.end()) throw Error("unknown model " + model_id);
  return models_[it->second];
}

std::vector<std::string> ProfileSet::ids_by_cost() const {
  std::vector<const ModelProfile*> sorted;
  for (const auto& m : models_) sorted.push_back(&m);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    const Micros ra = a->runtime_us(1), rb = b->runtime_us(1);
    return ra != rb ? ra < rb : a->model_id < b->model_id;
  });
  std::vector<std::string> ids;
  for (const auto* m : sorted) ids.push_back(m->model_id);
  return ids;
}

ValidationSet::ValidationSet(std::vector<ValidationRecord> records)
    : records_(std::move(records)) {
  std::set<std::string> models;
  for (const auto& r : records_) {
    for (const auto& [id, _] : r.per_model) models.insert(id);
  }
  for (const auto& id : models) {
    Column col;
    col.certainty.reserve(records_.size());
    col.correct.reserve(records_.size());
    for (const auto& r : records_) {
      auto it = r.per_model.find(id);
      if (it == r.per_model.end()) {
        throw ValidationError("record " + std::to_string(r.sample_id) +
                              " lacks model " + id);
      }
      if (it->second.scores.empty()) {
        throw ValidationError("record " + std::to_string(r.sample_id) +
                              ": empty scores for model " + id);
      }
      col.certainty.push_back(certainty(it->second.scores));
      col.correct.push_back(it->second.correct ? 1 : 0);
    }
    columns_.emplace(id, std::move(col));
  }
}

const ValidationSet::Column& ValidationSet::column(
    const std::string& model_id) const {
  auto it = columns_.find(model_id);
  if (it == columns_.end()) {
    throw Error("validation set has no records for model " + model_id);
  }
  return it->second;
}

double ValidationSet::model_accuracy(const std::string& model_id) const {
  const auto& col = column(model_id);
  if (col.correct.empty()) return 0.0;
  const auto hits = std::count(col.correct.begin(), col.correct.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(col.correct.size());
}

void ValidationSet::check_covers(const ProfileSet& profiles) const {
  if (records_.empty()) throw ValidationError("validation set is empty");
  for (const auto& m : profiles.models()) {
    if (!has_model(m.model_id)) {
      throw ValidationError("validation records lack model " + m.model_id);
    }
  }
}

int Cascade::stage_of(const std::string& model_id) const {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].model_id == model_id) return static_cast<int>(i);
  }
  return -1;
}

std::string Cascade::key() const {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    out << stages[i].model_id;
    if (i + 1 < stages.size()) out << '@' << stages[i].threshold << '>';
  }
  return out.str();
}

void Cascade::validate(const ProfileSet& profiles) const {
  if (stages.empty()) throw ValidationError("cascade has no stages");
  std::set<std::string> seen;
  Micros prev_cost = 0;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (!seen.insert(s.model_id).second) {
      throw ValidationError("cascade repeats model " + s.model_id);
    }
    if (!(s.threshold >= 0.0)) {
      throw ValidationError("cascade threshold must be >= 0 at model " +
                            s.model_id);
    }
    const Micros cost = profiles.at(s.model_id).runtime_us(1);
    if (i > 0 && cost < prev_cost) {
      throw ValidationError("cascade stage " + s.model_id +
                            " is cheaper than its predecessor");
    }
    prev_cost = cost;
  }
}

Cascade make_single_model_cascade(const std::string& model_id) {
  return Cascade{{CascadeStage{model_id, 0.0}}};
}

std::string make_replica_id(const std::string& model_id,
                            const std::string& device_id) {
  return model_id + "@" + device_id;
}

const Replica* Placement::find_replica(const std::string& replica_id) const {
  for (const auto& r : replicas) {
    if (r.replica_id == replica_id) return &r;
  }
  return nullptr;
}

std::vector<const Replica*> Placement::replicas_of_model(
    const std::string& model_id) const {
  std::vector<const Replica*> out;
  for (const auto& r : replicas) {
    if (r.model_id == model_id) out.push_back(&r);
  }
  return out;
}

std::vector<const Replica*> Placement::replicas_on_device(
    const std::string& device_id) const {
  std::vector<const Replica*> out;
  for (const auto& r : replicas) {
    if (r.device_id == device_id) out.push_back(&r);
  }
  return out;
}

bool Placement::has_device(const std::string& device_id) const {
  return std::any_of(devices.begin(), devices.end(), [&](const Device& d) {
    return d.device_id == device_id;
  });
}

std::int64_t Placement::memory_used(const std::string& device_id,
                                    const ProfileSet& profiles) const {
  std::int64_t used = 0;
  for (const auto& r : replicas) {
    if (r.device_id == device_id) used += profiles.at(r.model_id).memory_bytes;
  }
  return used;
}

std::int64_t Placement::memory_capacity(const std::string& device_id) const {
  for (const auto& d : devices) {
    if (d.device_id == device_id) return d.memory_capacity_bytes;
  }
  throw Error("unknown device " + device_id);
}

bool Placement::memory_feasible(const ProfileSet& profiles) const {
  return std::all_of(devices.begin(), devices.end(), [&](const Device& d) {
    return memory_used(d.device_id, profiles) <= d.memory_capacity_bytes;
  });
}

void Placement::validate(const ProfileSet& profiles) const {
  std::set<std::string> device_ids;
  for (const auto& d : devices) {
    if (d.memory_capacity_bytes <= 0) {
      throw ValidationError("device " + d.device_id +
                            ": memory_capacity_bytes must be > 0");
    }
    if (!device_ids.insert(d.device_id).second) {
      throw ValidationError("duplicate device id " + d.device_id);
    }
  }
  std::set<std::string> replica_ids;
  std::set<std::pair<std::string, std::string>> model_device;
  for (const auto& r : replicas) {
    if (!device_ids.count(r.device_id)) {
      throw ValidationError("replica " + r.replica_id +
                            " references unknown device " + r.device_id);
    }
    if (!profiles.contains(r.model_id)) {
      throw ValidationError("replica " + r.replica_id +
                            " references unknown model " + r.model_id);
    }
    if (!replica_ids.insert(r.replica_id).second) {
      throw ValidationError("duplicate replica id " + r.replica_id);
    }
    if (!model_device.emplace(r.model_id, r.device_id).second) {
      throw ValidationError("model " + r.model_id +
                            " has two replicas on device " + r.device_id);
    }
  }
}

int GearPlan::range_index(double qps) const {
  if (!(qps > 0.0) || qps_max <= 0.0) return 0;
  const auto idx = static_cast<long long>(std::floor(qps / range_width()));
  return static_cast<int>(std::min<long long>(idx, n_ranges - 1));
}

void GearPlan::validate(const ProfileSet& profiles) const {
  if (!(qps_max > 0.0)) throw ValidationError("plan qps_max must be > 0");
  if (n_ranges < 1) throw ValidationError("plan n_ranges must be >= 1");
  if (static_cast<int>(gears.size()) != n_ranges) {
    throw ValidationError("plan has " + std::to_string(gears.size()) +
                          " gears for " + std::to_string(n_ranges) + " ranges");
  }
  if (slo.is_latency() && slo.latency_target_us <= 0) {
    throw ValidationError("latency SLO target must be positive");
  }
  if (!slo.is_latency() &&
      !(slo.accuracy_target >= 0.0 && slo.accuracy_target <= 1.0)) {
    throw ValidationError("accuracy SLO target must lie in [0, 1]");
  }
  placement.validate(profiles);
  for (std::size_t g = 0; g < gears.size(); ++g) {
    const auto& gear = gears[g];
    gear.cascade.validate(profiles);
    for (const auto& [rid, len] : gear.min_queue_length) {
      if (!placement.find_replica(rid)) {
        throw ValidationError("gear " + std::to_string(g) +
                              ": min_queue_length for unknown replica " + rid);
      }
      if (len < 1) {
        throw ValidationError("gear " + std::to_string(g) +
                              ": min_queue_length must be positive");
      }
    }
    for (const auto& [rid, q] : gear.load_weights) {
      const Replica* r = placement.find_replica(rid);
      if (!r) {
        throw ValidationError("gear " + std::to_string(g) +
                              ": load weight for unknown replica " + rid);
      }
      if (!gear.cascade.uses(r->model_id)) {
        throw ValidationError("gear " + std::to_string(g) + ": replica " + rid +
                              " is not part of the gear's cascade");
      }
      if (!(q >= 0.0)) {
        throw ValidationError("gear " + std::to_string(g) +
                              ": negative load weight for " + rid);
      }
    }
    for (const auto& stage : gear.cascade.stages) {
      if (placement.replicas_of_model(stage.model_id).empty()) {
        throw ValidationError("gear " + std::to_string(g) + ": model " +
                              stage.model_id + " has no replica");
      }
    }
  }
}

std::vector<int> WorkloadTrace::per_second_counts() const {
  const auto seconds = static_cast<std::size_t>(
      (duration_us + kMicrosPerSecond - 1) / kMicrosPerSecond);
  std::vector<int> counts(seconds, 0);
  for (Micros t : arrivals) {
    const auto s = static_cast<std::size_t>(t / kMicrosPerSecond);
    if (s < counts.size()) ++counts[s];
  }
  return counts;
}

void WorkloadTrace::validate() const {
  if (duration_us < 0) throw ValidationError("trace duration is negative");
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    if (arrivals[i] < 0) throw ValidationError("negative arrival timestamp");
    if (i > 0 && arrivals[i] < arrivals[i - 1]) {
      throw ValidationError("trace timestamps decrease at line " +
                            std::to_string(i + 1));
    }
    if (arrivals[i] >= duration_us) {
      throw ValidationError("arrival " + std::to_string(arrivals[i]) +
                            " not below trace duration");
    }
  }
}

}  // namespace cascadeserve
