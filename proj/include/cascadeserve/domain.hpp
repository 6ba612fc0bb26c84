#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cascadeserve {

/// Microseconds. Every timestamp and duration in the library uses this unit.
using Micros = std::int64_t;

constexpr Micros kMicrosPerSecond = 1'000'000;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Profiled cost of one model: execution latency per batch size and the
/// accelerator memory one replica occupies.
struct ModelProfile {
  std::string model_id;
  std::int64_t memory_bytes = 0;
  std::map<int, Micros> runtime_table;

  int max_profiled_batch() const {
    return runtime_table.empty() ? 0 : runtime_table.rbegin()->first;
  }

  /// Latency of a batch. Batch sizes between profiled points are linearly
  /// interpolated; anything above max_profiled_batch() throws.
  Micros runtime_us(int batch) const;

  /// Batch-1 runtime in seconds, the per-sample cost used by the load balancer.
  double per_sample_seconds() const {
    return static_cast<double>(runtime_us(1)) / kMicrosPerSecond;
  }

  /// Throws ValidationError naming the model and batch on any violation.
  void validate() const;

  bool operator==(const ModelProfile&) const = default;
};

class ProfileSet {
 public:
  ProfileSet() = default;
  explicit ProfileSet(std::vector<ModelProfile> models);

  const std::vector<ModelProfile>& models() const { return models_; }
  std::size_t size() const { return models_.size(); }
  bool contains(const std::string& model_id) const {
    return index_.count(model_id) > 0;
  }
  const ModelProfile& at(const std::string& model_id) const;

  /// Model ids ordered cheap to expensive by batch-1 runtime, ties by id.
  std::vector<std::string> ids_by_cost() const;

  bool operator==(const ProfileSet& other) const {
    return models_ == other.models_;
  }

 private:
  std::vector<ModelProfile> models_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ModelOutput {
  std::vector<double> scores;
  bool correct = false;

  bool operator==(const ModelOutput&) const = default;
};

struct ValidationRecord {
  std::int64_t sample_id = 0;
  std::map<std::string, ModelOutput> per_model;

  bool operator==(const ValidationRecord&) const = default;
};

/// Validation records plus a per-model columnar index of certainty and
/// correctness, built once at construction.
class ValidationSet {
 public:
  struct Column {
    std::vector<double> certainty;
    std::vector<char> correct;
  };

  ValidationSet() = default;
  explicit ValidationSet(std::vector<ValidationRecord> records);

  const std::vector<ValidationRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  bool has_model(const std::string& model_id) const {
    return columns_.count(model_id) > 0;
  }
  const Column& column(const std::string& model_id) const;

  /// Standalone accuracy of one model over all records.
  double model_accuracy(const std::string& model_id) const;

  /// Throws unless every record carries every profiled model.
  void check_covers(const ProfileSet& profiles) const;

  bool operator==(const ValidationSet& other) const {
    return records_ == other.records_;
  }

 private:
  std::vector<ValidationRecord> records_;
  std::unordered_map<std::string, Column> columns_;
};

struct CascadeStage {
  std::string model_id;
  double threshold = 0.0;  // ignored on the final stage

  bool operator==(const CascadeStage&) const = default;
};

struct Cascade {
  std::vector<CascadeStage> stages;

  std::size_t size() const { return stages.size(); }
  const std::string& first_model() const { return stages.front().model_id; }
  /// Stage position of a model, or -1.
  int stage_of(const std::string& model_id) const;
  bool uses(const std::string& model_id) const { return stage_of(model_id) >= 0; }

  /// Canonical text form, e.g. "a@0.25>b". Final-stage thresholds are dropped
  /// so that two cascades differing only there compare equal.
  std::string key() const;

  /// Throws on an empty cascade, duplicate models, negative thresholds, or
  /// stages out of cheap-to-expensive order.
  void validate(const ProfileSet& profiles) const;

  bool operator==(const Cascade& other) const { return key() == other.key(); }
};

Cascade make_single_model_cascade(const std::string& model_id);

struct CascadeEval {
  double accuracy = 0.0;
  /// Fraction of all samples reaching each stage's model.
  std::map<std::string, double> forward_fraction;
  /// Expected batch-1 microseconds per sample.
  double mean_cost = 0.0;

  bool operator==(const CascadeEval&) const = default;
};

struct Device {
  std::string device_id;
  std::int64_t memory_capacity_bytes = 0;

  bool operator==(const Device&) const = default;
};

struct Replica {
  std::string replica_id;
  std::string model_id;
  std::string device_id;

  bool operator==(const Replica&) const = default;
};

std::string make_replica_id(const std::string& model_id,
                            const std::string& device_id);

struct Placement {
  std::vector<Device> devices;
  std::vector<Replica> replicas;

  const Replica* find_replica(const std::string& replica_id) const;
  std::vector<const Replica*> replicas_of_model(const std::string& model_id) const;
  std::vector<const Replica*> replicas_on_device(const std::string& device_id) const;
  bool has_device(const std::string& device_id) const;
  std::int64_t memory_used(const std::string& device_id,
                           const ProfileSet& profiles) const;
  std::int64_t memory_capacity(const std::string& device_id) const;
  /// True when every device's resident replicas fit into its memory.
  bool memory_feasible(const ProfileSet& profiles) const;
  /// Structural checks: known devices/models, unique ids, one replica of a
  /// model per device.
  void validate(const ProfileSet& profiles) const;

  bool operator==(const Placement&) const = default;
};

/// Serving configuration for one QPS range.
struct Gear {
  Cascade cascade;
  std::map<std::string, int> min_queue_length;  // replica_id -> length
  std::map<std::string, double> load_weights;   // replica_id -> assigned QPS

  int min_queue_for(const std::string& replica_id) const {
    auto it = min_queue_length.find(replica_id);
    return it == min_queue_length.end() ? 1 : it->second;
  }

  bool operator==(const Gear&) const = default;
};

enum class SloKind { kLatency, kAccuracy };

struct Slo {
  SloKind kind = SloKind::kLatency;
  Micros latency_target_us = 0;
  double accuracy_target = 0.0;

  static Slo latency(Micros target_us) { return {SloKind::kLatency, target_us, 0.0}; }
  static Slo accuracy(double target) { return {SloKind::kAccuracy, 0, target}; }
  bool is_latency() const { return kind == SloKind::kLatency; }

  bool operator==(const Slo&) const = default;
};

struct GearPlan {
  Placement placement;
  double qps_max = 0.0;
  int n_ranges = 1;
  std::vector<Gear> gears;
  Slo slo;

  double range_width() const { return qps_max / n_ranges; }
  /// Half-open ranges; anything at or above qps_max maps to the top range.
  int range_index(double qps) const;
  double range_top_qps(int range) const { return (range + 1) * range_width(); }

  void validate(const ProfileSet& profiles) const;

  bool operator==(const GearPlan&) const = default;
};

struct WorkloadTrace {
  std::vector<Micros> arrivals;
  Micros duration_us = 0;

  std::size_t size() const { return arrivals.size(); }
  bool empty() const { return arrivals.empty(); }
  /// Arrival count per whole second of the trace duration.
  std::vector<int> per_second_counts() const;
  void validate() const;

  bool operator==(const WorkloadTrace&) const = default;
};

struct QpsDistribution {
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  bool operator==(const QpsDistribution&) const = default;
};

}  // namespace cascadeserve
