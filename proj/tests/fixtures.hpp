#pragma once

// Small hand-built inputs shared by the unit tests.

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cascadeserve/domain.hpp"

namespace fixtures {

using namespace cascadeserve;

inline ModelProfile profile(const std::string& id, std::map<int, Micros> table,
                            std::int64_t memory = 1000) {
  ModelProfile p;
  p.model_id = id;
  p.memory_bytes = memory;
  p.runtime_table = std::move(table);
  return p;
}

/// Per sample, per model: (certainty, correct). Scores are {certainty, 0}.
using Outcomes = std::vector<std::map<std::string, std::pair<double, bool>>>;

inline ValidationSet validation(const Outcomes& rows) {
  std::vector<ValidationRecord> records;
  std::int64_t id = 0;
  for (const auto& row : rows) {
    ValidationRecord r;
    r.sample_id = id++;
    for (const auto& [m, oc] : row) {
      r.per_model[m] = ModelOutput{{oc.first, 0.0}, oc.second};
    }
    records.push_back(std::move(r));
  }
  return ValidationSet(std::move(records));
}

/// Every sample correct with the given certainty for each model.
inline ValidationSet uniform_validation(const std::vector<std::string>& models, int n,
                                        double certainty = 0.9, bool correct = true) {
  Outcomes rows(static_cast<std::size_t>(n));
  for (auto& row : rows) {
    for (const auto& m : models) row[m] = {certainty, correct};
  }
  return validation(rows);
}

inline Cascade cascade(std::initializer_list<std::pair<std::string, double>> stages) {
  Cascade c;
  for (const auto& [m, t] : stages) c.stages.push_back({m, t});
  return c;
}

/// One replica per (model, device) pair listed.
inline Placement placement(const std::vector<Device>& devices,
                           const std::vector<std::pair<std::string, std::string>>& pairs) {
  Placement p;
  p.devices = devices;
  for (const auto& [m, d] : pairs) p.replicas.push_back({make_replica_id(m, d), m, d});
  return p;
}

/// Every range uses the same cascade; weights split evenly across each
/// model's replicas; all minimum queue lengths 1 except `first_min_q` on the
/// first stage.
inline GearPlan uniform_plan(const Placement& pl, const Cascade& c, double qps_max,
                             int n_ranges, Slo slo, int first_min_q = 1) {
  GearPlan plan;
  plan.placement = pl;
  plan.qps_max = qps_max;
  plan.n_ranges = n_ranges;
  plan.slo = slo;
  for (int i = 0; i < n_ranges; ++i) {
    Gear g;
    g.cascade = c;
    for (const auto& st : c.stages) {
      const auto reps = pl.replicas_of_model(st.model_id);
      for (const Replica* r : reps) {
        g.min_queue_length[r->replica_id] = st.model_id == c.first_model() ? first_min_q : 1;
        g.load_weights[r->replica_id] = 1.0;
      }
    }
    plan.gears.push_back(std::move(g));
  }
  return plan;
}

}  // namespace fixtures
