#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cascadeserve/domain.hpp"

namespace cascadeserve {

/// Top score minus runner-up. A single-entity output is compared against an
/// implicit zero, and the result never drops below zero.
double certainty(std::span<const double> scores);

/// Walks every validation record through the cascade: a record stops at the
/// first stage whose certainty reaches that stage's threshold, or at the last
/// stage, and is scored by the stopping model's correctness.
CascadeEval evaluate_cascade(const Cascade& cascade,
                             const ValidationSet& validation,
                             const ProfileSet& profiles);

/// Per-model QPS a cascade induces at a total arrival rate.
std::map<std::string, double> model_qps_demand(const CascadeEval& eval,
                                               double total_qps);

using EvaluatedCascade = std::pair<Cascade, CascadeEval>;

/// Keeps every element not dominated on (higher accuracy, lower mean cost).
/// Exact ties survive together. Input order is preserved.
std::vector<EvaluatedCascade> pareto_filter(
    const std::vector<EvaluatedCascade>& evals);

/// Candidate thresholds per model, strictly increasing and starting at 0.
using ThresholdGrid = std::map<std::string, std::vector<double>>;

/// Thresholds at the empirical certainty quantiles k/levels (nearest rank)
/// for k = 1..levels-1, plus 0.
ThresholdGrid build_threshold_grid(const ValidationSet& validation,
                                   const ProfileSet& profiles, int levels = 10);

/// Random model subsets ordered cheap to expensive, with thresholds from the
/// grid. The single-model cascades of the cheapest and the most accurate model
/// are always included. Duplicates are removed; the order is deterministic
/// for a fixed seed.
std::vector<Cascade> sample_cascades(const ProfileSet& profiles,
                                     const ValidationSet& validation,
                                     const ThresholdGrid& grid, int n_samples,
                                     std::uint64_t rng_seed);

/// Most accurate model by standalone accuracy; ties go to the cheaper model.
std::string most_accurate_model(const ProfileSet& profiles,
                                const ValidationSet& validation);

}  // namespace cascadeserve
