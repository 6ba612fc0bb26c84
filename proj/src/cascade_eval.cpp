#include "cascadeserve/cascade_eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace cascadeserve {

double certainty(std::span<const double> scores) {
  if (scores.empty()) throw Error("certainty of an empty score list");
  double top = scores[0];
  double second = 0.0;
  if (scores.size() > 1) {
    second = scores[1];
    if (second > top) std::swap(top, second);
    for (std::size_t i = 2; i < scores.size(); ++i) {
      if (scores[i] > top) {
        second = top;
        top = scores[i];
      } else if (scores[i] > second) {
        second = scores[i];
      }
    }
  }
  return std::max(0.0, top - second);
}

CascadeEval evaluate_cascade(const Cascade& cascade,
                             const ValidationSet& validation,
                             const ProfileSet& profiles) {
  if (cascade.stages.empty()) throw Error("cannot evaluate an empty cascade");
  if (validation.empty()) throw Error("cannot evaluate on an empty validation set");
  const std::size_t n_stages = cascade.size();
  std::vector<const ValidationSet::Column*> columns;
  for (const auto& s : cascade.stages) {
    if (!profiles.contains(s.model_id)) {
      throw Error("cascade model " + s.model_id + " has no profile");
    }
    columns.push_back(&validation.column(s.model_id));
  }

  std::vector<std::size_t> reached(n_stages, 0);
  std::size_t hits = 0;
  const std::size_t n = validation.size();
  for (std::size_t rec = 0; rec < n; ++rec) {
    for (std::size_t k = 0; k < n_stages; ++k) {
      ++reached[k];
      const bool last = k + 1 == n_stages;
      if (last || columns[k]->certainty[rec] >= cascade.stages[k].threshold) {
        hits += columns[k]->correct[rec] ? 1 : 0;
        break;
      }
    }
  }

  CascadeEval eval;
  eval.accuracy = static_cast<double>(hits) / static_cast<double>(n);
  for (std::size_t k = 0; k < n_stages; ++k) {
    const double frac = static_cast<double>(reached[k]) / static_cast<double>(n);
    const auto& id = cascade.stages[k].model_id;
    eval.forward_fraction[id] = frac;
    eval.mean_cost += frac * static_cast<double>(profiles.at(id).runtime_us(1));
  }
  return eval;
}

std::map<std::string, double> model_qps_demand(const CascadeEval& eval,
                                               double total_qps) {
  if (total_qps < 0.0) throw Error("total QPS must be non-negative");
  std::map<std::string, double> demand;
  for (const auto& [id, frac] : eval.forward_fraction) demand[id] = frac * total_qps;
  return demand;
}

std::vector<EvaluatedCascade> pareto_filter(
    const std::vector<EvaluatedCascade>& evals) {
  std::vector<std::size_t> order(evals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = evals[a].second;
    const auto& eb = evals[b].second;
    if (ea.mean_cost != eb.mean_cost) return ea.mean_cost < eb.mean_cost;
    return ea.accuracy > eb.accuracy;
  });

  // Sweep cost groups in increasing order. An element is dominated by a
  // strictly cheaper element with accuracy >= its own, or by an equally cheap
  // element with strictly higher accuracy.
  std::vector<char> keep(evals.size(), 0);
  double best_cheaper = -1.0;
  bool any_cheaper = false;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    const double cost = evals[order[i]].second.mean_cost;
    while (j < order.size() && evals[order[j]].second.mean_cost == cost) ++j;
    const double group_best = evals[order[i]].second.accuracy;
    for (std::size_t k = i; k < j; ++k) {
      const double acc = evals[order[k]].second.accuracy;
      const bool dominated = (any_cheaper && best_cheaper >= acc) || group_best > acc;
      keep[order[k]] = dominated ? 0 : 1;
    }
    best_cheaper = any_cheaper ? std::max(best_cheaper, group_best) : group_best;
    any_cheaper = true;
    i = j;
  }

  std::vector<EvaluatedCascade> out;
  for (std::size_t k = 0; k < evals.size(); ++k) {
    if (keep[k]) out.push_back(evals[k]);
  }
  return out;
}

ThresholdGrid build_threshold_grid(const ValidationSet& validation,
                                   const ProfileSet& profiles, int levels) {
  if (levels < 2) throw Error("threshold grid needs at least 2 levels");
  ThresholdGrid grid;
  for (const auto& m : profiles.models()) {
    std::vector<double> sorted = validation.column(m.model_id).certainty;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> thresholds{0.0};
    const auto n = static_cast<double>(sorted.size());
    for (int k = 1; k < levels && !sorted.empty(); ++k) {
      const double q = static_cast<double>(k) / levels;
      auto rank = static_cast<std::size_t>(std::ceil(q * n));
      rank = std::clamp<std::size_t>(rank, 1, sorted.size());
      const double value = sorted[rank - 1];
      if (value > thresholds.back()) thresholds.push_back(value);
    }
    grid.emplace(m.model_id, std::move(thresholds));
  }
  return grid;
}

std::string most_accurate_model(const ProfileSet& profiles,
                                const ValidationSet& validation) {
  std::string best;
  double best_acc = -1.0;
  for (const auto& id : profiles.ids_by_cost()) {
    const double acc = validation.model_accuracy(id);
    if (acc > best_acc) {
      best_acc = acc;
      best = id;
    }
  }
  return best;
}

std::vector<Cascade> sample_cascades(const ProfileSet& profiles,
                                     const ValidationSet& validation,
                                     const ThresholdGrid& grid, int n_samples,
                                     std::uint64_t rng_seed) {
  if (n_samples < 1) throw Error("sample_cascades: n_samples must be >= 1");
  if (profiles.size() == 0) throw Error("sample_cascades: no models");
  const auto by_cost = profiles.ids_by_cost();

  std::vector<Cascade> out;
  std::set<std::string> seen;
  auto add = [&](Cascade c) {
    c.stages.back().threshold = 0.0;
    if (seen.insert(c.key()).second) out.push_back(std::move(c));
  };
  add(make_single_model_cascade(by_cost.front()));
  add(make_single_model_cascade(most_accurate_model(profiles, validation)));

  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<std::size_t> length_dist(1, by_cost.size());
  for (int s = 0; s < n_samples; ++s) {
    const std::size_t len = length_dist(rng);
    std::vector<std::size_t> idx(by_cost.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(len);
    std::sort(idx.begin(), idx.end());

    Cascade c;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      CascadeStage stage{by_cost[idx[k]], 0.0};
      if (k + 1 < idx.size()) {
        const auto it = grid.find(stage.model_id);
        if (it != grid.end() && !it->second.empty()) {
          std::uniform_int_distribution<std::size_t> pick(0, it->second.size() - 1);
          stage.threshold = it->second[pick(rng)];
        }
      }
      c.stages.push_back(std::move(stage));
    }
    add(std::move(c));
  }
  return out;
}

}  // namespace cascadeserve
