#include <doctest.h>

#include <algorithm>
#include <set>

#include "../fixtures.hpp"
#include "../oracles.hpp"
#include "cascadeserve/io.hpp"
#include "cascadeserve/planner.hpp"
#include "cascadeserve/synthetic.hpp"
#include "cascadeserve/workload.hpp"

using namespace cascadeserve;
using fixtures::profile;

namespace {

constexpr std::int64_t kGiB = 1LL << 30;

PlannerConfig quick_config(std::uint64_t seed = 0) {
  PlannerConfig c;
  c.n_samples = 300;
  c.seed = seed;
  return c;
}

struct Synthetic {
  SyntheticWorkload w = generate_synthetic(SyntheticSpec{});
  std::vector<Device> devices = uniform_devices(2, 6 * kGiB);

  GearPlanner planner(Slo slo, double qps_max, int n_ranges, PlannerConfig config = quick_config()) {
    return GearPlanner(w.profiles, devices, w.validation, zipf_distribution(n_ranges, 1.1), slo,
                       qps_max, n_ranges, config);
  }
};

/// Two models where half the records forward from a to b.
struct TwoModels {
  ProfileSet profiles;
  ValidationSet validation;
  TwoModels(std::int64_t mem_a, std::int64_t mem_b, std::map<int, Micros> rt_a = {{1, 1000}},
            std::map<int, Micros> rt_b = {{1, 4000}}) {
    profiles = ProfileSet({profile("a", rt_a, mem_a), profile("b", rt_b, mem_b)});
    fixtures::Outcomes rows;
    for (int i = 0; i < 40; ++i) {
      rows.push_back({{"a", {i % 2 ? 0.9 : 0.1, i % 4 != 0}}, {"b", {0.9, true}}});
    }
    validation = fixtures::validation(rows);
  }
};

void set_cascade(GearPlanner& planner, PlannerState& state, const Cascade& c) {
  for (int r = 0; r < state.plan.n_ranges; ++r) {
    Gear& g = state.plan.gears[static_cast<std::size_t>(r)];
    g.cascade = c;
    g.min_queue_length.clear();
    for (const auto& st : c.stages) {
      for (const Replica* rep : state.plan.placement.replicas_of_model(st.model_id)) {
        g.min_queue_length[rep->replica_id] = 1;
      }
    }
    g.load_weights = planner.balance_gear(state.plan.placement, c, state.plan.range_top_qps(r))
                         .value_or(std::map<std::string, double>{});
  }
  CandidateCascade cand;
  cand.cascade = c;
  cand.eval = planner.eval_of(c);
  state.candidates[c.key()] = cand;
}

}  // namespace

TEST_CASE("init_plan replicates every model on every device") {
  Synthetic s;
  auto devices3 = uniform_devices(3, 6 * kGiB);
  SyntheticSpec two;
  two.n_models = 2;
  two.size_ratios = {1, 4};
  const auto w2 = generate_synthetic(two);
  GearPlanner p(w2.profiles, devices3, w2.validation, zipf_distribution(2, 1.1),
                Slo::latency(50'000), 100, 2, quick_config());
  const auto state = p.init_plan();
  CHECK(state.plan.placement.replicas.size() == 6);
  for (const auto& g : state.plan.gears) {
    CHECK(g.cascade.stages.empty());
    for (const auto& [rid, k] : g.min_queue_length) CHECK(k == 1);
  }

  const auto one = TwoModels(100, 100);
  ProfileSet single({one.profiles.at("a")});
  GearPlanner p1(single, {{"d", 1000}}, one.validation, QpsDistribution{{1.0}},
                 Slo::latency(50'000), 10, 1, quick_config());
  const auto s1 = p1.init_plan();
  REQUIRE(s1.plan.placement.replicas.size() == 1);
  CHECK(s1.plan.gears[0].min_queue_for(s1.plan.placement.replicas[0].replica_id) == 1);
}

TEST_CASE("init_plan records memory overallocation") {
  SyntheticSpec five;
  five.n_models = 5;
  five.size_ratios = {1, 2, 4, 8, 16};
  const auto w = generate_synthetic(five);
  const auto devices = uniform_devices(2, 4 * kGiB);
  GearPlanner p(w.profiles, devices, w.validation, zipf_distribution(2, 1.1), Slo::latency(50'000),
                100, 2, quick_config());
  const auto state = p.init_plan();
  CHECK(state.plan.placement.replicas.size() == 10);
  // 256 MiB * (1 + 2 + 4 + 8 + 16) per device
  const std::int64_t per_device = 256LL * 1024 * 1024 * 31;
  for (const auto& d : devices) {
    CHECK(state.plan.placement.memory_used(d.device_id, w.profiles) == per_device);
    CHECK(per_device - d.memory_capacity_bytes == 3840LL * 1024 * 1024);
  }
  CHECK_FALSE(state.plan.placement.memory_feasible(w.profiles));
}

TEST_CASE("planner rejects malformed inputs") {
  Synthetic s;
  CHECK_THROWS(GearPlanner(s.w.profiles, {}, s.w.validation, zipf_distribution(2, 1.1),
                           Slo::latency(1000), 10, 2));
  CHECK_THROWS(GearPlanner(s.w.profiles, s.devices, s.w.validation, zipf_distribution(3, 1.1),
                           Slo::latency(1000), 10, 2));
  CHECK_THROWS(GearPlanner(s.w.profiles, s.devices, s.w.validation, zipf_distribution(2, 1.1),
                           Slo::latency(1000), 0, 2));
  CHECK_THROWS(GearPlanner(s.w.profiles, s.devices, s.w.validation, zipf_distribution(2, 1.1),
                           Slo::latency(0), 10, 2));
}

TEST_CASE("sp1 guarantees the singletons and grows the candidate set") {
  Synthetic s;
  auto p = s.planner(Slo::latency(50'000), 400, 4);
  auto state = p.init_plan();
  CHECK(p.sp1_search_cascades(PlannerError::success(), state).ok());
  CHECK_FALSE(state.candidates.empty());
  CHECK(state.candidates.count("m0") == 1);
  CHECK(state.candidates.count(most_accurate_model(s.w.profiles, s.w.validation)) == 1);
  for (const auto& [k, c] : state.candidates) CHECK(c.throughput > 0.0);

  std::set<std::string> before;
  for (int round = 0; round < 3; ++round) {
    for (const auto& [k, c] : state.candidates) before.insert(k);
    p.sp1_search_cascades(PlannerError::success(), state);
    std::set<std::string> after;
    for (const auto& [k, c] : state.candidates) after.insert(k);
    CHECK(std::includes(after.begin(), after.end(), before.begin(), before.end()));
  }

  CHECK_THROWS_AS(p.sp1_search_cascades(PlannerError::infeasible(0, "x"), state), UserInfeasible);
}

TEST_CASE("sp2 starts at the most accurate candidate and downgrades one range") {
  Synthetic s;
  auto p = s.planner(Slo::latency(50'000), 400, 4);
  auto state = p.init_plan();
  p.sp1_search_cascades(PlannerError::success(), state);
  const auto order = p.downgrade_order(state);
  REQUIRE(order.size() >= 2);
  double best = 0;
  for (const auto& [k, c] : state.candidates) best = std::max(best, c.eval.accuracy);
  CHECK(order.front()->eval.accuracy == best);

  CHECK(p.sp2_assign_cascades(PlannerError::success(), state).ok());
  for (const auto& g : state.plan.gears) CHECK(g.cascade == order.front()->cascade);

  const auto before = state.plan;
  CHECK(p.sp2_assign_cascades(PlannerError::infeasible(3, "slow"), state).ok());
  for (int r = 0; r < 3; ++r) CHECK(state.plan.gears[r] == before.gears[r]);
  CHECK(state.plan.gears[3].cascade == order[1]->cascade);
  CHECK(state.downgrades[3] == 1);

  // walk range 3 to the bottom of the order, then one more is an error
  PlannerError e = PlannerError::success();
  for (std::size_t k = 2; k <= order.size(); ++k) {
    e = p.sp2_assign_cascades(PlannerError::infeasible(3, "slow"), state);
  }
  CHECK_FALSE(e.ok());
  CHECK(e.qps_range_index == 3);
  CHECK_FALSE(p.can_downgrade(state, 3));
}

TEST_CASE("sp2 swaps in a dominating candidate once feasible") {
  Synthetic s;
  auto p = s.planner(Slo::latency(200'000), 100, 2);
  auto state = p.init_plan();
  p.sp1_search_cascades(PlannerError::success(), state);
  p.sp2_assign_cascades(PlannerError::success(), state);
  p.sp3_place_models(PlannerError::success(), state);
  REQUIRE(p.sp4_tune_batch_sizes(PlannerError::success(), state).ok());
  REQUIRE(state.feasible_once);

  const auto order = p.downgrade_order(state);
  const CandidateCascade* worst = order.back();
  set_cascade(p, state, worst->cascade);
  state.candidates[worst->cascade.key()].throughput = worst->throughput;
  const double acc_before = p.non_slo_badness(state.plan);
  const auto cascade_before = state.plan.gears[1].cascade;

  CHECK(p.sp2_assign_cascades(PlannerError::success(), state).ok());
  CHECK_FALSE(state.plan.gears[1].cascade == cascade_before);
  CHECK(p.non_slo_badness(state.plan) <= acc_before);
  CHECK(p.plan_feasible(state.plan));
}

TEST_CASE("sp3 keeps full replication when everything fits") {
  Synthetic s;
  auto p = s.planner(Slo::latency(50'000), 100, 2);
  auto state = p.init_plan();
  p.sp1_search_cascades(PlannerError::success(), state);
  p.sp2_assign_cascades(PlannerError::success(), state);
  CHECK(p.sp3_place_models(PlannerError::success(), state).ok());
  CHECK(state.plan.placement.replicas.size() == 6);
  CHECK(state.plan.placement.memory_feasible(s.w.profiles));
  for (int r = 0; r < 2; ++r) {
    const Gear& g = state.plan.gears[r];
    double total = 0;
    for (const auto& [rid, q] : g.load_weights) {
      if (state.plan.placement.find_replica(rid)->model_id == g.cascade.first_model()) total += q;
    }
    CHECK(total == doctest::Approx(state.plan.range_top_qps(r)).epsilon(1e-6));
  }
}

TEST_CASE("sp3 prunes the replica with the highest pruning utility") {
  const TwoModels t(300, 500);
  const std::vector<Device> devices{{"d0", 800}, {"d1", 500}};
  GearPlanner p(t.profiles, devices, t.validation, QpsDistribution{{0.5, 0.5}},
                Slo::latency(kMicrosPerSecond), 200, 2, quick_config());
  auto state = p.init_plan();
  const auto cascade = fixtures::cascade({{"a", 0.5}, {"b", 0}});
  set_cascade(p, state, cascade);
  const auto demand = model_qps_demand(p.eval_of(cascade), 200);

  // utility of removing each replica: overallocation relieved over u_max
  const Placement full = state.plan.placement;
  std::string argmax;
  double best = 0;
  for (std::size_t i = 0; i < full.replicas.size(); ++i) {
    const Replica& r = full.replicas[i];
    const auto& dev = *std::find_if(devices.begin(), devices.end(),
                                    [&](const Device& d) { return d.device_id == r.device_id; });
    const std::int64_t over = full.memory_used(dev.device_id, t.profiles) - dev.memory_capacity_bytes;
    const std::int64_t freed = t.profiles.at(r.model_id).memory_bytes;
    const double relieved = static_cast<double>(std::max<std::int64_t>(0, over) -
                                                std::max<std::int64_t>(0, over - freed));
    Placement trial = full;
    trial.replicas.erase(trial.replicas.begin() + static_cast<std::ptrdiff_t>(i));
    const double u = std::max(0.01, oracles::grid_u_min(trial, demand, t.profiles));
    const double util = relieved / u;
    if (util > best) {
      best = util;
      argmax = r.replica_id;
    }
  }
  REQUIRE_FALSE(argmax.empty());

  CHECK(p.sp3_place_models(PlannerError::success(), state).ok());
  const auto& after = state.plan.placement.replicas;
  CHECK(after.size() == 3);
  CHECK(std::none_of(after.begin(), after.end(), [&](const Replica& r) { return r.replica_id == argmax; }));
  CHECK(argmax == make_replica_id("a", "d1"));
  CHECK(state.plan.placement.memory_feasible(t.profiles));
}

TEST_CASE("sp3 with the literal pruning utility cannot resolve an exact fit") {
  const TwoModels t(300, 500);
  const std::vector<Device> devices{{"d0", 800}, {"d1", 500}};
  auto config = quick_config();
  config.literal_prune_utility = true;
  GearPlanner p(t.profiles, devices, t.validation, QpsDistribution{{1.0}},
                Slo::latency(kMicrosPerSecond), 200, 1, config);
  auto state = p.init_plan();
  set_cascade(p, state, fixtures::cascade({{"a", 0.5}, {"b", 0}}));
  CHECK_FALSE(p.sp3_place_models(PlannerError::success(), state).ok());
}

TEST_CASE("sp3 cannot prune the only replica of a used model") {
  const TwoModels t(300, 500);
  GearPlanner p(t.profiles, {{"d0", 600}}, t.validation, QpsDistribution{{1.0}},
                Slo::latency(kMicrosPerSecond), 10, 1, quick_config());
  auto state = p.init_plan();
  set_cascade(p, state, fixtures::cascade({{"a", 0.5}, {"b", 0}}));
  const auto e = p.sp3_place_models(PlannerError::success(), state);
  CHECK_FALSE(e.ok());
  CHECK(e.qps_range_index == std::optional<int>(0));

  // an unused model is pruned freely
  auto state2 = p.init_plan();
  set_cascade(p, state2, make_single_model_cascade("b"));
  CHECK(p.sp3_place_models(PlannerError::success(), state2).ok());
  REQUIRE(state2.plan.placement.replicas.size() == 1);
  CHECK(state2.plan.placement.replicas[0].model_id == "b");
}

TEST_CASE("sp3 adds a replica for the reported bottleneck") {
  const TwoModels t(100, 100);
  GearPlanner p(t.profiles, {{"d0", 1000}, {"d1", 150}}, t.validation, QpsDistribution{{1.0}},
                Slo::latency(kMicrosPerSecond), 100, 1, quick_config());
  auto state = p.init_plan();
  set_cascade(p, state, fixtures::cascade({{"a", 0.5}, {"b", 0}}));
  REQUIRE(p.sp3_place_models(PlannerError::success(), state).ok());
  CHECK(state.plan.placement.replicas.size() == 3);
  const std::string lone =
      state.plan.placement.replicas_of_model("a").size() == 1 ? "a" : "b";
  const std::string other = lone == "a" ? "b" : "a";
  const auto e = p.sp3_place_models(PlannerError::infeasible(0, "slow", lone), state);
  CHECK(e.ok());
  CHECK(state.forced_replicas.at(lone) == 2);
  CHECK(state.plan.placement.replicas_of_model(lone).size() == 2);
  CHECK(state.plan.placement.replicas_of_model(other).size() == 1);
  const auto again = p.sp3_place_models(PlannerError::infeasible(0, "slow", lone), state);
  CHECK_FALSE(again.ok());
  CHECK(again.qps_range_index == 0);
}

TEST_CASE("sp4 leaves min queue lengths at 1 under trivial load") {
  Synthetic s;
  auto p = s.planner(Slo::latency(50'000), 4, 2);
  auto state = p.init_plan();
  p.sp1_search_cascades(PlannerError::success(), state);
  p.sp2_assign_cascades(PlannerError::success(), state);
  p.sp3_place_models(PlannerError::success(), state);
  CHECK(p.sp4_tune_batch_sizes(PlannerError::success(), state).ok());
  CHECK(state.feasible_once);
  for (const auto& g : state.plan.gears) {
    for (const auto& [rid, k] : g.min_queue_length) CHECK(k == 1);
  }
}

TEST_CASE("whole-queue batching reaches the needed batch size at min queue length 1") {
  // batch 1 carries 50 QPS and batch 4 carries 125, but a backlog already
  // batches itself when the trigger takes the whole queue
  ProfileSet set({profile("m", {{1, 20'000}, {4, 32'000}})});
  const auto v = fixtures::uniform_validation({"m"}, 50);
  GearPlanner p(set, {{"d0", 1000}}, v, QpsDistribution{{1.0}}, Slo::latency(200'000), 100, 1,
                quick_config());
  auto state = p.init_plan();
  set_cascade(p, state, make_single_model_cascade("m"));
  CHECK(1.0 / 0.020 < 100.0);
  CHECK(4.0 / 0.032 >= 100.0);

  const auto probe = p.probe(state.plan, 0);
  CHECK(probe.throughput_ok);
  CHECK(p.sp4_tune_batch_sizes(PlannerError::success(), state).ok());
  CHECK(state.plan.gears[0].min_queue_for("m@d0") == 1);

  RunOptions ro;
  ro.engine.fixed_gear = 0;
  const auto m = run(state.plan, constant_rate_trace(100, 5 * kMicrosPerSecond), v, set, ro);
  std::int64_t multi = 0;
  for (const auto& [size, n] : m.per_model_batches.at("m")) {
    if (size > 1) multi += n;
  }
  CHECK(multi > 0);
}

TEST_CASE("sp4 raises the first-stage min queue length when stages share a device") {
  // a forwards everything to b on one device; at min queue length 1 the
  // first stage keeps the device and b starves
  const std::map<int, Micros> rt{{1, 10'000}, {2, 10'500}, {4, 11'000}, {8, 12'000}};
  ProfileSet set({profile("a", rt, 100), profile("b", rt, 100)});
  fixtures::Outcomes rows;
  for (int i = 0; i < 40; ++i) rows.push_back({{"a", {0.1, true}}, {"b", {0.9, true}}});
  const auto v = fixtures::validation(rows);
  GearPlanner p(set, {{"d0", 1000}}, v, QpsDistribution{{1.0}}, Slo::latency(500'000), 100, 1,
                quick_config());
  auto state = p.init_plan();
  set_cascade(p, state, fixtures::cascade({{"a", 0.5}, {"b", 0}}));
  // the batch-1 load balancer rejects this load, so pin the weights
  state.plan.gears[0].load_weights = {{"a@d0", 100.0}, {"b@d0", 100.0}};

  const auto at_one = p.probe(state.plan, 0);
  CHECK_FALSE(probe_meets_slo(at_one, state.plan.slo));

  CHECK(p.sp4_tune_batch_sizes(PlannerError::success(), state).ok());
  CHECK(state.plan.gears[0].min_queue_for("a@d0") > 1);
  CHECK(state.plan.gears[0].min_queue_for("b@d0") == 1);
  CHECK(probe_meets_slo(p.probe(state.plan, 0), state.plan.slo));
}

TEST_CASE("sp4 reports the bottleneck when no batch size is enough") {
  ProfileSet set({profile("m", {{1, 10'000}, {4, 20'000}})});
  const auto v = fixtures::uniform_validation({"m"}, 20);
  GearPlanner p(set, {{"d0", 1000}}, v, QpsDistribution{{0.5, 0.5}},
                Slo::latency(kMicrosPerSecond), 800, 2, quick_config());
  auto state = p.init_plan();
  set_cascade(p, state, make_single_model_cascade("m"));
  const auto e = p.sp4_tune_batch_sizes(PlannerError::success(), state);
  CHECK_FALSE(e.ok());
  CHECK(e.qps_range_index == std::optional<int>(0));
  CHECK(e.bottleneck_model == std::optional<std::string>("m"));
  CHECK_FALSE(state.feasible_once);
}

TEST_CASE("probe passes a light load and fails an overload") {
  ProfileSet set({profile("m", {{1, 10'000}, {4, 20'000}})});
  const auto v = fixtures::uniform_validation({"m"}, 20);
  const auto pl = fixtures::placement({{"d0", 1000}}, {{"m", "d0"}});
  auto light = fixtures::uniform_plan(pl, make_single_model_cascade("m"), 20, 1,
                                      Slo::latency(100'000));
  const auto ok = probe_range(light, 0, set, v);
  CHECK(ok.throughput_ok);
  CHECK(ok.p95_us <= 30'000);
  CHECK(probe_meets_slo(ok, light.slo));

  auto heavy = light;
  heavy.qps_max = 500;
  const auto bad = probe_range(heavy, 0, set, v);
  CHECK_FALSE(bad.throughput_ok);
  CHECK(bad.bottleneck_model == std::optional<std::string>("m"));
  CHECK_FALSE(probe_meets_slo(bad, heavy.slo));
}

TEST_CASE("generous hardware keeps the most accurate cascade everywhere") {
  Synthetic s;
  auto config = quick_config();
  config.instrument = true;
  auto p = s.planner(Slo::latency(kMicrosPerSecond), 40, 4, config);
  const auto plan = p.optimize();
  double best = 0;
  for (const auto& [k, e] : p.evals()) best = std::max(best, e.accuracy);
  for (const auto& g : plan.gears) CHECK(p.eval_of(g.cascade).accuracy == best);
  CHECK(p.stats().downgrades == 0);
  CHECK_NOTHROW(plan.validate(s.w.profiles));
}

TEST_CASE("an SLO below the cheapest runtime is user-infeasible") {
  Synthetic s;
  GearPlanner p(s.w.profiles, {{"tiny", 8 * kGiB}}, s.w.validation, zipf_distribution(2, 1.1),
                Slo::latency(500), 100, 2, quick_config());
  CHECK_THROWS_AS(p.optimize(), UserInfeasible);
  CHECK(p.stats().submodule_calls > 0);
}

TEST_CASE("optimize is deterministic, feasible and instrumented") {
  Synthetic s;
  auto config = quick_config(5);
  config.instrument = true;
  PlannerStats a_stats, b_stats;
  const auto dist = zipf_distribution(4, 1.1);
  const auto a = optimize(s.w.profiles, s.devices, s.w.validation, dist, Slo::latency(60'000), 1200,
                          4, 5, config, &a_stats);
  const auto b = optimize(s.w.profiles, s.devices, s.w.validation, dist, Slo::latency(60'000), 1200,
                          4, 5, config, &b_stats);
  CHECK(a == b);
  CHECK(plan_hash(a) == plan_hash(b));
  CHECK(plan_hash(a).size() == 16);
  CHECK(a_stats.submodule_calls == b_stats.submodule_calls);

  CHECK(a_stats.feasibility_regressions == 0);
  for (std::size_t i = 1; i < a_stats.objective_trace.size(); ++i) {
    CHECK(a_stats.objective_trace[i] <= a_stats.objective_trace[i - 1] + 1e-12);
  }
  CHECK(a_stats.downgrades <= 4 * static_cast<int>(a_stats.candidate_count));
  REQUIRE(a_stats.first_feasible_call);
  CHECK(a_stats.log.size() == static_cast<std::size_t>(a_stats.submodule_calls));
  CHECK(a_stats.log.back().submodule == "sp4_tune_batch_sizes");

  CHECK(parse_plan(dump_plan(a)) == a);
  CHECK(a.placement.memory_feasible(s.w.profiles));
  for (int r = 0; r < a.n_ranges; ++r) {
    const auto probe = probe_range(a, r, s.w.profiles, s.w.validation);
    CHECK(probe_meets_slo(probe, a.slo));
  }
}

TEST_CASE("accuracy SLO planning meets the accuracy target") {
  Synthetic s;
  auto p = s.planner(Slo::accuracy(0.9), 400, 4);
  const auto plan = p.optimize();
  const double acc = estimate_plan_accuracy(plan, p.distribution(), p.evals());
  CHECK(acc >= 0.9);
  CHECK(p.plan_feasible(plan));

  auto impossible = s.planner(Slo::accuracy(0.9999), 400, 4);
  CHECK_THROWS_AS(impossible.optimize(), UserInfeasible);
}
