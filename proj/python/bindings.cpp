#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cascadeserve/cascade_eval.hpp"
#include "cascadeserve/io.hpp"
#include "cascadeserve/metrics.hpp"
#include "cascadeserve/planner.hpp"
#include "cascadeserve/sim_engine.hpp"
#include "cascadeserve/synthetic.hpp"
#include "cascadeserve/workload.hpp"

namespace py = pybind11;
using namespace cascadeserve;

namespace {

Cascade to_cascade(const std::vector<std::pair<std::string, double>>& stages) {
  Cascade c;
  for (const auto& [m, t] : stages) c.stages.push_back({m, t});
  return c;
}

py::dict eval_dict(const CascadeEval& e) {
  py::dict d;
  d["accuracy"] = e.accuracy;
  d["mean_cost"] = e.mean_cost;
  d["forward_fraction"] = e.forward_fraction;
  return d;
}

Slo make_slo(std::optional<double> latency_slo_ms, std::optional<double> accuracy_slo) {
  if (latency_slo_ms.has_value() == accuracy_slo.has_value()) {
    throw ValidationError("give exactly one of latency_slo_ms and accuracy_slo");
  }
  if (latency_slo_ms) return Slo::latency(static_cast<Micros>(*latency_slo_ms * 1000.0));
  return Slo::accuracy(*accuracy_slo);
}

}  // namespace

PYBIND11_MODULE(_cascadeserve, m) {
  m.doc() = "Gear-plan optimizer and cascade serving simulator";

  static py::exception<Error> error(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<UserInfeasible>(m, "UserInfeasible", error.ptr());

  m.def("certainty", [](const std::vector<double>& scores) { return certainty(scores); },
        py::arg("scores"));

  m.def(
      "evaluate_cascade",
      [](const std::vector<std::pair<std::string, double>>& stages, const std::string& profiles,
         const std::string& validation) {
        const auto p = parse_profiles(profiles);
        const auto v = parse_validation(validation);
        return eval_dict(evaluate_cascade(to_cascade(stages), v, p));
      },
      py::arg("stages"), py::arg("profiles_json"), py::arg("validation_jsonl"));

  m.def(
      "generate_synthetic",
      [](std::vector<double> size_ratios, double easy_fraction, int n_samples, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.n_models = static_cast<int>(size_ratios.size());
        spec.size_ratios = std::move(size_ratios);
        spec.easy_fraction = easy_fraction;
        spec.n_samples = n_samples;
        spec.seed = seed;
        const auto w = generate_synthetic(spec);
        return py::make_tuple(dump_profiles(w.profiles), dump_validation(w.validation));
      },
      py::arg("size_ratios") = std::vector<double>{1.0, 4.0, 16.0},
      py::arg("easy_fraction") = 0.8, py::arg("n_samples") = 2000, py::arg("seed") = 0);

  m.def(
      "uniform_devices",
      [](int n, std::int64_t memory_bytes) { return dump_devices(uniform_devices(n, memory_bytes)); },
      py::arg("n"), py::arg("memory_bytes"));

  m.def("constant_trace",
        [](double qps, double seconds) {
          return dump_trace(constant_rate_trace(qps, static_cast<Micros>(seconds * kMicrosPerSecond)));
        },
        py::arg("qps"), py::arg("seconds"));

  m.def(
      "plan",
      [](const std::string& profiles, const std::string& validation, const std::string& devices,
         double qps_max, int n_ranges, std::optional<double> latency_slo_ms,
         std::optional<double> accuracy_slo, std::uint64_t seed, int samples) {
        const auto p = parse_profiles(profiles);
        const auto v = parse_validation(validation);
        const auto d = parse_devices(devices);
        const Slo slo = make_slo(latency_slo_ms, accuracy_slo);
        PlannerConfig cfg;
        cfg.n_samples = samples;
        GearPlan plan;
        {
          py::gil_scoped_release release;
          plan = optimize(p, d, v, zipf_distribution(n_ranges), slo, qps_max, n_ranges, seed, cfg);
        }
        return dump_plan(plan);
      },
      py::arg("profiles_json"), py::arg("validation_jsonl"), py::arg("devices_json"),
      py::arg("qps_max"), py::arg("n_ranges") = 4, py::arg("latency_slo_ms") = py::none(),
      py::arg("accuracy_slo") = py::none(), py::arg("seed") = 0, py::arg("samples") = 2000);

  m.def(
      "simulate",
      [](const std::string& plan_json, const std::string& profiles, const std::string& validation,
         const std::string& trace, double alpha) {
        const auto p = parse_profiles(profiles);
        const auto v = parse_validation(validation);
        const auto plan = parse_plan(plan_json);
        plan.validate(p);
        const auto t = parse_trace(trace);
        RunOptions ro;
        ro.engine.alpha = alpha;
        SimMetrics metrics;
        {
          py::gil_scoped_release release;
          metrics = run(plan, t, v, p, ro);
        }
        return summary_json(summarize(metrics, plan, "python"));
      },
      py::arg("plan_json"), py::arg("profiles_json"), py::arg("validation_jsonl"),
      py::arg("trace_csv"), py::arg("alpha") = 8.0);

  m.def(
      "maybe_switch_gear",
      [](double measured_qps, std::int64_t q0, int current_gear, const std::string& plan_json,
         double alpha) {
        return maybe_switch_gear(measured_qps, q0, current_gear, parse_plan(plan_json), alpha);
      },
      py::arg("measured_qps"), py::arg("first_stage_queue_len"), py::arg("current_gear"),
      py::arg("plan_json"), py::arg("alpha") = 8.0);
}
