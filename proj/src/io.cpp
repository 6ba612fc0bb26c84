#include "cascadeserve/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cascadeserve/workload.hpp"

namespace cascadeserve {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& obj, const char* name, const std::string& where) {
  if (!obj.is_object() || !obj.contains(name)) {
    throw ParseError(where + ": missing field \"" + name + "\"");
  }
  try {
    return obj.at(name).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": bad field \"" + name + "\": " + e.what());
  }
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

json cascade_to_json(const Cascade& c) {
  json stages = json::array();
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    json s = {{"model", c.stages[i].model_id}};
    if (i + 1 < c.stages.size()) s["threshold"] = c.stages[i].threshold;
    stages.push_back(std::move(s));
  }
  return stages;
}

Cascade cascade_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": cascade must be an array");
  Cascade c;
  for (std::size_t i = 0; i < j.size(); ++i) {
    CascadeStage s;
    s.model_id = field<std::string>(j[i], "model", where);
    if (i + 1 < j.size()) {
      s.threshold = field<double>(j[i], "threshold", where);
    }
    c.stages.push_back(std::move(s));
  }
  if (c.stages.empty()) throw ParseError(where + ": empty cascade");
  return c;
}

json devices_to_json(const std::vector<Device>& devices) {
  json arr = json::array();
  for (const auto& d : devices) {
    arr.push_back({{"id", d.device_id},
                   {"memory_capacity_bytes", d.memory_capacity_bytes}});
  }
  return arr;
}

std::vector<Device> devices_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("devices: expected an array");
  std::vector<Device> out;
  std::set<std::string> seen;
  for (const auto& d : j) {
    Device dev{field<std::string>(d, "id", "device"),
               field<std::int64_t>(d, "memory_capacity_bytes", "device")};
    if (dev.memory_capacity_bytes <= 0) {
      throw ValidationError("device " + dev.device_id +
                            ": memory_capacity_bytes must be > 0");
    }
    if (!seen.insert(dev.device_id).second) {
      throw ValidationError("duplicate device id " + dev.device_id);
    }
    out.push_back(std::move(dev));
  }
  return out;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

ProfileSet parse_profiles(const std::string& text) {
  const json root = parse_json(text, "profiles");
  if (!root.is_object() || !root.contains("models") ||
      !root["models"].is_array()) {
    throw ParseError("profiles: expected {\"models\": [...]}");
  }
  std::vector<ModelProfile> models;
  for (const auto& m : root["models"]) {
    ModelProfile p;
    p.model_id = field<std::string>(m, "id", "profile");
    const std::string where = "profile " + p.model_id;
    p.memory_bytes = field<std::int64_t>(m, "memory_bytes", where);
    const auto table = field<json>(m, "runtime_us", where);
    if (!table.is_object()) {
      throw ParseError(where + ": runtime_us must be an object");
    }
    for (const auto& [batch, latency] : table.items()) {
      int b = 0;
      try {
        std::size_t used = 0;
        b = std::stoi(batch, &used);
        if (used != batch.size()) throw std::invalid_argument(batch);
      } catch (const std::exception&) {
        throw ParseError(where + ": bad batch size \"" + batch + "\"");
      }
      if (!latency.is_number()) {
        throw ParseError(where + ": latency at batch " + batch +
                         " is not a number");
      }
      p.runtime_table[b] = latency.get<Micros>();
    }
    models.push_back(std::move(p));
  }
  return ProfileSet(std::move(models));
}

std::string dump_profiles(const ProfileSet& profiles) {
  json models = json::array();
  for (const auto& m : profiles.models()) {
    json table = json::object();
    for (const auto& [b, t] : m.runtime_table) table[std::to_string(b)] = t;
    models.push_back(
        {{"id", m.model_id}, {"memory_bytes", m.memory_bytes}, {"runtime_us", table}});
  }
  return json{{"models", models}}.dump(2) + "\n";
}

ProfileSet load_profiles(const std::filesystem::path& path) {
  return parse_profiles(read_file(path));
}

void save_profiles(const ProfileSet& profiles,
                   const std::filesystem::path& path) {
  write_file(path, dump_profiles(profiles));
}

ValidationSet parse_validation(const std::string& text) {
  std::vector<ValidationRecord> records;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "validation line " + std::to_string(line_no);
    const json j = parse_json(line, where);
    ValidationRecord r;
    r.sample_id = field<std::int64_t>(j, "sample_id", where);
    const auto models = field<json>(j, "models", where);
    if (!models.is_object()) throw ParseError(where + ": models must be an object");
    for (const auto& [id, out] : models.items()) {
      ModelOutput o;
      o.scores = field<std::vector<double>>(out, "scores", where);
      o.correct = field<bool>(out, "correct", where);
      r.per_model.emplace(id, std::move(o));
    }
    records.push_back(std::move(r));
  }
  return ValidationSet(std::move(records));
}

std::string dump_validation(const ValidationSet& validation) {
  std::string out;
  for (const auto& r : validation.records()) {
    json models = json::object();
    for (const auto& [id, o] : r.per_model) {
      models[id] = {{"scores", o.scores}, {"correct", o.correct}};
    }
    out += json{{"sample_id", r.sample_id}, {"models", models}}.dump();
    out += '\n';
  }
  return out;
}

ValidationSet load_validation(const std::filesystem::path& path) {
  return parse_validation(read_file(path));
}

void save_validation(const ValidationSet& validation,
                     const std::filesystem::path& path) {
  write_file(path, dump_validation(validation));
}

WorkloadTrace parse_trace(const std::string& text) {
  WorkloadTrace trace;
  std::optional<Micros> duration;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    if (line[start] == '#') {
      const std::string key = "duration_us=";
      const auto pos = line.find(key);
      if (pos != std::string::npos) {
        try {
          duration = std::stoll(line.substr(pos + key.size()));
        } catch (const std::exception&) {
          throw ParseError("trace line " + std::to_string(line_no) +
                           ": bad duration header");
        }
      }
      continue;
    }
    try {
      std::size_t used = 0;
      const std::string cell = line.substr(start);
      const Micros t = std::stoll(cell, &used);
      if (cell.find_first_not_of(" \t\r,", used) != std::string::npos) {
        throw std::invalid_argument(cell);
      }
      trace.arrivals.push_back(t);
    } catch (const std::exception&) {
      throw ParseError("trace line " + std::to_string(line_no) +
                       ": expected an integer timestamp");
    }
  }
  if (duration) {
    trace.duration_us = *duration;
  } else if (!trace.arrivals.empty()) {
    const Micros last = trace.arrivals.back();
    trace.duration_us = (last / kMicrosPerSecond + 1) * kMicrosPerSecond;
  }
  trace.validate();
  return trace;
}

std::string dump_trace(const WorkloadTrace& trace) {
  std::string out = "# duration_us=" + std::to_string(trace.duration_us) + "\n";
  for (Micros t : trace.arrivals) {
    out += std::to_string(t);
    out += '\n';
  }
  return out;
}

WorkloadTrace load_trace(const std::filesystem::path& path,
                         std::optional<double> scale_to_max_qps) {
  WorkloadTrace trace = parse_trace(read_file(path));
  if (scale_to_max_qps) return scale_trace(trace, *scale_to_max_qps);
  return trace;
}

void save_trace(const WorkloadTrace& trace, const std::filesystem::path& path) {
  write_file(path, dump_trace(trace));
}

std::vector<Device> parse_devices(const std::string& text) {
  return devices_from_json(parse_json(text, "devices"));
}

std::string dump_devices(const std::vector<Device>& devices) {
  return devices_to_json(devices).dump(2) + "\n";
}

std::vector<Device> load_devices(const std::filesystem::path& path) {
  return parse_devices(read_file(path));
}

void save_devices(const std::vector<Device>& devices,
                  const std::filesystem::path& path) {
  write_file(path, dump_devices(devices));
}

std::string dump_plan(const GearPlan& plan) {
  json replicas = json::array();
  for (const auto& r : plan.placement.replicas) {
    replicas.push_back(
        {{"id", r.replica_id}, {"model", r.model_id}, {"device", r.device_id}});
  }
  json slo;
  if (plan.slo.is_latency()) {
    slo = {{"kind", "latency"}, {"latency_target_us", plan.slo.latency_target_us}};
  } else {
    slo = {{"kind", "accuracy"}, {"accuracy_target", plan.slo.accuracy_target}};
  }
  json gears = json::array();
  for (std::size_t i = 0; i < plan.gears.size(); ++i) {
    const Gear& g = plan.gears[i];
    json weights = json::array();
    for (const auto& [rid, q] : g.load_weights) {
      const Replica* r = plan.placement.find_replica(rid);
      weights.push_back(
          {{"model", r ? r->model_id : std::string()}, {"replica", rid}, {"qps", q}});
    }
    gears.push_back({{"range", i},
                     {"cascade", cascade_to_json(g.cascade)},
                     {"min_queue_length", g.min_queue_length},
                     {"load_weights", weights}});
  }
  json root = {
      {"placement",
       {{"devices", devices_to_json(plan.placement.devices)}, {"replicas", replicas}}},
      {"qps_max", plan.qps_max},
      {"n_ranges", plan.n_ranges},
      {"slo", slo},
      {"gears", gears}};
  return root.dump(2) + "\n";
}

GearPlan parse_plan(const std::string& text) {
  const json root = parse_json(text, "plan");
  GearPlan plan;
  const auto placement = field<json>(root, "placement", "plan");
  plan.placement.devices = devices_from_json(field<json>(placement, "devices", "placement"));
  for (const auto& r : field<json>(placement, "replicas", "placement")) {
    plan.placement.replicas.push_back({field<std::string>(r, "id", "replica"),
                                       field<std::string>(r, "model", "replica"),
                                       field<std::string>(r, "device", "replica")});
  }
  plan.qps_max = field<double>(root, "qps_max", "plan");
  plan.n_ranges = field<int>(root, "n_ranges", "plan");
  if (!(plan.qps_max > 0.0)) throw ValidationError("plan qps_max must be > 0");
  if (plan.n_ranges < 1) throw ValidationError("plan n_ranges must be >= 1");

  const auto slo = field<json>(root, "slo", "plan");
  const auto kind = field<std::string>(slo, "kind", "slo");
  if (kind == "latency") {
    plan.slo = Slo::latency(field<Micros>(slo, "latency_target_us", "slo"));
  } else if (kind == "accuracy") {
    plan.slo = Slo::accuracy(field<double>(slo, "accuracy_target", "slo"));
  } else {
    throw ParseError("slo: unknown kind \"" + kind + "\"");
  }

  std::vector<std::optional<Gear>> slots(static_cast<std::size_t>(plan.n_ranges));
  for (const auto& g : field<json>(root, "gears", "plan")) {
    const int range = field<int>(g, "range", "gear");
    const std::string where = "gear " + std::to_string(range);
    if (range < 0 || range >= plan.n_ranges) {
      throw ValidationError(where + ": range index out of bounds");
    }
    if (slots[range]) {
      throw ValidationError("plan has two gears for range " + std::to_string(range));
    }
    Gear gear;
    gear.cascade = cascade_from_json(field<json>(g, "cascade", where), where);
    gear.min_queue_length =
        field<std::map<std::string, int>>(g, "min_queue_length", where);
    for (const auto& w : field<json>(g, "load_weights", where)) {
      const auto rid = field<std::string>(w, "replica", where);
      const auto model = field<std::string>(w, "model", where);
      const Replica* r = plan.placement.find_replica(rid);
      if (!r || r->model_id != model) {
        throw ValidationError(where + ": load weight names replica " + rid +
                              " of model " + model +
                              " which the placement does not hold");
      }
      if (!gear.load_weights.emplace(rid, field<double>(w, "qps", where)).second) {
        throw ValidationError(where + ": duplicate load weight for " + rid);
      }
    }
    slots[range] = std::move(gear);
  }
  for (int i = 0; i < plan.n_ranges; ++i) {
    if (!slots[i]) {
      throw ValidationError("plan has no gear for range " + std::to_string(i));
    }
    plan.gears.push_back(std::move(*slots[i]));
  }
  return plan;
}

GearPlan load_plan(const std::filesystem::path& path) {
  return parse_plan(read_file(path));
}

void save_plan(const GearPlan& plan, const std::filesystem::path& path) {
  write_file(path, dump_plan(plan));
}

}  // namespace cascadeserve
