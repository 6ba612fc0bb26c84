#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cascadeserve/domain.hpp"

namespace cascadeserve {

// profiles.json: {"models": [{"id", "memory_bytes", "runtime_us": {"1": n}}]}
ProfileSet parse_profiles(const std::string& text);
std::string dump_profiles(const ProfileSet& profiles);
ProfileSet load_profiles(const std::filesystem::path& path);
void save_profiles(const ProfileSet& profiles, const std::filesystem::path& path);

// validation.jsonl: one {"sample_id", "models": {id: {"scores", "correct"}}}
// object per line.
ValidationSet parse_validation(const std::string& text);
std::string dump_validation(const ValidationSet& validation);
ValidationSet load_validation(const std::filesystem::path& path);
void save_validation(const ValidationSet& validation,
                     const std::filesystem::path& path);

// trace.csv: one microsecond timestamp per line. An optional leading
// "# duration_us=N" line pins the duration; otherwise it is the last arrival
// rounded up to the next whole second.
WorkloadTrace parse_trace(const std::string& text);
std::string dump_trace(const WorkloadTrace& trace);
/// Loads a trace and, when scale_to_max_qps is set, linearly rescales the
/// per-second counts so the busiest second carries that many arrivals.
WorkloadTrace load_trace(const std::filesystem::path& path,
                         std::optional<double> scale_to_max_qps = std::nullopt);
void save_trace(const WorkloadTrace& trace, const std::filesystem::path& path);

// devices.json: [{"id", "memory_capacity_bytes"}]
std::vector<Device> parse_devices(const std::string& text);
std::string dump_devices(const std::vector<Device>& devices);
std::vector<Device> load_devices(const std::filesystem::path& path);
void save_devices(const std::vector<Device>& devices,
                  const std::filesystem::path& path);

// plan.json: placement, slo, ranges and one gear per range.
/// Parses and structurally checks a plan. Profile-dependent checks need
/// GearPlan::validate.
GearPlan parse_plan(const std::string& text);
std::string dump_plan(const GearPlan& plan);
GearPlan load_plan(const std::filesystem::path& path);
void save_plan(const GearPlan& plan, const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cascadeserve
