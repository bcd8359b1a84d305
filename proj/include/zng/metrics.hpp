#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "zng/types.hpp"

namespace zng {

struct LatencyBreakdown {
  std::uint64_t translation = 0;
  std::uint64_t network = 0;
  std::uint64_t queueing = 0;
  std::uint64_t array = 0;
  std::uint64_t transfer = 0;
  std::uint64_t total = 0;
  std::uint64_t samples = 0;

  double mean(std::uint64_t part) const {
    return samples == 0 ? 0.0
                        : static_cast<double>(part) /
                              static_cast<double>(samples);
  }
};

struct GcLogEntry {
  std::uint32_t group = 0;
  std::uint8_t owner = 0;
  Cycles start = 0;
  Cycles end = 0;
  std::uint64_t pages_moved = 0;
  std::uint32_t blocks_erased = 0;
};

struct EpochSample {
  Cycles start_cycle = 0;
  std::vector<std::uint64_t> completed_per_app;
  std::uint64_t array_reads = 0;
  std::uint64_t programs = 0;
};

struct PlaneCounters {
  std::uint64_t array_reads = 0;
  std::uint64_t programs = 0;
  std::uint64_t erases = 0;
  std::uint64_t reg_hits = 0;
  std::uint64_t reg_misses = 0;
};

// Histogram as exact count -> number of pages with that count.
using PageHistogram = std::map<std::uint64_t, std::uint64_t>;

struct MetricsReport {
  std::string platform;
  std::uint64_t seed = 0;
  // The GPU pipeline is not modeled; completion time and bandwidth stand in
  // for IPC.
  std::string proxy_note =
      "performance proxy: trace completion time and flash-array bandwidth; "
      "instruction pipelines are not modeled";

  Cycles completion_cycles = 0;
  double completion_seconds = 0.0;

  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t uninitialized_reads = 0;
  std::uint64_t page_faults = 0;

  std::uint64_t array_reads = 0;  // demand senses, prefetch included
  std::uint64_t rmw_reads = 0;    // read-modify-write before log programs
  std::uint64_t demand_programs = 0;
  std::uint64_t gc_reads = 0;
  std::uint64_t gc_programs = 0;
  std::uint64_t erases = 0;
  double array_bandwidth_gbps = 0.0;

  PageHistogram read_reaccess;      // read requests per logical page
  PageHistogram write_redundancy;   // write requests per logical page
  double mean_read_reaccess = 0.0;
  double mean_write_redundancy = 0.0;  // flash programs per programmed page
  std::uint64_t pages_programmed = 0;

  LatencyBreakdown breakdown;

  // L2 / predictor
  std::uint64_t l2_hits = 0;
  std::uint64_t l2_misses = 0;
  std::uint64_t prefetch_issued = 0;
  std::uint64_t prefetch_used = 0;
  std::uint64_t prefetch_wasted = 0;
  double predictor_accuracy = 0.0;
  std::vector<double> waste_ratio_series;
  std::uint64_t pinned_writes = 0;
  std::uint64_t pinned_flushes = 0;

  std::uint64_t tlb_hits = 0;
  std::uint64_t tlb_misses = 0;

  std::uint64_t register_hits = 0;
  std::uint64_t register_misses = 0;
  std::uint64_t register_evictions = 0;
  std::uint64_t thrash_windows = 0;
  std::uint64_t redirected_writes = 0;

  std::uint64_t mesh_bytes = 0;
  std::uint64_t controller_stalls = 0;

  std::vector<PlaneCounters> planes;
  std::vector<GcLogEntry> gc_log;
  std::vector<EpochSample> epochs;
  std::uint32_t apps = 1;

  // Conservation bookkeeping.
  std::uint64_t requests_dispatched = 0;
  std::uint64_t responses_delivered = 0;
  std::uint64_t in_flight_at_end = 0;
};

inline nlohmann::ordered_json histogram_json(const PageHistogram& h) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [count, pages] : h) j[std::to_string(count)] = pages;
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["platform"] = r.platform;
  j["seed"] = r.seed;
  j["proxy_note"] = r.proxy_note;
  j["completion_cycles"] = r.completion_cycles;
  j["completion_seconds"] = r.completion_seconds;
  j["requests"] = {{"reads", r.reads},
                   {"writes", r.writes},
                   {"uninitialized_reads", r.uninitialized_reads},
                   {"page_faults", r.page_faults},
                   {"dispatched", r.requests_dispatched},
                   {"responses", r.responses_delivered},
                   {"in_flight_at_end", r.in_flight_at_end}};
  j["flash"] = {{"array_reads", r.array_reads},
                {"rmw_reads", r.rmw_reads},
                {"demand_programs", r.demand_programs},
                {"gc_reads", r.gc_reads},
                {"gc_programs", r.gc_programs},
                {"erases", r.erases},
                {"bandwidth_gbps", r.array_bandwidth_gbps}};
  j["latency_breakdown_cycles"] = {
      {"translation", r.breakdown.mean(r.breakdown.translation)},
      {"network", r.breakdown.mean(r.breakdown.network)},
      {"queueing", r.breakdown.mean(r.breakdown.queueing)},
      {"array", r.breakdown.mean(r.breakdown.array)},
      {"transfer", r.breakdown.mean(r.breakdown.transfer)},
      {"mean_total", r.breakdown.mean(r.breakdown.total)},
      {"samples", r.breakdown.samples}};
  j["l2"] = {{"hits", r.l2_hits},
             {"misses", r.l2_misses},
             {"prefetch_issued", r.prefetch_issued},
             {"prefetch_used", r.prefetch_used},
             {"prefetch_wasted", r.prefetch_wasted},
             {"predictor_accuracy", r.predictor_accuracy},
             {"pinned_writes", r.pinned_writes},
             {"pinned_flushes", r.pinned_flushes},
             {"waste_ratio_series", r.waste_ratio_series}};
  j["tlb"] = {{"hits", r.tlb_hits}, {"misses", r.tlb_misses}};
  j["registers"] = {{"hits", r.register_hits},
                    {"misses", r.register_misses},
                    {"evictions", r.register_evictions},
                    {"thrash_windows", r.thrash_windows},
                    {"redirected_writes", r.redirected_writes}};
  j["interconnect"] = {{"mesh_bytes", r.mesh_bytes},
                       {"controller_stalls", r.controller_stalls}};
  j["read_reaccess"] = {{"mean", r.mean_read_reaccess},
                        {"histogram", histogram_json(r.read_reaccess)}};
  j["write_redundancy"] = {{"mean", r.mean_write_redundancy},
                           {"pages_programmed", r.pages_programmed},
                           {"histogram", histogram_json(r.write_redundancy)}};
  auto gc = nlohmann::ordered_json::array();
  for (const auto& e : r.gc_log)
    gc.push_back({{"group", e.group},
                  {"owner", e.owner},
                  {"start", e.start},
                  {"end", e.end},
                  {"pages_moved", e.pages_moved},
                  {"blocks_erased", e.blocks_erased}});
  j["gc"] = {{"events", gc},
             {"count", r.gc_log.size()}};
  auto planes = nlohmann::ordered_json::array();
  for (const auto& p : r.planes)
    planes.push_back({{"array_reads", p.array_reads},
                      {"programs", p.programs},
                      {"erases", p.erases},
                      {"reg_hits", p.reg_hits},
                      {"reg_misses", p.reg_misses}});
  j["planes"] = planes;
  return j;
}

inline void write_time_series_csv(const std::string& path,
                                  const MetricsReport& r) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw sim_exception("metrics", "cannot open for write: " + path);
  f << "epoch,start_cycle";
  for (std::uint32_t a = 0; a < r.apps; ++a) f << ",app" << a << "_completed";
  f << ",array_reads,programs\n";
  for (std::size_t i = 0; i < r.epochs.size(); ++i) {
    const auto& e = r.epochs[i];
    f << i << "," << e.start_cycle;
    for (std::uint32_t a = 0; a < r.apps; ++a)
      f << ","
        << (a < e.completed_per_app.size() ? e.completed_per_app[a] : 0);
    f << "," << e.array_reads << "," << e.programs << "\n";
  }
}

}  // namespace zng
