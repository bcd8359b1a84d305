#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zng/geometry.hpp"
#include "zng/timing.hpp"
#include "zng/types.hpp"

namespace zng {

enum class Platform : std::uint8_t {
  Hetero,
  HybridGpu,
  Optane,
  ZngBase,
  ZngRdOpt,
  ZngWrOpt,
  Zng,
};

inline const char* platform_name(Platform p) {
  switch (p) {
    case Platform::Hetero: return "hetero";
    case Platform::HybridGpu: return "hybridgpu";
    case Platform::Optane: return "optane";
    case Platform::ZngBase: return "zng-base";
    case Platform::ZngRdOpt: return "zng-rdopt";
    case Platform::ZngWrOpt: return "zng-wropt";
    case Platform::Zng: return "zng";
  }
  return "?";
}

inline std::optional<Platform> platform_from_name(const std::string& s) {
  if (s == "hetero") return Platform::Hetero;
  if (s == "hybridgpu") return Platform::HybridGpu;
  if (s == "optane") return Platform::Optane;
  if (s == "zng-base") return Platform::ZngBase;
  if (s == "zng-rdopt") return Platform::ZngRdOpt;
  if (s == "zng-wropt") return Platform::ZngWrOpt;
  if (s == "zng") return Platform::Zng;
  return std::nullopt;
}

inline bool platform_is_zng(Platform p) {
  return p == Platform::ZngBase || p == Platform::ZngRdOpt ||
         p == Platform::ZngWrOpt || p == Platform::Zng;
}

enum class RegisterTopology : std::uint8_t { Baseline, SWnet, FCnet, NiF };

inline const char* topology_name(RegisterTopology t) {
  switch (t) {
    case RegisterTopology::Baseline: return "baseline";
    case RegisterTopology::SWnet: return "swnet";
    case RegisterTopology::FCnet: return "fcnet";
    case RegisterTopology::NiF: return "nif";
  }
  return "?";
}

inline std::optional<RegisterTopology> topology_from_name(
    const std::string& s) {
  if (s == "baseline") return RegisterTopology::Baseline;
  if (s == "swnet") return RegisterTopology::SWnet;
  if (s == "fcnet") return RegisterTopology::FCnet;
  if (s == "nif") return RegisterTopology::NiF;
  return std::nullopt;
}

// Shared STT-MRAM L2. capacity == sets * ways * line * banks.
struct L2Config {
  std::uint64_t capacity = 24ull << 20;
  std::uint32_t banks = 6;
  std::uint32_t ways = 8;
  std::uint32_t line = 128;
  Cycles read_cycles = 1;
  Cycles write_cycles = 5;
  double pinned_fraction = 0.125;  // 1 way of 8 when redirection pins

  std::uint32_t sets() const {
    return static_cast<std::uint32_t>(capacity / (static_cast<std::uint64_t>(banks) * ways * line));
  }
};

struct PrefetchConfig {
  std::uint32_t table_entries = 512;
  std::uint32_t warp_slots = 5;
  std::uint32_t counter_max = 15;   // 4-bit saturating
  std::uint32_t threshold = 12;     // prefetch when counter > threshold
  double high_threshold = 0.3;      // waste ratio above which granularity halves
  double low_threshold = 0.05;      // below which granularity grows by 1KB
  std::uint32_t epoch_misses = 4096;
  std::uint32_t initial_granularity = 4096;
  std::uint32_t min_granularity = 128;
  std::uint32_t max_granularity = 4096;
};

struct RegisterConfig {
  std::uint32_t per_plane = 2;  // 2 baseline / 8 optimized
  RegisterTopology topology = RegisterTopology::Baseline;
  std::uint32_t io_ports = 2;          // per package
  std::uint32_t thrash_window = 128;   // evictions per observation window
  double thrash_threshold = 0.5;       // re-written fraction that flags thrashing
  Cycles ring_hop_cycles = 1;          // NiF local network, per hop
  Cycles router_buffer_cycles = 8;     // SWnet router store cost
};

struct TlbConfig {
  std::uint32_t entries = 128;
  bool enabled = true;
  Cycles hit_cycles = 1;
  Cycles miss_cycles = 20;
};

struct MeshConfig {
  std::uint32_t link_bytes = 8;
  Cycles hop_cycles = 1;
};

struct OptaneConfig {
  std::uint32_t controllers = 6;
  std::uint32_t banks_per_controller = 16;
  std::uint64_t row_bytes = 4096;
  double trcd_ns = 190.0;
  double tcl_ns = 8.9;
  double trp_ns = 763.0;
  std::uint64_t transfer_ns = 20;  // 128B on the controller bus
};

struct HeteroConfig {
  std::uint64_t fault_service_ns = 20000;  // SSD read + 2x PCIe + host staging
  std::uint64_t fault_pipe_ns = 5000;      // host/PCIe occupancy per fault
  Cycles mem_latency_cycles = 120;         // GDDR5-rate backing after fault
  std::uint32_t mem_controllers = 6;
  std::uint64_t mem_transfer_ns = 2;       // 128B per controller occupancy
};

struct HybridGpuConfig {
  std::uint64_t engine_ns = 500;           // single SSD-engine FTL stage
  std::uint64_t dram_buffer_bytes = 64ull << 20;
  std::uint64_t dram_transfer_ns = 16;     // 128B over the 32-bit buffer bus
  std::uint32_t channel_lanes = 1;         // 1B-wide bus channels
};

struct EnginePolicy {
  std::uint32_t warp_outstanding = 8;   // memory-level-parallelism cap
  std::uint32_t controller_queue = 64;
  Cycles decode_cycles = 4;             // flash-command sequencing
  Cycles noc_cycles = 10;               // GPU interconnect, one direction
  Cycles epoch_cycles = 1000000;        // time-series sampling period
  std::uint32_t group_size = 8;         // data blocks per shared log block
  std::uint64_t host_fault_ns = 20000;  // page-fault service outside zng
};

struct PlatformConfig {
  Platform platform = Platform::Zng;
  Clock clock;  // 1.2 GHz
  Geometry geometry;
  ZTiming znand;
  L2Config l2;
  PrefetchConfig prefetch;
  RegisterConfig registers;
  TlbConfig tlb;
  MeshConfig mesh;
  OptaneConfig optane;
  HeteroConfig hetero;
  HybridGpuConfig hybrid;
  EnginePolicy policy;

  bool prefetch_enabled = true;
  bool redirection_enabled = true;

  // Derive the feature switches of one of the seven platforms while keeping
  // every explicitly set knob.
  void apply_platform(Platform p) {
    platform = p;
    switch (p) {
      case Platform::ZngBase:
        prefetch_enabled = false;
        redirection_enabled = false;
        registers.per_plane = 2;
        registers.topology = RegisterTopology::Baseline;
        break;
      case Platform::ZngRdOpt:
        prefetch_enabled = true;
        redirection_enabled = false;
        registers.per_plane = 2;
        registers.topology = RegisterTopology::Baseline;
        break;
      case Platform::ZngWrOpt:
        prefetch_enabled = false;
        redirection_enabled = true;
        registers.per_plane = 8;
        registers.topology = RegisterTopology::NiF;
        break;
      case Platform::Zng:
        prefetch_enabled = true;
        redirection_enabled = true;
        registers.per_plane = 8;
        registers.topology = RegisterTopology::NiF;
        break;
      default:
        break;
    }
  }

  std::vector<std::string> validate() const {
    std::vector<std::string> errs = geometry.validate();
    if (l2.capacity !=
        static_cast<std::uint64_t>(l2.sets()) * l2.ways * l2.line * l2.banks)
      errs.push_back("l2: capacity must equal sets*ways*line*banks");
    if (l2.line != kLineBytes) errs.push_back("l2: line size must be 128");
    if (znand.read_ns == 0 || znand.program_ns == 0 || znand.erase_ns == 0)
      errs.push_back("znand: timing values must be positive");
    if (registers.per_plane == 0)
      errs.push_back("registers: need at least one register per plane");
    if (policy.group_size == 0)
      errs.push_back("policy: group_size must be positive");
    if (prefetch.high_threshold <= prefetch.low_threshold)
      errs.push_back("prefetch: high_threshold must exceed low_threshold");
    return errs;
  }
};

// ---------------------------------------------------------------------------
// JSON (de)serialization. Only documented knobs appear in config files;
// anything omitted keeps its default.

inline void from_json_into(const nlohmann::json& j, Geometry& g) {
  g.channels = j.value("channels", g.channels);
  g.packages_per_channel = j.value("packages_per_channel", g.packages_per_channel);
  g.dies = j.value("dies", g.dies);
  g.planes = j.value("planes", g.planes);
  g.blocks_per_plane = j.value("blocks_per_plane", g.blocks_per_plane);
  g.pages_per_block = j.value("pages_per_block", g.pages_per_block);
  g.op_fraction = j.value("op_fraction", g.op_fraction);
}

inline nlohmann::ordered_json to_json(const Geometry& g) {
  return {{"channels", g.channels},
          {"packages_per_channel", g.packages_per_channel},
          {"dies", g.dies},
          {"planes", g.planes},
          {"blocks_per_plane", g.blocks_per_plane},
          {"pages_per_block", g.pages_per_block},
          {"op_fraction", g.op_fraction}};
}

inline void from_json_into(const nlohmann::json& j, PlatformConfig& c) {
  if (j.contains("platform")) {
    const auto p = platform_from_name(j.at("platform").get<std::string>());
    if (!p) throw sim_exception("config", "unknown platform: " +
                                              j.at("platform").get<std::string>());
    c.apply_platform(*p);
  }
  if (j.contains("geometry")) from_json_into(j.at("geometry"), c.geometry);
  if (j.contains("znand")) {
    const auto& z = j.at("znand");
    c.znand.read_ns = z.value("read_ns", c.znand.read_ns);
    c.znand.program_ns = z.value("program_ns", c.znand.program_ns);
    c.znand.erase_ns = z.value("erase_ns", c.znand.erase_ns);
    c.znand.interface_mts = z.value("interface_mts", c.znand.interface_mts);
    c.znand.interface_lanes = z.value("interface_lanes", c.znand.interface_lanes);
  }
  if (j.contains("l2")) {
    const auto& l = j.at("l2");
    c.l2.capacity = l.value("capacity", c.l2.capacity);
    c.l2.banks = l.value("banks", c.l2.banks);
    c.l2.ways = l.value("ways", c.l2.ways);
    c.l2.read_cycles = l.value("read_cycles", c.l2.read_cycles);
    c.l2.write_cycles = l.value("write_cycles", c.l2.write_cycles);
    c.l2.pinned_fraction = l.value("pinned_fraction", c.l2.pinned_fraction);
  }
  if (j.contains("prefetch")) {
    const auto& p = j.at("prefetch");
    c.prefetch.table_entries = p.value("table_entries", c.prefetch.table_entries);
    c.prefetch.warp_slots = p.value("warp_slots", c.prefetch.warp_slots);
    c.prefetch.threshold = p.value("threshold", c.prefetch.threshold);
    c.prefetch.high_threshold = p.value("high_threshold", c.prefetch.high_threshold);
    c.prefetch.low_threshold = p.value("low_threshold", c.prefetch.low_threshold);
    c.prefetch.epoch_misses = p.value("epoch_misses", c.prefetch.epoch_misses);
    c.prefetch.initial_granularity =
        p.value("initial_granularity", c.prefetch.initial_granularity);
  }
  if (j.contains("registers")) {
    const auto& r = j.at("registers");
    c.registers.per_plane = r.value("per_plane", c.registers.per_plane);
    if (r.contains("topology")) {
      const auto t = topology_from_name(r.at("topology").get<std::string>());
      if (!t) throw sim_exception("config", "unknown register topology: " +
                                                r.at("topology").get<std::string>());
      c.registers.topology = *t;
    }
    c.registers.io_ports = r.value("io_ports", c.registers.io_ports);
    c.registers.thrash_window = r.value("thrash_window", c.registers.thrash_window);
    c.registers.thrash_threshold =
        r.value("thrash_threshold", c.registers.thrash_threshold);
  }
  if (j.contains("tlb")) {
    const auto& t = j.at("tlb");
    c.tlb.entries = t.value("entries", c.tlb.entries);
    c.tlb.enabled = t.value("enabled", c.tlb.enabled);
    c.tlb.hit_cycles = t.value("hit_cycles", c.tlb.hit_cycles);
    c.tlb.miss_cycles = t.value("miss_cycles", c.tlb.miss_cycles);
  }
  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    c.policy.warp_outstanding = p.value("warp_outstanding", c.policy.warp_outstanding);
    c.policy.controller_queue = p.value("controller_queue", c.policy.controller_queue);
    c.policy.decode_cycles = p.value("decode_cycles", c.policy.decode_cycles);
    c.policy.noc_cycles = p.value("noc_cycles", c.policy.noc_cycles);
    c.policy.epoch_cycles = p.value("epoch_cycles", c.policy.epoch_cycles);
    c.policy.group_size = p.value("group_size", c.policy.group_size);
  }
  if (j.contains("prefetch_enabled"))
    c.prefetch_enabled = j.at("prefetch_enabled").get<bool>();
  if (j.contains("redirection_enabled"))
    c.redirection_enabled = j.at("redirection_enabled").get<bool>();
}

inline nlohmann::ordered_json to_json(const PlatformConfig& c) {
  nlohmann::ordered_json j;
  j["platform"] = platform_name(c.platform);
  j["geometry"] = to_json(c.geometry);
  j["znand"] = {{"read_ns", c.znand.read_ns},
                {"program_ns", c.znand.program_ns},
                {"erase_ns", c.znand.erase_ns},
                {"interface_mts", c.znand.interface_mts},
                {"interface_lanes", c.znand.interface_lanes}};
  j["l2"] = {{"capacity", c.l2.capacity},
             {"banks", c.l2.banks},
             {"ways", c.l2.ways},
             {"read_cycles", c.l2.read_cycles},
             {"write_cycles", c.l2.write_cycles},
             {"pinned_fraction", c.l2.pinned_fraction}};
  j["prefetch"] = {{"table_entries", c.prefetch.table_entries},
                   {"warp_slots", c.prefetch.warp_slots},
                   {"threshold", c.prefetch.threshold},
                   {"high_threshold", c.prefetch.high_threshold},
                   {"low_threshold", c.prefetch.low_threshold},
                   {"epoch_misses", c.prefetch.epoch_misses},
                   {"initial_granularity", c.prefetch.initial_granularity}};
  j["registers"] = {{"per_plane", c.registers.per_plane},
                    {"topology", topology_name(c.registers.topology)},
                    {"io_ports", c.registers.io_ports},
                    {"thrash_window", c.registers.thrash_window},
                    {"thrash_threshold", c.registers.thrash_threshold}};
  j["tlb"] = {{"entries", c.tlb.entries},
              {"enabled", c.tlb.enabled},
              {"hit_cycles", c.tlb.hit_cycles},
              {"miss_cycles", c.tlb.miss_cycles}};
  j["policy"] = {{"warp_outstanding", c.policy.warp_outstanding},
                 {"controller_queue", c.policy.controller_queue},
                 {"decode_cycles", c.policy.decode_cycles},
                 {"noc_cycles", c.policy.noc_cycles},
                 {"epoch_cycles", c.policy.epoch_cycles},
                 {"group_size", c.policy.group_size}};
  j["prefetch_enabled"] = c.prefetch_enabled;
  j["redirection_enabled"] = c.redirection_enabled;
  return j;
}

}  // namespace zng
