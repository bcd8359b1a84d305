#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zng/config.hpp"
#include "zng/engine.hpp"
#include "zng/ftl.hpp"
#include "zng/metrics.hpp"
#include "zng/trace.hpp"

namespace zng::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw sim_exception("cli", "cannot open: " + path);
  nlohmann::json j;
  f >> j;
  return j;
}

inline PlatformConfig load_config(const std::string& path) {
  PlatformConfig cfg;
  if (!path.empty()) from_json_into(load_json(path), cfg);
  return cfg;
}

inline std::vector<MemoryRequest> load_requests(const std::string& trace_path,
                                                const std::string& spec_path,
                                                std::uint64_t seed_override) {
  if (!trace_path.empty()) return load_trace(trace_path);
  if (spec_path.empty())
    throw sim_exception("cli", "need --trace or --spec");
  TraceSpec spec = trace_spec_from_json(load_json(spec_path));
  if (seed_override != 0) spec.seed = seed_override;
  return generate_trace(spec);
}

inline unsigned runner_threads() {
  const char* env = std::getenv("ZNG_SIM_THREADS");
  if (!env) return 1;
  const long v = std::strtol(env, nullptr, 10);
  if (v <= 1) return 1;
  return static_cast<unsigned>(v);
}

// Runs `jobs` independent simulations, at most ZNG_SIM_THREADS at a time,
// preserving result order.
template <typename Fn>
void parallel_for(std::size_t jobs, Fn&& fn) {
  const unsigned threads = std::min<std::size_t>(runner_threads(), jobs);
  if (threads <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs) return;
        fn(i);
      }
    });
  for (auto& th : pool) th.join();
}

struct SweepKnob {
  std::string name;
  std::vector<std::string> values;
};

inline const std::vector<std::string>& sweep_knob_names() {
  static const std::vector<std::string> names = {
      "high_threshold",  "low_threshold",      "granularity",
      "group_size",      "topology",           "registers_per_plane",
      "prefetch",        "redirection",        "tlb",
      "warp_outstanding"};
  return names;
}

inline void apply_knob(PlatformConfig& cfg, const std::string& name,
                       const std::string& value) {
  if (name == "high_threshold")
    cfg.prefetch.high_threshold = std::stod(value);
  else if (name == "low_threshold")
    cfg.prefetch.low_threshold = std::stod(value);
  else if (name == "granularity")
    cfg.prefetch.initial_granularity =
        static_cast<std::uint32_t>(std::stoul(value));
  else if (name == "group_size")
    cfg.policy.group_size = static_cast<std::uint32_t>(std::stoul(value));
  else if (name == "topology") {
    auto t = topology_from_name(value);
    if (!t) throw sim_exception("cli", "unknown topology: " + value);
    cfg.registers.topology = *t;
  } else if (name == "registers_per_plane")
    cfg.registers.per_plane = static_cast<std::uint32_t>(std::stoul(value));
  else if (name == "prefetch")
    cfg.prefetch_enabled = value == "on" || value == "true" || value == "1";
  else if (name == "redirection")
    cfg.redirection_enabled = value == "on" || value == "true" || value == "1";
  else if (name == "tlb")
    cfg.tlb.enabled = value == "on" || value == "true" || value == "1";
  else if (name == "warp_outstanding")
    cfg.policy.warp_outstanding =
        static_cast<std::uint32_t>(std::stoul(value));
  else {
    std::string all;
    for (const auto& n : sweep_knob_names()) all += " " + n;
    throw sim_exception("cli", "unknown knob '" + name + "'; valid knobs:" + all);
  }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_trace_gen(const std::string& spec_path,
                         const std::string& out_path,
                         std::uint64_t seed_override) {
  TraceSpec spec = trace_spec_from_json(detail::load_json(spec_path));
  if (seed_override != 0) spec.seed = seed_override;
  auto reqs = generate_trace(spec);
  write_trace(out_path, reqs);
  std::uint64_t reads = 0;
  for (const auto& r : reqs)
    if (r.op == Op::Read) ++reads;
  const double ratio =
      reqs.empty() ? 0.0
                   : static_cast<double>(reads) / static_cast<double>(reqs.size());
  std::cout << "wrote " << reqs.size() << " records to " << out_path
            << " (read ratio " << ratio << ")\n";
  return kExitOk;
}

inline int cmd_run(const std::string& config_path,
                   const std::string& trace_path, const std::string& spec_path,
                   const std::string& out_dir,
                   const std::vector<std::string>& platform_names,
                   std::uint64_t seed, Cycles epoch_override) {
  PlatformConfig base = detail::load_config(config_path);
  if (epoch_override > 0) base.policy.epoch_cycles = epoch_override;
  auto trace = detail::load_requests(trace_path, spec_path, seed);

  std::vector<Platform> platforms;
  for (const auto& n : platform_names) {
    auto p = platform_from_name(n);
    if (!p) throw sim_exception("cli", "unknown platform: " + n);
    platforms.push_back(*p);
  }
  if (platforms.empty()) throw sim_exception("cli", "no platforms selected");

  std::filesystem::create_directories(out_dir);
  std::vector<MetricsReport> reports(platforms.size());
  detail::parallel_for(platforms.size(), [&](std::size_t i) {
    PlatformConfig cfg = base;
    cfg.apply_platform(platforms[i]);
    const auto errs = cfg.validate();
    if (!errs.empty()) throw sim_exception("config", errs.front());
    Engine eng(cfg, trace);
    reports[i] = eng.run();
    reports[i].seed = seed;
  });

  for (std::size_t i = 0; i < platforms.size(); ++i) {
    const std::string name = platform_name(platforms[i]);
    const std::string jpath = out_dir + "/report_" + name + ".json";
    std::ofstream jf(jpath, std::ios::trunc);
    jf << to_json(reports[i]).dump(2) << "\n";
    write_time_series_csv(out_dir + "/timeseries_" + name + ".csv",
                          reports[i]);
  }

  // Completion time normalized to the full design, when present.
  Cycles ref = 0;
  for (std::size_t i = 0; i < platforms.size(); ++i)
    if (platforms[i] == Platform::Zng) ref = reports[i].completion_cycles;
  if (ref == 0) ref = reports.front().completion_cycles;
  std::cout << "platform completion_cycles normalized_to_zng\n";
  for (std::size_t i = 0; i < platforms.size(); ++i) {
    const double norm =
        ref == 0 ? 0.0
                 : static_cast<double>(reports[i].completion_cycles) /
                       static_cast<double>(ref);
    std::cout << platform_name(platforms[i]) << " "
              << reports[i].completion_cycles << " " << norm << "\n";
  }
  return kExitOk;
}

inline int cmd_sweep(const std::string& config_path,
                     const std::string& trace_path,
                     const std::string& spec_path, const std::string& out_csv,
                     const std::string& platform_name_str,
                     const std::vector<std::string>& params,
                     std::uint64_t seed) {
  PlatformConfig base = detail::load_config(config_path);
  if (!platform_name_str.empty()) {
    auto p = platform_from_name(platform_name_str);
    if (!p) throw sim_exception("cli", "unknown platform: " + platform_name_str);
    base.apply_platform(*p);
  }
  auto trace = detail::load_requests(trace_path, spec_path, seed);

  std::vector<detail::SweepKnob> knobs;
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos)
      throw sim_exception("cli", "bad --param, expected knob=v1,v2,...: " + p);
    detail::SweepKnob k;
    k.name = p.substr(0, eq);
    k.values = detail::split(p.substr(eq + 1), ',');
    if (k.values.empty()) throw sim_exception("cli", "empty knob values: " + p);
    knobs.push_back(std::move(k));
  }
  if (knobs.empty()) throw sim_exception("cli", "sweep needs at least one --param");

  std::size_t points = 1;
  for (const auto& k : knobs) points *= k.values.size();

  struct Row {
    std::vector<std::string> values;
    MetricsReport rep;
  };
  std::vector<Row> rows(points);
  // Validate knob names before any simulation runs.
  {
    PlatformConfig probe = base;
    for (const auto& k : knobs) detail::apply_knob(probe, k.name, k.values[0]);
  }
  detail::parallel_for(points, [&](std::size_t i) {
    PlatformConfig cfg = base;
    std::size_t rem = i;
    for (const auto& k : knobs) {
      const std::string& v = k.values[rem % k.values.size()];
      rem /= k.values.size();
      detail::apply_knob(cfg, k.name, v);
      rows[i].values.push_back(v);
    }
    Engine eng(cfg, trace);
    rows[i].rep = eng.run();
  });

  std::ofstream f(out_csv, std::ios::trunc);
  if (!f) throw sim_exception("cli", "cannot open for write: " + out_csv);
  for (const auto& k : knobs) f << k.name << ",";
  f << "completion_cycles,array_bandwidth_gbps,l2_hits,l2_misses,"
       "mean_write_redundancy,prefetch_accuracy,gc_count\n";
  for (const auto& row : rows) {
    for (const auto& v : row.values) f << v << ",";
    f << row.rep.completion_cycles << "," << row.rep.array_bandwidth_gbps
      << "," << row.rep.l2_hits << "," << row.rep.l2_misses << ","
      << row.rep.mean_write_redundancy << "," << row.rep.predictor_accuracy
      << "," << row.rep.gc_log.size() << "\n";
  }
  std::cout << "wrote " << points << " rows to " << out_csv << "\n";
  return kExitOk;
}

inline int cmd_validate(const std::string& config_path) {
  PlatformConfig cfg = detail::load_config(config_path);
  const auto errs = cfg.validate();
  if (errs.empty()) {
    std::cout << "config ok\n";
    return kExitOk;
  }
  for (const auto& e : errs) std::cerr << "error: " << e << "\n";
  return kExitUsage;
}

inline int cmd_dump_tables(const std::string& config_path,
                           const std::string& trace_path,
                           const std::string& out_path) {
  PlatformConfig cfg = detail::load_config(config_path);
  if (!platform_is_zng(cfg.platform)) cfg.apply_platform(Platform::Zng);
  std::vector<MemoryRequest> trace;
  if (!trace_path.empty()) trace = load_trace(trace_path);
  Engine eng(cfg, trace);
  eng.run();
  nlohmann::ordered_json j =
      eng.ftl() ? eng.ftl()->dump_json()
                : nlohmann::ordered_json{{"dbmt", nlohmann::ordered_json::array()},
                                         {"lbmt", nlohmann::ordered_json::object()}};
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream f(out_path, std::ios::trunc);
    f << j.dump(2) << "\n";
  }
  // The mapping-table economy next to a page-granularity design.
  const DbmtFootprint fp = dbmt_footprint(cfg.geometry);
  std::cerr << "dbmt: " << fp.block_table_bytes << " bytes ("
            << fp.entries << " entries); page-granularity equivalent: "
            << fp.page_table_bytes << " bytes\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  CLI::App app{"zng-sim: trace-driven GPU-SSD memory hierarchy simulator"};
  app.require_subcommand(1);

  std::string spec_path, trace_path, config_path, out_path, platform_str;
  std::vector<std::string> platform_names{"zng"};
  std::vector<std::string> params;
  std::uint64_t seed = 0;
  Cycles epoch = 0;

  auto* gen = app.add_subcommand("trace-gen", "generate a synthetic trace");
  gen->add_option("--spec", spec_path, "generator spec JSON")->required();
  gen->add_option("--out", out_path, "output trace file")->required();
  gen->add_option("--seed", seed, "seed override");

  auto* runc = app.add_subcommand("run", "simulate platforms on one trace");
  runc->add_option("--config", config_path, "platform config JSON");
  runc->add_option("--trace", trace_path, "trace file");
  runc->add_option("--spec", spec_path, "generator spec JSON");
  runc->add_option("--out", out_path, "output directory")->required();
  runc->add_option("--platforms", platform_names,
                   "platform list (hetero hybridgpu optane zng-base zng-rdopt "
                   "zng-wropt zng)")
      ->delimiter(',');
  runc->add_option("--seed", seed, "generator seed override");
  runc->add_option("--epoch", epoch, "time-series epoch in cycles");

  auto* sweep = app.add_subcommand("sweep", "run a parameter grid");
  sweep->add_option("--config", config_path, "platform config JSON");
  sweep->add_option("--trace", trace_path, "trace file");
  sweep->add_option("--spec", spec_path, "generator spec JSON");
  sweep->add_option("--out", out_path, "output CSV")->required();
  sweep->add_option("--platform", platform_str, "platform preset");
  sweep->add_option("--param", params, "knob=v1,v2,... (repeatable)");
  sweep->add_option("--seed", seed, "generator seed override");

  auto* val = app.add_subcommand("validate", "check a config file");
  val->add_option("--config", config_path, "platform config JSON")->required();

  auto* dump = app.add_subcommand("dump-tables", "dump DBMT/LBMT state");
  dump->add_option("--config", config_path, "platform config JSON");
  dump->add_option("--trace", trace_path, "trace to replay first");
  dump->add_option("--out", out_path, "output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_trace_gen(spec_path, out_path, seed);
    if (runc->parsed())
      return cmd_run(config_path, trace_path, spec_path, out_path,
                     platform_names, seed, epoch);
    if (sweep->parsed())
      return cmd_sweep(config_path, trace_path, spec_path, out_path,
                       platform_str, params, seed);
    if (val->parsed()) return cmd_validate(config_path);
    if (dump->parsed())
      return cmd_dump_tables(config_path, trace_path, out_path);
  } catch (const sim_exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    const std::string what = e.what();
    const bool usage = what.find("unknown") != std::string::npos ||
                       what.find("cli:") == 0 ||
                       e.error().module == "cli" ||
                       e.error().module == "config" ||
                       e.error().module == "trace";
    return usage ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace zng::cli
