#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zng/rng.hpp"
#include "zng/types.hpp"

namespace zng {

enum class TraceKind : std::uint8_t {
  Sequential,
  Strided,
  UniformRandom,
  Zipf,
  MixedApp,
};

inline const char* trace_kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::Sequential: return "sequential";
    case TraceKind::Strided: return "strided";
    case TraceKind::UniformRandom: return "uniform-random";
    case TraceKind::Zipf: return "zipf";
    case TraceKind::MixedApp: return "mixed-app";
  }
  return "?";
}

struct TraceSpec {
  TraceKind kind = TraceKind::Sequential;
  double read_ratio = 1.0;
  std::uint64_t footprint = 4096;  // bytes, rounded up to a line multiple
  std::uint64_t length = 0;        // request count
  std::uint64_t seed = 1;
  // Generator shape knobs.
  std::uint64_t stride = kLineBytes;
  double zipf_s = 0.99;
  Cycles issue_interval = 1;       // cycles between consecutive requests
  std::uint32_t warps = 64;
  std::uint32_t chunk_lines = 32;  // lines one warp walks before handing off
  std::uint32_t pc_count = 4;
  std::uint64_t pc_base = 0x1000;
  std::uint64_t base_vaddr = 0;    // assigned per app for co-runs
  std::uint8_t app_id = 0;
  std::vector<TraceSpec> per_app;  // for kind == MixedApp

  void check() const {
    if (kind != TraceKind::MixedApp) {
      if (length == 0)
        throw sim_exception("trace", "zero-length trace spec");
      if (footprint == 0)
        throw sim_exception("trace", "zero-footprint trace spec");
      if (read_ratio < 0.0 || read_ratio > 1.0)
        throw sim_exception("trace", "read_ratio outside [0,1]");
    } else {
      if (per_app.empty())
        throw sim_exception("trace", "mixed-app spec with no sub-specs");
      for (const auto& s : per_app) s.check();
    }
  }
};

// Address spaces of co-running apps must never overlap; each app gets a
// 1 TB-aligned base.
constexpr std::uint64_t kAppAddressStride = 1ull << 40;

namespace detail {

inline std::uint64_t lines_of(const TraceSpec& s) {
  return (s.footprint + kLineBytes - 1) / kLineBytes;
}

inline void gen_single(const TraceSpec& s, std::vector<MemoryRequest>& out) {
  Rng rng(s.seed);
  const std::uint64_t lines = lines_of(s);
  ZipfSampler* zipf = nullptr;
  ZipfSampler zs(s.kind == TraceKind::Zipf ? lines : 1, s.zipf_s);
  if (s.kind == TraceKind::Zipf) zipf = &zs;

  for (std::uint64_t i = 0; i < s.length; ++i) {
    MemoryRequest r;
    r.issue_cycle = i * s.issue_interval;
    r.app_id = s.app_id;
    std::uint64_t line = 0;
    switch (s.kind) {
      case TraceKind::Sequential:
        line = i % lines;
        r.warp_id = static_cast<std::uint16_t>((i / s.chunk_lines) % s.warps);
        r.pc = s.pc_base;
        break;
      case TraceKind::Strided:
        line = (i * (s.stride / kLineBytes)) % lines;
        r.warp_id = static_cast<std::uint16_t>((i / s.chunk_lines) % s.warps);
        r.pc = s.pc_base;
        break;
      case TraceKind::UniformRandom:
        line = rng.below(lines);
        r.warp_id = static_cast<std::uint16_t>(rng.below(s.warps));
        r.pc = s.pc_base + rng.below(s.pc_count) * 4;
        break;
      case TraceKind::Zipf:
        line = zipf->sample(rng);
        r.warp_id = static_cast<std::uint16_t>(rng.below(s.warps));
        r.pc = s.pc_base + rng.below(s.pc_count) * 4;
        break;
      case TraceKind::MixedApp:
        break;  // handled by caller
    }
    r.vaddr = s.base_vaddr + line * kLineBytes;
    r.op = rng.chance(s.read_ratio) ? Op::Read : Op::Write;
    out.push_back(r);
  }
}

}  // namespace detail

// Deterministic synthetic workload generator. A fixed (spec, seed) pair
// yields an identical stream on every platform.
inline std::vector<MemoryRequest> generate_trace(const TraceSpec& spec) {
  spec.check();
  std::vector<MemoryRequest> out;
  if (spec.kind != TraceKind::MixedApp) {
    out.reserve(spec.length);
    detail::gen_single(spec, out);
    return out;
  }

  std::vector<std::vector<MemoryRequest>> streams;
  std::uint8_t app = 0;
  for (const auto& sub_in : spec.per_app) {
    TraceSpec sub = sub_in;
    sub.app_id = app;
    sub.base_vaddr = static_cast<std::uint64_t>(app) * kAppAddressStride;
    if (sub.seed == 0) sub.seed = spec.seed + app;
    std::vector<MemoryRequest> s;
    s.reserve(sub.length);
    detail::gen_single(sub, s);
    streams.push_back(std::move(s));
    ++app;
  }
  // Merge by issue_cycle; app index breaks ties so the interleave is stable.
  std::vector<std::size_t> cursor(streams.size(), 0);
  std::size_t remaining = 0;
  for (const auto& s : streams) remaining += s.size();
  out.reserve(remaining);
  while (remaining > 0) {
    std::size_t best = streams.size();
    for (std::size_t a = 0; a < streams.size(); ++a) {
      if (cursor[a] >= streams[a].size()) continue;
      if (best == streams.size() ||
          streams[a][cursor[a]].issue_cycle <
              streams[best][cursor[best]].issue_cycle)
        best = a;
    }
    out.push_back(streams[best][cursor[best]++]);
    --remaining;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trace file format: header (magic "ZNGT", version u16, record count u64)
// followed by fixed 32-byte little-endian records:
//   issue_cycle u64, vaddr u64, pc u64, warp_id u16, app_id u8, op u8,
//   reserved u32.
// A plain-text line format "cycle op vaddr pc warp app" is accepted for
// hand-written fixtures.

constexpr char kTraceMagic[4] = {'Z', 'N', 'G', 'T'};
constexpr std::uint16_t kTraceVersion = 1;
constexpr std::size_t kTraceRecordBytes = 32;

namespace detail {

template <typename T>
void put_le(std::string& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace detail

inline void write_trace(const std::string& path,
                        const std::vector<MemoryRequest>& reqs) {
  std::string buf;
  buf.reserve(16 + reqs.size() * kTraceRecordBytes);
  buf.append(kTraceMagic, 4);
  detail::put_le<std::uint16_t>(buf, kTraceVersion);
  detail::put_le<std::uint16_t>(buf, 0);  // pad
  detail::put_le<std::uint64_t>(buf, reqs.size());
  for (const auto& r : reqs) {
    detail::put_le<std::uint64_t>(buf, r.issue_cycle);
    detail::put_le<std::uint64_t>(buf, r.vaddr);
    detail::put_le<std::uint64_t>(buf, r.pc);
    detail::put_le<std::uint16_t>(buf, r.warp_id);
    buf.push_back(static_cast<char>(r.app_id));
    buf.push_back(static_cast<char>(r.op == Op::Write ? 1 : 0));
    detail::put_le<std::uint32_t>(buf, 0);  // reserved
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw sim_exception("trace", "cannot open for write: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw sim_exception("trace", "short write: " + path);
}

namespace detail {

inline std::vector<MemoryRequest> load_text_trace(const std::string& path,
                                                  std::istream& in) {
  std::vector<MemoryRequest> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    MemoryRequest r;
    std::string op;
    std::uint64_t warp = 0, app = 0;
    if (!(ls >> r.issue_cycle >> op >> r.vaddr >> r.pc >> warp >> app))
      throw sim_exception("trace", path + ": malformed record at line " +
                                       std::to_string(lineno));
    if (op == "R" || op == "r" || op == "0")
      r.op = Op::Read;
    else if (op == "W" || op == "w" || op == "1")
      r.op = Op::Write;
    else
      throw sim_exception("trace", path + ": bad op '" + op + "' at line " +
                                       std::to_string(lineno));
    r.warp_id = static_cast<std::uint16_t>(warp);
    r.app_id = static_cast<std::uint8_t>(app);
    out.push_back(r);
  }
  return out;
}

}  // namespace detail

inline std::vector<MemoryRequest> load_trace(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw sim_exception("trace", "cannot open: " + path);
  char magic[4] = {};
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, kTraceMagic, 4) != 0) {
    // Fall back to the text fixture format.
    f.clear();
    f.seekg(0);
    auto out = detail::load_text_trace(path, f);
    for (std::size_t i = 1; i < out.size(); ++i)
      if (out[i].issue_cycle < out[i - 1].issue_cycle)
        throw sim_exception("trace", path + ": non-monotonic issue_cycle at record " +
                                         std::to_string(i));
    return out;
  }
  char hdr[12];
  f.read(hdr, 12);
  if (f.gcount() != 12)
    throw sim_exception("trace", path + ": truncated header");
  const auto version = detail::get_le<std::uint16_t>(hdr);
  if (version != kTraceVersion)
    throw sim_exception("trace", path + ": unsupported version " +
                                     std::to_string(version));
  const auto count = detail::get_le<std::uint64_t>(hdr + 4);
  std::vector<MemoryRequest> out;
  out.reserve(count);
  std::array<char, kTraceRecordBytes> rec;
  for (std::uint64_t i = 0; i < count; ++i) {
    f.read(rec.data(), kTraceRecordBytes);
    if (static_cast<std::size_t>(f.gcount()) != kTraceRecordBytes)
      throw sim_exception("trace", path + ": truncated record " +
                                       std::to_string(i));
    MemoryRequest r;
    r.issue_cycle = detail::get_le<std::uint64_t>(rec.data());
    r.vaddr = detail::get_le<std::uint64_t>(rec.data() + 8);
    r.pc = detail::get_le<std::uint64_t>(rec.data() + 16);
    r.warp_id = detail::get_le<std::uint16_t>(rec.data() + 24);
    r.app_id = static_cast<std::uint8_t>(rec[26]);
    const auto op = static_cast<std::uint8_t>(rec[27]);
    if (op > 1)
      throw sim_exception("trace", path + ": bad op byte in record " +
                                       std::to_string(i));
    r.op = op ? Op::Write : Op::Read;
    if (!out.empty() && r.issue_cycle < out.back().issue_cycle)
      throw sim_exception("trace", path + ": non-monotonic issue_cycle at record " +
                                       std::to_string(i));
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spec JSON.

inline TraceSpec trace_spec_from_json(const nlohmann::json& j);

namespace detail {

inline TraceKind trace_kind_from_name(const std::string& s) {
  if (s == "sequential") return TraceKind::Sequential;
  if (s == "strided") return TraceKind::Strided;
  if (s == "uniform-random") return TraceKind::UniformRandom;
  if (s == "zipf") return TraceKind::Zipf;
  if (s == "mixed-app") return TraceKind::MixedApp;
  throw sim_exception("trace", "unknown generator kind: " + s);
}

}  // namespace detail

inline TraceSpec trace_spec_from_json(const nlohmann::json& j) {
  TraceSpec s;
  if (j.contains("generator"))
    s.kind = detail::trace_kind_from_name(j.at("generator").get<std::string>());
  s.read_ratio = j.value("read_ratio", s.read_ratio);
  s.footprint = j.value("footprint", s.footprint);
  s.length = j.value("length", s.length);
  s.seed = j.value("seed", s.seed);
  s.stride = j.value("stride", s.stride);
  s.zipf_s = j.value("zipf_s", s.zipf_s);
  s.issue_interval = j.value("issue_interval", s.issue_interval);
  s.warps = j.value("warps", s.warps);
  s.chunk_lines = j.value("chunk_lines", s.chunk_lines);
  s.pc_count = j.value("pc_count", s.pc_count);
  if (j.contains("per_app"))
    for (const auto& sub : j.at("per_app"))
      s.per_app.push_back(trace_spec_from_json(sub));
  return s;
}

inline nlohmann::ordered_json trace_spec_to_json(const TraceSpec& s) {
  nlohmann::ordered_json j;
  j["generator"] = trace_kind_name(s.kind);
  j["read_ratio"] = s.read_ratio;
  j["footprint"] = s.footprint;
  j["length"] = s.length;
  j["seed"] = s.seed;
  j["stride"] = s.stride;
  j["zipf_s"] = s.zipf_s;
  j["issue_interval"] = s.issue_interval;
  j["warps"] = s.warps;
  j["chunk_lines"] = s.chunk_lines;
  j["pc_count"] = s.pc_count;
  if (!s.per_app.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& sub : s.per_app) arr.push_back(trace_spec_to_json(sub));
    j["per_app"] = arr;
  }
  return j;
}

}  // namespace zng
