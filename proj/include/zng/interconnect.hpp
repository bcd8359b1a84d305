#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <vector>

#include "zng/config.hpp"
#include "zng/timing.hpp"
#include "zng/types.hpp"

namespace zng {

struct FlashCommand {
  FlashOpKind kind = FlashOpKind::ArrayRead;
  std::uint64_t pdbn = 0;
  std::uint32_t page_index = 0;
  std::uint32_t bytes = 0;
};

// Command sequence for one memory request, as the controller emits it.
inline std::vector<FlashCommand> sequence_read(bool register_hit,
                                               std::uint32_t window_bytes,
                                               std::uint64_t pdbn,
                                               std::uint32_t page_index) {
  std::vector<FlashCommand> cmds;
  if (!register_hit)
    cmds.push_back({FlashOpKind::ArrayRead, pdbn, page_index, kPageBytes});
  cmds.push_back({FlashOpKind::RegRead, pdbn, page_index, window_bytes});
  return cmds;
}

inline std::vector<FlashCommand> sequence_write(std::uint64_t pdbn,
                                                std::uint32_t page_index) {
  // The program itself is deferred to register eviction.
  return {{FlashOpKind::RegWrite, pdbn, page_index,
           static_cast<std::uint32_t>(kLineBytes)}};
}

// Mesh flash network: flash controllers sit in column 0, packages in column
// 1 of a 2xN grid with dimension-ordered routing. Links are full duplex;
// each direction serializes at link_bytes per cycle.
class MeshNetwork {
 public:
  MeshNetwork(std::uint32_t controllers, std::uint32_t packages,
              const MeshConfig& cfg)
      : controllers_(controllers), packages_(packages), cfg_(cfg) {
    rows_ = std::max(controllers_, packages_);
    vlink_[0].assign(rows_ > 0 ? rows_ - 1 : 0, Link{});
    vlink_[1].assign(rows_ > 0 ? rows_ - 1 : 0, Link{});
    cross_[0].assign(rows_, Link{});
    cross_[1].assign(rows_, Link{});
  }

  std::uint32_t controller_node(std::uint32_t i) const { return i; }
  std::uint32_t package_node(std::uint32_t j) const { return controllers_ + j; }

  struct RouteResult {
    Cycles arrival = 0;
    std::uint32_t hops = 0;
  };

  // latency = hops * hop_cycles + serialization + queuing on busy links.
  RouteResult route(std::uint32_t src, std::uint32_t dst, std::uint64_t bytes,
                    Cycles now) {
    RouteResult r;
    if (src == dst) {
      r.arrival = now + serialization(bytes);
      return r;
    }
    const bool src_ctrl = src < controllers_;
    const bool dst_ctrl = dst < controllers_;
    const std::uint32_t row_a = src_ctrl ? src : src - controllers_;
    const std::uint32_t row_b = dst_ctrl ? dst : dst - controllers_;
    const std::uint32_t dir = row_a <= row_b ? 0 : 1;  // vertical direction
    const Cycles ser = serialization(bytes);
    Cycles head = now;
    // Vertical segment runs in the source column; crossing happens at the
    // destination row.
    const std::uint32_t lo = std::min(row_a, row_b);
    const std::uint32_t hi = std::max(row_a, row_b);
    for (std::uint32_t rr = lo; rr < hi; ++rr) {
      const std::uint32_t idx = dir == 0 ? rr : hi - 1 - (rr - lo) + lo;
      head = pass_link(vlink_[dir][idx], head, ser, bytes);
      ++r.hops;
    }
    if (src_ctrl != dst_ctrl) {
      const std::uint32_t cdir = src_ctrl ? 0 : 1;
      head = pass_link(cross_[cdir][row_b], head, ser, bytes);
      ++r.hops;
    }
    r.arrival = head + ser;
    return r;
  }

  Cycles serialization(std::uint64_t bytes) const {
    return (bytes + cfg_.link_bytes - 1) / cfg_.link_bytes;
  }

  std::uint64_t total_link_bytes() const {
    std::uint64_t n = 0;
    for (int d = 0; d < 2; ++d) {
      for (const auto& l : vlink_[d]) n += l.bytes;
      for (const auto& l : cross_[d]) n += l.bytes;
    }
    return n;
  }

  std::uint64_t cross_link_bytes(std::uint32_t row) const {
    return cross_[0][row].bytes + cross_[1][row].bytes;
  }

 private:
  struct Link {
    Cycles free_at = 0;
    std::uint64_t bytes = 0;
  };

  Cycles pass_link(Link& l, Cycles head, Cycles ser, std::uint64_t bytes) {
    const Cycles depart = std::max(head, l.free_at);
    l.free_at = depart + ser;
    l.bytes += bytes;
    return depart + cfg_.hop_cycles;
  }

  std::uint32_t controllers_;
  std::uint32_t packages_;
  std::uint32_t rows_;
  MeshConfig cfg_;
  std::vector<Link> vlink_[2];
  std::vector<Link> cross_[2];
};

// Per-channel flash controller front end: a bounded request queue and a
// serial command decoder. Arrivals beyond the queue depth stall until the
// oldest queued command drains.
class FlashController {
 public:
  FlashController(std::uint32_t id, std::uint32_t depth, Cycles decode_cycles)
      : id_(id), depth_(depth), decode_(decode_cycles) {}

  Cycles accept(Cycles arrival) {
    Cycles t = arrival;
    drain(t);
    if (backlog_.size() >= depth_) {
      const Cycles until = backlog_.front();
      stall_cycles_ += until - t;
      ++stalls_;
      t = until;
      drain(t);
    }
    const Cycles start = std::max(t, free_at_);
    free_at_ = start + decode_;
    backlog_.push_back(free_at_);
    ++dispatched_;
    return free_at_;
  }

  std::uint32_t id() const { return id_; }
  std::uint64_t dispatched() const { return dispatched_; }
  std::uint64_t stalls() const { return stalls_; }
  Cycles stall_cycles() const { return stall_cycles_; }
  std::size_t backlog_size() const { return backlog_.size(); }

 private:
  void drain(Cycles t) {
    while (!backlog_.empty() && backlog_.front() <= t) backlog_.pop_front();
  }

  std::uint32_t id_;
  std::uint32_t depth_;
  Cycles decode_;
  Cycles free_at_ = 0;
  std::deque<Cycles> backlog_;
  std::uint64_t dispatched_ = 0;
  std::uint64_t stalls_ = 0;
  Cycles stall_cycles_ = 0;
};

// Every memory request maps to exactly one controller via the channel field
// of its flash address.
inline std::uint32_t dispatch_controller(const FlashAddress& a) {
  return a.channel;
}

}  // namespace zng
