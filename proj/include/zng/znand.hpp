#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>
#include <vector>

#include "zng/config.hpp"
#include "zng/ftl.hpp"
#include "zng/geometry.hpp"
#include "zng/timing.hpp"
#include "zng/types.hpp"

namespace zng {

enum class PageState : std::uint8_t { Free, Valid, Stale };

// Payloads are not stored byte-for-byte: each 128B sector carries the
// version id of the write that produced it (0 = never written).
struct PageImage {
  std::array<std::uint64_t, kSectorsPerPage> v{};

  bool any() const {
    for (auto x : v)
      if (x) return true;
    return false;
  }
};

// Log page mapping table held by the programmable row decoder of one log
// block: one row per programmed page, searched newest-first so a re-written
// page's latest row wins.
class Lpmt {
 public:
  struct Row {
    std::uint64_t pdbn = 0;
    std::uint32_t page_index = 0;
  };

  void append(std::uint64_t pdbn, std::uint32_t page_index) {
    rows_.push_back({pdbn, page_index});
  }

  std::optional<std::uint32_t> search(std::uint64_t pdbn,
                                      std::uint32_t page_index) const {
    for (std::size_t i = rows_.size(); i-- > 0;)
      if (rows_[i].pdbn == pdbn && rows_[i].page_index == page_index)
        return static_cast<std::uint32_t>(i);
    return std::nullopt;
  }

  std::size_t row_count() const { return rows_.size(); }
  const Row& row(std::uint32_t i) const { return rows_[i]; }
  void clear() { rows_.clear(); }

 private:
  std::vector<Row> rows_;
};

struct BlockState {
  std::vector<PageState> state;
  std::vector<PageImage> images;
  Lpmt lpmt;                       // populated only while serving as log block
  std::uint32_t next_free = 0;     // in-order program cursor
  std::uint32_t erase_count = 0;
  std::uint64_t programs_lifetime = 0;

  explicit BlockState(std::uint32_t pages)
      : state(pages, PageState::Free), images(pages) {}
};

struct Plane {
  std::unordered_map<std::uint32_t, BlockState> blocks;  // by block-in-plane
  std::vector<std::uint32_t> free_data;  // erased blocks, ascending ids
  std::vector<std::uint32_t> free_op;
  Cycles busy_until = 0;
  std::uint64_t array_reads = 0;
  std::uint64_t programs = 0;
  std::uint64_t erases = 0;
  std::uint64_t reg_hits = 0;
  std::uint64_t reg_misses = 0;
};

// Sliding-window thrashing detector over register evictions: the window
// holds the last `window` dirty evictions, and the checker flags thrashing
// while more than `threshold` of them saw their page re-written.
class ThrashChecker {
 public:
  ThrashChecker(std::uint32_t window, double threshold)
      : window_(window), threshold_(threshold) {}

  void on_eviction(std::uint64_t key) {
    window_evs_.push_back({key, next_id_, false});
    live_[key] = next_id_;
    ++next_id_;
    if (window_evs_.size() > window_) {
      const Ev& old = window_evs_.front();
      if (old.rewritten) --marked_;
      auto it = live_.find(old.key);
      if (it != live_.end() && it->second == old.id) live_.erase(it);
      window_evs_.pop_front();
    }
    refresh();
  }

  void on_write(std::uint64_t key) {
    auto it = live_.find(key);
    if (it == live_.end()) return;
    Ev& ev = window_evs_[it->second - window_evs_.front().id];
    if (!ev.rewritten) {
      ev.rewritten = true;
      ++marked_;
    }
    live_.erase(it);
    refresh();
  }

  bool thrashing() const { return thrashing_; }
  std::uint64_t windows_seen() const { return windows_; }
  std::uint64_t thrash_windows() const { return thrash_windows_; }

 private:
  void refresh() {
    const bool was = thrashing_;
    thrashing_ = window_evs_.size() >= window_ &&
                 static_cast<double>(marked_) >
                     threshold_ * static_cast<double>(window_evs_.size());
    if (thrashing_ && !was) {
      ++windows_;
      ++thrash_windows_;
    } else if (!thrashing_ && was) {
      ++windows_;
    }
  }

  struct Ev {
    std::uint64_t key;
    std::uint64_t id;
    bool rewritten;
  };
  std::uint32_t window_;
  double threshold_;
  std::deque<Ev> window_evs_;
  std::unordered_map<std::uint64_t, std::uint64_t> live_;
  std::uint64_t next_id_ = 0;
  std::uint64_t marked_ = 0;
  bool thrashing_ = false;
  std::uint64_t windows_ = 0;
  std::uint64_t thrash_windows_ = 0;
};

enum class WritebackPath : std::uint8_t {
  Local,       // same plane over the shared data path
  NifForward,  // through the plane data registers and the local ring
  SwnetCopy,   // out and back over the flash network router
  FcnetDirect, // dedicated wiring
};

struct RegSlot {
  bool valid = false;
  bool dirty = false;
  std::uint64_t pdbn = 0;
  std::uint32_t page_index = 0;
  std::uint64_t plbn = 0;
  std::uint32_t group = 0;
  std::uint32_t lbn = 0;
  std::uint8_t app = 0;
  std::uint32_t target_plane = 0;  // plane (within package) the page belongs to
  std::array<std::uint64_t, kSectorsPerPage> sectors{};
  std::uint32_t mask = 0;  // valid sectors
  std::uint64_t lru = 0;
  Cycles busy_until = 0;
};

inline std::uint64_t reg_key(std::uint64_t pdbn, std::uint32_t page_index) {
  return (pdbn << 16) | page_index;
}

// Flash registers of one package. Baseline keeps each plane's registers
// private; the grouped topologies expose them as one fully-associative pool.
class RegisterGroup {
 public:
  RegisterGroup(std::uint32_t planes, std::uint32_t per_plane,
                RegisterTopology topo)
      : planes_(planes),
        per_plane_(per_plane),
        topo_(topo),
        slots_(static_cast<std::size_t>(planes) * per_plane) {
    for (std::uint32_t i = 0; i < slots_.size(); ++i)
      slots_[i].target_plane = i / per_plane_;
  }

  RegisterTopology topology() const { return topo_; }
  std::uint32_t slot_count() const {
    return static_cast<std::uint32_t>(slots_.size());
  }
  std::uint32_t home_plane(std::uint32_t slot) const {
    return slot / per_plane_;
  }

  // Under NiF one register per plane is set aside as the data register of
  // the local network.
  bool is_data_register(std::uint32_t slot) const {
    return topo_ == RegisterTopology::NiF && per_plane_ >= 2 &&
           slot % per_plane_ == 0;
  }

  int find(std::uint64_t pdbn, std::uint32_t page_index) const {
    auto it = index_.find(reg_key(pdbn, page_index));
    return it == index_.end() ? -1 : static_cast<int>(it->second);
  }

  RegSlot& slot(std::uint32_t i) { return slots_[i]; }
  const RegSlot& slot(std::uint32_t i) const { return slots_[i]; }

  void touch(std::uint32_t i) { slots_[i].lru = ++lru_clock_; }

  bool slot_usable(std::uint32_t i, std::uint32_t target_plane) const {
    if (is_data_register(i)) return false;
    if (topo_ == RegisterTopology::Baseline)
      return home_plane(i) == target_plane;
    return true;
  }

  // Free slot preference: target plane first, then lowest id.
  int find_free(std::uint32_t target_plane) const {
    int any = -1;
    for (std::uint32_t i = 0; i < slots_.size(); ++i) {
      if (!slot_usable(i, target_plane) || slots_[i].valid) continue;
      if (home_plane(i) == target_plane) return static_cast<int>(i);
      if (any < 0) any = static_cast<int>(i);
    }
    return any;
  }

  struct VictimChoice {
    int slot = -1;          // LRU victim whose write-back can proceed
    int blocked_slot = -1;  // LRU victim parked on a full log block
    Cycles wait_until = 0;  // earliest busy release when everything is busy
    bool all_busy = false;
  };

  // `log_full(group)` reports whether a victim's log block is out of free
  // pages and its group must be merged first.
  template <typename LogFullFn>
  VictimChoice pick_victim(std::uint32_t target_plane, Cycles now,
                           LogFullFn&& log_full) const {
    VictimChoice c;
    std::uint64_t best_lru = UINT64_MAX, blocked_lru = UINT64_MAX;
    Cycles min_busy = UINT64_MAX;
    bool saw_candidate = false;
    for (std::uint32_t i = 0; i < slots_.size(); ++i) {
      if (!slot_usable(i, target_plane) || !slots_[i].valid) continue;
      saw_candidate = true;
      if (slots_[i].busy_until > now) {
        min_busy = std::min(min_busy, slots_[i].busy_until);
        continue;
      }
      if (slots_[i].dirty && log_full(slots_[i].group)) {
        if (slots_[i].lru < blocked_lru) {
          blocked_lru = slots_[i].lru;
          c.blocked_slot = static_cast<int>(i);
        }
        continue;
      }
      if (slots_[i].lru < best_lru) {
        best_lru = slots_[i].lru;
        c.slot = static_cast<int>(i);
      }
    }
    if (c.slot < 0 && c.blocked_slot < 0 && saw_candidate) {
      c.all_busy = true;
      c.wait_until = min_busy;
    }
    return c;
  }

  void install(std::uint32_t i, std::uint64_t pdbn, std::uint32_t page_index) {
    slots_[i].valid = true;
    slots_[i].pdbn = pdbn;
    slots_[i].page_index = page_index;
    index_[reg_key(pdbn, page_index)] = i;
    touch(i);
  }

  void release(std::uint32_t i) {
    if (slots_[i].valid)
      index_.erase(reg_key(slots_[i].pdbn, slots_[i].page_index));
    slots_[i].valid = false;
    slots_[i].dirty = false;
    slots_[i].mask = 0;
    slots_[i].sectors.fill(0);
  }

  // NiF per-plane data register availability.
  Cycles data_reg_free(std::uint32_t plane) const {
    if (data_reg_busy_.size() <= plane) return 0;
    return data_reg_busy_[plane];
  }
  void reserve_data_reg(std::uint32_t plane, Cycles until) {
    if (data_reg_busy_.size() <= plane) data_reg_busy_.resize(planes_, 0);
    data_reg_busy_[plane] = std::max(data_reg_busy_[plane], until);
  }

  WritebackPath writeback_path(std::uint32_t slot) const {
    if (home_plane(slot) == slots_[slot].target_plane)
      return WritebackPath::Local;
    switch (topo_) {
      case RegisterTopology::FCnet: return WritebackPath::FcnetDirect;
      case RegisterTopology::NiF: return WritebackPath::NifForward;
      case RegisterTopology::SWnet: return WritebackPath::SwnetCopy;
      case RegisterTopology::Baseline: return WritebackPath::Local;
    }
    return WritebackPath::Local;
  }

 private:
  std::uint32_t planes_;
  std::uint32_t per_plane_;
  RegisterTopology topo_;
  std::vector<RegSlot> slots_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
  std::vector<Cycles> data_reg_busy_;
  std::uint64_t lru_clock_ = 0;
};

struct PackageState {
  RegisterGroup regs;
  ThrashChecker thrash;
  std::array<Cycles, 8> io_port_busy{};  // up to 8 ports, config picks count
  std::uint32_t io_ports = 2;

  PackageState(std::uint32_t planes, const RegisterConfig& rc)
      : regs(planes, rc.per_plane, rc.topology),
        thrash(rc.thrash_window, rc.thrash_threshold),
        io_ports(std::min<std::uint32_t>(rc.io_ports, 8)) {}

  // Earliest-free port, lowest index on ties.
  std::uint32_t pick_port(Cycles now) const {
    std::uint32_t best = 0;
    for (std::uint32_t i = 1; i < io_ports; ++i)
      if (io_port_busy[i] < io_port_busy[best]) best = i;
    (void)now;
    return best;
  }
};

// The Z-NAND flash backbone: plane/block/page state, the plane-local
// programmable decoders, erased-block pools and the per-package register
// file. Timing is expressed as plane/port reservations in cycles.
class FlashArray : public LogBlockAllocator {
 public:
  FlashArray(const Geometry& geom, const ZTiming& timing, Clock clock,
             const RegisterConfig& rc)
      : geom_(geom), timing_(timing), clock_(clock) {
    read_cycles_ = clock.from_ns(timing.read_ns);
    program_cycles_ = clock.from_ns(timing.program_ns);
    erase_cycles_ = clock.from_ns(timing.erase_ns);
    planes_.resize(geom.planes_total());
    const std::uint32_t dbpp = geom.data_blocks_per_plane();
    for (auto& p : planes_) {
      p.free_data.reserve(dbpp);
      for (std::uint32_t b = 0; b < dbpp; ++b) p.free_data.push_back(b);
      for (std::uint32_t b = dbpp; b < geom.blocks_per_plane; ++b)
        p.free_op.push_back(b);
    }
    packages_.reserve(geom.packages_total());
    for (std::uint32_t i = 0; i < geom.packages_total(); ++i)
      packages_.emplace_back(geom.planes_per_package(), rc);
  }

  const Geometry& geometry() const { return geom_; }
  Cycles read_cycles() const { return read_cycles_; }
  Cycles program_cycles() const { return program_cycles_; }
  Cycles erase_cycles() const { return erase_cycles_; }
  const ZTiming& timing() const { return timing_; }

  std::uint32_t plane_of(std::uint64_t global_block) const {
    return geom_.plane_of_block(global_block);
  }
  std::uint32_t package_of_plane(std::uint32_t plane) const {
    return plane / geom_.planes_per_package();
  }
  std::uint32_t local_plane(std::uint32_t plane) const {
    return plane % geom_.planes_per_package();
  }
  std::uint32_t block_in_plane(std::uint64_t global_block) const {
    return geom_.decompose(global_block).block;
  }

  Plane& plane(std::uint32_t idx) { return planes_[idx]; }
  const Plane& plane(std::uint32_t idx) const { return planes_[idx]; }
  std::size_t plane_count() const { return planes_.size(); }
  PackageState& package(std::uint32_t idx) { return packages_[idx]; }
  std::size_t package_count() const { return packages_.size(); }

  BlockState& block_state(std::uint64_t global_block) {
    Plane& p = planes_[plane_of(global_block)];
    const std::uint32_t bip = block_in_plane(global_block);
    auto it = p.blocks.find(bip);
    if (it == p.blocks.end())
      it = p.blocks.emplace(bip, BlockState(geom_.pages_per_block)).first;
    return it->second;
  }

  const BlockState* block_state_if(std::uint64_t global_block) const {
    const Plane& p = planes_[plane_of(global_block)];
    auto it = p.blocks.find(block_in_plane(global_block));
    return it == p.blocks.end() ? nullptr : &it->second;
  }

  // --- erased-block pools -------------------------------------------------

  void reserve_data_block(std::uint64_t global_block) {
    Plane& p = planes_[plane_of(global_block)];
    const std::uint32_t bip = block_in_plane(global_block);
    auto it = std::lower_bound(p.free_data.begin(), p.free_data.end(), bip);
    if (it == p.free_data.end() || *it != bip)
      throw sim_exception("znand", "data block already in use");
    p.free_data.erase(it);
  }

  std::uint64_t alloc_log_block(std::uint32_t plane_idx) override {
    return alloc_from_pool(plane_idx, /*op_pool=*/true);
  }

  std::uint64_t alloc_data_block(std::uint32_t plane_idx) {
    return alloc_from_pool(plane_idx, /*op_pool=*/false);
  }

  std::uint32_t free_data_count(std::uint32_t plane_idx) const {
    return static_cast<std::uint32_t>(planes_[plane_idx].free_data.size());
  }
  std::uint32_t free_op_count(std::uint32_t plane_idx) const {
    return static_cast<std::uint32_t>(planes_[plane_idx].free_op.size());
  }

  // --- content resolution ---------------------------------------------------

  struct Resolved {
    bool found = false;
    bool from_log = false;
    std::uint32_t page = 0;  // physical page within the holding block
    const PageImage* img = nullptr;
  };

  // Latest copy of a logical page: the decoder's CAM rows win over the data
  // block position.
  Resolved resolve_latest(std::uint64_t pdbn, std::uint32_t page_index,
                          std::uint64_t plbn) const {
    Resolved r;
    if (const BlockState* log = block_state_if(plbn)) {
      if (auto row = log->lpmt.search(pdbn, page_index)) {
        r.found = true;
        r.from_log = true;
        r.page = *row;
        r.img = &log->images[*row];
        return r;
      }
    }
    if (const BlockState* data = block_state_if(pdbn)) {
      if (page_index < data->state.size() &&
          data->state[page_index] == PageState::Valid) {
        r.found = true;
        r.page = page_index;
        r.img = &data->images[page_index];
      }
    }
    return r;
  }

  // --- array operations -----------------------------------------------------

  Cycles reserve_plane(std::uint32_t plane_idx, Cycles now, Cycles dur) {
    Plane& p = planes_[plane_idx];
    const Cycles start = std::max(now, p.busy_until);
    p.busy_until = start + dur;
    return start;
  }

  struct ReadResult {
    std::uint64_t version = 0;
    bool found = false;
    bool lpmt_hit = false;
    Cycles start = 0;
    Cycles ready = 0;
  };

  // Decoder search plus array sense. A read of a never-written page returns
  // version 0 (counted by the caller, not fatal).
  ReadResult array_read(std::uint64_t pdbn, std::uint32_t page_index,
                        std::uint64_t plbn, std::uint32_t sector, Cycles now) {
    ReadResult res;
    const std::uint32_t pl = plane_of(pdbn);
    Resolved r = resolve_latest(pdbn, page_index, plbn);
    res.found = r.found;
    res.lpmt_hit = r.from_log;
    if (r.found) res.version = r.img->v[sector];
    res.start = reserve_plane(pl, now, read_cycles_);
    res.ready = res.start + read_cycles_;
    ++planes_[pl].array_reads;
    return res;
  }

  struct ProgramResult {
    bool gc_required = false;
    std::uint32_t page = 0;
    Cycles start = 0;
    Cycles ready = 0;
  };

  // Programs the next free page of a log block and appends the decoder row.
  // Content is applied immediately; the plane stays busy until `ready`.
  ProgramResult program_log_page(std::uint64_t plbn, std::uint64_t pdbn,
                                 std::uint32_t page_index,
                                 const PageImage& img, Cycles now) {
    BlockState& b = block_state(plbn);
    ProgramResult res;
    if (b.next_free >= geom_.pages_per_block) {
      res.gc_required = true;
      return res;
    }
    res.page = b.next_free++;
    b.state[res.page] = PageState::Valid;
    b.images[res.page] = img;
    b.lpmt.append(pdbn, page_index);
    ++b.programs_lifetime;
    const std::uint32_t pl = plane_of(plbn);
    res.start = reserve_plane(pl, now, program_cycles_);
    res.ready = res.start + program_cycles_;
    ++planes_[pl].programs;
    return res;
  }

  bool log_full(std::uint64_t plbn) const {
    const BlockState* b = block_state_if(plbn);
    return b && b->next_free >= geom_.pages_per_block;
  }

  // In-order program used by garbage collection on erased destination
  // blocks. Content only; the caller schedules plane time.
  void program_data_page(std::uint64_t block, std::uint32_t page,
                         const PageImage& img) {
    BlockState& b = block_state(block);
    if (page < b.next_free)
      throw sim_exception("znand", "out-of-order program within block");
    if (b.state[page] != PageState::Free)
      throw sim_exception("znand", "program to non-free page");
    b.next_free = page + 1;
    b.state[page] = PageState::Valid;
    b.images[page] = img;
    ++b.programs_lifetime;
    ++planes_[plane_of(block)].programs;
  }

  // State reset, wear counting and pool return; the caller accounts the
  // plane time (garbage collection folds erases into one reservation).
  void erase_block_content(std::uint64_t global_block) {
    const std::uint32_t pl = plane_of(global_block);
    BlockState& b = block_state(global_block);
    std::fill(b.state.begin(), b.state.end(), PageState::Free);
    for (auto& img : b.images) img.v.fill(0);
    b.lpmt.clear();
    b.next_free = 0;
    ++b.erase_count;
    ++planes_[pl].erases;
    return_to_pool(global_block);
  }

  Cycles erase_block(std::uint64_t global_block, Cycles now) {
    const std::uint32_t pl = plane_of(global_block);
    erase_block_content(global_block);
    const Cycles start = reserve_plane(pl, now, erase_cycles_);
    return start + erase_cycles_;
  }

 private:
  std::uint64_t alloc_from_pool(std::uint32_t plane_idx, bool op_pool) {
    Plane& p = planes_[plane_idx];
    auto& pool = op_pool ? p.free_op : p.free_data;
    if (pool.empty())
      throw sim_exception("znand", std::string("capacity exhausted: no erased ") +
                                       (op_pool ? "log" : "data") +
                                       " blocks on plane " +
                                       std::to_string(plane_idx));
    // Wear-leveling: minimal erase count, lowest block id on ties.
    std::size_t best = 0;
    std::uint32_t best_ec = erase_count_of(p, pool[0]);
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const std::uint32_t ec = erase_count_of(p, pool[i]);
      if (ec < best_ec || (ec == best_ec && pool[i] < pool[best])) {
        best = i;
        best_ec = ec;
      }
    }
    const std::uint32_t bip = pool[best];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    return geom_.block_on_plane(plane_idx, bip);
  }

  std::uint32_t erase_count_of(const Plane& p, std::uint32_t bip) const {
    auto it = p.blocks.find(bip);
    return it == p.blocks.end() ? 0 : it->second.erase_count;
  }

  void return_to_pool(std::uint64_t global_block) {
    Plane& p = planes_[plane_of(global_block)];
    const std::uint32_t bip = block_in_plane(global_block);
    auto& pool =
        bip < geom_.data_blocks_per_plane() ? p.free_data : p.free_op;
    auto it = std::lower_bound(pool.begin(), pool.end(), bip);
    pool.insert(it, bip);
  }

  Geometry geom_;
  ZTiming timing_;
  Clock clock_;
  Cycles read_cycles_ = 0;
  Cycles program_cycles_ = 0;
  Cycles erase_cycles_ = 0;
  std::vector<Plane> planes_;
  std::vector<PackageState> packages_;
};

}  // namespace zng
