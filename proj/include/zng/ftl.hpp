#pragma once

#include <algorithm>
#include <cstdint>
#include <list>
#include <optional>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "zng/geometry.hpp"
#include "zng/types.hpp"

namespace zng {

// One data-block mapping entry: virtual block -> logical block -> physical
// data block, plus the log block shared by the entry's group.
struct DbmtEntry {
  std::uint32_t vbn = 0;
  std::uint32_t lbn = 0;
  std::uint64_t pdbn = 0;
  std::uint64_t plbn = 0;
  bool live = false;
};

// Result of a garbage-collection merge, produced by the collector and
// applied to the mapping tables through Ftl::apply_gc_result.
struct GcMergedPage {
  std::uint64_t src_pdbn = 0;
  std::uint32_t page_index = 0;
  bool from_log = false;        // latest copy lived in the log block
  std::uint32_t src_page = 0;   // physical page within the source block
};

struct GcMerge {
  std::uint32_t group = 0;
  std::uint8_t owner_app = 0;
  std::vector<std::uint32_t> member_lbns;
  std::vector<std::uint64_t> src_data_blocks;  // parallel to member_lbns
  std::vector<std::uint64_t> dst_data_blocks;  // parallel to member_lbns
  std::uint64_t old_plbn = 0;
  std::uint64_t new_plbn = 0;
  std::vector<GcMergedPage> pages;
  Cycles start = 0;
  Cycles end = 0;
  std::uint32_t blocks_erased = 0;
};

// Provider of erased log blocks from the over-provisioned region.
class LogBlockAllocator {
 public:
  virtual ~LogBlockAllocator() = default;
  virtual std::uint64_t alloc_log_block(std::uint32_t preferred_plane) = 0;
};

struct TranslationResult {
  FlashAddress addr;          // data position for reads, log target for writes
  std::uint64_t pdbn = 0;
  std::uint64_t plbn = 0;
  std::uint32_t lbn = 0;
  std::uint32_t group = 0;
  std::uint32_t page_index = 0;
  std::uint32_t sector = 0;
  std::uint8_t app = 0;
  bool tlb_hit = false;
};

// Fully-associative LRU TLB over DBMT entries. Contents are always a
// subset of the DBMT; eviction never loses mapping state.
class Tlb {
 public:
  explicit Tlb(std::uint32_t entries) : capacity_(entries) {}

  bool access(std::uint32_t lbn) {
    auto it = map_.find(lbn);
    if (it != map_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      ++hits_;
      return true;
    }
    ++misses_;
    if (lru_.size() >= capacity_) {
      map_.erase(lru_.back());
      lru_.pop_back();
    }
    lru_.push_front(lbn);
    map_[lbn] = lru_.begin();
    return false;
  }

  void invalidate(std::uint32_t lbn) {
    auto it = map_.find(lbn);
    if (it == map_.end()) return;
    lru_.erase(it->second);
    map_.erase(it);
  }

  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }
  std::size_t size() const { return lru_.size(); }

 private:
  std::uint32_t capacity_;
  std::list<std::uint32_t> lru_;
  std::unordered_map<std::uint32_t, std::list<std::uint32_t>::iterator> map_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

struct DbmtFootprint {
  std::uint64_t entries = 0;
  std::uint64_t entry_bits = 0;
  std::uint64_t block_table_bytes = 0;
  std::uint64_t page_table_bytes = 0;  // hypothetical page-granularity table
};

// Block-granularity DBMT size for a geometry, next to the page-granularity
// table it replaces. Entries pack vbn/lbn/pdbn/plbn at minimal bit widths;
// the page table stores one physical page number per virtual page.
inline DbmtFootprint dbmt_footprint(const Geometry& g) {
  DbmtFootprint f;
  f.entries = g.data_blocks_total();
  const std::uint64_t vbn_bits = bits_for(g.data_blocks_total());
  const std::uint64_t phys_bits = bits_for(g.blocks_total());
  f.entry_bits = vbn_bits * 2 + phys_bits * 2;  // vbn, lbn, pdbn, plbn
  f.block_table_bytes = (f.entries * f.entry_bits + 7) / 8;
  const std::uint64_t vpages = f.entries * g.pages_per_block;
  const std::uint64_t ppn_bits = bits_for(g.pages_total());
  f.page_table_bytes = (vpages * ppn_bits + 7) / 8;
  return f;
}

// The MMU-resident half of the split FTL: read-only block mapping (DBMT),
// log-block grouping (LBMT) and the TLB in front of them. The write path
// never mutates these tables; they change only through apply_gc_result.
class Ftl {
 public:
  Ftl(const Geometry& geom, std::uint32_t group_size, Tlb tlb,
      bool tlb_enabled = true)
      : geom_(geom),
        group_size_(group_size),
        tlb_(std::move(tlb)),
        tlb_enabled_(tlb_enabled) {
    planes_total_ = geom.planes_total();
    groups_per_plane_ =
        (geom.data_blocks_per_plane() + group_size - 1) / group_size;
  }

  // A log block's decoder also serves its group's data blocks, so groups are
  // plane-local: members are blocks of the same plane, group_size apart in
  // logical block order. GC relocation stays within the plane, which keeps
  // the grouping stable.
  std::uint32_t group_of(std::uint32_t lbn) const {
    const std::uint32_t plane_code = lbn % planes_total_;
    const std::uint32_t bip = lbn / planes_total_;
    return plane_code * groups_per_plane_ + bip / group_size_;
  }

  struct AppRange {
    std::uint8_t app = 0;
    std::uint64_t vstart = 0;
    std::uint64_t vend = 0;  // exclusive
    std::uint32_t lbn_base = 0;
    std::uint32_t nblocks = 0;
  };

  // Pre-maps a contiguous footprint. Called once per application before the
  // simulation starts; vbn->pdbn starts as the identity over logical blocks.
  void register_app(std::uint8_t app, std::uint64_t min_vaddr,
                    std::uint64_t max_vaddr, LogBlockAllocator& alloc) {
    const std::uint64_t bb = geom_.block_bytes();
    AppRange r;
    r.app = app;
    r.vstart = (min_vaddr / bb) * bb;
    r.vend = ((max_vaddr / bb) + 1) * bb;
    const std::uint64_t nblocks = (r.vend - r.vstart) / bb;
    if (nblocks > geom_.data_blocks_total())
      throw sim_exception("ftl", "footprint exceeds data capacity");
    r.nblocks = static_cast<std::uint32_t>(nblocks);
    r.lbn_base = next_lbn_;
    // Groups never straddle applications.
    if (r.lbn_base % group_size_ != 0)
      r.lbn_base += group_size_ - r.lbn_base % group_size_;
    next_lbn_ = r.lbn_base + r.nblocks;
    if (next_lbn_ > geom_.data_blocks_total())
      throw sim_exception("ftl", "footprint exceeds data capacity");
    if (dbmt_.size() < next_lbn_) dbmt_.resize(next_lbn_);

    for (std::uint32_t i = 0; i < r.nblocks; ++i) {
      const std::uint32_t lbn = r.lbn_base + i;
      DbmtEntry& e = dbmt_[lbn];
      e.vbn = i;
      e.lbn = lbn;
      e.pdbn = lbn;  // identity until the first merge relocates it
      e.live = true;
      const std::uint32_t grp = group_of(lbn);
      if (lbmt_.size() <= grp) lbmt_.resize(grp + 1, 0);
      if (group_owner_.size() <= grp) group_owner_.resize(grp + 1, 0);
      if (lbmt_[grp] == 0) {
        // Log blocks live on the plane they serve.
        const std::uint32_t pref = geom_.plane_of_block(e.pdbn);
        lbmt_[grp] = alloc.alloc_log_block(pref);
        group_owner_[grp] = app;
      }
      e.plbn = lbmt_[grp];
    }
    ranges_.push_back(r);
  }

  std::optional<TranslationResult> translate(std::uint64_t vaddr, Op op) {
    const AppRange* r = find_range(vaddr);
    if (!r) {
      ++page_faults_;
      return std::nullopt;
    }
    const std::uint64_t bb = geom_.block_bytes();
    const std::uint64_t off = vaddr - r->vstart;
    const std::uint32_t lbn =
        r->lbn_base + static_cast<std::uint32_t>(off / bb);
    const DbmtEntry& e = dbmt_[lbn];
    TranslationResult t;
    t.tlb_hit = tlb_enabled_ ? tlb_.access(lbn) : false;
    t.pdbn = e.pdbn;
    t.plbn = e.plbn;
    t.lbn = lbn;
    t.group = group_of(lbn);
    t.page_index = static_cast<std::uint32_t>((off % bb) / kPageBytes);
    t.sector = static_cast<std::uint32_t>((off % kPageBytes) / kLineBytes);
    t.app = r->app;
    if (op == Op::Read) {
      t.addr = geom_.decompose(e.pdbn);
      t.addr.role = BlockRole::Data;
      t.addr.page = t.page_index;
    } else {
      t.addr = geom_.decompose(e.plbn);
      t.addr.role = BlockRole::Log;
      // The physical page is picked by the in-order program cursor.
    }
    t.addr.page_index = t.page_index;
    return t;
  }

  void apply_gc_result(const GcMerge& m) {
    if (m.group >= lbmt_.size() || lbmt_[m.group] != m.old_plbn)
      throw sim_exception("ftl", "gc merge references stale log block");
    if (m.member_lbns.size() != m.src_data_blocks.size() ||
        m.member_lbns.size() != m.dst_data_blocks.size())
      throw sim_exception("ftl", "gc merge member lists disagree");
    for (std::size_t i = 0; i < m.member_lbns.size(); ++i) {
      const std::uint32_t lbn = m.member_lbns[i];
      if (lbn >= dbmt_.size() || !dbmt_[lbn].live ||
          dbmt_[lbn].pdbn != m.src_data_blocks[i])
        throw sim_exception("ftl", "gc merge references stale data block");
      dbmt_[lbn].pdbn = m.dst_data_blocks[i];
      dbmt_[lbn].plbn = m.new_plbn;
    }
    lbmt_[m.group] = m.new_plbn;
  }

  // Members of a group that are currently mapped.
  std::vector<std::uint32_t> group_members(std::uint32_t group) const {
    std::vector<std::uint32_t> out;
    const std::uint32_t plane_code = group / groups_per_plane_;
    const std::uint32_t gidx = group % groups_per_plane_;
    for (std::uint32_t k = 0; k < group_size_; ++k) {
      const std::uint64_t bip =
          static_cast<std::uint64_t>(gidx) * group_size_ + k;
      const std::uint64_t lbn = bip * planes_total_ + plane_code;
      if (lbn < dbmt_.size() && dbmt_[lbn].live)
        out.push_back(static_cast<std::uint32_t>(lbn));
    }
    return out;
  }

  const DbmtEntry& entry(std::uint32_t lbn) const { return dbmt_[lbn]; }
  std::uint64_t log_block_of_group(std::uint32_t group) const {
    return group < lbmt_.size() ? lbmt_[group] : 0;
  }
  std::uint8_t owner_of_group(std::uint32_t group) const {
    return group < group_owner_.size() ? group_owner_[group] : 0;
  }
  std::uint32_t group_size() const { return group_size_; }
  std::uint32_t group_count() const {
    return static_cast<std::uint32_t>(lbmt_.size());
  }
  std::uint64_t page_faults() const { return page_faults_; }
  Tlb& tlb() { return tlb_; }
  const Tlb& tlb() const { return tlb_; }
  bool tlb_enabled() const { return tlb_enabled_; }
  void set_tlb_enabled(bool on) { tlb_enabled_ = on; }
  const std::vector<AppRange>& ranges() const { return ranges_; }

  nlohmann::ordered_json dump_json() const {
    nlohmann::ordered_json dbmt = nlohmann::ordered_json::array();
    for (const auto& e : dbmt_) {
      if (!e.live) continue;
      dbmt.push_back({{"vbn", e.vbn},
                      {"lbn", e.lbn},
                      {"pdbn", e.pdbn},
                      {"plbn", e.plbn}});
    }
    nlohmann::ordered_json lbmt;
    for (std::size_t g = 0; g < lbmt_.size(); ++g)
      if (lbmt_[g] != 0) lbmt[std::to_string(g)] = lbmt_[g];
    return {{"dbmt", dbmt}, {"lbmt", lbmt}};
  }

 private:
  const AppRange* find_range(std::uint64_t vaddr) const {
    for (const auto& r : ranges_)
      if (vaddr >= r.vstart && vaddr < r.vend) return &r;
    return nullptr;
  }

  Geometry geom_;
  std::uint32_t group_size_;
  std::uint32_t planes_total_ = 1;
  std::uint32_t groups_per_plane_ = 1;
  Tlb tlb_;
  bool tlb_enabled_;
  std::vector<DbmtEntry> dbmt_;
  std::vector<std::uint64_t> lbmt_;  // group -> plbn, 0 = unassigned
  std::vector<std::uint8_t> group_owner_;
  std::vector<AppRange> ranges_;
  std::uint32_t next_lbn_ = 0;
  std::uint64_t page_faults_ = 0;
};

}  // namespace zng
