#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "zng/config.hpp"
#include "zng/types.hpp"

namespace zng {

// One L2 tag entry. The line id is the flash-physical 128B line; `version`
// is the line's content, `ready` the fill completion time (entries with a
// future ready are in flight and double as MSHR state).
struct TagEntry {
  std::uint64_t line = 0;
  std::uint64_t version = 0;
  Cycles ready = 0;
  std::uint64_t lru = 0;
  bool valid = false;
  bool prefetch = false;
  bool accessed = false;
  bool pinned = false;
  bool dirty = false;
  bool prefetch_used_counted = false;
  std::uint8_t app = 0;
  // Flush bookkeeping for dirty (pinned) lines.
  std::uint32_t lbn = 0;
  std::uint16_t page_index = 0;
  std::uint8_t sector = 0;
};

// PC-indexed spatial-locality predictor: 512 entries, five tracked warps per
// entry, one 4-bit saturating counter per entry.
class PredictorTable {
 public:
  explicit PredictorTable(const PrefetchConfig& cfg)
      : cfg_(cfg), entries_(cfg.table_entries) {}

  struct Outcome {
    std::uint32_t counter = 0;
    bool do_prefetch = false;
  };

  // Same-page re-access by a tracked warp bumps the counter; anything else
  // decays it and retrains the warp slot.
  Outcome update(std::uint64_t pc, std::uint16_t warp,
                 std::uint64_t logical_page) {
    Entry& e = entries_[index_of(pc)];
    int slot = -1;
    for (std::size_t i = 0; i < e.slots.size(); ++i)
      if (e.slots[i].valid && e.slots[i].warp == warp) {
        slot = static_cast<int>(i);
        break;
      }
    if (slot >= 0 && e.slots[slot].page == logical_page) {
      e.counter = std::min(e.counter + 1, cfg_.counter_max);
    } else {
      e.counter = e.counter > 0 ? e.counter - 1 : 0;
      if (slot < 0) {
        if (e.slots.size() < cfg_.warp_slots) {
          e.slots.push_back({});
          slot = static_cast<int>(e.slots.size() - 1);
        } else {
          slot = static_cast<int>(e.rr % e.slots.size());
          e.rr = (e.rr + 1) % static_cast<std::uint32_t>(e.slots.size());
        }
      }
      e.slots[slot].valid = true;
      e.slots[slot].warp = warp;
      e.slots[slot].page = logical_page;
    }
    Outcome o;
    o.counter = e.counter;
    o.do_prefetch = e.counter > cfg_.threshold;
    return o;
  }

  std::uint32_t counter_of(std::uint64_t pc) const {
    return entries_[index_of(pc)].counter;
  }

 private:
  struct WarpSlot {
    bool valid = false;
    std::uint16_t warp = 0;
    std::uint64_t page = 0;
  };
  struct Entry {
    std::vector<WarpSlot> slots;
    std::uint32_t counter = 0;
    std::uint32_t rr = 0;
  };

  std::size_t index_of(std::uint64_t pc) const {
    const std::uint64_t h = pc ^ (pc >> 9) ^ (pc >> 18) ^ (pc >> 27);
    return static_cast<std::size_t>(h % entries_.size());
  }

  PrefetchConfig cfg_;
  std::vector<Entry> entries_;
};

// Tracks early evictions of prefetched-but-unused lines and adapts the
// prefetch granularity at epoch boundaries.
class AccessMonitor {
 public:
  explicit AccessMonitor(const PrefetchConfig& cfg)
      : cfg_(cfg), granularity_(cfg.initial_granularity) {}

  void on_evict(bool prefetched_unused) {
    ++evict_;
    if (prefetched_unused) ++unused_;
  }

  // Returns true when another epoch's worth of L2 misses has accumulated.
  bool on_miss() {
    ++misses_;
    if (misses_ >= cfg_.epoch_misses) {
      misses_ = 0;
      return true;
    }
    return false;
  }

  double waste_ratio() const {
    return evict_ == 0 ? 0.0
                       : static_cast<double>(unused_) /
                             static_cast<double>(evict_);
  }

  // Waste above the high threshold halves the granularity; below the low
  // threshold it grows by 1KB, clipped to one flash page.
  std::uint32_t adjust() {
    const double ratio = waste_ratio();
    if (ratio > cfg_.high_threshold) {
      granularity_ = std::max(granularity_ / 2, cfg_.min_granularity);
    } else if (ratio < cfg_.low_threshold) {
      granularity_ = std::min(granularity_ + 1024, cfg_.max_granularity);
    }
    ratio_history_.push_back(ratio);
    evict_ = 0;
    unused_ = 0;
    return granularity_;
  }

  std::uint32_t granularity() const { return granularity_; }
  void set_granularity(std::uint32_t g) { granularity_ = g; }
  std::uint64_t evict_counter() const { return evict_; }
  std::uint64_t unused_counter() const { return unused_; }
  const std::vector<double>& ratio_history() const { return ratio_history_; }

 private:
  PrefetchConfig cfg_;
  std::uint32_t granularity_;
  std::uint64_t evict_ = 0;
  std::uint64_t unused_ = 0;
  std::uint32_t misses_ = 0;
  std::vector<double> ratio_history_;
};

struct L2Stats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t prefetch_issued = 0;
  std::uint64_t prefetch_used = 0;
  std::uint64_t prefetch_wasted = 0;
  std::uint64_t pinned_writes = 0;
  std::uint64_t pinned_flushes = 0;
  std::uint64_t bypass_fills = 0;
};

// Banked, read-only (for demand data) STT-MRAM L2. Demand fills never set
// the dirty bit; dirty lines exist only in the pinned region that absorbs
// redirected writes while the flash registers thrash.
class L2Cache {
 public:
  explicit L2Cache(const L2Config& cfg) : cfg_(cfg) {
    sets_ = cfg.sets();
    ways_ = cfg.ways;
    banks_ = cfg.banks;
    tags_.resize(static_cast<std::size_t>(sets_) * ways_ * banks_);
    bank_busy_.resize(banks_, 0);
    pinned_ways_ = 0;
  }

  std::uint32_t sets() const { return sets_; }
  std::uint32_t ways() const { return ways_; }
  std::uint32_t banks() const { return banks_; }
  std::uint32_t pinned_ways() const { return pinned_ways_; }
  L2Stats& stats() { return stats_; }
  const L2Stats& stats() const { return stats_; }
  AccessMonitor& monitor() { return *monitor_; }
  void attach_monitor(AccessMonitor* m) { monitor_ = m; }

  // Physical line ids arrive page-strided; a mixed index keeps strided
  // footprints from aliasing onto a handful of sets.
  static std::uint64_t index_hash(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }

  std::uint32_t bank_of(std::uint64_t line) const {
    return static_cast<std::uint32_t>(index_hash(line) % banks_);
  }
  std::uint32_t set_of(std::uint64_t line) const {
    return static_cast<std::uint32_t>((index_hash(line) / banks_) % sets_);
  }

  Cycles reserve_bank(std::uint32_t bank, Cycles now, Cycles dur) {
    const Cycles start = std::max(now, bank_busy_[bank]);
    bank_busy_[bank] = start + dur;
    return start;
  }

  struct Hit {
    bool hit = false;
    TagEntry* entry = nullptr;
  };

  Hit probe(std::uint64_t line) {
    TagEntry* base = set_base(line);
    for (std::uint32_t w = 0; w < ways_; ++w)
      if (base[w].valid && base[w].line == line) return {true, &base[w]};
    return {false, nullptr};
  }

  // Demand lookup. On a hit the accessed bit is set and LRU updated; the
  // caller charges bank time. In-flight lines count as hits that become
  // ready at entry->ready.
  Hit lookup(std::uint64_t line) {
    Hit h = probe(line);
    if (h.hit) {
      h.entry->accessed = true;
      if (h.entry->prefetch && !h.entry->prefetch_used_counted) {
        ++stats_.prefetch_used;
        h.entry->prefetch_used_counted = true;
      }
      h.entry->lru = ++lru_clock_;
      ++stats_.hits;
    } else {
      ++stats_.misses;
    }
    return h;
  }

  // Fill from flash. Returns false when every way is in flight and the fill
  // must bypass caching. Demand fills clear the prefetch bit.
  bool fill(std::uint64_t line, std::uint64_t version, bool prefetched,
            std::uint8_t app, Cycles ready, Cycles now) {
    TagEntry* base = set_base(line);
    // Refills of an in-flight or present line just refresh it. A dirty
    // pinned copy is newer than anything flash returns and stays as is.
    for (std::uint32_t w = 0; w < ways_; ++w)
      if (base[w].valid && base[w].line == line) {
        if (base[w].dirty) return true;
        base[w].version = version;
        base[w].ready = std::max(base[w].ready, ready);
        if (!prefetched) base[w].prefetch = false;
        return true;
      }
    int victim = -1;
    std::uint64_t best_lru = UINT64_MAX;
    for (std::uint32_t w = pinned_ways_; w < ways_; ++w) {
      if (!base[w].valid) {
        victim = static_cast<int>(w);
        break;
      }
      if (base[w].ready > now || base[w].pinned) continue;  // in flight
      if (base[w].lru < best_lru) {
        best_lru = base[w].lru;
        victim = static_cast<int>(w);
      }
    }
    if (victim < 0) {
      ++stats_.bypass_fills;
      return false;
    }
    TagEntry& e = base[victim];
    if (e.valid) evict_entry(e);
    e = TagEntry{};
    e.line = line;
    e.version = version;
    e.ready = ready;
    e.lru = ++lru_clock_;
    e.valid = true;
    e.prefetch = prefetched;
    e.accessed = !prefetched;
    e.app = app;
    if (prefetched) ++stats_.prefetch_issued;
    return true;
  }

  struct DisplacedDirty {
    std::uint64_t version = 0;
    std::uint8_t app = 0;
    std::uint32_t lbn = 0;
    std::uint16_t page_index = 0;
    std::uint8_t sector = 0;
  };

  struct PinnedWriteResult {
    bool ok = false;
    std::optional<DisplacedDirty> displaced;
  };

  // Redirected write into the pinned region. A conflicting dirty line in the
  // pinned way is handed back to the caller for programming.
  PinnedWriteResult write_pinned(std::uint64_t line, std::uint64_t version,
                                 std::uint8_t app, std::uint32_t lbn,
                                 std::uint16_t page_index, std::uint8_t sector,
                                 Cycles now) {
    PinnedWriteResult r;
    if (pinned_ways_ == 0) return r;
    TagEntry* base = set_base(line);
    // The line may already be cached anywhere in the set.
    for (std::uint32_t w = 0; w < ways_; ++w)
      if (base[w].valid && base[w].line == line) {
        if (w >= pinned_ways_ && !base[w].pinned) {
          // Demand copy becomes stale; replace it with the pinned copy.
          base[w].valid = false;
        } else {
          base[w].version = version;
          base[w].dirty = true;
          base[w].pinned = true;
          base[w].lru = ++lru_clock_;
          base[w].ready = now;
          ++stats_.pinned_writes;
          r.ok = true;
          return r;
        }
      }
    int victim = -1;
    std::uint64_t best_lru = UINT64_MAX;
    for (std::uint32_t w = 0; w < pinned_ways_; ++w) {
      if (!base[w].valid) {
        victim = static_cast<int>(w);
        break;
      }
      if (base[w].lru < best_lru) {
        best_lru = base[w].lru;
        victim = static_cast<int>(w);
      }
    }
    TagEntry& e = base[victim];
    if (e.valid && e.dirty) {
      r.displaced = DisplacedDirty{e.version, e.app, e.lbn, e.page_index,
                                   e.sector};
      ++stats_.pinned_flushes;
    } else if (e.valid) {
      evict_entry(e);
    }
    e = TagEntry{};
    e.line = line;
    e.version = version;
    e.ready = now;
    e.lru = ++lru_clock_;
    e.valid = true;
    e.pinned = true;
    e.dirty = true;
    e.accessed = true;
    e.app = app;
    e.lbn = lbn;
    e.page_index = page_index;
    e.sector = sector;
    ++stats_.pinned_writes;
    r.ok = true;
    return r;
  }

  void pin_region(double fraction) {
    const auto w = static_cast<std::uint32_t>(fraction * ways_ + 0.5);
    pinned_ways_ = std::clamp<std::uint32_t>(w, 1, ways_ - 1);
  }

  // Collects every dirty pinned line and clears the region. The caller
  // programs the returned lines to flash.
  std::vector<DisplacedDirty> unpin_region() {
    std::vector<DisplacedDirty> out;
    for (auto& e : tags_) {
      if (!e.valid || !e.pinned) continue;
      if (e.dirty)
        out.push_back({e.version, e.app, e.lbn, e.page_index, e.sector});
      e.valid = false;
    }
    pinned_ways_ = 0;
    return out;
  }

  bool pinned_active() const { return pinned_ways_ > 0; }

  // A write entering the flash path supersedes every cached copy of its
  // line, including an older dirty pinned copy (its version no longer needs
  // programming).
  void invalidate_for_write(std::uint64_t line) {
    TagEntry* base = set_base(line);
    for (std::uint32_t w = 0; w < ways_; ++w)
      if (base[w].valid && base[w].line == line) {
        if (!base[w].dirty) evict_entry(base[w]);
        base[w].valid = false;
      }
  }

  // Drops an application's clean lines and returns its dirty ones (used by
  // garbage collection, which flushes the owner's data out of L2).
  std::vector<DisplacedDirty> flush_app(std::uint8_t app) {
    std::vector<DisplacedDirty> dirty;
    for (auto& e : tags_) {
      if (!e.valid || e.app != app) continue;
      if (e.dirty)
        dirty.push_back({e.version, e.app, e.lbn, e.page_index, e.sector});
      else
        evict_entry(e);
      e.valid = false;
    }
    return dirty;
  }

  std::uint64_t pinned_dirty_count() const {
    std::uint64_t n = 0;
    for (const auto& e : tags_)
      if (e.valid && e.pinned && e.dirty) ++n;
    return n;
  }

  std::vector<DisplacedDirty> drain_dirty() { return unpin_region(); }

 private:
  TagEntry* set_base(std::uint64_t line) {
    const std::size_t idx =
        (static_cast<std::size_t>(bank_of(line)) * sets_ + set_of(line)) *
        ways_;
    return &tags_[idx];
  }

  void evict_entry(TagEntry& e) {
    if (monitor_) monitor_->on_evict(e.prefetch && !e.accessed);
    if (e.prefetch && !e.accessed) ++stats_.prefetch_wasted;
  }

  L2Config cfg_;
  std::uint32_t sets_ = 0;
  std::uint32_t ways_ = 0;
  std::uint32_t banks_ = 0;
  std::uint32_t pinned_ways_ = 0;
  std::vector<TagEntry> tags_;
  std::vector<Cycles> bank_busy_;
  std::uint64_t lru_clock_ = 0;
  L2Stats stats_;
  AccessMonitor* monitor_ = nullptr;
};

}  // namespace zng
