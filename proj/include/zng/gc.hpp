#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "zng/ftl.hpp"
#include "zng/timing.hpp"
#include "zng/types.hpp"
#include "zng/znand.hpp"

namespace zng {

// A buffered sector (from a flash register or a pinned L2 line) folded into
// a merge so the collected blocks carry the newest content.
struct SectorPatch {
  std::uint64_t pdbn = 0;
  std::uint32_t page_index = 0;
  std::uint32_t sector = 0;
  std::uint64_t version = 0;
};

// GPU-helper-thread garbage collection: merges a group's data blocks with
// its full log block into wear-leveled fresh blocks on the same plane and
// updates the mapping tables. All work is serialized on the owning plane;
// the engine enforces the owner-blocking window around [start, end).
class GarbageCollector {
 public:
  GarbageCollector(Ftl& ftl, FlashArray& array) : ftl_(ftl), array_(array) {}

  struct Result {
    GcMerge merge;
    std::uint64_t pages_moved = 0;
    std::uint64_t flash_reads = 0;
  };

  Result run(std::uint32_t group, Cycles now,
             const std::vector<SectorPatch>& patches) {
    Result res;
    GcMerge& m = res.merge;
    m.group = group;
    m.owner_app = ftl_.owner_of_group(group);
    m.member_lbns = ftl_.group_members(group);
    m.old_plbn = ftl_.log_block_of_group(group);
    if (m.member_lbns.empty() || m.old_plbn == 0)
      throw sim_exception("gc", "merge requested for an unmapped group");
    const std::uint32_t plane = array_.plane_of(m.old_plbn);
    const std::uint32_t pages = array_.geometry().pages_per_block;

    // Resolve the latest copy of every page in the group, newest version
    // per 128B sector (buffered patches included).
    struct PendingPage {
      std::uint64_t dst_block = 0;
      std::uint32_t page_index = 0;
      PageImage img;
    };
    std::vector<PendingPage> pending;
    std::uint64_t flash_reads = 0;

    for (const std::uint32_t lbn : m.member_lbns) {
      const std::uint64_t pdbn = ftl_.entry(lbn).pdbn;
      m.src_data_blocks.push_back(pdbn);
      const std::uint64_t dst = array_.alloc_data_block(plane);
      m.dst_data_blocks.push_back(dst);
      for (std::uint32_t p = 0; p < pages; ++p) {
        PageImage img;
        bool have_flash = false;
        FlashArray::Resolved r = array_.resolve_latest(pdbn, p, m.old_plbn);
        if (r.found) {
          img = *r.img;
          have_flash = true;
          ++flash_reads;
          m.pages.push_back({pdbn, p, r.from_log, r.page});
        }
        bool patched = false;
        for (const auto& patch : patches) {
          if (patch.pdbn != pdbn || patch.page_index != p) continue;
          img.v[patch.sector] = std::max(img.v[patch.sector], patch.version);
          patched = true;
        }
        if (have_flash || (patched && img.any()))
          pending.push_back({dst, p, img});
      }
    }

    // Content moves now; the plane stays reserved for the whole merge.
    for (const auto& pp : pending)
      array_.program_data_page(pp.dst_block, pp.page_index, pp.img);

    m.new_plbn = array_.alloc_log_block(plane);
    for (const std::uint64_t src : m.src_data_blocks)
      array_.erase_block_content(src);
    array_.erase_block_content(m.old_plbn);
    m.blocks_erased =
        static_cast<std::uint32_t>(m.src_data_blocks.size()) + 1;

    const Cycles duration =
        flash_reads * array_.read_cycles() +
        pending.size() * array_.program_cycles() +
        m.blocks_erased * array_.erase_cycles();
    m.start = array_.reserve_plane(plane, now, duration);
    m.end = m.start + duration;

    ftl_.apply_gc_result(m);

    res.pages_moved = pending.size();
    res.flash_reads = flash_reads;
    return res;
  }

 private:
  Ftl& ftl_;
  FlashArray& array_;
};

}  // namespace zng
