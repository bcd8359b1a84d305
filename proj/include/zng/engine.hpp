#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "zng/cache.hpp"
#include "zng/config.hpp"
#include "zng/ftl.hpp"
#include "zng/gc.hpp"
#include "zng/interconnect.hpp"
#include "zng/metrics.hpp"
#include "zng/timing.hpp"
#include "zng/trace.hpp"
#include "zng/types.hpp"
#include "zng/znand.hpp"

namespace zng {

// Deterministic discrete-event queue: events fire in (time, insertion) order.
class EventQueue {
 public:
  void push(Cycles time, std::function<void()> fn) {
    heap_.push(Ev{time, seq_++, std::move(fn)});
  }

  bool empty() const { return heap_.empty(); }
  Cycles now() const { return now_; }

  void run() {
    while (!heap_.empty()) {
      Ev ev = heap_.top();
      heap_.pop();
      now_ = std::max(now_, ev.time);
      ev.fn();
    }
  }

 private:
  struct Ev {
    Cycles time;
    std::uint64_t seq;
    std::function<void()> fn;

    bool operator>(const Ev& o) const {
      return time != o.time ? time > o.time : seq > o.seq;
    }
  };
  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> heap_;
  std::uint64_t seq_ = 0;
  Cycles now_ = 0;
};

// Called once per completed read with the version id the memory system
// returned and the request's position in the input trace; the
// functional-oracle tests hang off this.
using ReadObserver = std::function<void(
    const MemoryRequest&, std::uint64_t version, std::uint64_t trace_index)>;
using CompletionObserver =
    std::function<void(const MemoryRequest&, Cycles when)>;

// Trace-driven simulation of one platform. Architectural content changes
// apply synchronously at dispatch; latency is modeled with per-resource
// reservations, so identical inputs give bit-identical reports.
class Engine {
 public:
  Engine(PlatformConfig cfg, std::vector<MemoryRequest> trace)
      : cfg_(std::move(cfg)), trace_(std::move(trace)) {}

  void set_read_observer(ReadObserver o) { read_obs_ = std::move(o); }
  void set_completion_observer(CompletionObserver o) {
    completion_obs_ = std::move(o);
  }

  // Mapping-table state, for the dump-tables debugging interface. Valid
  // after run() on a zng platform.
  const Ftl* ftl() const { return ftl_.get(); }

  MetricsReport run() {
    split_streams();
    if (platform_is_zng(cfg_.platform)) setup_zng();
    report_.platform = platform_name(cfg_.platform);
    report_.apps = static_cast<std::uint32_t>(streams_.size());
    completions_per_app_.assign(streams_.size(), 0);
    epoch_mark_completed_.assign(streams_.size(), 0);

    for (std::uint32_t a = 0; a < streams_.size(); ++a) schedule_pump(a, 0);
    if (!trace_.empty()) queue_.push(cfg_.policy.epoch_cycles, [this] { epoch_tick(); });
    queue_.run();
    drain();
    finalize();
    return report_;
  }

 private:
  // --- setup ----------------------------------------------------------------

  struct Stream {
    std::uint8_t app = 0;
    std::vector<MemoryRequest> reqs;
    std::vector<std::uint64_t> trace_index;
    std::size_t cursor = 0;
    bool pump_scheduled = false;
  };

  void split_streams() {
    std::map<std::uint8_t, std::size_t> idx;
    for (std::size_t i = 0; i < trace_.size(); ++i) {
      const auto& r = trace_[i];
      auto it = idx.find(r.app_id);
      if (it == idx.end()) {
        it = idx.emplace(r.app_id, streams_.size()).first;
        streams_.push_back(Stream{r.app_id, {}, {}, 0, false});
      }
      streams_[it->second].reqs.push_back(r);
      streams_[it->second].trace_index.push_back(i);
    }
    if (streams_.empty()) streams_.push_back(Stream{0, {}, {}, 0, false});
    app_blocked_until_.assign(streams_.size(), 0);
    app_outstanding_.assign(streams_.size(), 0);
    app_outstanding_horizon_.assign(streams_.size(), 0);
  }

  void setup_zng() {
    array_ = std::make_unique<FlashArray>(cfg_.geometry, cfg_.znand,
                                          cfg_.clock, cfg_.registers);
    ftl_ = std::make_unique<Ftl>(cfg_.geometry, cfg_.policy.group_size,
                                 Tlb(cfg_.tlb.entries), cfg_.tlb.enabled);
    l2_ = std::make_unique<L2Cache>(cfg_.l2);
    monitor_ = std::make_unique<AccessMonitor>(cfg_.prefetch);
    l2_->attach_monitor(monitor_.get());
    predictor_ = std::make_unique<PredictorTable>(cfg_.prefetch);
    mesh_ = std::make_unique<MeshNetwork>(cfg_.geometry.channels,
                                          cfg_.geometry.packages_total(),
                                          cfg_.mesh);
    controllers_.clear();
    for (std::uint32_t c = 0; c < cfg_.geometry.channels; ++c)
      controllers_.emplace_back(c, cfg_.policy.controller_queue,
                                cfg_.policy.decode_cycles);
    gc_ = std::make_unique<GarbageCollector>(*ftl_, *array_);

    // Pre-map every application's footprint.
    for (auto& s : streams_) {
      if (s.reqs.empty()) continue;
      std::uint64_t lo = UINT64_MAX, hi = 0;
      for (const auto& r : s.reqs) {
        lo = std::min(lo, r.vaddr);
        hi = std::max(hi, r.vaddr);
      }
      ftl_->register_app(s.app, lo, hi, *array_);
    }
    for (const auto& range : ftl_->ranges())
      for (std::uint32_t i = 0; i < range.nblocks; ++i)
        array_->reserve_data_block(ftl_->entry(range.lbn_base + i).pdbn);

    transfer_line_cy_ = cfg_.clock.from_ns(cfg_.znand.transfer_ns(kLineBytes));
  }

  // --- issue ----------------------------------------------------------------

  void schedule_pump(std::uint32_t app, Cycles at) {
    if (streams_[app].pump_scheduled) return;
    streams_[app].pump_scheduled = true;
    queue_.push(at, [this, app] {
      streams_[app].pump_scheduled = false;
      pump(app);
    });
  }

  void pump(std::uint32_t app) {
    Stream& s = streams_[app];
    const Cycles now = queue_.now();
    while (s.cursor < s.reqs.size()) {
      const MemoryRequest& r = s.reqs[s.cursor];
      if (app_blocked_until_[app] > now) {
        schedule_pump(app, app_blocked_until_[app]);
        return;
      }
      if (r.issue_cycle > now) {
        schedule_pump(app, r.issue_cycle);
        return;
      }
      const std::uint64_t wkey =
          (static_cast<std::uint64_t>(app) << 16) | r.warp_id;
      if (warp_outstanding_[wkey] >= cfg_.policy.warp_outstanding) return;
      ++warp_outstanding_[wkey];
      ++app_outstanding_[app];
      const std::uint64_t tidx = s.trace_index[s.cursor];
      ++s.cursor;
      dispatch_idx_ = tidx;
      dispatch(app, r, std::max(now, r.issue_cycle));
    }
  }

  void complete(std::uint32_t app, const MemoryRequest& r, Cycles when,
                std::uint64_t version, bool is_read) {
    note(when);
    app_outstanding_horizon_[app] =
        std::max(app_outstanding_horizon_[app], when);
    const std::uint64_t tidx = dispatch_idx_;
    queue_.push(when, [this, app, r, when, version, is_read, tidx] {
      const std::uint64_t wkey =
          (static_cast<std::uint64_t>(app) << 16) | r.warp_id;
      --warp_outstanding_[wkey];
      --app_outstanding_[app];
      ++completions_per_app_[app];
      ++report_.responses_delivered;
      if (is_read && read_obs_) read_obs_(r, version, tidx);
      if (completion_obs_) completion_obs_(r, when);
      pump(app);
    });
  }

  // --- dispatch -------------------------------------------------------------

  void dispatch(std::uint32_t app, const MemoryRequest& r, Cycles t) {
    ++report_.requests_dispatched;
    if (r.op == Op::Read)
      ++report_.reads;
    else
      ++report_.writes;
    bump(r.op == Op::Read ? read_page_counts_ : write_page_counts_,
         r.vaddr / kPageBytes);

    switch (cfg_.platform) {
      case Platform::Hetero: dispatch_hetero(app, r, t); break;
      case Platform::Optane: dispatch_optane(app, r, t); break;
      case Platform::HybridGpu: dispatch_hybrid(app, r, t); break;
      default: dispatch_zng(app, r, t); break;
    }
  }

  // --- zng request path -----------------------------------------------------

  std::uint64_t phys_line(std::uint64_t pdbn, std::uint32_t page_index,
                          std::uint32_t sector) const {
    return (pdbn * cfg_.geometry.pages_per_block + page_index) *
               kSectorsPerPage +
           sector;
  }

  void dispatch_zng(std::uint32_t app, const MemoryRequest& r, Cycles t) {
    auto tr = ftl_->translate(r.vaddr, r.op);
    const Cycles tlb_cy =
        tr && tr->tlb_hit ? cfg_.tlb.hit_cycles : cfg_.tlb.miss_cycles;
    Cycles t1 = t + tlb_cy;
    if (!tr) {
      // Page fault: charged a host service constant, then dropped.
      ++report_.page_faults;
      complete(app, r, t1 + cfg_.clock.from_ns(cfg_.policy.host_fault_ns), 0,
               r.op == Op::Read);
      return;
    }
    if (r.op == Op::Read)
      zng_read(app, r, *tr, t, t1);
    else
      zng_write(app, r, *tr, t, t1, next_version(r.line()), true);
  }

  void zng_read(std::uint32_t app, const MemoryRequest& r,
                const TranslationResult& tr, Cycles t0, Cycles t1) {
    const std::uint64_t line = phys_line(tr.pdbn, tr.page_index, tr.sector);
    PredictorTable::Outcome pred{};
    if (cfg_.prefetch_enabled)
      pred = predictor_->update(r.pc, r.warp_id, r.vaddr / kPageBytes);

    const std::uint32_t bank = l2_->bank_of(line);
    auto hit = l2_->lookup(line);
    if (hit.hit) {
      const Cycles bank_start = l2_->reserve_bank(bank, t1, cfg_.l2.read_cycles);
      const Cycles done =
          std::max(bank_start + cfg_.l2.read_cycles, hit.entry->ready);
      account(t0, done, t1 - t0, 0, 0, 0);
      complete(app, r, done, hit.entry->version, true);
      return;
    }

    // L2 miss: through the interconnect to the flash controller.
    if (cfg_.prefetch_enabled && monitor_->on_miss()) {
      report_.waste_ratio_series.push_back(monitor_->waste_ratio());
      monitor_->adjust();
    }

    std::uint32_t window = static_cast<std::uint32_t>(kLineBytes);
    const bool do_prefetch = cfg_.prefetch_enabled && pred.do_prefetch;
    if (do_prefetch)
      window = std::max<std::uint32_t>(monitor_->granularity(),
                                       static_cast<std::uint32_t>(kLineBytes));

    const std::uint32_t plane = array_->plane_of(tr.pdbn);
    const std::uint32_t pkg = array_->package_of_plane(plane);
    const std::uint32_t ctrl = dispatch_controller(tr.addr);
    auto& package = array_->package(pkg);

    const Cycles at_ctrl = t1 + cfg_.policy.noc_cycles;
    const Cycles decoded = controllers_[ctrl].accept(at_ctrl);
    const auto req_route = mesh_->route(mesh_->controller_node(ctrl),
                                        mesh_->package_node(pkg), 16, decoded);
    Cycles net_cy = cfg_.policy.noc_cycles * 2 +
                    (req_route.arrival - decoded);

    // A dirty or valid register already holding this page's sector serves
    // the read without touching the array.
    std::uint64_t version = 0;
    bool register_hit = false;
    Cycles sensed_at = req_route.arrival;
    Cycles array_cy = 0;
    const int slot_idx = package.regs.find(tr.pdbn, tr.page_index);
    if (slot_idx >= 0) {
      RegSlot& slot = package.regs.slot(slot_idx);
      if (slot.mask & (1u << tr.sector)) {
        register_hit = true;
        version = slot.sectors[tr.sector];
        package.regs.touch(static_cast<std::uint32_t>(slot_idx));
        ++array_->plane(plane).reg_hits;
        ++report_.register_hits;
      }
    }

    PageImage page_img{};
    bool have_image = false;
    if (!register_hit) {
      ++array_->plane(plane).reg_misses;
      auto rr = array_->array_read(tr.pdbn, tr.page_index, tr.plbn, tr.sector,
                                   req_route.arrival);
      ++report_.array_reads;
      if (!rr.found) ++report_.uninitialized_reads;
      version = rr.version;
      sensed_at = rr.ready;
      array_cy = array_->read_cycles();
      auto resolved = array_->resolve_latest(tr.pdbn, tr.page_index, tr.plbn);
      if (resolved.found) {
        page_img = *resolved.img;
        have_image = true;
      }
      // Newer buffered sectors of the same page shadow the array copy.
      if (slot_idx >= 0) {
        const RegSlot& slot = package.regs.slot(slot_idx);
        for (std::uint32_t s = 0; s < kSectorsPerPage; ++s)
          if (slot.mask & (1u << s)) page_img.v[s] = slot.sectors[s];
      }
    }

    // Response: demand line first, then the prefetch stream.
    const std::uint32_t port = package.pick_port(sensed_at);
    const Cycles port_start =
        std::max(sensed_at, package.io_port_busy[port]);
    const Cycles demand_out = port_start + transfer_line_cy_;
    package.io_port_busy[port] = demand_out;
    const auto resp_route =
        mesh_->route(mesh_->package_node(pkg), mesh_->controller_node(ctrl),
                     kLineBytes, demand_out);
    net_cy += resp_route.arrival - demand_out;
    const Cycles transfer_cy = transfer_line_cy_;

    const Cycles fill_at = resp_route.arrival + cfg_.policy.noc_cycles;
    const Cycles bank_start =
        l2_->reserve_bank(l2_->bank_of(line), fill_at, cfg_.l2.write_cycles);
    const Cycles line_ready = bank_start + cfg_.l2.write_cycles;
    l2_->fill(line, version, false, static_cast<std::uint8_t>(tr.app),
              line_ready, queue_.now());
    account(t0, line_ready, (t1 - t0), net_cy, array_cy, transfer_cy);
    complete(app, r, line_ready, version, true);

    // Prefetch: stream the rest of the granularity window from the page
    // register through the port, suppressing lines already present.
    if (do_prefetch && !register_hit && window > kLineBytes) {
      const std::uint32_t nlines = std::min<std::uint32_t>(
          window / kLineBytes, static_cast<std::uint32_t>(kSectorsPerPage));
      const std::uint64_t page_base = phys_line(tr.pdbn, tr.page_index, 0);
      std::uint32_t streamed = 0;
      Cycles stream_start = demand_out;
      for (std::uint32_t s = 0; s < nlines; ++s) {
        if (s == tr.sector) continue;
        const std::uint64_t pline = page_base + s;
        if (l2_->probe(pline).hit) continue;
        const std::uint64_t pver = have_image ? page_img.v[s] : 0;
        const Cycles out = stream_start + (streamed + 1) * transfer_line_cy_;
        const auto proute = mesh_->route(mesh_->package_node(pkg),
                                         mesh_->controller_node(ctrl),
                                         kLineBytes, out);
        const Cycles pfill = proute.arrival + cfg_.policy.noc_cycles;
        const Cycles pbank =
            l2_->reserve_bank(l2_->bank_of(pline), pfill, cfg_.l2.write_cycles);
        l2_->fill(pline, pver, true, static_cast<std::uint8_t>(tr.app),
                  pbank + cfg_.l2.write_cycles, queue_.now());
        note(pbank + cfg_.l2.write_cycles);
        ++streamed;
      }
      if (streamed > 0) {
        package.io_port_busy[port] += streamed * transfer_line_cy_;
        note(package.io_port_busy[port]);
      }
    }
  }

  // A write request, a pinned-line flush or a GC re-injection. `fresh`
  // marks trace-originated writes for the redundancy bookkeeping.
  void zng_write(std::uint32_t app, const MemoryRequest& r,
                 const TranslationResult& tr, Cycles t0, Cycles t1,
                 std::uint64_t version, bool fresh) {
    const std::uint32_t plane = array_->plane_of(tr.plbn);
    const std::uint32_t pkg = array_->package_of_plane(plane);
    auto& package = array_->package(pkg);
    package.thrash.on_write(reg_key(tr.pdbn, tr.page_index));

    // The demand path is read-only; cached copies of this line are stale
    // once the write enters the flash path.
    const std::uint64_t wline = phys_line(tr.pdbn, tr.page_index, tr.sector);

    // Redirection: while the package's registers thrash, writes land in the
    // pinned L2 region instead of the flash path.
    if (cfg_.redirection_enabled && package.thrash.thrashing()) {
      if (!l2_->pinned_active()) l2_->pin_region(cfg_.l2.pinned_fraction);
      auto res = l2_->write_pinned(wline, version,
                                   static_cast<std::uint8_t>(tr.app), tr.lbn,
                                   static_cast<std::uint16_t>(tr.page_index),
                                   static_cast<std::uint8_t>(tr.sector),
                                   queue_.now());
      if (res.ok) {
        ++report_.redirected_writes;
        Cycles t_done = t1;
        if (res.displaced) flush_line_to_flash(*res.displaced, t1, &t_done);
        const Cycles bank_start = l2_->reserve_bank(
            l2_->bank_of(wline), t_done, cfg_.l2.write_cycles);
        const Cycles done = bank_start + cfg_.l2.write_cycles;
        account(t0, done, t1 - t0, 0, 0, 0);
        if (fresh) complete(app, r, done, version, false);
        note(done);
        return;
      }
    }

    l2_->invalidate_for_write(wline);
    const std::uint32_t ctrl = tr.addr.channel;
    const Cycles at_ctrl = t1 + cfg_.policy.noc_cycles;
    const Cycles decoded = controllers_[ctrl].accept(at_ctrl);
    const auto route = mesh_->route(mesh_->controller_node(ctrl),
                                    mesh_->package_node(pkg), kLineBytes,
                                    decoded);
    const Cycles net_cy = cfg_.policy.noc_cycles + (route.arrival - decoded);
    Cycles t_slot = buffer_write(package, pkg, tr, version, route.arrival);
    account(t0, t_slot, t1 - t0, net_cy, 0, transfer_line_cy_);
    if (fresh) complete(app, r, t_slot, version, false);
    note(t_slot);
  }

  // Places one 128B sector into the package's register file, evicting (and
  // programming) a victim when needed. Returns the landing time.
  Cycles buffer_write(PackageState& package, std::uint32_t pkg,
                      const TranslationResult& tr, std::uint64_t version,
                      Cycles arrival) {
    const std::uint32_t target_local = array_->local_plane(
        array_->plane_of(tr.plbn));
    RegisterGroup& regs = package.regs;
    Cycles t = arrival;

    int idx = regs.find(tr.pdbn, tr.page_index);
    if (idx >= 0) {
      ++array_->plane(array_->plane_of(tr.plbn)).reg_hits;
      ++report_.register_hits;
      RegSlot& slot = regs.slot(static_cast<std::uint32_t>(idx));
      const std::uint32_t port = package.pick_port(t);
      const Cycles port_start = std::max(t, package.io_port_busy[port]);
      const Cycles landed =
          std::max(port_start + transfer_line_cy_, slot.busy_until);
      package.io_port_busy[port] = port_start + transfer_line_cy_;
      slot.sectors[tr.sector] = version;
      slot.mask |= 1u << tr.sector;
      slot.dirty = true;
      regs.touch(static_cast<std::uint32_t>(idx));
      return landed;
    }

    ++array_->plane(array_->plane_of(tr.plbn)).reg_misses;
    ++report_.register_misses;

    // Find or make room.
    std::uint32_t slot_id = 0;
    for (;;) {
      const int free = regs.find_free(target_local);
      if (free >= 0) {
        slot_id = static_cast<std::uint32_t>(free);
        break;
      }
      auto choice = regs.pick_victim(target_local, t, [&](std::uint32_t grp) {
        return array_->log_full(ftl_->log_block_of_group(grp));
      });
      if (choice.slot >= 0) {
        slot_id = static_cast<std::uint32_t>(choice.slot);
        t = evict_slot(package, pkg, slot_id, t);
        break;
      }
      if (choice.blocked_slot >= 0) {
        // The LRU victim's log block is full: merge that group first.
        const std::uint32_t grp =
            regs.slot(static_cast<std::uint32_t>(choice.blocked_slot)).group;
        t = std::max(t, run_gc(grp, t));
        continue;
      }
      if (choice.all_busy) {
        t = std::max(t + 1, choice.wait_until);
        continue;
      }
      throw sim_exception("engine", "register allocation failed");
    }

    RegSlot& slot = regs.slot(slot_id);
    regs.install(slot_id, tr.pdbn, tr.page_index);
    slot.plbn = tr.plbn;
    slot.group = tr.group;
    slot.lbn = tr.lbn;
    slot.app = static_cast<std::uint8_t>(tr.app);
    slot.target_plane = target_local;
    slot.sectors.fill(0);
    slot.mask = 1u << tr.sector;
    slot.sectors[tr.sector] = version;
    slot.dirty = true;

    const std::uint32_t port = package.pick_port(t);
    const Cycles port_start = std::max(t, package.io_port_busy[port]);
    const Cycles landed = std::max(port_start + transfer_line_cy_,
                                   slot.busy_until);
    package.io_port_busy[port] = port_start + transfer_line_cy_;
    return landed;
  }

  // Writes a dirty victim back to its log block: topology move cost, a
  // read-modify-write sense when older content exists, then the program.
  Cycles evict_slot(PackageState& package, std::uint32_t pkg,
                    std::uint32_t slot_id, Cycles t) {
    RegisterGroup& regs = package.regs;
    RegSlot slot = regs.slot(slot_id);  // copy: release below
    package.thrash.on_eviction(reg_key(slot.pdbn, slot.page_index));
    ++report_.register_evictions;
    if (!slot.dirty) {
      regs.release(slot_id);
      return t;
    }

    const std::uint32_t plane =
        pkg * cfg_.geometry.planes_per_package() + slot.target_plane;
    Cycles move_done = t;
    Cycles slot_free = t;
    switch (regs.writeback_path(slot_id)) {
      case WritebackPath::Local:
      case WritebackPath::FcnetDirect:
        break;  // register feeds the program directly
      case WritebackPath::NifForward: {
        // Through the local ring to the target plane's data register; the
        // flash network is untouched.
        const std::uint32_t home = regs.home_plane(slot_id);
        const std::uint32_t planes = cfg_.geometry.planes_per_package();
        const std::uint32_t d = home > slot.target_plane
                                    ? home - slot.target_plane
                                    : slot.target_plane - home;
        const std::uint32_t hops = std::min(d, planes - d);
        const Cycles start = std::max(t, regs.data_reg_free(slot.target_plane));
        move_done = start + hops * cfg_.registers.ring_hop_cycles +
                    mesh_->serialization(kPageBytes);
        slot_free = move_done;
        break;
      }
      case WritebackPath::SwnetCopy: {
        // Out to the router and back, consuming flash network bandwidth.
        const std::uint32_t ctrl = pkg / cfg_.geometry.packages_per_channel;
        const std::uint32_t port_out = package.pick_port(t);
        const Cycles po = std::max(t, package.io_port_busy[port_out]);
        const Cycles copy_out = po + transfer_page_cy();
        package.io_port_busy[port_out] = copy_out;
        auto out = mesh_->route(mesh_->package_node(pkg),
                                mesh_->controller_node(ctrl), kPageBytes, copy_out);
        const Cycles at_router = out.arrival + cfg_.registers.router_buffer_cycles;
        auto back = mesh_->route(mesh_->controller_node(ctrl),
                                 mesh_->package_node(pkg), kPageBytes, at_router);
        const std::uint32_t port_in = package.pick_port(back.arrival);
        const Cycles pi = std::max(back.arrival, package.io_port_busy[port_in]);
        move_done = pi + transfer_page_cy();
        package.io_port_busy[port_in] = move_done;
        slot_free = copy_out;
        break;
      }
    }

    // Read-modify-write: merge buffered sectors over the latest copy.
    PageImage img{};
    auto base = array_->resolve_latest(slot.pdbn, slot.page_index, slot.plbn);
    Cycles ready = move_done;
    if (base.found) {
      img = *base.img;
      const Cycles s = array_->reserve_plane(plane, move_done,
                                             array_->read_cycles());
      ready = s + array_->read_cycles();
      ++report_.rmw_reads;
    }
    for (std::uint32_t s = 0; s < kSectorsPerPage; ++s)
      if (slot.mask & (1u << s)) img.v[s] = slot.sectors[s];

    auto prog = array_->program_log_page(slot.plbn, slot.pdbn, slot.page_index,
                                         img, ready);
    if (prog.gc_required) {
      // The log filled inside this dispatch; the merge folds this slot's
      // content, so no program remains to issue.
      const Cycles gc_end = run_gc(slot.group, ready);
      if (!regs.slot(slot_id).valid) {
        RegSlot& cleared = regs.slot(slot_id);
        cleared.busy_until = std::max(cleared.busy_until, gc_end);
        return std::max(t, gc_end);
      }
      const std::uint64_t plbn = ftl_->log_block_of_group(slot.group);
      prog = array_->program_log_page(plbn, ftl_->entry(slot.lbn).pdbn,
                                      slot.page_index, img, ready);
      if (prog.gc_required)
        throw sim_exception("engine", "log block full after merge");
    }
    ++report_.demand_programs;
    bump(program_page_counts_,
         static_cast<std::uint64_t>(slot.lbn) * cfg_.geometry.pages_per_block +
             slot.page_index);
    if (regs.topology() == RegisterTopology::NiF &&
        regs.writeback_path(slot_id) == WritebackPath::NifForward)
      regs.reserve_data_reg(slot.target_plane, prog.ready);
    note(prog.ready);

    regs.release(slot_id);
    RegSlot& fresh_slot = regs.slot(slot_id);
    fresh_slot.busy_until = slot_free == t ? prog.ready : slot_free;
    return std::max(t, fresh_slot.busy_until);
  }

  Cycles transfer_page_cy() const {
    return cfg_.clock.from_ns(cfg_.znand.transfer_ns(kPageBytes));
  }

  // Pinned or flushed L2 line re-entering the flash path.
  void flush_line_to_flash(const L2Cache::DisplacedDirty& d, Cycles t,
                           Cycles* done) {
    const DbmtEntry& e = ftl_->entry(d.lbn);
    TranslationResult tr;
    tr.pdbn = e.pdbn;
    tr.plbn = e.plbn;
    tr.lbn = d.lbn;
    tr.group = ftl_->group_of(d.lbn);
    tr.page_index = d.page_index;
    tr.sector = d.sector;
    tr.app = d.app;
    tr.addr = cfg_.geometry.decompose(e.plbn);
    tr.addr.role = BlockRole::Log;
    const std::uint32_t plane = array_->plane_of(tr.plbn);
    const std::uint32_t pkg = array_->package_of_plane(plane);
    const Cycles landed =
        buffer_write(array_->package(pkg), pkg, tr, d.version, t);
    if (done) *done = std::max(*done, landed);
  }

  // --- garbage collection -----------------------------------------------------

  // Synchronous content merge; timing occupies the plane and blocks the
  // owning application's issue until the merge ends.
  Cycles run_gc(std::uint32_t group, Cycles t) {
    const std::uint8_t owner = ftl_->owner_of_group(group);
    const std::uint32_t owner_idx = stream_index(owner);

    // Quiesce: in-flight owner requests finish before the merge starts.
    Cycles start = t;
    if (owner_idx < app_outstanding_horizon_.size())
      start = std::max(start, app_outstanding_horizon_[owner_idx]);

    // Collect buffered sectors: flash registers of the group and the
    // owner's dirty L2 lines. The owner's clean lines are dropped.
    std::vector<SectorPatch> patches;
    const auto members = ftl_->group_members(group);
    auto member_of = [&](std::uint32_t lbn) {
      return std::find(members.begin(), members.end(), lbn) != members.end();
    };
    const std::uint64_t plbn = ftl_->log_block_of_group(group);
    const std::uint32_t pkg =
        array_->package_of_plane(array_->plane_of(plbn));
    RegisterGroup& regs = array_->package(pkg).regs;
    for (std::uint32_t i = 0; i < regs.slot_count(); ++i) {
      RegSlot& slot = regs.slot(i);
      if (!slot.valid || slot.group != group) continue;
      for (std::uint32_t s = 0; s < kSectorsPerPage; ++s)
        if (slot.mask & (1u << s))
          patches.push_back({slot.pdbn, slot.page_index, s, slot.sectors[s]});
      regs.release(i);
    }
    std::vector<L2Cache::DisplacedDirty> reinject;
    if (l2_) {
      for (const auto& d : l2_->flush_app(owner)) {
        if (member_of(d.lbn)) {
          patches.push_back({ftl_->entry(d.lbn).pdbn, d.page_index, d.sector,
                             d.version});
        } else {
          reinject.push_back(d);
        }
      }
    }

    auto res = gc_->run(group, start, patches);
    report_.gc_log.push_back({group, owner, res.merge.start, res.merge.end,
                              res.pages_moved,
                              res.merge.blocks_erased});
    report_.gc_reads += res.flash_reads;
    report_.gc_programs += res.pages_moved;

    if (owner_idx < app_blocked_until_.size())
      app_blocked_until_[owner_idx] =
          std::max(app_blocked_until_[owner_idx], res.merge.end);
    note(res.merge.end);

    // The owner's remaining dirty lines flush after the merge.
    Cycles flush_done = res.merge.end;
    for (const auto& d : reinject)
      flush_line_to_flash(d, res.merge.end, &flush_done);
    note(flush_done);
    return res.merge.end;
  }

  std::uint32_t stream_index(std::uint8_t app) const {
    for (std::uint32_t i = 0; i < streams_.size(); ++i)
      if (streams_[i].app == app) return i;
    return static_cast<std::uint32_t>(streams_.size());
  }

  // --- analytic platforms -----------------------------------------------------

  void dispatch_hetero(std::uint32_t app, const MemoryRequest& r, Cycles t) {
    const std::uint64_t page = r.vaddr / kPageBytes;
    Cycles done;
    Cycles net = 0;
    if (hetero_resident_.insert(page).second) {
      // First touch: SSD read plus two PCIe transfers and host staging,
      // serialized on the host fault pipe.
      const Cycles start = std::max(t, hetero_host_busy_);
      hetero_host_busy_ =
          start + cfg_.clock.from_ns(cfg_.hetero.fault_pipe_ns);
      done = start + cfg_.clock.from_ns(cfg_.hetero.fault_service_ns);
      net = done - t;
      ++report_.page_faults;
    } else {
      const std::uint32_t mc =
          static_cast<std::uint32_t>(r.line() % cfg_.hetero.mem_controllers);
      if (hetero_mc_busy_.size() < cfg_.hetero.mem_controllers)
        hetero_mc_busy_.resize(cfg_.hetero.mem_controllers, 0);
      const Cycles start = std::max(t, hetero_mc_busy_[mc]);
      hetero_mc_busy_[mc] =
          start + cfg_.clock.from_ns(cfg_.hetero.mem_transfer_ns);
      done = start + cfg_.hetero.mem_latency_cycles;
    }
    std::uint64_t version = 0;
    if (r.op == Op::Write)
      flat_content_[r.line()] = version = next_version(r.line());
    else {
      auto it = flat_content_.find(r.line());
      version = it == flat_content_.end() ? 0 : it->second;
      if (version == 0) ++report_.uninitialized_reads;
    }
    account(t, done, 0, net, 0, 0);
    complete(app, r, done, version, r.op == Op::Read);
  }

  void dispatch_optane(std::uint32_t app, const MemoryRequest& r, Cycles t) {
    const auto& oc = cfg_.optane;
    if (optane_banks_.empty())
      optane_banks_.assign(
          static_cast<std::size_t>(oc.controllers) * oc.banks_per_controller,
          OptaneBank{});
    const std::uint32_t ctrl =
        static_cast<std::uint32_t>(r.line() % oc.controllers);
    const std::uint64_t row = r.vaddr / oc.row_bytes;
    const std::uint32_t bank =
        ctrl * oc.banks_per_controller +
        static_cast<std::uint32_t>((r.vaddr / oc.row_bytes) %
                                   oc.banks_per_controller);
    OptaneBank& b = optane_banks_[bank];
    const Cycles start = std::max(t, b.busy_until);
    Cycles lat = 0;
    if (b.open && b.row == row) {
      lat = cfg_.clock.from_ns(oc.tcl_ns);
    } else {
      if (b.open) lat += cfg_.clock.from_ns(oc.trp_ns);
      lat += cfg_.clock.from_ns(oc.trcd_ns) + cfg_.clock.from_ns(oc.tcl_ns);
      b.open = true;
      b.row = row;
    }
    const Cycles done = start + lat + cfg_.clock.from_ns(oc.transfer_ns);
    b.busy_until = start + lat + cfg_.clock.from_ns(oc.transfer_ns);
    std::uint64_t version = 0;
    if (r.op == Op::Write)
      flat_content_[r.line()] = version = next_version(r.line());
    else {
      auto it = flat_content_.find(r.line());
      version = it == flat_content_.end() ? 0 : it->second;
      if (version == 0) ++report_.uninitialized_reads;
    }
    account(t, done, 0, 0, lat, cfg_.clock.from_ns(oc.transfer_ns));
    complete(app, r, done, version, r.op == Op::Read);
  }

  void dispatch_hybrid(std::uint32_t app, const MemoryRequest& r, Cycles t) {
    const auto& hc = cfg_.hybrid;
    // Single SSD engine runs the FTL for every request.
    const Cycles engine_start = std::max(t, hybrid_engine_busy_);
    hybrid_engine_busy_ = engine_start + cfg_.clock.from_ns(hc.engine_ns);
    Cycles done = hybrid_engine_busy_;
    const std::uint64_t page = r.vaddr / kPageBytes;
    const std::uint64_t buffer_pages =
        std::max<std::uint64_t>(1, hc.dram_buffer_bytes / kPageBytes);
    Cycles array_cy = 0, transfer_cy = 0;
    auto hit = hybrid_buffer_.find(page);
    if (hit == hybrid_buffer_.end()) {
      // Fetch the page over a 1B-wide bus channel.
      ZTiming narrow = cfg_.znand;
      narrow.interface_lanes = hc.channel_lanes;
      const std::uint32_t ch =
          static_cast<std::uint32_t>(page % cfg_.geometry.channels);
      if (hybrid_channel_busy_.size() < cfg_.geometry.channels)
        hybrid_channel_busy_.resize(cfg_.geometry.channels, 0);
      const Cycles cstart = std::max(done, hybrid_channel_busy_[ch]);
      array_cy = cfg_.clock.from_ns(cfg_.znand.read_ns);
      transfer_cy = cfg_.clock.from_ns(narrow.transfer_ns(kPageBytes));
      hybrid_channel_busy_[ch] = cstart + array_cy + transfer_cy;
      done = hybrid_channel_busy_[ch];
      ++report_.array_reads;
      // Buffer eviction: dirty pages program back.
      if (hybrid_buffer_.size() >= buffer_pages) {
        auto victim = hybrid_lru_.begin();
        if (victim != hybrid_lru_.end()) {
          auto vit = hybrid_buffer_.find(*victim);
          if (vit != hybrid_buffer_.end() && vit->second.dirty) {
            hybrid_channel_busy_[ch] +=
                cfg_.clock.from_ns(cfg_.znand.program_ns);
            ++report_.demand_programs;
            note(hybrid_channel_busy_[ch]);
          }
          if (vit != hybrid_buffer_.end()) hybrid_buffer_.erase(vit);
          hybrid_lru_.erase(victim);
        }
      }
      hybrid_buffer_[page] = HybridPage{false};
      hybrid_lru_.push_back(page);
    } else {
      const Cycles bstart = std::max(done, hybrid_dram_busy_);
      hybrid_dram_busy_ = bstart + cfg_.clock.from_ns(hc.dram_transfer_ns);
      done = hybrid_dram_busy_;
      transfer_cy = cfg_.clock.from_ns(hc.dram_transfer_ns);
    }
    std::uint64_t version = 0;
    if (r.op == Op::Write) {
      flat_content_[r.line()] = version = next_version(r.line());
      hybrid_buffer_[page].dirty = true;
    } else {
      auto it = flat_content_.find(r.line());
      version = it == flat_content_.end() ? 0 : it->second;
      if (version == 0) ++report_.uninitialized_reads;
    }
    account(t, done, cfg_.clock.from_ns(hc.engine_ns), 0, array_cy,
            transfer_cy);
    complete(app, r, done, version, r.op == Op::Read);
  }

  // --- epochs, drain, finalize ------------------------------------------------

  void epoch_tick() {
    EpochSample s;
    s.start_cycle = epoch_start_;
    s.completed_per_app.resize(streams_.size());
    for (std::size_t a = 0; a < streams_.size(); ++a) {
      s.completed_per_app[a] = completions_per_app_[a] - epoch_mark_completed_[a];
      epoch_mark_completed_[a] = completions_per_app_[a];
    }
    const std::uint64_t ar = report_.array_reads + report_.gc_reads;
    const std::uint64_t pr = report_.demand_programs + report_.gc_programs;
    s.array_reads = ar - epoch_mark_reads_;
    s.programs = pr - epoch_mark_programs_;
    epoch_mark_reads_ = ar;
    epoch_mark_programs_ = pr;
    report_.epochs.push_back(std::move(s));
    epoch_start_ = queue_.now();

    // Thrashing subsided everywhere: release the pinned region.
    if (l2_ && l2_->pinned_active()) {
      bool any = false;
      for (std::uint32_t p = 0; p < array_->package_count(); ++p)
        if (array_->package(p).thrash.thrashing()) any = true;
      if (!any) {
        Cycles done = queue_.now();
        for (const auto& d : l2_->unpin_region())
          flush_line_to_flash(d, queue_.now(), &done);
        note(done);
      }
    }

    bool more = false;
    for (const auto& st : streams_)
      if (st.cursor < st.reqs.size()) more = true;
    for (std::size_t a = 0; a < streams_.size(); ++a)
      if (app_outstanding_[a] > 0) more = true;
    if (more)
      queue_.push(queue_.now() + cfg_.policy.epoch_cycles,
                  [this] { epoch_tick(); });
  }

  void drain() {
    if (!array_) return;
    Cycles t = horizon_;
    if (l2_ && l2_->pinned_active()) {
      for (const auto& d : l2_->unpin_region()) {
        flush_line_to_flash(d, t, &t);
      }
    }
    for (std::uint32_t p = 0; p < array_->package_count(); ++p) {
      RegisterGroup& regs = array_->package(p).regs;
      for (std::uint32_t i = 0; i < regs.slot_count(); ++i) {
        if (!regs.slot(i).valid || !regs.slot(i).dirty) continue;
        if (array_->log_full(ftl_->log_block_of_group(regs.slot(i).group))) {
          run_gc(regs.slot(i).group, t);
          if (!regs.slot(i).valid) continue;  // folded into the merge
        }
        t = std::max(t, evict_slot(array_->package(p), p, i, t));
      }
    }
    note(t);
  }

  void finalize() {
    report_.completion_cycles = horizon_;
    report_.completion_seconds =
        cfg_.clock.ns_of(horizon_) * 1e-9;
    report_.in_flight_at_end =
        report_.requests_dispatched - report_.responses_delivered;

    to_histogram(read_page_counts_, report_.read_reaccess,
                 report_.mean_read_reaccess);
    to_histogram(write_page_counts_, report_.write_redundancy,
                 report_.mean_write_redundancy);
    // Redundancy as measured at the flash array: programs per written page.
    if (!program_page_counts_.empty()) {
      std::uint64_t total = 0;
      for (const auto& [k, v] : program_page_counts_) total += v;
      report_.pages_programmed = program_page_counts_.size();
      report_.mean_write_redundancy =
          static_cast<double>(total) /
          static_cast<double>(program_page_counts_.size());
    } else {
      report_.mean_write_redundancy = 0.0;
    }

    const std::uint64_t array_ops = report_.array_reads + report_.rmw_reads +
                                    report_.gc_reads +
                                    report_.demand_programs +
                                    report_.gc_programs;
    if (horizon_ > 0)
      report_.array_bandwidth_gbps =
          static_cast<double>(array_ops) * kPageBytes /
          (cfg_.clock.ns_of(horizon_));

    if (ftl_) {
      report_.tlb_hits = ftl_->tlb().hits();
      report_.tlb_misses = ftl_->tlb().misses();
    }
    if (l2_) {
      const auto& st = l2_->stats();
      report_.l2_hits = st.hits;
      report_.l2_misses = st.misses;
      report_.prefetch_issued = st.prefetch_issued;
      report_.prefetch_used = st.prefetch_used;
      report_.prefetch_wasted = st.prefetch_wasted;
      report_.pinned_writes = st.pinned_writes;
      report_.pinned_flushes = st.pinned_flushes;
      report_.predictor_accuracy =
          st.prefetch_issued == 0
              ? 1.0
              : static_cast<double>(st.prefetch_used) /
                    static_cast<double>(st.prefetch_issued);
    }
    if (array_) {
      for (std::uint32_t p = 0; p < array_->plane_count(); ++p) {
        const Plane& pl = array_->plane(p);
        report_.planes.push_back({pl.array_reads, pl.programs, pl.erases,
                                  pl.reg_hits, pl.reg_misses});
        report_.erases += pl.erases;
      }
      for (std::uint32_t p = 0; p < array_->package_count(); ++p)
        report_.thrash_windows +=
            array_->package(p).thrash.thrash_windows();
    }
    if (mesh_) report_.mesh_bytes = mesh_->total_link_bytes();
    for (const auto& c : controllers_) report_.controller_stalls += c.stalls();
  }

  // --- bookkeeping ------------------------------------------------------------

  void note(Cycles t) { horizon_ = std::max(horizon_, t); }

  // Version ids are per-line write sequence numbers. Per line, dispatch
  // order equals trace order (lines belong to one application and issue is
  // in order per application), so a flat trace replay predicts every id.
  std::uint64_t next_version(std::uint64_t line) {
    return ++line_write_seq_[line];
  }

  void account(Cycles t0, Cycles done, Cycles translation, Cycles network,
               Cycles array, Cycles transfer) {
    auto& b = report_.breakdown;
    const Cycles total = done - t0;
    b.total += total;
    b.translation += translation;
    b.network += network;
    b.array += array;
    b.transfer += transfer;
    const Cycles known = translation + network + array + transfer;
    b.queueing += total > known ? total - known : 0;
    ++b.samples;
  }

  static void bump(std::unordered_map<std::uint64_t, std::uint64_t>& m,
                   std::uint64_t key) {
    ++m[key];
  }

  static void to_histogram(
      const std::unordered_map<std::uint64_t, std::uint64_t>& counts,
      PageHistogram& hist, double& mean) {
    std::uint64_t total = 0;
    for (const auto& [page, n] : counts) {
      ++hist[n];
      total += n;
    }
    mean = counts.empty() ? 0.0
                          : static_cast<double>(total) /
                                static_cast<double>(counts.size());
  }

  // --- state ------------------------------------------------------------------

  PlatformConfig cfg_;
  std::vector<MemoryRequest> trace_;
  std::vector<Stream> streams_;
  EventQueue queue_;
  MetricsReport report_;
  ReadObserver read_obs_;
  CompletionObserver completion_obs_;

  std::unique_ptr<FlashArray> array_;
  std::unique_ptr<Ftl> ftl_;
  std::unique_ptr<L2Cache> l2_;
  std::unique_ptr<AccessMonitor> monitor_;
  std::unique_ptr<PredictorTable> predictor_;
  std::unique_ptr<MeshNetwork> mesh_;
  std::vector<FlashController> controllers_;
  std::unique_ptr<GarbageCollector> gc_;

  std::unordered_map<std::uint64_t, std::uint32_t> warp_outstanding_;
  std::vector<Cycles> app_blocked_until_;
  std::vector<std::uint32_t> app_outstanding_;
  std::vector<Cycles> app_outstanding_horizon_;
  std::vector<std::uint64_t> completions_per_app_;
  std::vector<std::uint64_t> epoch_mark_completed_;
  std::uint64_t epoch_mark_reads_ = 0;
  std::uint64_t epoch_mark_programs_ = 0;
  Cycles epoch_start_ = 0;
  std::uint64_t dispatch_idx_ = 0;  // trace index of the request in flight

  std::unordered_map<std::uint64_t, std::uint64_t> line_write_seq_;
  Cycles horizon_ = 0;
  Cycles transfer_line_cy_ = 0;

  std::unordered_map<std::uint64_t, std::uint64_t> read_page_counts_;
  std::unordered_map<std::uint64_t, std::uint64_t> write_page_counts_;
  std::unordered_map<std::uint64_t, std::uint64_t> program_page_counts_;

  // Analytic platform state.
  std::unordered_set<std::uint64_t> hetero_resident_;
  std::vector<Cycles> hetero_mc_busy_;
  Cycles hetero_host_busy_ = 0;
  std::unordered_map<std::uint64_t, std::uint64_t> flat_content_;
  struct OptaneBank {
    bool open = false;
    std::uint64_t row = 0;
    Cycles busy_until = 0;
  };
  std::vector<OptaneBank> optane_banks_;
  Cycles hybrid_engine_busy_ = 0;
  Cycles hybrid_dram_busy_ = 0;
  std::vector<Cycles> hybrid_channel_busy_;
  struct HybridPage {
    bool dirty = false;
  };
  std::unordered_map<std::uint64_t, HybridPage> hybrid_buffer_;
  std::deque<std::uint64_t> hybrid_lru_;
};

// Runs each platform on the same trace and normalizes completion time to
// the full design.
struct CompareRow {
  Platform platform = Platform::Zng;
  Cycles completion = 0;
  double normalized = 0.0;
};

inline std::vector<CompareRow> compare_platforms(
    const PlatformConfig& base_cfg, const std::vector<Platform>& platforms,
    const std::vector<MemoryRequest>& trace) {
  std::vector<CompareRow> rows;
  for (Platform p : platforms) {
    PlatformConfig cfg = base_cfg;
    cfg.apply_platform(p);
    Engine eng(cfg, trace);
    MetricsReport rep = eng.run();
    rows.push_back({p, rep.completion_cycles, 0.0});
  }
  Cycles ref = 0;
  for (const auto& row : rows)
    if (row.platform == Platform::Zng) ref = row.completion;
  if (ref == 0 && !rows.empty()) ref = rows.front().completion;
  for (auto& row : rows)
    row.normalized = ref == 0 ? 0.0
                              : static_cast<double>(row.completion) /
                                    static_cast<double>(ref);
  return rows;
}

}  // namespace zng
