#include <catch2/catch_amalgamated.hpp>

#include "zng/cache.hpp"
#include "zng/config.hpp"
#include "zng/rng.hpp"

using namespace zng;

namespace {

L2Config small_l2() {
  L2Config cfg;
  cfg.capacity = 6 * 8 * 128 * 64;  // 64 sets
  return cfg;
}

}  // namespace

TEST_CASE("repeated read of one line: first miss, then hits") {
  L2Cache l2(small_l2());
  AccessMonitor mon{PrefetchConfig{}};
  l2.attach_monitor(&mon);
  CHECK_FALSE(l2.lookup(42).hit);
  l2.fill(42, 7, false, 0, 0, 0);
  auto h1 = l2.lookup(42);
  REQUIRE(h1.hit);
  CHECK(h1.entry->version == 7);
  CHECK(l2.lookup(42).hit);
  CHECK(l2.stats().misses == 1);
  CHECK(l2.stats().hits == 2);
}

TEST_CASE("demand fills never set the dirty bit") {
  L2Cache l2(small_l2());
  AccessMonitor mon{PrefetchConfig{}};
  l2.attach_monitor(&mon);
  Rng rng(9);
  for (int i = 0; i < 5000; ++i) {
    const std::uint64_t line = rng.below(4096);
    l2.fill(line, i, rng.chance(0.3), 0, 0, 0);
    auto h = l2.probe(line);
    if (h.hit) CHECK_FALSE(h.entry->dirty);
  }
}

TEST_CASE("prefetch bit set only by prefetch fills, cleared on demand fill") {
  L2Cache l2(small_l2());
  AccessMonitor mon{PrefetchConfig{}};
  l2.attach_monitor(&mon);
  l2.fill(10, 1, true, 0, 0, 0);
  CHECK(l2.probe(10).entry->prefetch);
  l2.fill(10, 2, false, 0, 0, 0);  // demand refill clears it
  CHECK_FALSE(l2.probe(10).entry->prefetch);
  l2.fill(11, 1, false, 0, 0, 0);
  CHECK_FALSE(l2.probe(11).entry->prefetch);
}

TEST_CASE("predictor: fresh entry fills a slot without raising the counter") {
  PredictorTable pred{PrefetchConfig{}};
  auto o = pred.update(0x400, 0, 100);
  CHECK(o.counter == 0);
  CHECK_FALSE(o.do_prefetch);
}

TEST_CASE("predictor: counter crosses the threshold after sustained re-access") {
  PredictorTable pred{PrefetchConfig{}};
  pred.update(0x400, 0, 100);  // trains the warp slot
  PredictorTable::Outcome o{};
  for (int i = 0; i < 13; ++i) o = pred.update(0x400, 0, 100);
  CHECK(o.counter == 13);
  CHECK(o.do_prefetch);  // higher than 12
  // Saturation at 15.
  for (int i = 0; i < 10; ++i) o = pred.update(0x400, 0, 100);
  CHECK(o.counter == 15);
}

TEST_CASE("predictor: alternating pages pin the counter at zero") {
  PredictorTable pred{PrefetchConfig{}};
  pred.update(0x400, 0, 1);
  for (int i = 0; i < 20; ++i) {
    auto o = pred.update(0x400, 0, i % 2 ? 1 : 2);
    CHECK(o.counter == 0);
    CHECK_FALSE(o.do_prefetch);
  }
}

TEST_CASE("predictor tracks five warps per entry, round-robin replacement") {
  PrefetchConfig cfg;
  PredictorTable pred{cfg};
  // Six warps share one pc; the sixth replaces the oldest slot, and the
  // replaced warp retrains without disturbing the others' pages.
  for (std::uint16_t w = 0; w < 5; ++w) pred.update(0x80, w, w);
  for (std::uint16_t w = 0; w < 5; ++w) pred.update(0x80, w, w);  // matches
  CHECK(pred.counter_of(0x80) == 5);
  pred.update(0x80, 5, 50);  // evicts a slot, decays the counter
  CHECK(pred.counter_of(0x80) == 4);
  auto o = pred.update(0x80, 5, 50);
  CHECK(o.counter == 5);
}

TEST_CASE("access monitor: eviction bookkeeping and waste ratio") {
  AccessMonitor mon{PrefetchConfig{}};
  mon.on_evict(false);
  CHECK(mon.evict_counter() == 1);
  CHECK(mon.unused_counter() == 0);
  mon.on_evict(true);
  CHECK(mon.unused_counter() == 1);
  for (int i = 0; i < 8; ++i) mon.on_evict(i < 3);
  CHECK(mon.evict_counter() == 10);
  CHECK(mon.unused_counter() == 4);
  CHECK(mon.waste_ratio() == Catch::Approx(0.4));
}

TEST_CASE("granularity: halves above high threshold, grows 1KB below low") {
  PrefetchConfig cfg;
  AccessMonitor mon{cfg};

  mon.set_granularity(4096);
  for (int i = 0; i < 10; ++i) mon.on_evict(i < 4);  // ratio 0.4 > 0.3
  CHECK(mon.adjust() == 2048);

  mon.set_granularity(1024);
  for (int i = 0; i < 100; ++i) mon.on_evict(i < 1);  // ratio 0.01 < 0.05
  CHECK(mon.adjust() == 2048);

  mon.set_granularity(128);
  for (int i = 0; i < 10; ++i) mon.on_evict(i < 9);  // ratio 0.9
  CHECK(mon.adjust() == 128);  // floor

  mon.set_granularity(4096);
  for (int i = 0; i < 100; ++i) mon.on_evict(false);
  CHECK(mon.adjust() == 4096);  // cap

  mon.set_granularity(2048);
  for (int i = 0; i < 10; ++i) mon.on_evict(i < 1);  // 0.1: between thresholds
  CHECK(mon.adjust() == 2048);
}

TEST_CASE("pinned region: write allocates a dirty pinned line, no program") {
  L2Cache l2(small_l2());
  AccessMonitor mon{PrefetchConfig{}};
  l2.attach_monitor(&mon);
  l2.pin_region(0.125);
  CHECK(l2.pinned_ways() == 1);
  auto r = l2.write_pinned(77, 3, 0, 5, 2, 1, 0);
  CHECK(r.ok);
  CHECK_FALSE(r.displaced.has_value());
  auto h = l2.probe(77);
  REQUIRE(h.hit);
  CHECK(h.entry->dirty);
  CHECK(h.entry->pinned);
  // A read of the redirected line is served from the pinned copy.
  auto rd = l2.lookup(77);
  REQUIRE(rd.hit);
  CHECK(rd.entry->version == 3);
}

TEST_CASE("pin then unpin with no writes flushes nothing") {
  L2Cache l2(small_l2());
  AccessMonitor mon{PrefetchConfig{}};
  l2.attach_monitor(&mon);
  l2.pin_region(0.125);
  CHECK(l2.unpin_region().empty());
  CHECK_FALSE(l2.pinned_active());
}

TEST_CASE("pin, write 10 distinct lines, unpin flushes exactly those") {
  L2Cache l2(small_l2());
  AccessMonitor mon{PrefetchConfig{}};
  l2.attach_monitor(&mon);
  l2.pin_region(0.125);
  // Distinct pages so no merging applies downstream.
  for (std::uint64_t i = 0; i < 10; ++i)
    l2.write_pinned(i * 997 + 1, i + 1, 0, static_cast<std::uint32_t>(i),
                    static_cast<std::uint16_t>(i), 0, 0);
  auto flushed = l2.unpin_region();
  CHECK(flushed.size() == 10);
}

TEST_CASE("pinned-way conflicts displace the older dirty line for programming") {
  L2Config cfg = small_l2();
  L2Cache l2(cfg);
  AccessMonitor mon{PrefetchConfig{}};
  l2.attach_monitor(&mon);
  l2.pin_region(0.125);
  // Two lines mapping to the same set fight over the single pinned way.
  const std::uint64_t a = 5;
  std::uint64_t b = a + 1;
  while (l2.bank_of(b) != l2.bank_of(a) || l2.set_of(b) != l2.set_of(a)) ++b;
  auto r1 = l2.write_pinned(a, 1, 0, 0, 0, 0, 0);
  CHECK_FALSE(r1.displaced.has_value());
  auto r2 = l2.write_pinned(b, 2, 0, 1, 0, 0, 0);
  REQUIRE(r2.displaced.has_value());
  CHECK(r2.displaced->version == 1);
}

TEST_CASE("pinning weakly increases the miss rate of a read-only replay") {
  // Same trace replayed with and without a pinned way.
  const L2Config cfg = small_l2();
  Rng rng(123);
  std::vector<std::uint64_t> lines;
  for (int i = 0; i < 20000; ++i)
    lines.push_back(rng.below(cfg.capacity / 128 * 2));

  auto misses = [&](bool pinned) {
    L2Cache l2(cfg);
    AccessMonitor mon{PrefetchConfig{}};
    l2.attach_monitor(&mon);
    if (pinned) l2.pin_region(0.125);
    for (const auto line : lines) {
      if (!l2.lookup(line).hit) l2.fill(line, 1, false, 0, 0, 0);
    }
    return l2.stats().misses;
  };
  CHECK(misses(true) >= misses(false));
}

TEST_CASE("eviction of an unused prefetched line counts as waste") {
  L2Config cfg = small_l2();
  L2Cache l2(cfg);
  AccessMonitor mon{PrefetchConfig{}};
  l2.attach_monitor(&mon);
  // Collect 2*ways lines that share one set, fill the first half as
  // untouched prefetches, then force evictions with demand fills.
  std::vector<std::uint64_t> same_set;
  for (std::uint64_t line = 1; same_set.size() < 2ull * cfg.ways; ++line)
    if (l2.bank_of(line) == l2.bank_of(1) && l2.set_of(line) == l2.set_of(1))
      same_set.push_back(line);
  for (std::uint32_t w = 0; w < cfg.ways; ++w)
    l2.fill(same_set[w], 1, true, 0, 0, 0);
  for (std::uint32_t w = 0; w < cfg.ways; ++w)
    l2.fill(same_set[cfg.ways + w], 1, false, 0, 0, 0);
  CHECK(mon.evict_counter() == cfg.ways);
  CHECK(mon.unused_counter() == cfg.ways);
  CHECK(l2.stats().prefetch_wasted == cfg.ways);
}
