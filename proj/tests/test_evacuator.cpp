#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace farpath;
using namespace farpath::test;

namespace {

// Four 1016-byte objects fill one page exactly (1024-byte extents).
struct PackedPage {
  explicit PackedPage(Runtime& rt) : rt(rt), refs(4) {
    for (std::size_t i = 0; i < 4; ++i) rt.allocate(refs[i], 1016, 0, content(i, 1016));
    page = &page_of(rt, refs[0]);
    for (auto& r : refs) EXPECT_EQ(&page_of(rt, r), page);
    close_tlab(rt);
    seg = &rt.allocator().segment(*page);
  }
  Runtime& rt;
  std::vector<UniqueRef> refs;
  PageDescriptor* page;
  LogSegment* seg;
};

double closed_local_max_ratio(Runtime& rt) {
  double worst = 0.0;
  const auto n = rt.memory().table().page_count(Space::normal);
  for (std::uint64_t i = 0; i < n; ++i) {
    PageDescriptor* p = rt.memory().table().find_index(Space::normal, i);
    if (!p || p->where() != Residency::local) continue;
    LogSegment* s = rt.allocator().find_segment(Space::normal, i);
    if (!s || s->open.load()) continue;
    worst = std::max(worst, garbage_ratio(*s));
  }
  return worst;
}

std::uint64_t local_garbage_bytes(Runtime& rt) {
  std::uint64_t sum = 0;
  const auto n = rt.memory().table().page_count(Space::normal);
  for (std::uint64_t i = 0; i < n; ++i) {
    PageDescriptor* p = rt.memory().table().find_index(Space::normal, i);
    if (!p || p->where() != Residency::local) continue;
    if (LogSegment* s = rt.allocator().find_segment(Space::normal, i)) sum += s->fill.load() - s->live_bytes.load();
  }
  return sum;
}

}  // namespace

TEST(Evacuator, MostlyGarbageSegmentIsFreed) {
  Runtime rt(small_config());
  PackedPage pp(rt);
  for (std::size_t i = 1; i < 4; ++i) rt.release(pp.refs[i]);
  EXPECT_DOUBLE_EQ(garbage_ratio(*pp.seg), 0.75);
  const std::size_t free_before = rt.memory().pool().free_count();
  const VirtAddr old = pp.refs[0].addr();
  const EvacuationReport rep = rt.evacuation_cycle(0.5);
  EXPECT_EQ(rep.segments_freed, 1u);
  EXPECT_EQ(rep.objects_moved, 1u);
  EXPECT_EQ(rep.cold_moved, 1u);
  EXPECT_EQ(pp.page->where(), Residency::unmapped);
  EXPECT_NE(pp.refs[0].addr(), old);
  // One frame freed, one taken by the destination segment.
  EXPECT_EQ(rt.memory().pool().free_count(), free_before);
  DerefScope s = rt.deref(pp.refs[0]);
  EXPECT_EQ(read_all(s), content(0, 1016));
}

TEST(Evacuator, HeldScopeSkipsTheSegment) {
  Runtime rt(small_config());
  PackedPage pp(rt);
  for (std::size_t i = 1; i < 4; ++i) rt.release(pp.refs[i]);
  const VirtAddr old = pp.refs[0].addr();
  {
    DerefScope s = rt.deref(pp.refs[0]);
    const EvacuationReport rep = rt.evacuation_cycle(0.5);
    EXPECT_EQ(rep.skipped_busy, 1u);
    EXPECT_EQ(rep.objects_moved, 0u);
    try {
      rt.evacuate_segment(*pp.seg);
      FAIL() << "expected SkippedBusy";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::skipped_busy);
    }
    EXPECT_EQ(s.addr(), old);
  }
  EXPECT_EQ(pp.refs[0].addr(), old);
  EXPECT_EQ(rt.evacuation_cycle(0.5).segments_freed, 1u);
}

TEST(Evacuator, NothingToDoWithoutGarbage) {
  Runtime rt(small_config());
  PackedPage pp(rt);
  EXPECT_EQ(rt.evacuation_cycle(0.5), EvacuationReport{});
  EXPECT_EQ(rt.evacuation_cycle(0.0), EvacuationReport{});
}

TEST(Evacuator, OpenSegmentIsNotEvacuated) {
  Runtime rt(small_config());
  UniqueRef a, b;
  rt.allocate(a, 64, 0);
  rt.allocate(b, 64, 0);
  rt.release(a);
  EXPECT_EQ(rt.evacuation_cycle(0.0), EvacuationReport{});
  EXPECT_THROW(rt.evacuate_segment(rt.allocator().segment(page_of(rt, b))), Error);
}

TEST(Evacuator, HotAndColdAreSegregated) {
  Runtime rt(small_config());
  PackedPage pp(rt);
  { rt.deref(pp.refs[0]); }
  { rt.deref(pp.refs[2]); }
  EvacuationReport rep;
  rt.evacuate_segment(*pp.seg, &rep);
  EXPECT_EQ(rep.hot_moved, 2u);
  EXPECT_EQ(rep.cold_moved, 2u);
  EXPECT_EQ(rep.segments_freed, 1u);

  PageDescriptor& hot = page_of(rt, pp.refs[0]);
  PageDescriptor& cold = page_of(rt, pp.refs[1]);
  EXPECT_NE(&hot, &cold);
  EXPECT_EQ(&page_of(rt, pp.refs[2]), &hot);
  EXPECT_EQ(&page_of(rt, pp.refs[3]), &cold);
  EXPECT_EQ(pp.refs[2].addr().value - pp.refs[0].addr().value, 1024u);
  EXPECT_EQ(pp.refs[3].addr().value - pp.refs[1].addr().value, 1024u);
  EXPECT_EQ(rt.allocator().segment(hot).generation, Generation::hot);
  EXPECT_EQ(rt.allocator().segment(cold).generation, Generation::cold);

  // Hot objects carry their cards over; cold ones start untouched.
  auto covered = [&](const UniqueRef& r, const PageDescriptor& p) {
    const auto want = expected_cards(4096, 16, r.addr().offset(4096), 1016);
    for (std::uint32_t c = 0; c < 256; ++c)
      if (want[c] && !p.cat.test(c)) return false;
    return true;
  };
  EXPECT_TRUE(covered(pp.refs[0], hot));
  EXPECT_TRUE(covered(pp.refs[2], hot));
  EXPECT_EQ(cold.cat.popcount(), 0u);

  for (auto& r : pp.refs) EXPECT_FALSE(r.load() & RefMeta::kAccess);
  for (std::size_t i = 0; i < 4; ++i) {
    DerefScope s = rt.deref(pp.refs[i]);
    EXPECT_EQ(read_all(s), content(i, 1016));
  }
  EXPECT_TRUE(rt.audit_events().ok());
}

TEST(Evacuator, RandomChurnLosesNothingAndSegregates) {
  std::mt19937_64 rng(5);
  Config c = small_config(48);
  c.remote_capacity_pages = 4096;
  Runtime rt(c);
  const std::size_t n = 600;
  std::vector<UniqueRef> refs(n);
  std::vector<std::size_t> sizes(n);
  std::vector<std::uint32_t> versions(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    sizes[i] = 16 + rng() % 300;
    rt.allocate(refs[i], sizes[i], i % 2, content(i, sizes[i]));
  }
  EvacuationReport total;
  for (int round = 0; round < 30; ++round) {
    for (int k = 0; k < 80; ++k) {
      const std::size_t i = rng() % n;
      if (rng() % 3 == 0) {
        rt.reassign(refs[i], sizes[i], i % 2, content(i, sizes[i], ++versions[i]));
      } else {
        DerefScope s = rt.deref(refs[i], i % 2);
        ASSERT_EQ(read_all(s), content(i, sizes[i], versions[i]));
      }
    }
    for (std::size_t w = 0; w < 2; ++w) close_tlab(rt, w);

    std::vector<VirtAddr> before(n);
    std::vector<bool> hot(n);
    for (std::size_t i = 0; i < n; ++i) {
      before[i] = refs[i].addr();
      hot[i] = refs[i].load() & RefMeta::kAccess;
    }
    const std::uint64_t garbage_before = local_garbage_bytes(rt);
    total += rt.evacuation_cycle(0.5);
    ASSERT_LE(local_garbage_bytes(rt), garbage_before) << "round " << round;
    for (std::size_t i = 0; i < n; ++i) {
      if (refs[i].addr() == before[i]) continue;
      PageDescriptor& p = page_of(rt, refs[i]);
      if (p.where() != Residency::local) continue;  // moved by egress, not evacuation
      const Generation g = rt.allocator().segment(p).generation;
      if (g == Generation::fresh) continue;  // refetched after a page-out
      ASSERT_EQ(g == Generation::hot, bool(hot[i])) << "object " << i << " round " << round;
    }
    ASSERT_LT(closed_local_max_ratio(rt), 0.5) << "round " << round;
  }
  for (std::size_t i = 0; i < n; ++i) {
    DerefScope s = rt.deref(refs[i]);
    ASSERT_EQ(read_all(s), content(i, sizes[i], versions[i])) << i;
  }
  EXPECT_GT(total.hot_moved, 0u);
  EXPECT_GT(total.cold_moved, 0u);
  EXPECT_GT(total.segments_freed, 0u);
  EXPECT_EQ(rt.pinned_pages(), 0u);
  const AuditReport audit = rt.audit_events();
  EXPECT_TRUE(audit.ok()) << audit.summary();
}
