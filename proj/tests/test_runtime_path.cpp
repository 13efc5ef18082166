#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace farpath;
using namespace farpath::test;

TEST(RuntimePath, FetchChargesObjectBytesAndOneAllocation) {
  Runtime rt(small_config());
  UniqueRef r;
  rt.allocate(r, 64, 0, content(1, 64));
  PageDescriptor& old = page_of(rt, r);
  ASSERT_TRUE(evict(rt, old));
  const auto before = rt.ledger();
  VirtAddr fresh;
  {
    DerefScope s = rt.deref(r);
    fresh = s.addr();
  }
  const auto d = rt.ledger() - before;
  EXPECT_EQ(d.bytes_in, 64u);
  EXPECT_EQ(d.objects_in, 1u);
  EXPECT_EQ(d.useful_bytes, 64u);
  LogSegment& seg = rt.allocator().segment(rt.memory().descriptor(fresh));
  const auto live = seg.live_objects();
  ASSERT_EQ(live.size(), 1u);
  EXPECT_EQ(live[0].size, kHeaderSize + 64);
  EXPECT_EQ(live[0].offset + kHeaderSize, fresh.offset(4096));
}

TEST(RuntimePath, BackToBackFetchesShareAFreshPage) {
  Runtime rt(small_config());
  UniqueRef a, b;
  rt.allocate(a, 64, 0, content(1, 64));
  rt.allocate(b, 64, 1, content(2, 64));
  PageDescriptor& pa = page_of(rt, a);
  PageDescriptor& pb = page_of(rt, b);
  ASSERT_NE(&pa, &pb);
  ASSERT_TRUE(evict(rt, pa));
  ASSERT_TRUE(evict(rt, pb));
  VirtAddr na, nb;
  { na = rt.deref(a, 2).addr(); }
  { nb = rt.deref(b, 2).addr(); }
  EXPECT_EQ(na.page(4096), nb.page(4096));
  EXPECT_EQ(nb.value - na.value, kHeaderSize + 64);
}

TEST(RuntimePath, LaterReaderSeesWinnerAddress) {
  Runtime rt(small_config());
  UniqueRef r;
  rt.allocate(r, 64, 0, content(3, 64));
  ASSERT_TRUE(evict(rt, page_of(rt, r)));
  VirtAddr winner;
  { winner = rt.deref(r, 0).addr(); }
  const auto before = rt.ledger();
  {
    DerefScope s = rt.deref(r, 1);
    EXPECT_EQ(s.addr(), winner);
    EXPECT_EQ(read_all(s), content(3, 64));
  }
  EXPECT_EQ((rt.ledger() - before).objects_in, 0u);
}

TEST(RuntimePath, SequentialColdFetchesBuildALocalityPage) {
  Runtime rt(small_config(64));
  const std::size_t size = 40, k = 4096 / (size + kHeaderSize);
  std::vector<UniqueRef> refs(k), pad(k);
  for (std::size_t i = 0; i < k; ++i) {
    rt.allocate(refs[i], size, 0, content(i, size));
    rt.allocate(pad[i], 3000, 0);  // scatters the objects over k pages
  }
  for (std::size_t i = 0; i < k; ++i) {
    PageDescriptor& p = page_of(rt, refs[i]);
    if (p.where() == Residency::local) rt.try_page_out(p);
  }
  PageDescriptor* home = nullptr;
  for (std::size_t i = 0; i < k; ++i) {
    DerefScope s = rt.deref(refs[i], 1);
    if (!home) home = &s.page();
    EXPECT_EQ(&s.page(), home) << i;
    EXPECT_EQ(read_all(s), content(i, size));
  }
  const double floor = static_cast<double>(k * ((size + 15) / 16)) / 256.0;
  EXPECT_GE(compute_car(home->cat), floor);
  EXPECT_GE(compute_car(home->cat), 0.8);
}

TEST(RuntimePath, OldRemoteCopyIsDeadAfterFetch) {
  Runtime rt(small_config());
  UniqueRef a, b;
  rt.allocate(a, 64, 0);
  rt.allocate(b, 64, 0);
  PageDescriptor& old = page_of(rt, a);
  const VirtAddr old_addr = a.addr();
  ASSERT_TRUE(evict(rt, old));
  { rt.deref(a); }
  LogSegment& seg = rt.allocator().segment(old);
  for (const auto& o : seg.live_objects()) EXPECT_NE(o.offset + kHeaderSize, old_addr.offset(4096));
  EXPECT_EQ(old.where(), Residency::remote);
  { rt.deref(b); }
  // Both objects gone and the segment is closed: the slot is released.
  close_tlab(rt);
  EXPECT_EQ(seg.live_bytes.load(), 0u);
}

TEST(RuntimePath, EmptiedRemotePageReleasesItsSlot) {
  Runtime rt(small_config());
  UniqueRef a;
  rt.allocate(a, 64, 0);
  PageDescriptor& old = page_of(rt, a);
  close_tlab(rt);
  ASSERT_TRUE(evict(rt, old));
  const std::size_t live = rt.store().live_slots();
  { rt.deref(a); }
  EXPECT_EQ(old.where(), Residency::unmapped);
  EXPECT_EQ(rt.store().live_slots(), live - 1);
  EXPECT_TRUE(rt.audit_events().ok());
}

TEST(RuntimePath, ContentMatchesShadowOracle) {
  std::mt19937_64 rng(8);
  Runtime rt(small_config(12));
  const std::size_t n = 400;
  std::vector<UniqueRef> refs(n);
  std::vector<std::size_t> sizes(n);
  std::vector<std::uint32_t> versions(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    sizes[i] = 1 + rng() % 600;
    rt.allocate(refs[i], sizes[i], i % 3, content(i, sizes[i]));
  }
  for (int step = 0; step < 5000; ++step) {
    const std::size_t i = rng() % n;
    const std::size_t w = rng() % 3;
    if (rng() % 5 == 0) {
      DerefScope s = rt.deref(refs[i], w);
      s.write(0, content(i, sizes[i], ++versions[i]));
    } else {
      DerefScope s = rt.deref(refs[i], w);
      ASSERT_EQ(read_all(s), content(i, sizes[i], versions[i])) << "object " << i << " step " << step;
    }
    if (step % 97 == 0) rt.evacuation_cycle();
  }
  EXPECT_EQ(rt.pinned_pages(), 0u);
  const AuditReport audit = rt.audit_events();
  EXPECT_TRUE(audit.ok()) << audit.summary();
}

TEST(ObjectOnly, EvictsIndividualObjects) {
  Runtime rt(small_config(6, Mode::object_only));
  const std::size_t n = 300;
  std::vector<UniqueRef> refs(n);
  for (std::size_t i = 0; i < n; ++i) rt.allocate(refs[i], 100, 0, content(i, 100));
  const auto l = rt.ledger();
  EXPECT_EQ(l.pages_out, 0u);
  EXPECT_GT(l.objects_out, 0u);
  EXPECT_GT(rt.stats().objects_evicted, 0u);
  for (std::size_t i = 0; i < n; ++i) {
    DerefScope s = rt.deref(refs[i]);
    ASSERT_EQ(read_all(s), content(i, 100));
  }
  const auto d = rt.ledger() - l;
  EXPECT_EQ(d.pages_in, 0u);
  EXPECT_DOUBLE_EQ(d.io_amplification(), 1.0);
  EXPECT_TRUE(rt.audit_events().ok());
}
