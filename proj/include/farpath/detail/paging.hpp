#pragma once

// Paging path: frame acquisition, CLOCK replacement, page-out with path
// selection, page-in, and pin-pressure relief.

namespace farpath {

template <class H>
std::uint32_t BasicRuntime<H>::acquire_frame() {
  if (reclaiming()) {
    // Allocation from inside reclaim may not recurse into it.
    if (auto f = mm_.pool().try_acquire()) return *f;
    throw Error(Errc::out_of_memory, "no free frame during reclaim");
  }
  constexpr int kMaxIdleRounds = 20000;
  Backoff<H> backoff;
  int idle = 0;
  for (;;) {
    if (auto f = mm_.pool().try_acquire()) {
      if (reclaimer_.joinable() && mm_.pool().free_count() * 32 < mm_.pool().capacity()) bg_cv_.notify_one();
      return *f;
    }
    std::size_t freed = 0;
    try {
      freed = reclaim(1);
    } catch (const Error& e) {
      if (e.code() != Errc::no_victims) throw;
      relieve_pin_pressure();
    }
    if (freed == 0) {
      if (++idle > kMaxIdleRounds) throw Error(Errc::out_of_memory, "every local frame is pinned");
      backoff.pause();
    }
  }
}

template <class H>
std::size_t BasicRuntime<H>::reclaim(std::size_t n) {
  std::lock_guard<SpinLock<H>> g(reclaim_lock_);
  struct Mark {
    const void* prev;
    explicit Mark(const void* self) : prev(reclaiming_owner()) { reclaiming_owner() = self; }
    ~Mark() { reclaiming_owner() = prev; }
  } mark(this);
  return cfg_.mode == Mode::object_only ? reclaim_objects(n) : reclaim_pages(n);
}

template <class H>
std::size_t BasicRuntime<H>::reclaim_pages(std::size_t n) {
  std::size_t freed = 0;
  for (int round = 0; freed < n && round < 4; ++round) {
    for (PageDescriptor* v : select_victims(n - freed))
      if (try_page_out(*v)) ++freed;
  }
  return freed;
}

// CLOCK second chance over frames. Pinned and exclusively held pages are
// passed over without touching their reference bit.
template <class H>
std::vector<PageDescriptor*> BasicRuntime<H>::select_victims(std::size_t n) {
  std::vector<PageDescriptor*> out;
  std::lock_guard<SpinLock<H>> g(clock_lock_);
  const std::size_t cap = mm_.pool().capacity();
  const std::size_t limit = 2 * cap + 1;
  std::size_t scanned = 0;
  while (out.size() < n && scanned < limit) {
    const auto f = static_cast<std::uint32_t>(hand_);
    hand_ = (hand_ + 1) % cap;
    ++scanned;
    const std::uint64_t vpn = mm_.pool().owner(f);
    if (vpn == 0) continue;
    PageDescriptor* p = mm_.table().find_vpn(vpn);
    if (!p || p->where() != Residency::local || p->frame.load(std::memory_order_acquire) != f) continue;
    if (p->derefcnt.load(std::memory_order_acquire) != 0) continue;
    if (p->referenced.exchange(false, std::memory_order_acq_rel)) continue;
    if (std::find(out.begin(), out.end(), p) != out.end()) continue;
    out.push_back(p);
  }
  store_.ledger().evict_work(scanned);
  if (out.empty()) throw Error(Errc::no_victims, "no evictable page among " + std::to_string(cap) + " frames");
  return out;
}

template <class H>
bool BasicRuntime<H>::try_page_out(PageDescriptor& page) {
  if (!page.try_claim_exclusive()) return false;
  if (page.where() != Residency::local) {
    page.release_exclusive();
    return false;
  }
  H::point(SyncPoint::evict_claimed);
  try {
    page_out(page);
  } catch (...) {
    page.release_exclusive();
    throw;
  }
  return true;
}

template <class H>
PathSelector BasicRuntime<H>::choose_path(const PageDescriptor& page, double car) const noexcept {
  if (page.space == Space::huge) return PathSelector::paging;
  if (page.space == Space::offload) return PathSelector::runtime;
  switch (cfg_.mode) {
    case Mode::paging_only: return PathSelector::paging;
    case Mode::object_only: return PathSelector::runtime;
    case Mode::hybrid: break;
  }
  if (page.forced_paging.load(std::memory_order_acquire)) return PathSelector::paging;
  return car >= cfg_.car_threshold ? PathSelector::paging : PathSelector::runtime;
}

template <class H>
void BasicRuntime<H>::set_psf(PageDescriptor& page, PathSelector p, PsfOrigin origin) {
  const PathSelector old = page.psf.exchange(p, std::memory_order_acq_rel);
  if (old == p) return;
  if (p == PathSelector::paging)
    (origin == PsfOrigin::relieve ? forced_flips_ : pageout_flips_).fetch_add(1, std::memory_order_relaxed);
  else
    paging_to_runtime_.fetch_add(1, std::memory_order_relaxed);
  log(EventKind::psf_set, page, static_cast<std::uint8_t>(origin));
}

// Precondition: the caller holds the page exclusively; it is released on return.
template <class H>
SwapSlot BasicRuntime<H>::page_out(PageDescriptor& page) {
  if (!(page.derefcnt.load(std::memory_order_acquire) & PageDescriptor::kExclusive))
    throw Error(Errc::invalid_argument, "page_out without exclusive ownership");
  if (page.where() != Residency::local) throw Error(Errc::invalid_argument, "page_out of a non-resident page");
  const std::uint32_t frame = page.frame.load(std::memory_order_acquire);
  const SwapSlot slot =
      store_.store_page({mm_.pool().frame_data(frame), mm_.page_size()}, page.space, mm_.table().base_of(page));
  H::point(SyncPoint::evict_stored);
  set_psf(page, choose_path(page, compute_car(page.cat)), PsfOrigin::page_out);
  page.cat.clear();
  page.clear_touched();
  page.paged_in.store(false, std::memory_order_relaxed);
  page.forced_paging.store(false, std::memory_order_relaxed);
  page.slot.store(slot.id, std::memory_order_relaxed);
  const std::uint32_t epoch = page.epoch.load(std::memory_order_relaxed) + 1;
  page.epoch.store(epoch, std::memory_order_relaxed);
  log(EventKind::page_out, page, epoch, 0);
  page.frame.store(kNoFrame, std::memory_order_relaxed);
  page.residency.store(Residency::remote, std::memory_order_release);
  mm_.pool().release(frame);
  page.release_exclusive();
  return slot;
}

template <class H>
void BasicRuntime<H>::page_in(PageDescriptor& page) {
  if (page.where() != Residency::remote) return;
  const std::uint32_t frame = acquire_frame();
  Backoff<H> backoff;
  while (page.transit.exchange(true, std::memory_order_acquire)) {
    H::point(SyncPoint::lock_spin);
    backoff.pause();
  }
  if (page.where() != Residency::remote) {
    page.transit.store(false, std::memory_order_release);
    mm_.pool().release(frame);
    return;
  }
  H::point(SyncPoint::page_in_locked);
  try {
    store_.load_page(page.slot.load(std::memory_order_acquire), {mm_.pool().frame_data(frame), mm_.page_size()});
  } catch (...) {
    page.transit.store(false, std::memory_order_release);
    mm_.pool().release(frame);
    throw;
  }
  page.slot.store(0, std::memory_order_relaxed);
  page.cat.clear();
  page.clear_touched();
  page.paged_in.store(true, std::memory_order_relaxed);
  page.referenced.store(true, std::memory_order_relaxed);
  page.frame.store(frame, std::memory_order_relaxed);
  mm_.pool().bind(frame, page.vpn);
  log(EventKind::page_in, page);
  page.residency.store(Residency::local, std::memory_order_release);
  page.transit.store(false, std::memory_order_release);
}

// Pages pinned by long-lived scopes cannot be evicted; flipping them to the
// paging path means their next remote epoch does not need reference rewrites.
template <class H>
std::size_t BasicRuntime<H>::relieve_pin_pressure() {
  if (cfg_.mode != Mode::hybrid) return 0;
  std::size_t flipped = 0;
  for (std::uint32_t f = 0; f < mm_.pool().capacity(); ++f) {
    const std::uint64_t vpn = mm_.pool().owner(f);
    if (vpn == 0) continue;
    PageDescriptor* p = mm_.table().find_vpn(vpn);
    if (!p || p->space != Space::normal || p->where() != Residency::local) continue;
    if (p->deref_count() == 0 || p->path() == PathSelector::paging) continue;
    p->forced_paging.store(true, std::memory_order_release);
    set_psf(*p, PathSelector::paging, PsfOrigin::relieve);
    ++flipped;
  }
  return flipped;
}

template <class H>
double BasicRuntime<H>::pinned_fraction() const {
  std::size_t pinned = 0;
  for (std::uint32_t f = 0; f < mm_.pool().capacity(); ++f) {
    const std::uint64_t vpn = mm_.pool().owner(f);
    if (vpn == 0) continue;
    const PageDescriptor* p = mm_.table().find_vpn(vpn);
    if (p && p->deref_count() != 0) ++pinned;
  }
  return static_cast<double>(pinned) / static_cast<double>(mm_.pool().capacity());
}

template <class H>
double BasicRuntime<H>::psf_paging_fraction() const {
  std::size_t resident = 0, paging = 0;
  for (std::uint32_t f = 0; f < mm_.pool().capacity(); ++f) {
    const std::uint64_t vpn = mm_.pool().owner(f);
    if (vpn == 0) continue;
    const PageDescriptor* p = mm_.table().find_vpn(vpn);
    if (!p || p->where() != Residency::local) continue;
    ++resident;
    if (p->path() == PathSelector::paging) ++paging;
  }
  return resident ? static_cast<double>(paging) / static_cast<double>(resident) : 0.0;
}

template <class H>
void BasicRuntime<H>::free_local_page(PageDescriptor& page) {
  const std::uint32_t frame = page.frame.load(std::memory_order_acquire);
  log(EventKind::segment_free, page);
  page.residency.store(Residency::unmapped, std::memory_order_release);
  page.frame.store(kNoFrame, std::memory_order_relaxed);
  if (page.space != Space::huge) alloc_.discard(alloc_.segment(page));
  mm_.pool().release(frame);
  segments_freed_.fetch_add(1, std::memory_order_relaxed);
}

template <class H>
void BasicRuntime<H>::maybe_free_local(PageDescriptor& page) {
  LogSegment* seg = alloc_.find_segment(page.space, page.index);
  auto empty = [&] {
    return page.where() == Residency::local && !seg->open.load(std::memory_order_acquire) &&
           seg->live_bytes.load(std::memory_order_acquire) == 0;
  };
  if (!seg || !empty() || !page.try_claim_exclusive()) return;
  if (!empty()) {
    page.release_exclusive();
    return;
  }
  free_local_page(page);
}

template <class H>
void BasicRuntime<H>::maybe_free_remote(PageDescriptor& page) {
  LogSegment* seg = alloc_.find_segment(page.space, page.index);
  auto empty = [&] {
    return page.where() == Residency::remote && !seg->open.load(std::memory_order_acquire) &&
           seg->live_bytes.load(std::memory_order_acquire) == 0;
  };
  if (!seg || !empty() || !page.try_claim_exclusive()) return;
  if (!empty()) {
    page.release_exclusive();
    return;
  }
  store_.release(page.slot.load(std::memory_order_acquire));
  page.slot.store(0, std::memory_order_relaxed);
  log(EventKind::segment_free, page);
  page.residency.store(Residency::unmapped, std::memory_order_release);
  alloc_.discard(*seg);
  segments_freed_.fetch_add(1, std::memory_order_relaxed);
}

template <class H>
void BasicRuntime<H>::release_huge(PageDescriptor& first) {
  const std::uint32_t span = first.huge_span;
  for (std::uint32_t i = 0; i < span; ++i) {
    PageDescriptor& p = *mm_.table().find_index(Space::huge, first.index + i);
    Backoff<H> backoff;
    while (!p.try_claim_exclusive()) backoff.pause();
    if (p.where() == Residency::remote) {
      store_.release(p.slot.load(std::memory_order_acquire));
      p.slot.store(0, std::memory_order_relaxed);
      log(EventKind::segment_free, p);
      p.residency.store(Residency::unmapped, std::memory_order_release);
    } else if (p.where() == Residency::local) {
      free_local_page(p);
    }
  }
}

template <class H>
void BasicRuntime<H>::start_background() {
  if (reclaimer_.joinable()) return;
  bg_stop_.store(false);
  reclaimer_ = std::thread([this] { background_reclaim_loop(); });
  evacuator_ = std::thread([this] { background_evacuate_loop(); });
}

template <class H>
void BasicRuntime<H>::stop_background() {
  if (!reclaimer_.joinable()) return;
  {
    std::lock_guard<std::mutex> g(bg_mu_);
    bg_stop_.store(true);
  }
  bg_cv_.notify_all();
  reclaimer_.join();
  evacuator_.join();
}

// Keeps a small reserve of free frames so foreground page-ins rarely reclaim
// synchronously.
template <class H>
void BasicRuntime<H>::background_reclaim_loop() {
  const std::size_t low = std::max<std::size_t>(2, mm_.pool().capacity() / 32);
  while (!bg_stop_.load()) {
    {
      std::unique_lock<std::mutex> g(bg_mu_);
      bg_cv_.wait_for(g, std::chrono::milliseconds(1));
    }
    if (bg_stop_.load()) break;
    try {
      if (pinned_fraction() >= cfg_.pin_watermark) relieve_pin_pressure();
      for (int i = 0; i < 64 && mm_.pool().free_count() < low && !bg_stop_.load(); ++i)
        if (reclaim(1) == 0) break;
    } catch (const Error&) {
      // Nothing evictable right now; foreground reclaim reports real exhaustion.
    }
  }
}

template <class H>
void BasicRuntime<H>::background_evacuate_loop() {
  while (!bg_stop_.load()) {
    {
      std::unique_lock<std::mutex> g(bg_mu_);
      bg_cv_.wait_for(g, std::chrono::milliseconds(2));
    }
    if (bg_stop_.load()) break;
    if (!evacuation_due()) continue;
    try {
      evacuation_cycle();
    } catch (const Error&) {
    }
  }
}

}  // namespace farpath
