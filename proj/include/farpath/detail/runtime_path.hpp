#pragma once

// Object-granularity ingress (fetch into a fresh local home) and, for the
// object-only baseline, object-granularity egress.

namespace farpath {

// Precondition: the caller holds a validated deref count on the remote page.
// Returns nullopt when another thread claimed the object first; the loser has
// allocated nothing.
template <class H>
auto BasicRuntime<H>::fetch_object(RefCell& main, bool shared, PageDescriptor& page, VirtAddr addr,
                                   std::uint64_t main_word, std::size_t worker) -> std::optional<Scope> {
  if (RefMeta::addr_of(main_word) != addr || RefMeta::busy(main_word)) return std::nullopt;
  std::uint64_t expected = main_word;
  if (!main.meta.compare_exchange_strong(expected, main_word | RefMeta::kMoving, std::memory_order_acq_rel))
    return std::nullopt;
  H::point(SyncPoint::fetch_claimed);

  const std::size_t size = RefMeta::size_of(main_word);
  const std::size_t extent = kHeaderSize + size;
  Allocation a;
  try {
    a = alloc_.alloc_pinned(extent, {worker, Stream::fetch, page.space});
  } catch (...) {
    main.meta.fetch_and(~RefMeta::kMoving, std::memory_order_acq_rel);
    throw;
  }
  std::byte* dst = mm_.host_ptr(*a.page, a.addr);
  detail::store_word(dst, detail::backlink(main, shared));
  const std::uint64_t slot = page.slot.load(std::memory_order_acquire);
  const std::size_t off = addr.offset(mm_.page_size());
  store_.load_object(slot, off, size, {dst + kHeaderSize, size});
  H::point(SyncPoint::fetch_copied);
  log(EventKind::object_fetch, page);

  const VirtAddr fresh = a.addr + kHeaderSize;
  touch(*a.page, fresh, size, main);
  update_references(main, shared, fresh, true);
  alloc_.mark_dead(VirtAddr(addr.value - kHeaderSize), extent);
  fetches_.fetch_add(1, std::memory_order_relaxed);
  log(EventKind::scope_enter, *a.page);
  Scope s(this, a.page, fresh, size, dst + kHeaderSize, 1);
  Allocator::unpin(page);
  maybe_free_remote(page);
  return s;
}

template <class H>
LogSegment& BasicRuntime<H>::new_remote_segment(Space space) {
  const std::uint64_t index = mm_.table().reserve(space);
  PageDescriptor& p = mm_.table().init_page(space, index);
  const SwapSlot slot = store_.reserve(space, mm_.table().base_of(p));
  p.slot.store(slot.id, std::memory_order_relaxed);
  p.frame.store(kNoFrame, std::memory_order_relaxed);
  p.epoch.store(0, std::memory_order_relaxed);
  p.psf.store(PathSelector::runtime, std::memory_order_relaxed);
  p.forced_paging.store(false, std::memory_order_relaxed);
  p.paged_in.store(false, std::memory_order_relaxed);
  p.referenced.store(false, std::memory_order_relaxed);
  p.derefcnt.store(0, std::memory_order_relaxed);
  LogSegment& seg = alloc_.open_segment(p, Generation::cold);
  log(EventKind::remote_create, p);
  p.residency.store(Residency::remote, std::memory_order_release);
  return seg;
}

// Appends a raw extent (header + payload) to a remote-built segment and
// returns the extent's new address.
template <class H>
VirtAddr BasicRuntime<H>::egress_write(Outbound& out, Space space, std::span<const std::byte> raw) {
  LogSegment*& seg = out.seg[space == Space::offload ? 1 : 0];
  for (;;) {
    if (!seg) seg = &new_remote_segment(space);
    if (auto off = alloc_.bump(*seg, static_cast<std::uint32_t>(raw.size()))) {
      store_.write_object(seg->page->slot.load(std::memory_order_acquire), *off, raw);
      return mm_.table().base_of(*seg->page) + *off;
    }
    alloc_.close(*seg);
    PageDescriptor& done = *seg->page;
    seg = nullptr;
    maybe_free_remote(done);
  }
}

template <class H>
auto BasicRuntime<H>::evict_object(RefCell& main, PageDescriptor*& source) -> EvictResult {
  const std::uint64_t w = main.load();
  if (w == 0) return EvictResult::gone;
  if (RefMeta::busy(w)) return EvictResult::busy;
  const VirtAddr addr = RefMeta::addr_of(w);
  PageDescriptor* page = mm_.table().find(addr);
  if (!page || page->space == Space::huge || page->where() != Residency::local) return EvictResult::gone;
  source = page;
  if (!page->try_claim_exclusive()) return EvictResult::busy;
  if (page->where() != Residency::local) {
    page->release_exclusive();
    return EvictResult::gone;
  }
  std::uint64_t expected = w;
  if (!main.meta.compare_exchange_strong(expected, w | RefMeta::kMoving, std::memory_order_acq_rel)) {
    page->release_exclusive();
    return EvictResult::busy;
  }
  H::point(SyncPoint::evict_claimed);
  log(EventKind::object_evict, *page);
  const VirtAddr header(addr.value - kHeaderSize);
  const std::size_t extent = kHeaderSize + RefMeta::size_of(w);
  const std::byte* src = mm_.host_ptr(*page, header);
  const bool shared = detail::load_word(src) & 1;
  VirtAddr moved;
  try {
    moved = egress_write(egress_, page->space, {src, extent});
  } catch (...) {
    main.meta.fetch_and(~RefMeta::kMoving, std::memory_order_acq_rel);
    page->release_exclusive();
    throw;
  }
  update_references(main, shared, moved + kHeaderSize, false);
  alloc_.mark_dead(header, extent);
  objects_evicted_.fetch_add(1, std::memory_order_relaxed);
  LogSegment& seg = alloc_.segment(*page);
  if (!seg.open.load(std::memory_order_acquire) && seg.live_bytes.load(std::memory_order_acquire) == 0) {
    free_local_page(*page);
    return EvictResult::freed_page;
  }
  page->release_exclusive();
  return EvictResult::evicted;
}

// Object-only reclaim: evict the coldest objects one by one. A source page
// left mostly garbage is compacted (or its remaining objects evicted) so that
// the frame comes back.
template <class H>
std::size_t BasicRuntime<H>::reclaim_objects(std::size_t n) {
  std::size_t freed = 0, progress = 0;
  std::size_t budget = lru_.size() + 16;
  const std::size_t compactor = cfg_.max_workers + 1;
  while (freed < n && budget-- > 0) {
    RefCell* obj = lru_.pop_coldest();
    if (!obj) break;
    PageDescriptor* source = nullptr;
    const EvictResult r = evict_object(*obj, source);
    if (r == EvictResult::busy) {
      lru_.touch(obj);
      continue;
    }
    if (r == EvictResult::gone) continue;
    ++progress;
    if (r == EvictResult::freed_page) {
      ++freed;
      continue;
    }
    LogSegment& seg = alloc_.segment(*source);
    if (seg.open.load(std::memory_order_acquire) || alloc_.garbage_ratio(seg) < cfg_.garbage_threshold) continue;
    if (!source->try_claim_exclusive()) continue;
    if (source->where() != Residency::local) {
      source->release_exclusive();
      continue;
    }
    EvacuationReport rep;
    const bool all = relocate(seg, false, true, compactor, [](bool) { return Dest::cold; }, egress_, rep,
                              EventKind::evac_move);
    if (all && seg.live_bytes.load(std::memory_order_acquire) == 0) {
      free_local_page(*source);
      ++freed;
    } else {
      source->release_exclusive();
    }
  }
  if (freed == 0 && progress == 0) throw Error(Errc::no_victims, "no evictable object");
  return freed;
}

}  // namespace farpath
