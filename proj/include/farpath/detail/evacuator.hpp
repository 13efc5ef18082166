#pragma once

// Concurrent compaction of fragmented segments with hot/cold segregation.

namespace farpath {

// Moves every live object off a segment whose page the caller holds
// exclusively. Objects whose reference is mid-move or offloading are left in
// place; returns false if any object stayed.
template <class H>
bool BasicRuntime<H>::relocate(LogSegment& seg, bool remote_source, bool remote_fallback, std::size_t worker,
                               const std::function<Dest(bool hot)>& pick, Outbound& out, EvacuationReport& report,
                               EventKind kind) {
  PageDescriptor& src = *seg.page;
  const VirtAddr base = mm_.table().base_of(src);
  const std::uint64_t slot = remote_source ? src.slot.load(std::memory_order_acquire) : 0;
  std::vector<std::byte> buf;
  bool complete = true;
  for (const ObjectRecord& rec : seg.live_objects()) {
    const VirtAddr header = base + rec.offset;
    const std::byte* bytes;
    if (remote_source) {
      buf.resize(rec.size);
      store_.read_raw(slot, rec.offset, rec.size, buf);
      bytes = buf.data();
    } else {
      bytes = mm_.host_ptr(src, header);
    }
    const std::uint64_t link = detail::load_word(bytes);
    RefCell* main = reinterpret_cast<RefCell*>(link & ~std::uint64_t{1});
    const bool shared = link & 1;
    const VirtAddr obj = header + kHeaderSize;
    if (!main) {
      complete = false;
      continue;
    }
    std::uint64_t w = main->load();
    if (RefMeta::busy(w) || RefMeta::addr_of(w) != obj ||
        !main->meta.compare_exchange_strong(w, w | RefMeta::kMoving, std::memory_order_acq_rel)) {
      complete = false;
      continue;
    }
    const bool hot = w & RefMeta::kAccess;
    log(remote_source ? EventKind::object_fetch : kind, src);

    Dest d = pick(hot);
    VirtAddr fresh;
    PageDescriptor* pinned = nullptr;
    try {
      if (d != Dest::remote) {
        try {
          Allocation a = alloc_.alloc_pinned(rec.size, {worker, d == Dest::hot ? Stream::hot : Stream::cold, src.space});
          std::memcpy(mm_.host_ptr(*a.page, a.addr), bytes, rec.size);
          fresh = a.addr + kHeaderSize;
          pinned = a.page;
          if (hot) {
            mm_.mark_cards(*a.page, fresh, rec.size - kHeaderSize);
            a.page->referenced.store(true, std::memory_order_relaxed);
          }
        } catch (const Error& e) {
          if (!remote_fallback || e.code() != Errc::out_of_memory) throw;
          d = Dest::remote;
        }
      }
      if (d == Dest::remote) fresh = egress_write(out, src.space, {bytes, rec.size}) + kHeaderSize;
    } catch (const Error&) {
      main->meta.fetch_and(~RefMeta::kMoving, std::memory_order_acq_rel);
      complete = false;
      break;
    }
    update_references(*main, shared, fresh, false);
    alloc_.mark_dead(header, rec.size);
    if (pinned) Allocator::unpin(*pinned);
    report.objects_moved++;
    (hot ? report.hot_moved : report.cold_moved)++;
    H::point(SyncPoint::evac_object_moved);
  }
  return complete;
}

template <class H>
void BasicRuntime<H>::evacuate_locked(LogSegment& seg, EvacuationReport& report) {
  PageDescriptor& p = *seg.page;
  if (!p.try_claim_exclusive()) {
    report.skipped_busy++;
    throw Error(Errc::skipped_busy, "segment pinned by an active scope");
  }
  if (p.where() != Residency::local || seg.open.load(std::memory_order_acquire)) {
    p.release_exclusive();
    report.skipped_busy++;
    throw Error(Errc::skipped_busy, "segment not eligible");
  }
  H::point(SyncPoint::evac_claimed);
  const bool all = relocate(seg, false, false, evacuation_worker(),
                            [](bool hot) { return hot ? Dest::hot : Dest::cold; }, evac_out_, report,
                            EventKind::evac_move);
  if (all && seg.live_bytes.load(std::memory_order_acquire) == 0) {
    free_local_page(p);
    report.segments_freed++;
  } else {
    p.release_exclusive();
  }
}

template <class H>
void BasicRuntime<H>::evacuate_segment(LogSegment& seg, EvacuationReport* report) {
  EvacuationReport local;
  std::lock_guard<std::mutex> g(evac_mu_);
  evacuate_locked(seg, report ? *report : local);
}

template <class H>
EvacuationReport BasicRuntime<H>::evacuation_cycle(double garbage_threshold) {
  EvacuationReport report;
  std::unique_lock<std::mutex> g(evac_mu_, std::try_to_lock);
  if (!g.owns_lock()) return report;
  evac_cycles_.fetch_add(1, std::memory_order_relaxed);
  for (Space s : {Space::normal, Space::offload}) {
    const std::uint64_t n = mm_.table().page_count(s);
    for (std::uint64_t i = 0; i < n; ++i) {
      PageDescriptor* p = mm_.table().find_index(s, i);
      if (!p || p->where() != Residency::local) continue;
      LogSegment* seg = alloc_.find_segment(s, i);
      if (!seg || seg->open.load(std::memory_order_acquire)) continue;
      const double ratio = alloc_.garbage_ratio(*seg);
      if (ratio <= 0.0 || ratio < garbage_threshold) continue;
      if (p->derefcnt.load(std::memory_order_acquire) != 0) {
        report.skipped_busy++;
        continue;
      }
      try {
        evacuate_locked(*seg, report);
      } catch (const Error& e) {
        if (e.code() != Errc::skipped_busy) throw;
      }
    }
  }
  if (static_cast<double>(store_.free_capacity()) <
      cfg_.remote_free_watermark * static_cast<double>(store_.capacity()))
    compact_remote(garbage_threshold, report);
  return report;
}

// Remote segments are compacted lazily: only object-path pages qualify, since
// reading objects out of a paging-path epoch would mix ingress paths.
template <class H>
void BasicRuntime<H>::compact_remote(double threshold, EvacuationReport& report) {
  for (Space s : {Space::normal, Space::offload}) {
    const std::uint64_t n = mm_.table().page_count(s);
    for (std::uint64_t i = 0; i < n; ++i) {
      PageDescriptor* p = mm_.table().find_index(s, i);
      if (!p || p->where() != Residency::remote) continue;
      LogSegment* seg = alloc_.find_segment(s, i);
      if (!seg || seg->open.load(std::memory_order_acquire)) continue;
      if (seg->live_bytes.load(std::memory_order_acquire) == 0) {
        maybe_free_remote(*p);
        continue;
      }
      const double ratio = alloc_.garbage_ratio(*seg);
      if (p->path() != PathSelector::runtime || ratio <= 0.0 || ratio < threshold) continue;
      if (!p->try_claim_exclusive()) {
        report.skipped_busy++;
        continue;
      }
      if (p->where() != Residency::remote) {
        p->release_exclusive();
        continue;
      }
      const bool all = relocate(*seg, true, false, evacuation_worker(),
                                [](bool hot) { return hot ? Dest::hot : Dest::remote; }, evac_out_, report,
                                EventKind::evac_move);
      if (all && seg->live_bytes.load(std::memory_order_acquire) == 0) {
        store_.release(p->slot.load(std::memory_order_acquire));
        p->slot.store(0, std::memory_order_relaxed);
        log(EventKind::segment_free, *p);
        p->residency.store(Residency::unmapped, std::memory_order_release);
        alloc_.discard(*seg);
        segments_freed_.fetch_add(1, std::memory_order_relaxed);
        report.segments_freed++;
      } else {
        p->release_exclusive();
      }
    }
  }
}

}  // namespace farpath
