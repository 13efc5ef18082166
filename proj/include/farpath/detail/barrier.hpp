#pragma once

// Reference lifecycle and the dereference barriers.

namespace farpath {

template <class H>
BasicRuntime<H>::BasicRuntime(const Config& cfg)
    : cfg_((cfg.validate(), cfg)),
      mm_(cfg_),
      store_(cfg_.page_size, cfg_.remote_capacity_pages, cfg_.latency),
      alloc_(mm_, cfg_.max_workers + 2) {
  if (cfg_.audit) events_ = std::make_unique<EventLog>();
  alloc_.set_initial_psf(cfg_.mode == Mode::paging_only ? PathSelector::paging : PathSelector::runtime);
  alloc_.set_frame_source([this] { return acquire_frame(); });
}

template <class H>
RuntimeStats BasicRuntime<H>::stats() const noexcept {
  RuntimeStats s;
  s.pageout_flips = pageout_flips_.load();
  s.forced_flips = forced_flips_.load();
  s.paging_to_runtime = paging_to_runtime_.load();
  s.underflows = underflows_.load();
  s.lost_races = lost_races_.load();
  s.fetches = fetches_.load();
  s.objects_evicted = objects_evicted_.load();
  s.evacuation_cycles = evac_cycles_.load();
  s.segments_freed = segments_freed_.load();
  return s;
}

namespace detail {

inline std::uint64_t load_word(const std::byte* p) noexcept {
  std::uint64_t w;
  std::memcpy(&w, p, sizeof w);
  return w;
}

inline void store_word(std::byte* p, std::uint64_t w) noexcept { std::memcpy(p, &w, sizeof w); }

inline std::uint64_t backlink(const RefCell& main, bool shared) noexcept {
  return reinterpret_cast<std::uintptr_t>(&main) | (shared ? 1 : 0);
}

}  // namespace detail

template <class H>
VirtAddr BasicRuntime<H>::allocate(UniqueRef& ref, std::size_t size, std::size_t worker,
                                   std::span<const std::byte> init, Space space) {
  if (!ref.empty()) throw Error(Errc::invalid_argument, "reference already designates an object");
  if (size == 0) throw Error(Errc::invalid_argument, "zero-sized object");
  if (!init.empty() && init.size() != size) throw Error(Errc::invalid_argument, "initializer length != size");
  if (space != Space::normal && space != Space::offload) throw Error(Errc::invalid_argument, "bad space");

  if (size > max_object_size()) {
    if (space != Space::normal) throw Error(Errc::invalid_argument, "offload objects must fit one page");
    const VirtAddr a = alloc_.alloc_huge(size);
    PageDescriptor& first = *mm_.table().find(a);
    std::size_t done = 0;
    for (std::uint32_t i = 0; i < first.huge_span && !init.empty(); ++i) {
      PageDescriptor& p = *mm_.table().find_index(Space::huge, first.index + i);
      const std::size_t n = std::min(mm_.page_size(), size - done);
      std::memcpy(mm_.host_ptr(p, mm_.table().base_of(p)), init.data() + done, n);
      done += n;
    }
    RefMeta m;
    m.addr = a.value;
    ref.meta.store(m.encode(), std::memory_order_release);
    return a;
  }

  Allocation a = alloc_.alloc_pinned(kHeaderSize + size, {worker, Stream::app, space});
  std::byte* p = mm_.host_ptr(*a.page, a.addr);
  detail::store_word(p, detail::backlink(ref, false));
  if (init.empty())
    std::memset(p + kHeaderSize, 0, size);
  else
    std::memcpy(p + kHeaderSize, init.data(), size);
  RefMeta m;
  m.size = static_cast<std::uint16_t>(size);
  m.addr = (a.addr + kHeaderSize).value;
  ref.meta.store(m.encode(), std::memory_order_release);
  Allocator::unpin(*a.page);
  if (cfg_.mode == Mode::object_only) lru_.touch(&ref);
  return a.addr + kHeaderSize;
}

template <class H>
VirtAddr BasicRuntime<H>::allocate(SharedRef& ref, std::size_t size, std::size_t worker,
                                   std::span<const std::byte> init) {
  if (!ref.empty() || ref.next()) throw Error(Errc::invalid_argument, "reference already designates an object");
  if (size == 0 || size > max_object_size()) throw Error(Errc::invalid_argument, "shared objects must fit one page");
  if (!init.empty() && init.size() != size) throw Error(Errc::invalid_argument, "initializer length != size");
  Allocation a = alloc_.alloc_pinned(kHeaderSize + size, {worker, Stream::app, Space::normal});
  std::byte* p = mm_.host_ptr(*a.page, a.addr);
  detail::store_word(p, detail::backlink(ref, true));
  if (init.empty())
    std::memset(p + kHeaderSize, 0, size);
  else
    std::memcpy(p + kHeaderSize, init.data(), size);
  RefMeta m;
  m.size = static_cast<std::uint16_t>(size);
  m.addr = (a.addr + kHeaderSize).value;
  ref.set_link(&ref, true);
  ref.meta.store(m.encode(), std::memory_order_release);
  Allocator::unpin(*a.page);
  if (cfg_.mode == Mode::object_only) lru_.touch(&ref);
  return a.addr + kHeaderSize;
}

// Sets is_moving on a reference once no move or offload is in flight; returns
// the word that was replaced.
template <class H>
std::uint64_t BasicRuntime<H>::lock_moving(RefCell& ref) {
  Backoff<H> backoff;
  for (;;) {
    std::uint64_t w = ref.load();
    if (w == 0) throw Error(Errc::invalid_argument, "empty reference");
    if (!RefMeta::busy(w) && ref.meta.compare_exchange_weak(w, w | RefMeta::kMoving, std::memory_order_acq_rel))
      return w;
    backoff.pause();
  }
}

template <class H>
void BasicRuntime<H>::alias(SharedRef& from, SharedRef& to) {
  if (!to.empty() || to.next()) throw Error(Errc::invalid_argument, "alias target already in use");
  if (!from.next()) throw Error(Errc::invalid_argument, "alias source is empty");
  for (;;) {
    SharedRef& m = from.main();
    const std::uint64_t w = lock_moving(m);
    if (&from.main() != &m) {
      m.meta.fetch_and(~RefMeta::kMoving, std::memory_order_acq_rel);
      continue;
    }
    to.meta.store(w & ~(RefMeta::kMoving | RefMeta::kOffload), std::memory_order_release);
    to.set_link(m.next(), false);
    m.set_link(&to, true);
    m.meta.fetch_and(~RefMeta::kMoving, std::memory_order_acq_rel);
    return;
  }
}

template <class H>
VirtAddr BasicRuntime<H>::reassign(UniqueRef& ref, std::size_t new_size, std::size_t worker,
                                   std::span<const std::byte> init) {
  if (new_size == 0 || new_size > max_object_size())
    throw Error(Errc::invalid_argument, "reassigned objects must fit one page");
  if (!init.empty() && init.size() != new_size) throw Error(Errc::invalid_argument, "initializer length != size");
  const std::uint64_t w = lock_moving(ref);
  const VirtAddr old = RefMeta::addr_of(w);
  PageDescriptor* old_page = mm_.table().find(old);
  if (!old_page || old_page->space == Space::huge) {
    ref.meta.fetch_and(~RefMeta::kMoving, std::memory_order_acq_rel);
    throw Error(Errc::invalid_argument, "reassign of a huge object");
  }
  Allocation a;
  try {
    a = alloc_.alloc_pinned(kHeaderSize + new_size, {worker, Stream::app, old_page->space});
  } catch (...) {
    ref.meta.fetch_and(~RefMeta::kMoving, std::memory_order_acq_rel);
    throw;
  }
  std::byte* p = mm_.host_ptr(*a.page, a.addr);
  detail::store_word(p, detail::backlink(ref, false));
  if (init.empty())
    std::memset(p + kHeaderSize, 0, new_size);
  else
    std::memcpy(p + kHeaderSize, init.data(), new_size);
  RefMeta m;
  m.size = static_cast<std::uint16_t>(new_size);
  m.addr = (a.addr + kHeaderSize).value;
  ref.meta.store(m.encode(), std::memory_order_release);
  alloc_.mark_dead(VirtAddr(old.value - kHeaderSize), kHeaderSize + RefMeta::size_of(w));
  Allocator::unpin(*a.page);
  if (old_page->where() == Residency::remote)
    maybe_free_remote(*old_page);
  else
    maybe_free_local(*old_page);
  if (cfg_.mode == Mode::object_only) lru_.touch(&ref);
  return a.addr + kHeaderSize;
}

template <class H>
void BasicRuntime<H>::release(UniqueRef& ref) {
  const std::uint64_t w = lock_moving(ref);
  const VirtAddr addr = RefMeta::addr_of(w);
  PageDescriptor* page = mm_.table().find(addr);
  if (!page) throw Error(Errc::unmapped_address, "release of unmapped object");
  if (page->space == Space::huge) {
    release_huge(*page);
    ref.meta.store(0, std::memory_order_release);
    return;
  }
  if (cfg_.mode == Mode::object_only) lru_.erase(&ref);
  alloc_.mark_dead(VirtAddr(addr.value - kHeaderSize), kHeaderSize + RefMeta::size_of(w));
  ref.meta.store(0, std::memory_order_release);
  if (page->where() == Residency::remote)
    maybe_free_remote(*page);
  else
    maybe_free_local(*page);
}

template <class H>
void BasicRuntime<H>::release(SharedRef& ref, std::size_t worker) {
  if (!ref.next()) throw Error(Errc::invalid_argument, "release of an empty reference");
  if (ref.next() == &ref) {
    const std::uint64_t w = lock_moving(ref);
    const VirtAddr addr = RefMeta::addr_of(w);
    PageDescriptor* page = mm_.table().find(addr);
    if (cfg_.mode == Mode::object_only) lru_.erase(&ref);
    alloc_.mark_dead(VirtAddr(addr.value - kHeaderSize), kHeaderSize + RefMeta::size_of(w));
    ref.meta.store(0, std::memory_order_release);
    ref.set_link(nullptr, false);
    if (page && page->where() == Residency::remote)
      maybe_free_remote(*page);
    else if (page)
      maybe_free_local(*page);
    return;
  }

  auto unlink = [&ref] {
    SharedRef* prev = &ref;
    while (prev->next() != &ref) prev = prev->next();
    prev->set_link(ref.next(), prev->is_main());
  };

  if (!ref.is_main()) {
    for (;;) {
      SharedRef& m = ref.main();
      lock_moving(m);
      if (&ref.main() != &m) {
        m.meta.fetch_and(~RefMeta::kMoving, std::memory_order_acq_rel);
        continue;
      }
      unlink();
      ref.meta.store(0, std::memory_order_release);
      ref.set_link(nullptr, false);
      m.meta.fetch_and(~RefMeta::kMoving, std::memory_order_acq_rel);
      return;
    }
  }

  // Releasing the main reference: the next alias takes over and the header's
  // backlink is rewritten while the object is pinned locally.
  Scope s = deref(ref, worker);
  const std::uint64_t w = lock_moving(ref);
  SharedRef* heir = ref.next();
  unlink();
  heir->set_link(heir->next(), true);
  detail::store_word(mm_.host_ptr(s.page(), VirtAddr(s.addr().value - kHeaderSize)), detail::backlink(*heir, true));
  heir->meta.store(w & ~RefMeta::kOffload, std::memory_order_release);
  if (cfg_.mode == Mode::object_only) lru_.rename(&ref, heir);
  ref.meta.store(0, std::memory_order_release);
  ref.set_link(nullptr, false);
  s.exit();
}

template <class H>
void BasicRuntime<H>::update_references(RefCell& main, bool shared, VirtAddr new_addr, bool access) {
  if (shared) {
    auto& m = static_cast<SharedRef&>(main);
    for (SharedRef* n = m.next(); n && n != &m; n = n->next())
      n->meta.store(RefMeta::with_addr(n->load(), new_addr) & ~(RefMeta::kMoving | RefMeta::kOffload),
                    std::memory_order_release);
  }
  std::uint64_t w = RefMeta::with_addr(main.load(), new_addr) & ~RefMeta::kMoving;
  w = access ? (w | RefMeta::kAccess) : (w & ~RefMeta::kAccess);
  main.meta.store(w, std::memory_order_release);
}

template <class H>
void BasicRuntime<H>::wait_exclusive(PageDescriptor& page) {
  Backoff<H> backoff;
  while (page.exclusive() && page.where() != Residency::unmapped) backoff.pause();
}

template <class H>
void BasicRuntime<H>::touch(PageDescriptor& page, VirtAddr addr, std::size_t size, RefCell& main) {
  mm_.mark_cards(page, addr, size);
  if (!page.referenced.load(std::memory_order_relaxed)) page.referenced.store(true, std::memory_order_relaxed);
  if (!(main.load() & RefMeta::kAccess)) main.meta.fetch_or(RefMeta::kAccess, std::memory_order_acq_rel);
  if (page.paged_in.load(std::memory_order_acquire) &&
      page.mark_touched(static_cast<std::uint32_t>(addr.offset(mm_.page_size()))))
    store_.ledger().useful(size);
  if (cfg_.mode == Mode::object_only) lru_.touch(&main);
}

template <class H>
auto BasicRuntime<H>::enter(RefCell& own, RefCell& main, bool shared, std::size_t worker) -> Scope {
  Backoff<H> backoff;
  for (;;) {
    H::point(SyncPoint::barrier_read_meta);
    const std::uint64_t w = own.load();
    if (w == 0) throw Error(Errc::invalid_argument, "dereference of an empty reference");
    const VirtAddr addr = RefMeta::addr_of(w);
    PageDescriptor* page = mm_.table().find(addr);
    if (!page) throw Error(Errc::unmapped_address, "address " + std::to_string(addr.value));
    if (page->space == Space::huge) return enter_huge(own, *page, addr);
    if (RefMeta::busy(main.load())) {
      backoff.pause();
      continue;
    }

    const std::uint32_t v = page->derefcnt.fetch_add(1, std::memory_order_acq_rel);
    if (v & PageDescriptor::kExclusive) {
      Allocator::unpin(*page);
      wait_exclusive(*page);
      continue;
    }
    H::point(SyncPoint::barrier_after_pin);

    // The pin only protects the page the reference designated when it was
    // taken; revalidate before trusting the address.
    const std::uint64_t mw = main.load();
    if (RefMeta::addr_of(own.load()) != addr || RefMeta::busy(mw) || RefMeta::addr_of(mw) != addr) {
      Allocator::unpin(*page);
      backoff.pause();
      continue;
    }
    const Residency r = page->where();
    if (r == Residency::unmapped) {
      Allocator::unpin(*page);
      if (RefMeta::addr_of(own.load()) == addr)
        throw Error(Errc::unmapped_address, "address " + std::to_string(addr.value));
      continue;
    }
    H::point(SyncPoint::barrier_validated);

    if (r == Residency::remote) {
      if (page->path() == PathSelector::runtime) {
        std::optional<Scope> s;
        try {
          s = fetch_object(main, shared, *page, addr, mw, worker);
        } catch (...) {
          Allocator::unpin(*page);
          throw;
        }
        if (s) return std::move(*s);
        Allocator::unpin(*page);
        lost_races_.fetch_add(1, std::memory_order_relaxed);
        backoff.pause();
        continue;
      }
      try {
        page_in(*page);
      } catch (...) {
        Allocator::unpin(*page);
        throw;
      }
    }

    const std::size_t size = RefMeta::size_of(w);
    touch(*page, addr, size, main);
    log(EventKind::scope_enter, *page);
    return Scope(this, page, addr, size, mm_.host_ptr(*page, addr), 1);
  }
}

template <class H>
auto BasicRuntime<H>::enter_huge(RefCell& own, PageDescriptor& first, VirtAddr addr) -> Scope {
  if (first.huge_span == 0 || addr != mm_.table().base_of(first))
    throw Error(Errc::invalid_argument, "address is not the start of a huge object");
  const std::uint32_t span = first.huge_span;
  const std::size_t size = first.huge_size;
  std::vector<PageDescriptor*> pages(span);
  for (std::uint32_t i = 0; i < span; ++i) pages[i] = mm_.table().find_index(Space::huge, first.index + i);

  auto unpin_prefix = [&](std::uint32_t n) {
    for (std::uint32_t i = 0; i < n; ++i) Allocator::unpin(*pages[i]);
  };
  for (;;) {
    std::uint32_t pinned = 0;
    PageDescriptor* blocked = nullptr;
    for (; pinned < span; ++pinned) {
      const std::uint32_t v = pages[pinned]->derefcnt.fetch_add(1, std::memory_order_acq_rel);
      if (v & PageDescriptor::kExclusive) {
        Allocator::unpin(*pages[pinned]);
        blocked = pages[pinned];
        break;
      }
    }
    if (blocked) {
      unpin_prefix(pinned);
      wait_exclusive(*blocked);
      continue;
    }
    if (first.where() == Residency::unmapped || RefMeta::addr_of(own.load()) != addr) {
      unpin_prefix(span);
      throw Error(Errc::unmapped_address, "huge object released");
    }
    try {
      for (PageDescriptor* p : pages)
        if (p->where() == Residency::remote) page_in(*p);
    } catch (...) {
      unpin_prefix(span);
      throw;
    }
    const std::size_t ps = mm_.page_size();
    for (std::uint32_t i = 0; i < span; ++i) {
      PageDescriptor& p = *pages[i];
      const std::size_t n = std::min(ps, size - std::size_t{i} * ps);
      mm_.mark_cards(p, mm_.table().base_of(p), n);
      p.referenced.store(true, std::memory_order_relaxed);
      if (p.paged_in.load(std::memory_order_acquire) && p.mark_touched(0)) store_.ledger().useful(n);
      log(EventKind::scope_enter, p);
    }
    if (!(own.load() & RefMeta::kAccess)) own.meta.fetch_or(RefMeta::kAccess, std::memory_order_acq_rel);
    return Scope(this, &first, addr, size, mm_.host_ptr(first, addr), span);
  }
}

template <class H>
void BasicRuntime<H>::exit_scope(Scope& s) noexcept {
  H::point(SyncPoint::post_barrier);
  PageDescriptor* p = s.page_;
  for (std::uint32_t i = 0; i < s.span_; ++i) {
    PageDescriptor* q = i == 0 ? p : mm_.table().find_index(Space::huge, p->index + i);
    log(EventKind::scope_exit, *q);
    try {
      adjust_derefcnt(*q, -1);
    } catch (const Error&) {
      underflows_.fetch_add(1, std::memory_order_relaxed);
    }
  }
}

template <class H>
std::size_t BasicRuntime<H>::pinned_pages() const {
  std::size_t n = 0;
  for (Space s : {Space::normal, Space::huge, Space::offload}) {
    const std::uint64_t count = mm_.table().page_count(s);
    for (std::uint64_t i = 0; i < count; ++i) {
      const PageDescriptor* p = mm_.table().find_index(s, i);
      if (p && p->deref_count() != 0) ++n;
    }
  }
  return n;
}

template <class H>
AuditReport BasicRuntime<H>::audit_events() const {
  AuditReport r = events_ ? audit(events_->collect()) : AuditReport{};
  r.unbalanced_scopes += underflows_.load();
  return r;
}

template <class H>
void BasicDerefScope<H>::exit() noexcept {
  if (!rt_) return;
  rt_->exit_scope(*this);
  rt_ = nullptr;
}

template <class H>
template <class Fn>
void BasicDerefScope<H>::for_each_chunk(std::size_t offset, std::size_t len, Fn&& fn) const {
  if (!rt_) throw Error(Errc::invalid_argument, "scope is not active");
  if (offset > size_ || len > size_ - offset) throw Error(Errc::out_of_range, "access outside the object");
  if (span_ == 1) {
    fn(data_ + offset, std::size_t{0}, len);
    return;
  }
  auto& mm = rt_->mm_;
  const std::size_t ps = mm.page_size();
  std::size_t done = 0;
  while (done < len) {
    const std::size_t pos = offset + done;
    PageDescriptor& p = *mm.table().find_index(Space::huge, page_->index + pos / ps);
    const std::size_t n = std::min(len - done, ps - pos % ps);
    fn(mm.host_ptr(p, mm.table().base_of(p) + pos % ps), done, n);
    done += n;
  }
}

template <class H>
void BasicDerefScope<H>::read(std::size_t offset, std::span<std::byte> out) const {
  for_each_chunk(offset, out.size(), [&](std::byte* p, std::size_t at, std::size_t n) {
    std::memcpy(out.data() + at, p, n);
  });
}

template <class H>
void BasicDerefScope<H>::write(std::size_t offset, std::span<const std::byte> in) {
  for_each_chunk(offset, in.size(), [&](std::byte* p, std::size_t at, std::size_t n) {
    std::memcpy(p, in.data() + at, n);
  });
}

}  // namespace farpath
