#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "farpath/chunked_array.hpp"
#include "farpath/config.hpp"
#include "farpath/error.hpp"
#include "farpath/mem_model.hpp"

namespace farpath {

enum class Generation : std::uint8_t { fresh, hot, cold };

struct ObjectRecord {
  std::uint32_t offset = 0;  // start of the allocated extent within the page
  std::uint32_t size = 0;    // extent length in bytes
  bool live = false;
};

// Allocation unit aligned with exactly one page. Objects are appended and never
// cross the end of the segment.
struct LogSegment {
  std::atomic<std::uint32_t> fill{0};
  std::atomic<std::uint32_t> live_bytes{0};
  std::atomic<bool> open{false};
  Generation generation = Generation::fresh;
  PageDescriptor* page = nullptr;

  std::mutex mu;
  std::vector<ObjectRecord> objects;  // sorted by offset

  std::vector<ObjectRecord> live_objects() {
    std::lock_guard<std::mutex> g(mu);
    std::vector<ObjectRecord> out;
    for (const auto& o : objects)
      if (o.live) out.push_back(o);
    return out;
  }
};

// (fill - live) / fill over the filled region; an empty segment has no
// garbage. Closing a segment pads fill to the page size, so closed segments
// are measured against the whole page.
inline double garbage_ratio(const LogSegment& seg) noexcept {
  const std::uint32_t fill = seg.fill.load(std::memory_order_acquire);
  if (fill == 0) return 0.0;
  const std::uint32_t live = seg.live_bytes.load(std::memory_order_acquire);
  return static_cast<double>(fill - std::min(fill, live)) / static_cast<double>(fill);
}

enum class Stream : std::uint8_t { app, fetch, hot, cold };
inline constexpr std::size_t kStreams = 4;

struct TlabId {
  std::size_t worker = 0;
  Stream stream = Stream::app;
  Space space = Space::normal;
};

struct Allocation {
  VirtAddr addr;
  PageDescriptor* page = nullptr;
  LogSegment* segment = nullptr;
};

// Log-structured allocator over page-aligned segments. alloc_pinned returns
// with the target page's deref count already raised so the page cannot be
// paged out or evacuated before the caller has initialized the object.
class Allocator {
 public:
  // Produces a free local frame, reclaiming if necessary; throws OutOfMemory.
  using FrameSource = std::function<std::uint32_t()>;

  Allocator(MemoryModel& mm, std::size_t max_workers)
      : mm_(mm), page_size_(mm.page_size()), tlabs_(max_workers * kStreams * 2) {
    frame_source_ = [this] {
      auto f = mm_.pool().try_acquire();
      if (!f) throw Error(Errc::out_of_memory, "local pool exhausted");
      return *f;
    };
  }

  void set_frame_source(FrameSource src) { frame_source_ = std::move(src); }

  std::size_t max_normal_size() const noexcept { return std::min<std::size_t>(page_size_ - 1, 4095); }

  Allocation alloc_pinned(std::size_t size, TlabId id) {
    if (size == 0 || size > max_normal_size())
      throw Error(Errc::invalid_argument, "normal allocation of " + std::to_string(size) + " bytes");
    Tlab& t = tlab(id);
    bool prepinned = false;
    for (;;) {
      if (LogSegment* seg = t.current) {
        PageDescriptor& p = *seg->page;
        const std::uint32_t fill = seg->fill.load(std::memory_order_relaxed);
        if (fill + size <= page_size_) {
          bool pinned = prepinned;
          if (!pinned) {
            const std::uint32_t v = p.derefcnt.fetch_add(1, std::memory_order_acq_rel);
            pinned = !(v & PageDescriptor::kExclusive) && p.where() == Residency::local;
            if (!pinned) p.derefcnt.fetch_sub(1, std::memory_order_acq_rel);
          }
          if (pinned) {
            const auto off = *bump(*seg, static_cast<std::uint32_t>(size));
            return {mm_.table().base_of(p) + off, &p, seg};
          }
        } else if (prepinned) {
          p.derefcnt.fetch_sub(1, std::memory_order_acq_rel);
        }
        close(*seg);
        t.current = nullptr;
        prepinned = false;
      }
      t.current = &new_segment(id.space, generation_of(id.stream));
      prepinned = true;
    }
  }

  VirtAddr alloc(std::size_t size, std::size_t worker) {
    Allocation a = alloc_pinned(size, {worker, Stream::app, Space::normal});
    unpin(*a.page);
    return a.addr;
  }

  static void unpin(PageDescriptor& p) noexcept { p.derefcnt.fetch_sub(1, std::memory_order_acq_rel); }

  // Contiguous pages in the huge space; paging is their only ingress path.
  VirtAddr alloc_huge(std::size_t size) {
    if (size <= max_normal_size()) throw Error(Errc::invalid_argument, "huge allocation below the normal limit");
    const std::uint64_t pages = (size + page_size_ - 1) / page_size_;
    const std::uint64_t first = mm_.table().reserve(Space::huge, pages);
    std::vector<PageDescriptor*> made;
    try {
      for (std::uint64_t i = 0; i < pages; ++i) {
        const std::uint32_t frame = frame_source_();
        PageDescriptor& d = init_local_page(Space::huge, first + i, frame);
        d.psf.store(PathSelector::paging, std::memory_order_relaxed);
        made.push_back(&d);
      }
    } catch (...) {
      for (PageDescriptor* d : made) {
        d->residency.store(Residency::unmapped, std::memory_order_release);
        mm_.pool().release(d->frame.load());
      }
      throw;
    }
    made.front()->huge_span = static_cast<std::uint32_t>(pages);
    made.front()->huge_size = size;
    for (PageDescriptor* d : made) {
      d->derefcnt.store(0, std::memory_order_release);
      d->residency.store(Residency::local, std::memory_order_release);
    }
    return mm_.table().base_of(*made.front());
  }

  void mark_dead(VirtAddr addr, std::size_t size) {
    PageDescriptor* p = mm_.table().find(addr);
    if (!p || p->space == Space::huge) throw Error(Errc::unmapped_address, "no segment at address");
    LogSegment& seg = segment(*p);
    const auto off = static_cast<std::uint32_t>(addr.offset(page_size_));
    std::lock_guard<std::mutex> g(seg.mu);
    auto it = std::lower_bound(seg.objects.begin(), seg.objects.end(), off,
                               [](const ObjectRecord& r, std::uint32_t o) { return r.offset < o; });
    if (it == seg.objects.end() || it->offset != off || it->size != size)
      throw Error(Errc::invalid_argument, "no allocation of that size at address");
    if (!it->live) throw Error(Errc::double_free, "object already dead");
    it->live = false;
    seg.live_bytes.fetch_sub(static_cast<std::uint32_t>(size), std::memory_order_acq_rel);
  }

  // Appends an extent; nullopt when it does not fit.
  std::optional<std::uint32_t> bump(LogSegment& seg, std::uint32_t size) {
    const std::uint32_t fill = seg.fill.load(std::memory_order_relaxed);
    if (fill + size > page_size_) return std::nullopt;
    {
      std::lock_guard<std::mutex> g(seg.mu);
      seg.objects.push_back({fill, size, true});
    }
    seg.live_bytes.fetch_add(size, std::memory_order_acq_rel);
    seg.fill.store(fill + size, std::memory_order_release);
    return fill;
  }

  // The unused tail becomes permanent padding and counts as garbage.
  void close(LogSegment& seg) noexcept {
    seg.fill.store(static_cast<std::uint32_t>(page_size_), std::memory_order_release);
    seg.open.store(false, std::memory_order_release);
  }

  void retire(TlabId id) {
    Tlab& t = tlab(id);
    if (t.current) close(*t.current);
    t.current = nullptr;
  }

  LogSegment& segment(const PageDescriptor& p) { return segments_[seg_space(p.space)].at(p.index); }
  LogSegment* find_segment(Space s, std::uint64_t index) { return segments_[seg_space(s)].find(index); }

  // Initializes segment bookkeeping for a page the caller is about to publish.
  LogSegment& open_segment(PageDescriptor& p, Generation gen) {
    LogSegment& s = segment(p);
    {
      std::lock_guard<std::mutex> g(s.mu);
      s.objects.clear();
    }
    s.fill.store(0, std::memory_order_relaxed);
    s.live_bytes.store(0, std::memory_order_relaxed);
    s.generation = gen;
    s.page = &p;
    s.open.store(true, std::memory_order_release);
    return s;
  }

  // Drops all bookkeeping of a segment whose page has been freed.
  void discard(LogSegment& s) {
    std::lock_guard<std::mutex> g(s.mu);
    std::vector<ObjectRecord>().swap(s.objects);
    s.fill.store(0, std::memory_order_relaxed);
    s.live_bytes.store(0, std::memory_order_relaxed);
    s.open.store(false, std::memory_order_release);
  }

  // Fresh local page with a pinned deref count of one and an open segment.
  LogSegment& new_segment(Space space, Generation gen) {
    const std::uint64_t index = mm_.table().reserve(space);
    const std::uint32_t frame = frame_source_();
    PageDescriptor& d = init_local_page(space, index, frame);
    d.psf.store(space == Space::offload ? PathSelector::runtime : initial_psf_, std::memory_order_relaxed);
    LogSegment& s = open_segment(d, gen);
    d.residency.store(Residency::local, std::memory_order_release);
    return s;
  }

  void set_initial_psf(PathSelector p) noexcept { initial_psf_ = p; }
  double garbage_ratio(const LogSegment& s) const noexcept { return farpath::garbage_ratio(s); }
  std::size_t page_size() const noexcept { return page_size_; }

 private:
  struct Tlab {
    LogSegment* current = nullptr;
  };

  static constexpr std::size_t seg_space(Space s) noexcept { return s == Space::offload ? 1 : 0; }

  static Generation generation_of(Stream s) noexcept {
    switch (s) {
      case Stream::hot: return Generation::hot;
      case Stream::cold: return Generation::cold;
      default: return Generation::fresh;
    }
  }

  Tlab& tlab(TlabId id) {
    const std::size_t i = (id.worker * kStreams + static_cast<std::size_t>(id.stream)) * 2 + (id.space == Space::offload);
    if (i >= tlabs_.size()) throw Error(Errc::invalid_argument, "worker id out of range");
    return tlabs_[i];
  }

  PageDescriptor& init_local_page(Space space, std::uint64_t index, std::uint32_t frame) {
    PageDescriptor& d = mm_.table().init_page(space, index);
    std::memset(mm_.pool().frame_data(frame), 0, page_size_);
    d.frame.store(frame, std::memory_order_relaxed);
    d.slot.store(0, std::memory_order_relaxed);
    d.epoch.store(0, std::memory_order_relaxed);
    d.forced_paging.store(false, std::memory_order_relaxed);
    d.paged_in.store(false, std::memory_order_relaxed);
    d.referenced.store(true, std::memory_order_relaxed);
    d.derefcnt.store(1, std::memory_order_relaxed);
    mm_.pool().bind(frame, d.vpn);
    return d;
  }

  MemoryModel& mm_;
  std::size_t page_size_;
  FrameSource frame_source_;
  PathSelector initial_psf_ = PathSelector::runtime;
  std::vector<Tlab> tlabs_;
  ChunkedArray<LogSegment, 10> segments_[2]{ChunkedArray<LogSegment, 10>(std::size_t{1} << 12),
                                            ChunkedArray<LogSegment, 10>(std::size_t{1} << 12)};
};

}  // namespace farpath
