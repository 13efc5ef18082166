#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "farpath/mem_model.hpp"

namespace farpath {

enum class EventKind : std::uint8_t {
  scope_enter,     // validated pin taken; scope usable
  scope_exit,      // scope about to drop its pin
  page_out,        // epoch = the remote epoch just started; psf = selector for it
  page_in,         // epoch = the remote epoch being ended
  object_fetch,    // object-granularity ingress from a remote page
  remote_create,   // page born remote (object egress target)
  evac_move,       // evacuator moved an object off the page
  object_evict,    // object egress moved an object off the page
  psf_set,         // aux = origin
  segment_free,
  offload_begin,
  offload_end,
};

enum class PsfOrigin : std::uint8_t { page_out, relieve, other };

struct Event {
  std::uint64_t seq = 0;
  std::uint64_t vpn = 0;
  std::uint32_t epoch = 0;
  EventKind kind = EventKind::scope_enter;
  PathSelector psf = PathSelector::runtime;
  Space space = Space::normal;
  std::uint8_t aux = 0;
};

// Append-only event log with per-thread buffers and a global sequence.
class EventLog {
 public:
  EventLog() : id_(next_id().fetch_add(1) + 1) {}
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void record(EventKind kind, const PageDescriptor& page, std::uint32_t epoch, std::uint8_t aux = 0) {
    Event e;
    e.seq = seq_.fetch_add(1, std::memory_order_acq_rel);
    e.vpn = page.vpn;
    e.epoch = epoch;
    e.kind = kind;
    e.psf = page.psf.load(std::memory_order_relaxed);
    e.space = page.space;
    e.aux = aux;
    local().push_back(e);
  }

  std::vector<Event> collect() const {
    std::vector<Event> out;
    std::lock_guard<std::mutex> g(mu_);
    std::size_t n = 0;
    for (const auto& b : buffers_) n += b->size();
    out.reserve(n);
    for (const auto& b : buffers_) out.insert(out.end(), b->begin(), b->end());
    std::sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.seq < b.seq; });
    return out;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> g(mu_);
    std::size_t n = 0;
    for (const auto& b : buffers_) n += b->size();
    return n;
  }

 private:
  using Buffer = std::vector<Event>;

  static std::atomic<std::uint64_t>& next_id() {
    static std::atomic<std::uint64_t> id{0};
    return id;
  }

  Buffer& local() {
    struct Cache {
      std::uint64_t owner = 0;
      Buffer* buf = nullptr;
    };
    thread_local Cache cache;
    if (cache.owner != id_) {
      std::lock_guard<std::mutex> g(mu_);
      buffers_.push_back(std::make_unique<Buffer>());
      buffers_.back()->reserve(1 << 12);
      cache = {id_, buffers_.back().get()};
    }
    return *cache.buf;
  }

  std::uint64_t id_;
  std::atomic<std::uint64_t> seq_{1};
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<Buffer>> buffers_;
};

struct AuditReport {
  std::uint64_t events = 0;
  std::uint64_t path_mixing = 0;         // object-in vs page-in within one remote epoch
  std::uint64_t path_mismatch = 0;       // ingress path disagrees with the selector fixed at page-out
  std::uint64_t pageout_while_pinned = 0;
  std::uint64_t move_while_pinned = 0;
  std::uint64_t psf_bad_origin = 0;
  std::uint64_t psf_bad_space = 0;
  std::uint64_t unbalanced_scopes = 0;   // exits without enters, or scopes left open
  std::uint64_t fetch_during_offload = 0;

  std::uint64_t invariant1() const noexcept { return path_mixing + path_mismatch; }
  std::uint64_t invariant2() const noexcept { return pageout_while_pinned; }
  std::uint64_t invariant3() const noexcept { return move_while_pinned; }
  std::uint64_t violations() const noexcept {
    return invariant1() + invariant2() + invariant3() + psf_bad_origin + psf_bad_space + unbalanced_scopes +
           fetch_during_offload;
  }
  bool ok() const noexcept { return violations() == 0; }

  std::string summary() const {
    return "events=" + std::to_string(events) + " inv1=" + std::to_string(invariant1()) +
           " inv2=" + std::to_string(invariant2()) + " inv3=" + std::to_string(invariant3()) +
           " psf_origin=" + std::to_string(psf_bad_origin) + " psf_space=" + std::to_string(psf_bad_space) +
           " unbalanced=" + std::to_string(unbalanced_scopes) +
           " offload=" + std::to_string(fetch_during_offload);
  }
};

// Replays a sequence-ordered log and checks:
//   - every remote epoch is served by a single ingress path, the one fixed at its page-out;
//   - no page-out and no object move happens on a page with an open scope;
//   - selectors change only at page-out or under pin pressure, and the huge and
//     offload spaces keep their fixed paths;
//   - every scope is closed exactly once.
inline AuditReport audit(const std::vector<Event>& events) {
  struct PageState {
    std::int64_t open_scopes = 0;
    std::uint32_t epoch = 0;
    bool has_epoch = false;
    PathSelector epoch_psf = PathSelector::runtime;
    bool paged = false;
    bool fetched = false;
    bool offloading = false;
  };
  AuditReport r;
  r.events = events.size();
  std::unordered_map<std::uint64_t, PageState> pages;
  pages.reserve(1024);

  auto ingress = [&](PageState& s, const Event& e, bool by_page) {
    if (!s.has_epoch || s.epoch != e.epoch) {
      // A remote epoch nobody announced: the page cannot be remote.
      r.path_mismatch++;
      return;
    }
    if (by_page) {
      if (s.fetched) r.path_mixing++;
      if (s.epoch_psf != PathSelector::paging) r.path_mismatch++;
      s.paged = true;
    } else {
      if (s.paged) r.path_mixing++;
      if (s.epoch_psf != PathSelector::runtime) r.path_mismatch++;
      if (s.offloading) r.fetch_during_offload++;
      s.fetched = true;
    }
  };

  for (const Event& e : events) {
    PageState& s = pages[e.vpn];
    switch (e.kind) {
      case EventKind::scope_enter: s.open_scopes++; break;
      case EventKind::scope_exit:
        if (--s.open_scopes < 0) {
          r.unbalanced_scopes++;
          s.open_scopes = 0;
        }
        break;
      case EventKind::page_out:
        if (s.open_scopes > 0) r.pageout_while_pinned++;
        if ((e.space == Space::huge && e.psf != PathSelector::paging) ||
            (e.space == Space::offload && e.psf != PathSelector::runtime))
          r.psf_bad_space++;
        [[fallthrough]];
      case EventKind::remote_create:
        s.epoch = e.epoch;
        s.has_epoch = true;
        s.epoch_psf = e.psf;
        s.paged = s.fetched = false;
        break;
      case EventKind::page_in: ingress(s, e, true); break;
      case EventKind::object_fetch: ingress(s, e, false); break;
      case EventKind::evac_move:
      case EventKind::object_evict:
        if (s.open_scopes > 0) r.move_while_pinned++;
        break;
      case EventKind::psf_set:
        if (e.aux != static_cast<std::uint8_t>(PsfOrigin::page_out) &&
            e.aux != static_cast<std::uint8_t>(PsfOrigin::relieve))
          r.psf_bad_origin++;
        break;
      case EventKind::segment_free:
        if (s.open_scopes > 0) r.move_while_pinned++;
        break;
      case EventKind::offload_begin: s.offloading = true; break;
      case EventKind::offload_end: s.offloading = false; break;
    }
  }
  for (const auto& [vpn, s] : pages)
    if (s.open_scopes != 0) r.unbalanced_scopes++;
  return r;
}

}  // namespace farpath
