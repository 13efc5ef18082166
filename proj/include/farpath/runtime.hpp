#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "farpath/allocator.hpp"
#include "farpath/audit.hpp"
#include "farpath/config.hpp"
#include "farpath/error.hpp"
#include "farpath/mem_model.hpp"
#include "farpath/ref_meta.hpp"
#include "farpath/remote_store.hpp"
#include "farpath/sync.hpp"

namespace farpath {

// Every normal object is preceded by a header holding the address of its main
// reference; the low bit is set when that reference is a SharedRef.
inline constexpr std::size_t kHeaderSize = 8;

using RemotableBody = std::function<std::vector<std::byte>(std::span<const std::byte>)>;

struct EvacuationReport {
  std::uint64_t segments_freed = 0;
  std::uint64_t objects_moved = 0;
  std::uint64_t hot_moved = 0;
  std::uint64_t cold_moved = 0;
  std::uint64_t skipped_busy = 0;

  EvacuationReport& operator+=(const EvacuationReport& o) noexcept {
    segments_freed += o.segments_freed;
    objects_moved += o.objects_moved;
    hot_moved += o.hot_moved;
    cold_moved += o.cold_moved;
    skipped_busy += o.skipped_busy;
    return *this;
  }
  bool operator==(const EvacuationReport&) const = default;
};

struct RuntimeStats {
  std::uint64_t pageout_flips = 0;  // runtime -> paging decided at page-out
  std::uint64_t forced_flips = 0;   // runtime -> paging under pin pressure
  std::uint64_t paging_to_runtime = 0;
  std::uint64_t underflows = 0;
  std::uint64_t lost_races = 0;
  std::uint64_t fetches = 0;
  std::uint64_t objects_evicted = 0;
  std::uint64_t evacuation_cycles = 0;
  std::uint64_t segments_freed = 0;

  std::uint64_t runtime_to_paging_flips() const noexcept { return pageout_flips + forced_flips; }
};

// Object-granularity LRU used by the object-only baseline. Every list
// operation is one unit of eviction work.
class ObjectLru {
 public:
  explicit ObjectLru(TransferLedger& ledger) : ledger_(ledger) {}

  void touch(RefCell* r) {
    std::lock_guard<std::mutex> g(mu_);
    auto it = index_.find(r);
    if (it == index_.end()) {
      list_.push_front(r);
      index_.emplace(r, list_.begin());
    } else if (it->second != list_.begin()) {
      list_.splice(list_.begin(), list_, it->second);
    }
    ledger_.evict_work(1);
  }

  RefCell* pop_coldest() {
    std::lock_guard<std::mutex> g(mu_);
    if (list_.empty()) return nullptr;
    RefCell* r = list_.back();
    list_.pop_back();
    index_.erase(r);
    ledger_.evict_work(1);
    return r;
  }

  void erase(RefCell* r) {
    std::lock_guard<std::mutex> g(mu_);
    auto it = index_.find(r);
    if (it == index_.end()) return;
    list_.erase(it->second);
    index_.erase(it);
    ledger_.evict_work(1);
  }

  void rename(RefCell* from, RefCell* to) {
    std::lock_guard<std::mutex> g(mu_);
    auto it = index_.find(from);
    if (it == index_.end()) return;
    *it->second = to;
    index_.emplace(to, it->second);
    index_.erase(it);
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> g(mu_);
    return list_.size();
  }

 private:
  mutable std::mutex mu_;
  std::list<RefCell*> list_;
  std::unordered_map<RefCell*, std::list<RefCell*>::iterator> index_;
  TransferLedger& ledger_;
};

template <class Hooks>
class BasicRuntime;

// Region during which an object's direct address is usable. Holds one deref
// count on every page the object occupies.
template <class Hooks>
class BasicDerefScope {
 public:
  BasicDerefScope() = default;
  BasicDerefScope(const BasicDerefScope&) = delete;
  BasicDerefScope& operator=(const BasicDerefScope&) = delete;
  BasicDerefScope(BasicDerefScope&& o) noexcept { steal(o); }
  BasicDerefScope& operator=(BasicDerefScope&& o) noexcept {
    if (this != &o) {
      exit();
      steal(o);
    }
    return *this;
  }
  ~BasicDerefScope() { exit(); }

  bool active() const noexcept { return rt_ != nullptr; }
  VirtAddr addr() const noexcept { return addr_; }
  std::size_t size() const noexcept { return size_; }
  PageDescriptor& page() const noexcept { return *page_; }
  std::uint32_t page_span() const noexcept { return span_; }

  // Contiguous bytes; only for objects on a single page.
  std::span<std::byte> bytes() const {
    if (span_ != 1) throw Error(Errc::invalid_argument, "huge object bytes are not contiguous");
    return {data_, size_};
  }

  void read(std::size_t offset, std::span<std::byte> out) const;
  void write(std::size_t offset, std::span<const std::byte> in);

  void exit() noexcept;

 private:
  friend class BasicRuntime<Hooks>;

  BasicDerefScope(BasicRuntime<Hooks>* rt, PageDescriptor* page, VirtAddr addr, std::size_t size, std::byte* data,
                  std::uint32_t span)
      : rt_(rt), page_(page), addr_(addr), size_(size), data_(data), span_(span) {}

  void steal(BasicDerefScope& o) noexcept {
    rt_ = std::exchange(o.rt_, nullptr);
    page_ = o.page_;
    addr_ = o.addr_;
    size_ = o.size_;
    data_ = o.data_;
    span_ = o.span_;
  }

  template <class Fn>
  void for_each_chunk(std::size_t offset, std::size_t len, Fn&& fn) const;

  BasicRuntime<Hooks>* rt_ = nullptr;
  PageDescriptor* page_ = nullptr;
  VirtAddr addr_;
  std::size_t size_ = 0;
  std::byte* data_ = nullptr;
  std::uint32_t span_ = 1;
};

// Hybrid far-memory data plane: every remote access goes through a barrier
// that picks the paging path or the object path from the page's selector.
template <class Hooks = NoHooks>
class BasicRuntime {
 public:
  using Scope = BasicDerefScope<Hooks>;

  explicit BasicRuntime(const Config& cfg);
  ~BasicRuntime() { stop_background(); }
  BasicRuntime(const BasicRuntime&) = delete;
  BasicRuntime& operator=(const BasicRuntime&) = delete;

  const Config& config() const noexcept { return cfg_; }
  MemoryModel& memory() noexcept { return mm_; }
  const MemoryModel& memory() const noexcept { return mm_; }
  RemoteStore& store() noexcept { return store_; }
  const RemoteStore& store() const noexcept { return store_; }
  Allocator& allocator() noexcept { return alloc_; }
  EventLog* events() noexcept { return events_.get(); }
  LedgerSnapshot ledger() const noexcept { return store_.ledger().snapshot(); }
  RuntimeStats stats() const noexcept;

  // Worker ids reserved for the evacuator and for reclaim-time compaction.
  std::size_t evacuation_worker() const noexcept { return cfg_.max_workers; }
  std::size_t max_object_size() const noexcept { return alloc_.max_normal_size() - kHeaderSize; }

  // Object lifecycle. Sizes above max_object_size() go to the huge space.
  VirtAddr allocate(UniqueRef& ref, std::size_t size, std::size_t worker, std::span<const std::byte> init = {},
                    Space space = Space::normal);
  VirtAddr allocate(SharedRef& ref, std::size_t size, std::size_t worker, std::span<const std::byte> init = {});
  void alias(SharedRef& from, SharedRef& to);
  // Gives the object a fresh home of new_size bytes; the old copy becomes garbage.
  VirtAddr reassign(UniqueRef& ref, std::size_t new_size, std::size_t worker, std::span<const std::byte> init = {});
  void release(UniqueRef& ref);
  void release(SharedRef& ref, std::size_t worker = 0);

  // Barriers.
  Scope deref(UniqueRef& ref, std::size_t worker = 0) { return enter(ref, ref, false, worker); }
  Scope deref(SharedRef& ref, std::size_t worker = 0) { return enter(ref, ref.main(), true, worker); }
  void update_references(RefCell& main, bool shared, VirtAddr new_addr, bool access);

  // Paging path.
  void page_in(PageDescriptor& page);  // caller holds a deref count on the page
  std::vector<PageDescriptor*> select_victims(std::size_t n);
  SwapSlot page_out(PageDescriptor& page);  // caller holds the page exclusively
  bool try_page_out(PageDescriptor& page);
  std::size_t relieve_pin_pressure();
  std::size_t reclaim(std::size_t n);
  double pinned_fraction() const;
  double psf_paging_fraction() const;

  // Evacuator.
  EvacuationReport evacuation_cycle(double garbage_threshold);
  EvacuationReport evacuation_cycle() { return evacuation_cycle(cfg_.garbage_threshold); }
  void evacuate_segment(LogSegment& seg, EvacuationReport* report = nullptr);
  bool evacuation_due() const noexcept {
    return static_cast<double>(mm_.pool().free_count()) <
           cfg_.evac_free_watermark * static_cast<double>(mm_.pool().capacity());
  }

  // Offload.
  void register_remotable(std::string name, RemotableBody body);
  std::vector<std::byte> offload_invoke(RefCell& main, std::string_view name);

  // Background reclaimer and evacuator.
  void start_background();
  void stop_background();

  AuditReport audit_events() const;
  // Pages whose deref count is nonzero; zero once every scope has exited.
  std::size_t pinned_pages() const;

 private:
  friend class BasicDerefScope<Hooks>;

  struct Outbound {
    LogSegment* seg[2] = {nullptr, nullptr};  // normal, offload
  };
  enum class Dest : std::uint8_t { hot, cold, remote };

  Scope enter(RefCell& own, RefCell& main, bool shared, std::size_t worker);
  Scope enter_huge(RefCell& own, PageDescriptor& first, VirtAddr addr);
  std::optional<Scope> fetch_object(RefCell& main, bool shared, PageDescriptor& page, VirtAddr addr,
                                    std::uint64_t main_word, std::size_t worker);
  void exit_scope(Scope& s) noexcept;
  void touch(PageDescriptor& page, VirtAddr addr, std::size_t size, RefCell& main);
  void wait_exclusive(PageDescriptor& page);
  std::uint64_t lock_moving(RefCell& ref);

  std::uint32_t acquire_frame();
  std::size_t reclaim_pages(std::size_t n);
  std::size_t reclaim_objects(std::size_t n);
  PathSelector choose_path(const PageDescriptor& page, double car) const noexcept;
  void set_psf(PageDescriptor& page, PathSelector p, PsfOrigin origin);

  enum class EvictResult : std::uint8_t { evicted, freed_page, busy, gone };
  EvictResult evict_object(RefCell& main, PageDescriptor*& source);
  VirtAddr egress_write(Outbound& out, Space space, std::span<const std::byte> raw);
  LogSegment& new_remote_segment(Space space);
  bool relocate(LogSegment& seg, bool remote_source, bool remote_fallback, std::size_t worker,
                const std::function<Dest(bool hot)>& pick, Outbound& out, EvacuationReport& report, EventKind kind);
  void evacuate_locked(LogSegment& seg, EvacuationReport& report);
  void compact_remote(double threshold, EvacuationReport& report);
  void free_local_page(PageDescriptor& page);  // page held exclusively
  void maybe_free_local(PageDescriptor& page);
  void maybe_free_remote(PageDescriptor& page);
  void release_huge(PageDescriptor& first);

  void log(EventKind kind, const PageDescriptor& page, std::uint8_t aux = 0) {
    if (events_) events_->record(kind, page, page.epoch.load(std::memory_order_relaxed), aux);
  }
  void log(EventKind kind, const PageDescriptor& page, std::uint32_t epoch, std::uint8_t aux) {
    if (events_) events_->record(kind, page, epoch, aux);
  }

  bool reclaiming() const noexcept { return reclaiming_owner() == this; }
  static const void*& reclaiming_owner() noexcept {
    thread_local const void* owner = nullptr;
    return owner;
  }

  void background_reclaim_loop();
  void background_evacuate_loop();

  Config cfg_;
  MemoryModel mm_;
  RemoteStore store_;
  Allocator alloc_;
  std::unique_ptr<EventLog> events_;
  ObjectLru lru_{store_.ledger()};

  SpinLock<Hooks> reclaim_lock_;
  SpinLock<Hooks> clock_lock_;
  std::size_t hand_ = 0;
  std::mutex evac_mu_;
  Outbound egress_;      // guarded by reclaim_lock_
  Outbound evac_out_;    // guarded by evac_mu_

  std::mutex fn_mu_;
  std::unordered_map<std::string, RemotableBody> functions_;

  std::atomic<std::uint64_t> pageout_flips_{0}, forced_flips_{0}, paging_to_runtime_{0}, underflows_{0},
      lost_races_{0}, fetches_{0}, objects_evicted_{0}, evac_cycles_{0}, segments_freed_{0};

  std::mutex bg_mu_;
  std::condition_variable bg_cv_;
  std::atomic<bool> bg_stop_{false};
  std::thread reclaimer_, evacuator_;
};

using Runtime = BasicRuntime<NoHooks>;
using DerefScope = BasicDerefScope<NoHooks>;

}  // namespace farpath

#include "farpath/detail/barrier.hpp"
#include "farpath/detail/paging.hpp"
#include "farpath/detail/runtime_path.hpp"
#include "farpath/detail/evacuator.hpp"
#include "farpath/detail/offload.hpp"
