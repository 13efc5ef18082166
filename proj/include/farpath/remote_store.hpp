#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "farpath/chunked_array.hpp"
#include "farpath/config.hpp"
#include "farpath/error.hpp"
#include "farpath/mem_model.hpp"

namespace farpath {

struct SwapSlot {
  std::uint64_t id = 0;
  // Set only for offload-space pages: the virtual address the page had locally.
  std::optional<VirtAddr> aligned_addr;

  explicit operator bool() const noexcept { return id != 0; }
};

struct LedgerSnapshot {
  std::uint64_t pages_in = 0;
  std::uint64_t pages_out = 0;
  std::uint64_t objects_in = 0;
  std::uint64_t objects_out = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::uint64_t useful_bytes = 0;
  std::uint64_t evict_work_units = 0;
  std::uint64_t offload_calls = 0;
  std::uint64_t result_bytes = 0;
  std::uint64_t simulated_ps = 0;

  // bytes_in / useful_bytes; 0 when nothing useful was fetched.
  double io_amplification() const noexcept {
    return useful_bytes ? static_cast<double>(bytes_in) / static_cast<double>(useful_bytes) : 0.0;
  }
  double evict_work_per_byte() const noexcept {
    return bytes_out ? static_cast<double>(evict_work_units) / static_cast<double>(bytes_out) : 0.0;
  }
  double simulated_seconds() const noexcept { return static_cast<double>(simulated_ps) * 1e-12; }

  LedgerSnapshot operator-(const LedgerSnapshot& o) const noexcept {
    return {pages_in - o.pages_in,         pages_out - o.pages_out,       objects_in - o.objects_in,
            objects_out - o.objects_out,   bytes_in - o.bytes_in,         bytes_out - o.bytes_out,
            useful_bytes - o.useful_bytes, evict_work_units - o.evict_work_units,
            offload_calls - o.offload_calls, result_bytes - o.result_bytes, simulated_ps - o.simulated_ps};
  }
  bool operator==(const LedgerSnapshot&) const = default;
};

// Monotone transfer counters. All updates are relaxed atomics; snapshots taken
// while workers run are per-counter consistent only.
class TransferLedger {
 public:
  void page_in(std::uint64_t bytes) noexcept { pages_in_++, bytes_in_ += bytes; }
  void page_out(std::uint64_t bytes) noexcept { pages_out_++, bytes_out_ += bytes; }
  void object_in(std::uint64_t bytes, bool useful) noexcept {
    objects_in_++, bytes_in_ += bytes;
    if (useful) useful_bytes_ += bytes;
  }
  void object_out(std::uint64_t bytes) noexcept { objects_out_++, bytes_out_ += bytes; }
  void useful(std::uint64_t bytes) noexcept { useful_bytes_ += bytes; }
  void evict_work(std::uint64_t units) noexcept { evict_work_units_ += units; }
  void offload_result(std::uint64_t bytes) noexcept { offload_calls_++, result_bytes_ += bytes, bytes_in_ += bytes; }
  void offload_local() noexcept { offload_calls_++; }
  void time(std::uint64_t ps) noexcept { simulated_ps_ += ps; }

  LedgerSnapshot snapshot() const noexcept {
    return {pages_in_.load(),     pages_out_.load(),    objects_in_.load(),       objects_out_.load(),
            bytes_in_.load(),     bytes_out_.load(),    useful_bytes_.load(),     evict_work_units_.load(),
            offload_calls_.load(), result_bytes_.load(), simulated_ps_.load()};
  }

 private:
  std::atomic<std::uint64_t> pages_in_{0}, pages_out_{0}, objects_in_{0}, objects_out_{0};
  std::atomic<std::uint64_t> bytes_in_{0}, bytes_out_{0}, useful_bytes_{0}, evict_work_units_{0};
  std::atomic<std::uint64_t> offload_calls_{0}, result_bytes_{0}, simulated_ps_{0};
};

// Far memory: page-sized swap slots with sub-page reads, plus the transfer
// ledger and latency accounting.
class RemoteStore {
 public:
  RemoteStore(std::size_t page_size, std::size_t capacity_pages, LatencyModel latency = {})
      : page_size_(page_size), capacity_(capacity_pages), latency_(latency) {}

  SwapSlot store_page(std::span<const std::byte> bytes, Space space, VirtAddr page_addr) {
    if (bytes.size() != page_size_) throw Error(Errc::invalid_argument, "payload length != page_size");
    auto [id, e] = claim();
    std::memcpy(e.data.get(), bytes.data(), page_size_);
    e.aligned = space == Space::offload ? std::optional<VirtAddr>(page_addr) : std::nullopt;
    e.state.store(kLive, std::memory_order_release);
    ledger_.page_out(page_size_);
    charge(page_size_);
    return {id, e.aligned};
  }

  // Fresh zeroed slot, filled object-by-object by write_object. No transfer.
  SwapSlot reserve(Space space, VirtAddr page_addr) {
    auto [id, e] = claim();
    std::memset(e.data.get(), 0, page_size_);
    e.aligned = space == Space::offload ? std::optional<VirtAddr>(page_addr) : std::nullopt;
    e.state.store(kLive, std::memory_order_release);
    return {id, e.aligned};
  }

  // Reads the whole page and releases the slot.
  void load_page(std::uint64_t id, std::span<std::byte> out) {
    if (out.size() != page_size_) throw Error(Errc::invalid_argument, "buffer length != page_size");
    Entry& e = entry(id);
    std::uint8_t expected = kLive;
    if (!e.state.compare_exchange_strong(expected, kBusy, std::memory_order_acq_rel))
      throw Error(Errc::dead_slot, "slot " + std::to_string(id));
    std::memcpy(out.data(), e.data.get(), page_size_);
    ledger_.page_in(page_size_);
    charge(page_size_);
    recycle(id, e);
  }

  std::vector<std::byte> load_page(const SwapSlot& slot) {
    std::vector<std::byte> out(page_size_);
    load_page(slot.id, out);
    return out;
  }

  // Sub-page read for the object path; the slot stays live.
  void load_object(std::uint64_t id, std::size_t offset, std::size_t size, std::span<std::byte> out) {
    read(id, offset, size, out);
    ledger_.object_in(size, true);
  }

  std::vector<std::byte> load_object(const SwapSlot& slot, std::size_t offset, std::size_t size) {
    std::vector<std::byte> out(size);
    load_object(slot.id, offset, size, out);
    return out;
  }

  // Object read on behalf of compaction: transferred but not useful to the application.
  void read_raw(std::uint64_t id, std::size_t offset, std::size_t size, std::span<std::byte> out) {
    read(id, offset, size, out);
    ledger_.object_in(size, false);
  }

  // Object-granularity egress into a reserved slot.
  void write_object(std::uint64_t id, std::size_t offset, std::span<const std::byte> bytes) {
    Entry& e = live_entry(id);
    if (offset > page_size_ || bytes.size() > page_size_ - offset)
      throw Error(Errc::out_of_range, "object write outside slot");
    std::memcpy(e.data.get() + offset, bytes.data(), bytes.size());
    ledger_.object_out(bytes.size());
    charge(bytes.size());
  }

  // Runs fn against the slot's bytes in place; only the result crosses the wire.
  template <class Fn>
  std::vector<std::byte> invoke(std::uint64_t id, Fn&& fn) {
    Entry& e = live_entry(id);
    std::vector<std::byte> result = fn(std::span<const std::byte>(e.data.get(), page_size_));
    ledger_.offload_result(result.size());
    charge(result.size());
    return result;
  }

  // Drops a slot whose contents are all garbage.
  void release(std::uint64_t id) {
    Entry& e = entry(id);
    std::uint8_t expected = kLive;
    if (!e.state.compare_exchange_strong(expected, kBusy, std::memory_order_acq_rel))
      throw Error(Errc::dead_slot, "slot " + std::to_string(id));
    recycle(id, e);
  }

  bool live(std::uint64_t id) const noexcept {
    const Entry* e = entries_.find(id);
    return id != 0 && e && e->state.load(std::memory_order_acquire) == kLive;
  }

  std::optional<VirtAddr> aligned_addr(std::uint64_t id) const { return const_cast<RemoteStore*>(this)->live_entry(id).aligned; }

  std::size_t page_size() const noexcept { return page_size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t live_slots() const noexcept { return live_.load(std::memory_order_relaxed); }
  std::size_t free_capacity() const noexcept {
    const std::size_t l = live_slots();
    return l >= capacity_ ? 0 : capacity_ - l;
  }

  TransferLedger& ledger() noexcept { return ledger_; }
  const TransferLedger& ledger() const noexcept { return ledger_; }
  const LatencyModel& latency() const noexcept { return latency_; }

 private:
  static constexpr std::uint8_t kFree = 0, kLive = 1, kBusy = 2;

  struct Entry {
    std::atomic<std::uint8_t> state{kFree};
    std::unique_ptr<std::byte[]> data;
    std::optional<VirtAddr> aligned;
  };

  std::pair<std::uint64_t, Entry&> claim() {
    std::uint64_t id;
    {
      std::lock_guard<std::mutex> g(mu_);
      if (live_.load(std::memory_order_relaxed) >= capacity_)
        throw Error(Errc::store_full, "remote capacity of " + std::to_string(capacity_) + " pages exhausted");
      if (!free_ids_.empty()) {
        id = free_ids_.back();
        free_ids_.pop_back();
      } else {
        id = ++next_id_;
      }
      live_.fetch_add(1, std::memory_order_relaxed);
    }
    Entry& e = entries_.at(id);
    if (!e.data) e.data = std::make_unique<std::byte[]>(page_size_);
    e.state.store(kBusy, std::memory_order_relaxed);
    return {id, e};
  }

  void recycle(std::uint64_t id, Entry& e) {
    e.aligned.reset();
    e.state.store(kFree, std::memory_order_release);
    std::lock_guard<std::mutex> g(mu_);
    free_ids_.push_back(id);
    live_.fetch_sub(1, std::memory_order_relaxed);
  }

  Entry& entry(std::uint64_t id) {
    Entry* e = id ? entries_.find(id) : nullptr;
    if (!e) throw Error(Errc::dead_slot, "slot " + std::to_string(id));
    return *e;
  }

  Entry& live_entry(std::uint64_t id) {
    Entry& e = entry(id);
    if (e.state.load(std::memory_order_acquire) != kLive) throw Error(Errc::dead_slot, "slot " + std::to_string(id));
    return e;
  }

  void read(std::uint64_t id, std::size_t offset, std::size_t size, std::span<std::byte> out) {
    Entry& e = live_entry(id);
    if (offset > page_size_ || size > page_size_ - offset)
      throw Error(Errc::out_of_range, "object [" + std::to_string(offset) + ", +" + std::to_string(size) + ") outside page");
    if (out.size() < size) throw Error(Errc::invalid_argument, "buffer too small");
    std::memcpy(out.data(), e.data.get() + offset, size);
    charge(size);
  }

  void charge(std::size_t bytes) {
    const double ns = latency_.per_op_ns + latency_.per_byte_ns * static_cast<double>(bytes);
    ledger_.time(static_cast<std::uint64_t>(ns * 1000.0));
    if (latency_.mode == LatencyMode::sleep) std::this_thread::sleep_for(std::chrono::nanoseconds(static_cast<long>(ns)));
  }

  std::size_t page_size_;
  std::size_t capacity_;
  LatencyModel latency_;
  TransferLedger ledger_;
  ChunkedArray<Entry, 10> entries_{std::size_t{1} << 12};
  std::mutex mu_;
  std::vector<std::uint64_t> free_ids_;
  std::uint64_t next_id_ = 0;
  std::atomic<std::size_t> live_{0};
};

}  // namespace farpath
