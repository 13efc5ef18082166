#pragma once

#include <atomic>
#include <cstdint>
#include <thread>

namespace farpath {

// Interleaving points inside the synchronization protocol. The default hooks
// compile to nothing; a model checker substitutes hooks that park the calling
// thread so that every ordering of these points can be explored.
enum class SyncPoint : std::uint8_t {
  barrier_read_meta,
  barrier_after_pin,
  barrier_validated,
  barrier_wait,
  fetch_claimed,
  fetch_copied,
  post_barrier,
  evict_claimed,
  evict_stored,
  evac_claimed,
  evac_object_moved,
  page_in_locked,
  lock_spin,
};

struct NoHooks {
  static constexpr bool enabled = false;
  static void point(SyncPoint) noexcept {}
};

// Spin-then-yield waiting. Single-core hosts make pure spinning useless, so the
// spin budget is short.
template <class Hooks>
class Backoff {
 public:
  void pause() noexcept {
    Hooks::point(SyncPoint::barrier_wait);
    if (spins_ < 16) {
      ++spins_;
      for (int i = 0; i < (1 << (spins_ / 4)); ++i) std::atomic_signal_fence(std::memory_order_seq_cst);
    } else {
      std::this_thread::yield();
    }
  }

 private:
  int spins_ = 0;
};

template <class Hooks>
class SpinLock {
 public:
  void lock() noexcept {
    Backoff<Hooks> backoff;
    for (;;) {
      if (!flag_.exchange(true, std::memory_order_acquire)) return;
      while (flag_.load(std::memory_order_relaxed)) {
        Hooks::point(SyncPoint::lock_spin);
        backoff.pause();
      }
    }
  }
  bool try_lock() noexcept {
    return !flag_.load(std::memory_order_relaxed) && !flag_.exchange(true, std::memory_order_acquire);
  }
  void unlock() noexcept { flag_.store(false, std::memory_order_release); }

 private:
  std::atomic<bool> flag_{false};
};

}  // namespace farpath
