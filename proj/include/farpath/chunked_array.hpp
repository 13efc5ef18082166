#pragma once

#include <atomic>
#include <cstddef>
#include <memory>

namespace farpath {

// Grow-only array with stable element addresses and lock-free lookup.
// Chunks are allocated on first touch and never moved or freed before the
// array itself.
template <class T, std::size_t ChunkBits = 12>
class ChunkedArray {
 public:
  static constexpr std::size_t chunk_size = std::size_t{1} << ChunkBits;

  explicit ChunkedArray(std::size_t max_chunks = std::size_t{1} << 14)
      : max_chunks_(max_chunks), chunks_(new std::atomic<T*>[max_chunks]) {
    for (std::size_t i = 0; i < max_chunks_; ++i) chunks_[i].store(nullptr, std::memory_order_relaxed);
  }

  ~ChunkedArray() {
    for (std::size_t i = 0; i < max_chunks_; ++i) delete[] chunks_[i].load(std::memory_order_relaxed);
  }

  ChunkedArray(const ChunkedArray&) = delete;
  ChunkedArray& operator=(const ChunkedArray&) = delete;

  std::size_t capacity() const noexcept { return max_chunks_ * chunk_size; }

  // Returns the element, allocating its chunk if needed. i < capacity().
  T& at(std::size_t i) {
    std::atomic<T*>& slot = chunks_[i >> ChunkBits];
    T* chunk = slot.load(std::memory_order_acquire);
    if (chunk == nullptr) {
      auto fresh = std::make_unique<T[]>(chunk_size);
      if (slot.compare_exchange_strong(chunk, fresh.get(), std::memory_order_acq_rel)) {
        chunk = fresh.release();
      }
    }
    return chunk[i & (chunk_size - 1)];
  }

  // nullptr when the chunk was never touched.
  T* find(std::size_t i) const noexcept {
    if ((i >> ChunkBits) >= max_chunks_) return nullptr;
    T* chunk = chunks_[i >> ChunkBits].load(std::memory_order_acquire);
    return chunk ? &chunk[i & (chunk_size - 1)] : nullptr;
  }

 private:
  std::size_t max_chunks_;
  std::unique_ptr<std::atomic<T*>[]> chunks_;
};

}  // namespace farpath
