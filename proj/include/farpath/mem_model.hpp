#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "farpath/chunked_array.hpp"
#include "farpath/config.hpp"
#include "farpath/error.hpp"

namespace farpath {

inline constexpr unsigned kAddrBits = 47;
inline constexpr std::uint64_t kAddrLimit = std::uint64_t{1} << kAddrBits;

struct VirtAddr {
  std::uint64_t value = 0;

  constexpr VirtAddr() = default;
  constexpr explicit VirtAddr(std::uint64_t v) : value(v) {}

  constexpr bool valid() const noexcept { return value < kAddrLimit; }
  constexpr std::uint64_t page(std::size_t page_size) const noexcept { return value / page_size; }
  constexpr std::uint64_t offset(std::size_t page_size) const noexcept { return value % page_size; }
  constexpr VirtAddr operator+(std::uint64_t d) const noexcept { return VirtAddr(value + d); }
  constexpr explicit operator bool() const noexcept { return value != 0; }
  friend constexpr auto operator<=>(VirtAddr, VirtAddr) = default;
};

enum class Residency : std::uint8_t { unmapped, local, remote };
enum class Space : std::uint8_t { normal, huge, offload, metadata };
enum class PathSelector : std::uint8_t { runtime, paging };

constexpr std::string_view to_string(PathSelector p) noexcept {
  return p == PathSelector::paging ? "paging" : "runtime";
}

// Each data space owns a 2^44-byte virtual range; the metadata space lives on
// the host side (card tables) and has no virtual range.
inline constexpr unsigned kSpaceShift = 44;
inline constexpr std::size_t kDataSpaces = 3;

constexpr std::uint64_t space_base(Space s) noexcept {
  return (static_cast<std::uint64_t>(s) + 1) << kSpaceShift;
}

constexpr std::optional<Space> space_of(VirtAddr a) noexcept {
  const std::uint64_t k = a.value >> kSpaceShift;
  if (k < 1 || k > kDataSpaces) return std::nullopt;
  return static_cast<Space>(k - 1);
}

// One bit per card; views words owned by the page table's metadata space.
class CardAccessTable {
 public:
  CardAccessTable() = default;
  CardAccessTable(std::atomic<std::uint64_t>* words, std::uint32_t bits) : words_(words), bits_(bits) {}

  std::uint32_t bit_count() const noexcept { return bits_; }
  std::size_t storage_bytes() const noexcept { return (bits_ + 7) / 8; }
  std::uint32_t word_count() const noexcept { return (bits_ + 63) / 64; }

  bool test(std::uint32_t card) const noexcept {
    return (words_[card / 64].load(std::memory_order_relaxed) >> (card % 64)) & 1u;
  }

  // Sets cards [first, last], inclusive. Words already covering the range are
  // not written, keeping hot cards free of cache-line traffic.
  void set_range(std::uint32_t first, std::uint32_t last) noexcept {
    for (std::uint32_t w = first / 64; w <= last / 64; ++w) {
      const std::uint32_t lo = std::max(first, w * 64) - w * 64;
      const std::uint32_t hi = std::min(last, w * 64 + 63) - w * 64;
      const std::uint64_t mask = (hi - lo == 63) ? ~std::uint64_t{0} : (((std::uint64_t{1} << (hi - lo + 1)) - 1) << lo);
      if ((words_[w].load(std::memory_order_relaxed) & mask) != mask)
        words_[w].fetch_or(mask, std::memory_order_relaxed);
    }
  }

  std::uint32_t popcount() const noexcept {
    std::uint32_t n = 0;
    for (std::uint32_t w = 0; w < word_count(); ++w)
      n += static_cast<std::uint32_t>(std::popcount(words_[w].load(std::memory_order_relaxed)));
    return n;
  }

  void clear() noexcept {
    for (std::uint32_t w = 0; w < word_count(); ++w) words_[w].store(0, std::memory_order_relaxed);
  }

  std::vector<std::uint64_t> snapshot() const {
    std::vector<std::uint64_t> out(word_count());
    for (std::uint32_t w = 0; w < word_count(); ++w) out[w] = words_[w].load(std::memory_order_relaxed);
    return out;
  }

 private:
  std::atomic<std::uint64_t>* words_ = nullptr;
  std::uint32_t bits_ = 0;
};

// Card access rate: fraction of cards touched since allocation or last page-in.
inline double compute_car(const CardAccessTable& cat) noexcept {
  if (cat.bit_count() == 0) return 0.0;
  return static_cast<double>(cat.popcount()) / static_cast<double>(cat.bit_count());
}

inline constexpr std::uint32_t kNoFrame = ~std::uint32_t{0};

struct PageDescriptor {
  // Low 31 bits count active dereference scopes. The top bit marks the page as
  // held exclusively by a page-out, an evacuation, or a free; it can only be
  // installed over a zero count.
  static constexpr std::uint32_t kExclusive = std::uint32_t{1} << 31;
  static constexpr std::uint32_t kCountMask = kExclusive - 1;

  std::atomic<std::uint32_t> derefcnt{0};
  std::atomic<Residency> residency{Residency::unmapped};
  std::atomic<PathSelector> psf{PathSelector::runtime};
  std::atomic<bool> referenced{false};     // CLOCK second-chance bit
  std::atomic<bool> forced_paging{false};  // set under pin pressure, consumed by the next page-out
  std::atomic<bool> paged_in{false};       // current residency epoch began with a page-in
  std::atomic<bool> transit{false};        // page-in in progress
  std::atomic<std::uint32_t> frame{kNoFrame};
  std::atomic<std::uint64_t> slot{0};
  std::atomic<std::uint32_t> epoch{0};

  Space space = Space::normal;
  std::uint64_t vpn = 0;
  std::uint64_t index = 0;      // position within its space
  std::uint32_t huge_span = 0;  // on the first page of a huge allocation: its page count
  std::uint64_t huge_size = 0;

  CardAccessTable cat;
  // Object-start bitmap at 8-byte granularity, used only to attribute useful
  // bytes to paged-in epochs.
  std::atomic<std::uint64_t>* touched = nullptr;
  std::uint32_t touched_words = 0;

  std::uint32_t deref_count() const noexcept { return derefcnt.load(std::memory_order_acquire) & kCountMask; }
  bool exclusive() const noexcept { return derefcnt.load(std::memory_order_acquire) & kExclusive; }
  Residency where() const noexcept { return residency.load(std::memory_order_acquire); }
  PathSelector path() const noexcept { return psf.load(std::memory_order_acquire); }

  // Claims exclusive ownership iff no scope is active.
  bool try_claim_exclusive() noexcept {
    std::uint32_t expected = 0;
    return derefcnt.compare_exchange_strong(expected, kExclusive, std::memory_order_acq_rel);
  }
  void release_exclusive() noexcept { derefcnt.fetch_and(kCountMask, std::memory_order_acq_rel); }

  void clear_touched() noexcept {
    for (std::uint32_t w = 0; w < touched_words; ++w) touched[w].store(0, std::memory_order_relaxed);
  }
  // True when this call is the first to mark the object start in this epoch.
  bool mark_touched(std::uint32_t offset) noexcept {
    const std::uint32_t bit = offset / 8;
    const std::uint64_t mask = std::uint64_t{1} << (bit % 64);
    auto& word = touched[bit / 64];
    if (word.load(std::memory_order_relaxed) & mask) return false;
    return !(word.fetch_or(mask, std::memory_order_relaxed) & mask);
  }
};

// adjust_derefcnt(+1 | -1). Decrementing a zero count is a protocol bug.
inline std::uint32_t adjust_derefcnt(PageDescriptor& page, int delta) {
  if (delta == +1) {
    return (page.derefcnt.fetch_add(1, std::memory_order_acq_rel) + 1) & PageDescriptor::kCountMask;
  }
  if (delta != -1) throw Error(Errc::invalid_argument, "derefcnt delta must be +1 or -1");
  std::uint32_t cur = page.derefcnt.load(std::memory_order_acquire);
  for (;;) {
    if ((cur & PageDescriptor::kCountMask) == 0)
      throw Error(Errc::underflow, "derefcnt decrement at zero on vpn " + std::to_string(page.vpn));
    if (page.derefcnt.compare_exchange_weak(cur, cur - 1, std::memory_order_acq_rel))
      return (cur - 1) & PageDescriptor::kCountMask;
  }
}

class PageTable {
 public:
  explicit PageTable(const Config& cfg)
      : page_size_(cfg.page_size),
        page_shift_(static_cast<unsigned>(std::countr_zero(cfg.page_size))),
        card_size_(cfg.card_size),
        cat_bits_(static_cast<std::uint32_t>(cfg.page_size / cfg.card_size)),
        cat_words_((cat_bits_ + 63) / 64),
        touched_words_(static_cast<std::uint32_t>((cfg.page_size / 8 + 63) / 64)),
        spaces_{SpaceTable(cat_words_, touched_words_), SpaceTable(cat_words_, touched_words_),
                SpaceTable(cat_words_, touched_words_)} {}

  static constexpr std::uint64_t kMaxPagesPerSpace = std::uint64_t{1} << 22;

  std::size_t page_size() const noexcept { return page_size_; }
  unsigned page_shift() const noexcept { return page_shift_; }
  std::size_t card_size() const noexcept { return card_size_; }
  std::uint32_t cat_bits() const noexcept { return cat_bits_; }

  // Reserves `count` consecutive fresh pages in a space; returns the first index.
  std::uint64_t reserve(Space s, std::uint64_t count = 1) {
    auto& sp = space(s);
    const std::uint64_t first = sp.next.fetch_add(count, std::memory_order_acq_rel);
    if (first + count > kMaxPagesPerSpace)
      throw Error(Errc::out_of_memory, "virtual space exhausted");
    return first;
  }

  // Prepares a reserved page; the caller publishes it by storing its residency.
  PageDescriptor& init_page(Space s, std::uint64_t index) {
    auto& sp = space(s);
    PageDescriptor& d = sp.pages.at(index);
    d.space = s;
    d.index = index;
    d.vpn = (space_base(s) >> page_shift_) + index;
    d.cat = CardAccessTable(&sp.cat_words.at(index * cat_words_), cat_bits_);
    for (std::uint32_t w = 1; w < cat_words_; ++w) (void)sp.cat_words.at(index * cat_words_ + w);
    d.touched = &sp.touched_words.at(index * touched_words_);
    for (std::uint32_t w = 1; w < touched_words_; ++w) (void)sp.touched_words.at(index * touched_words_ + w);
    d.touched_words = touched_words_;
    d.cat.clear();
    d.clear_touched();
    return d;
  }

  PageDescriptor* find(VirtAddr a) const noexcept {
    const auto s = space_of(a);
    if (!s) return nullptr;
    const auto& sp = space(*s);
    const std::uint64_t index = (a.value - space_base(*s)) >> page_shift_;
    if (index >= sp.next.load(std::memory_order_acquire)) return nullptr;
    return sp.pages.find(index);
  }

  PageDescriptor* find_index(Space s, std::uint64_t index) const noexcept {
    const auto& sp = space(s);
    if (index >= sp.next.load(std::memory_order_acquire)) return nullptr;
    return sp.pages.find(index);
  }

  PageDescriptor* find_vpn(std::uint64_t vpn) const noexcept { return find(VirtAddr(vpn << page_shift_)); }

  std::uint64_t page_count(Space s) const noexcept { return space(s).next.load(std::memory_order_acquire); }

  VirtAddr base_of(const PageDescriptor& d) const noexcept { return VirtAddr(d.vpn << page_shift_); }

  // Bytes of card-table metadata per data page.
  std::size_t cat_bytes_per_page() const noexcept { return (cat_bits_ + 7) / 8; }

 private:
  static constexpr unsigned kPageChunkBits = 10;
  static constexpr unsigned kWordChunkBits = 14;

  struct SpaceTable {
    SpaceTable(std::uint32_t cat_words, std::uint32_t touched_words)
        : pages(kMaxPagesPerSpace >> kPageChunkBits),
          cat_words((kMaxPagesPerSpace * cat_words >> kWordChunkBits) + 1),
          touched_words((kMaxPagesPerSpace * touched_words >> kWordChunkBits) + 1) {}

    std::atomic<std::uint64_t> next{0};
    ChunkedArray<PageDescriptor, kPageChunkBits> pages;
    ChunkedArray<std::atomic<std::uint64_t>, kWordChunkBits> cat_words;
    ChunkedArray<std::atomic<std::uint64_t>, kWordChunkBits> touched_words;
  };

  SpaceTable& space(Space s) noexcept { return spaces_[static_cast<std::size_t>(s)]; }
  const SpaceTable& space(Space s) const noexcept { return spaces_[static_cast<std::size_t>(s)]; }

  std::size_t page_size_;
  unsigned page_shift_;
  std::size_t card_size_;
  std::uint32_t cat_bits_;
  std::uint32_t cat_words_;
  std::uint32_t touched_words_;
  SpaceTable spaces_[kDataSpaces];
};

// Frames of local memory. resident() never exceeds capacity() because a page
// can only become resident by taking a frame.
class LocalPool {
 public:
  LocalPool(std::size_t capacity_pages, std::size_t page_size)
      : capacity_(capacity_pages),
        page_size_(page_size),
        data_(std::make_unique<std::byte[]>(capacity_pages * page_size)),
        owner_(std::make_unique<std::atomic<std::uint64_t>[]>(capacity_pages)) {
    free_.reserve(capacity_pages);
    for (std::size_t f = capacity_pages; f-- > 0;) {
      free_.push_back(static_cast<std::uint32_t>(f));
      owner_[f].store(0, std::memory_order_relaxed);
    }
    free_count_.store(capacity_pages, std::memory_order_relaxed);
  }

  std::optional<std::uint32_t> try_acquire() {
    std::lock_guard<std::mutex> g(mu_);
    if (free_.empty()) return std::nullopt;
    const std::uint32_t f = free_.back();
    free_.pop_back();
    free_count_.fetch_sub(1, std::memory_order_relaxed);
    return f;
  }

  void release(std::uint32_t frame) {
    owner_[frame].store(0, std::memory_order_release);
    std::lock_guard<std::mutex> g(mu_);
    free_.push_back(frame);
    free_count_.fetch_add(1, std::memory_order_relaxed);
  }

  void bind(std::uint32_t frame, std::uint64_t vpn) noexcept { owner_[frame].store(vpn, std::memory_order_release); }
  std::uint64_t owner(std::uint32_t frame) const noexcept { return owner_[frame].load(std::memory_order_acquire); }

  std::byte* frame_data(std::uint32_t frame) noexcept { return data_.get() + std::size_t{frame} * page_size_; }
  const std::byte* frame_data(std::uint32_t frame) const noexcept { return data_.get() + std::size_t{frame} * page_size_; }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t free_count() const noexcept { return free_count_.load(std::memory_order_relaxed); }
  std::size_t resident() const noexcept { return capacity_ - free_count(); }

 private:
  std::size_t capacity_;
  std::size_t page_size_;
  std::unique_ptr<std::byte[]> data_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> owner_;
  std::mutex mu_;
  std::vector<std::uint32_t> free_;
  std::atomic<std::size_t> free_count_{0};
};

// Simulated address space: page map, card tables and local frames.
class MemoryModel {
 public:
  explicit MemoryModel(const Config& cfg)
      : cfg_(cfg), table_(cfg), pool_(cfg.pool_capacity_pages, cfg.page_size) {}

  const Config& config() const noexcept { return cfg_; }
  PageTable& table() noexcept { return table_; }
  const PageTable& table() const noexcept { return table_; }
  LocalPool& pool() noexcept { return pool_; }
  const LocalPool& pool() const noexcept { return pool_; }
  std::size_t page_size() const noexcept { return cfg_.page_size; }

  // Exact page-map lookup standing in for a hardware residency probe.
  std::pair<Residency, PageDescriptor&> locate(VirtAddr addr) const {
    PageDescriptor* d = table_.find(addr);
    const Residency r = d ? d->where() : Residency::unmapped;
    if (r == Residency::unmapped) throw Error(Errc::unmapped_address, "address " + std::to_string(addr.value));
    return {r, *d};
  }

  PageDescriptor& descriptor(VirtAddr addr) const {
    PageDescriptor* d = table_.find(addr);
    if (!d) throw Error(Errc::unmapped_address, "address " + std::to_string(addr.value));
    return *d;
  }

  void mark_cards(VirtAddr addr, std::size_t size) const {
    mark_cards(descriptor(addr), addr, size);
  }

  void mark_cards(PageDescriptor& page, VirtAddr addr, std::size_t size) const {
    const std::uint64_t off = addr.offset(cfg_.page_size);
    if (size == 0) return;
    if (off + size > cfg_.page_size) throw Error(Errc::crosses_page_boundary, "object range spans pages");
    page.cat.set_range(static_cast<std::uint32_t>(off / cfg_.card_size),
                       static_cast<std::uint32_t>((off + size - 1) / cfg_.card_size));
  }

  std::byte* host_ptr(const PageDescriptor& page, VirtAddr addr) noexcept {
    return pool_.frame_data(page.frame.load(std::memory_order_acquire)) + addr.offset(cfg_.page_size);
  }

 private:
  Config cfg_;
  PageTable table_;
  LocalPool pool_;
};

}  // namespace farpath
