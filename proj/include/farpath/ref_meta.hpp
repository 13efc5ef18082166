#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "farpath/error.hpp"
#include "farpath/mem_model.hpp"

namespace farpath {

// 64-bit reference metadata, least significant field first:
//   is_moving:1 | access:1 | reserve:2 | offload:1 | size:12 | addr:47
struct RefMeta {
  bool is_moving = false;
  bool access = false;
  std::uint8_t reserve = 0;
  bool offload = false;
  std::uint16_t size = 0;
  std::uint64_t addr = 0;

  static constexpr std::uint64_t kMoving = std::uint64_t{1} << 0;
  static constexpr std::uint64_t kAccess = std::uint64_t{1} << 1;
  static constexpr unsigned kReserveShift = 2;
  static constexpr std::uint64_t kOffload = std::uint64_t{1} << 4;
  static constexpr unsigned kSizeShift = 5;
  static constexpr unsigned kSizeBits = 12;
  static constexpr unsigned kAddrShift = 17;
  static constexpr std::uint64_t kMaxSize = (std::uint64_t{1} << kSizeBits) - 1;
  static constexpr std::uint64_t kSizeMask = kMaxSize << kSizeShift;
  static constexpr std::uint64_t kAddrMask = ~std::uint64_t{0} << kAddrShift;

  std::uint64_t encode() const {
    if (reserve > 3) throw Error(Errc::field_overflow, "reserve exceeds 2 bits");
    if (size > kMaxSize) throw Error(Errc::field_overflow, "size " + std::to_string(size) + " exceeds 12 bits");
    if (addr >= kAddrLimit) throw Error(Errc::field_overflow, "addr exceeds 47 bits");
    return (is_moving ? kMoving : 0) | (access ? kAccess : 0) | (std::uint64_t{reserve} << kReserveShift) |
           (offload ? kOffload : 0) | (std::uint64_t{size} << kSizeShift) | (addr << kAddrShift);
  }

  static constexpr RefMeta decode(std::uint64_t w) noexcept {
    RefMeta m;
    m.is_moving = w & kMoving;
    m.access = w & kAccess;
    m.reserve = static_cast<std::uint8_t>((w >> kReserveShift) & 3);
    m.offload = w & kOffload;
    m.size = static_cast<std::uint16_t>((w >> kSizeShift) & kMaxSize);
    m.addr = w >> kAddrShift;
    return m;
  }

  bool operator==(const RefMeta&) const = default;

  // Field accessors on raw words, used on the barrier fast path.
  static constexpr VirtAddr addr_of(std::uint64_t w) noexcept { return VirtAddr(w >> kAddrShift); }
  static constexpr std::uint32_t size_of(std::uint64_t w) noexcept {
    return static_cast<std::uint32_t>((w >> kSizeShift) & kMaxSize);
  }
  static constexpr std::uint64_t with_addr(std::uint64_t w, VirtAddr a) noexcept {
    return (w & ~kAddrMask) | (a.value << kAddrShift);
  }
  static constexpr bool busy(std::uint64_t w) noexcept { return w & (kMoving | kOffload); }
};

// A reference slot holding packed metadata. Object headers point back at the
// main reference of their object.
struct RefCell {
  std::atomic<std::uint64_t> meta{0};

  std::uint64_t load() const noexcept { return meta.load(std::memory_order_acquire); }
  VirtAddr addr() const noexcept { return RefMeta::addr_of(load()); }
  std::uint32_t size() const noexcept { return RefMeta::size_of(load()); }
  bool empty() const noexcept { return load() == 0; }
};

// Sole owner of an object. Not movable: the object header records its address.
class UniqueRef : public RefCell {
 public:
  UniqueRef() = default;
  UniqueRef(const UniqueRef&) = delete;
  UniqueRef& operator=(const UniqueRef&) = delete;
};

// Aliasing reference. All aliases of an object form a ring through `next`; the
// low bit of a node's own link marks it as the main reference.
class SharedRef : public RefCell {
 public:
  SharedRef() = default;
  SharedRef(const SharedRef&) = delete;
  SharedRef& operator=(const SharedRef&) = delete;

  SharedRef* next() const noexcept {
    return reinterpret_cast<SharedRef*>(link_.load(std::memory_order_acquire) & ~std::uintptr_t{1});
  }
  bool is_main() const noexcept { return link_.load(std::memory_order_acquire) & 1; }

  SharedRef& main() noexcept {
    SharedRef* n = this;
    while (!n->is_main()) n = n->next();
    return *n;
  }

  std::size_t alias_count() const noexcept {
    if (!next()) return 0;
    std::size_t n = 1;
    for (const SharedRef* p = next(); p != this; p = p->next()) ++n;
    return n;
  }

 private:
  template <class>
  friend class BasicRuntime;

  void set_link(SharedRef* next, bool main) noexcept {
    link_.store(reinterpret_cast<std::uintptr_t>(next) | (main ? 1 : 0), std::memory_order_release);
  }

  std::atomic<std::uintptr_t> link_{0};
};

static_assert(sizeof(UniqueRef) == 8);
static_assert(sizeof(SharedRef) == 16);

}  // namespace farpath
