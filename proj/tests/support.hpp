#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "farpath/farpath.hpp"

namespace farpath::test {

inline Config small_config(std::size_t pool_pages = 16, Mode mode = Mode::hybrid) {
  Config c;
  c.pool_capacity_pages = pool_pages;
  c.remote_capacity_pages = 4096;
  c.mode = mode;
  c.max_workers = 4;
  c.audit = true;
  return c;
}

inline std::vector<std::byte> content(std::uint64_t id, std::size_t n, std::uint32_t version = 0) {
  std::vector<std::byte> out(n);
  fill_content(id, version, out);
  return out;
}

inline std::vector<std::byte> random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::byte> out(n);
  for (auto& b : out) b = static_cast<std::byte>(rng());
  return out;
}

template <class Scope>
std::vector<std::byte> read_all(const Scope& s) {
  std::vector<std::byte> out(s.size());
  s.read(0, out);
  return out;
}

template <class Rt>
PageDescriptor& page_of(Rt& rt, const RefCell& ref) {
  return rt.memory().descriptor(ref.addr());
}

// Closes worker w's application allocation buffer so its segment becomes
// eligible for evacuation.
template <class Rt>
void close_tlab(Rt& rt, std::size_t w = 0, Space space = Space::normal) {
  rt.allocator().retire({w, Stream::app, space});
}

template <class Rt>
bool evict(Rt& rt, PageDescriptor& page) {
  return rt.try_page_out(page);
}

inline std::uint64_t byte_sum(std::span<const std::byte> bytes) {
  std::uint64_t s = 0;
  for (std::byte b : bytes) s += static_cast<std::uint8_t>(b);
  return s;
}

inline std::vector<std::byte> encode_u64(std::uint64_t v) {
  std::vector<std::byte> out(8);
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::byte>(v >> (8 * i));
  return out;
}

inline std::uint64_t decode_u64(std::span<const std::byte> b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<std::uint8_t>(b[i])} << (8 * i);
  return v;
}

// Cards a byte range [offset, offset + size) overlaps, computed one card at a
// time rather than by range arithmetic.
inline std::vector<bool> expected_cards(std::size_t page_size, std::size_t card_size, std::size_t offset,
                                        std::size_t size) {
  std::vector<bool> cards(page_size / card_size, false);
  for (std::size_t b = offset; b < offset + size; ++b) cards[b / card_size] = true;
  return cards;
}

}  // namespace farpath::test
