#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace farpath;

namespace {

// Bit-by-bit reference layout: moving, access, reserve x2, offload, size x12, addr x47.
std::uint64_t oracle_encode(const RefMeta& m) {
  std::uint64_t w = 0;
  unsigned pos = 0;
  auto put = [&](std::uint64_t v, unsigned bits) {
    for (unsigned i = 0; i < bits; ++i, ++pos)
      if ((v >> i) & 1) w |= std::uint64_t{1} << pos;
  };
  put(m.is_moving, 1);
  put(m.access, 1);
  put(m.reserve, 2);
  put(m.offload, 1);
  put(m.size, 12);
  put(m.addr, 47);
  EXPECT_EQ(pos, 64u);
  return w;
}

Errc encode_error(const RefMeta& m) {
  try {
    m.encode();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::invalid_argument;
}

}  // namespace

TEST(RefMeta, ZeroFieldsEncodeToZero) { EXPECT_EQ(RefMeta{}.encode(), 0u); }

TEST(RefMeta, MaximalFieldsRoundTrip) {
  RefMeta m;
  m.is_moving = m.access = m.offload = true;
  m.reserve = 3;
  m.size = 4095;
  m.addr = (std::uint64_t{1} << 47) - 1;
  const std::uint64_t w = m.encode();
  EXPECT_EQ(w, ~std::uint64_t{0});
  EXPECT_EQ(RefMeta::decode(w), m);
}

TEST(RefMeta, OverflowingFieldsAreRejected) {
  RefMeta m;
  m.size = 4096;
  EXPECT_EQ(encode_error(m), Errc::field_overflow);
  m.size = 0;
  m.addr = std::uint64_t{1} << 47;
  EXPECT_EQ(encode_error(m), Errc::field_overflow);
  m.addr = 0;
  m.reserve = 4;
  EXPECT_EQ(encode_error(m), Errc::field_overflow);
}

TEST(RefMeta, EncodingMatchesBitLayoutOracle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20000; ++i) {
    RefMeta m;
    m.is_moving = rng() & 1;
    m.access = rng() & 1;
    m.reserve = rng() & 3;
    m.offload = rng() & 1;
    m.size = static_cast<std::uint16_t>(rng() % 4096);
    m.addr = rng() & ((std::uint64_t{1} << 47) - 1);
    const std::uint64_t w = m.encode();
    ASSERT_EQ(w, oracle_encode(m));
    ASSERT_EQ(RefMeta::decode(w), m);
    ASSERT_EQ(RefMeta::addr_of(w).value, m.addr);
    ASSERT_EQ(RefMeta::size_of(w), m.size);
    ASSERT_EQ(RefMeta::busy(w), m.is_moving || m.offload);
    const VirtAddr other(rng() & ((std::uint64_t{1} << 47) - 1));
    RefMeta moved = m;
    moved.addr = other.value;
    ASSERT_EQ(RefMeta::with_addr(w, other), moved.encode());
  }
}

TEST(SharedRef, AliasRingAndMain) {
  Runtime rt(test::small_config());
  SharedRef a, b, c;
  rt.allocate(a, 64, 0);
  rt.alias(a, b);
  rt.alias(b, c);
  EXPECT_TRUE(a.is_main());
  EXPECT_EQ(&c.main(), &a);
  EXPECT_EQ(a.alias_count(), 3u);
  EXPECT_EQ(b.addr(), a.addr());
  EXPECT_EQ(c.addr(), a.addr());
  rt.release(a);
  EXPECT_EQ(b.alias_count(), 2u);
  EXPECT_TRUE(b.main().is_main());
  EXPECT_TRUE(a.empty());
  {
    auto s = rt.deref(c);
    EXPECT_EQ(s.size(), 64u);
  }
  rt.release(b);
  rt.release(c);
  EXPECT_EQ(rt.pinned_pages(), 0u);
}
