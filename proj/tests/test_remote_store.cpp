#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace farpath;
using namespace farpath::test;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::invalid_argument;
}

const VirtAddr kNormalPage(space_base(Space::normal));
const VirtAddr kOffloadPage(space_base(Space::offload) + 3 * 4096);

}  // namespace

TEST(RemoteStore, PageRoundTrip) {
  RemoteStore store(4096, 16);
  std::mt19937_64 rng(1);
  const auto payload = random_bytes(rng, 4096);
  const SwapSlot slot = store.store_page(payload, Space::normal, kNormalPage);
  EXPECT_TRUE(slot);
  EXPECT_FALSE(slot.aligned_addr.has_value());
  EXPECT_EQ(store.load_page(slot), payload);
}

TEST(RemoteStore, OffloadSlotKeepsItsAddress) {
  RemoteStore store(4096, 16);
  std::vector<std::byte> page(4096, std::byte{1});
  const SwapSlot slot = store.store_page(page, Space::offload, kOffloadPage);
  ASSERT_TRUE(slot.aligned_addr.has_value());
  EXPECT_EQ(*slot.aligned_addr, kOffloadPage);
  EXPECT_EQ(store.aligned_addr(slot.id), kOffloadPage);
}

TEST(RemoteStore, ZeroCapacityIsFull) {
  RemoteStore store(4096, 0);
  std::vector<std::byte> page(4096);
  EXPECT_EQ(code_of([&] { store.store_page(page, Space::normal, kNormalPage); }), Errc::store_full);
}

TEST(RemoteStore, SecondLoadIsDeadSlot) {
  RemoteStore store(4096, 16);
  std::vector<std::byte> page(4096, std::byte{9});
  const SwapSlot slot = store.store_page(page, Space::normal, kNormalPage);
  store.load_page(slot);
  EXPECT_EQ(code_of([&] { store.load_page(slot); }), Errc::dead_slot);
  EXPECT_FALSE(store.live(slot.id));
}

TEST(RemoteStore, LedgerAfterOnePageRoundTrip) {
  RemoteStore store(4096, 16);
  std::vector<std::byte> page(4096);
  store.load_page(store.store_page(page, Space::normal, kNormalPage));
  const LedgerSnapshot l = store.ledger().snapshot();
  EXPECT_EQ(l.bytes_out, 4096u);
  EXPECT_EQ(l.bytes_in, 4096u);
  EXPECT_EQ(l.pages_in, 1u);
  EXPECT_EQ(l.pages_out, 1u);
}

TEST(RemoteStore, ObjectLoadIsSubSlice) {
  RemoteStore store(4096, 16);
  std::mt19937_64 rng(2);
  const auto payload = random_bytes(rng, 4096);
  const SwapSlot slot = store.store_page(payload, Space::normal, kNormalPage);
  const auto before = store.ledger().snapshot();
  const auto got = store.load_object(slot, 0, 64);
  EXPECT_TRUE(std::equal(got.begin(), got.end(), payload.begin()));
  const auto delta = store.ledger().snapshot() - before;
  EXPECT_EQ(delta.bytes_in, 64u);
  EXPECT_EQ(delta.objects_in, 1u);
  EXPECT_EQ(delta.pages_in, 0u);
  EXPECT_TRUE(store.live(slot.id));
}

TEST(RemoteStore, ObjectPastPageEndIsOutOfRange) {
  RemoteStore store(4096, 16);
  std::vector<std::byte> page(4096);
  const SwapSlot slot = store.store_page(page, Space::normal, kNormalPage);
  EXPECT_EQ(code_of([&] { store.load_object(slot, 4090, 16); }), Errc::out_of_range);
}

TEST(RemoteStore, ReservedSlotsFillByObjectWrites) {
  RemoteStore store(4096, 16);
  const SwapSlot slot = store.reserve(Space::normal, kNormalPage);
  const auto obj = content(3, 72);
  store.write_object(slot.id, 128, obj);
  EXPECT_EQ(store.load_object(slot, 128, 72), obj);
  const auto l = store.ledger().snapshot();
  EXPECT_EQ(l.bytes_out, 72u);
  EXPECT_EQ(l.objects_out, 1u);
  EXPECT_EQ(code_of([&] { store.write_object(slot.id, 4090, obj); }), Errc::out_of_range);
  store.release(slot.id);
  EXPECT_EQ(code_of([&] { store.release(slot.id); }), Errc::dead_slot);
}

TEST(RemoteStore, InvokeTransfersOnlyTheResult) {
  RemoteStore store(4096, 16);
  std::vector<std::byte> page(4096, std::byte{2});
  const SwapSlot slot = store.store_page(page, Space::offload, kOffloadPage);
  const auto before = store.ledger().snapshot();
  const auto r = store.invoke(slot.id, [](std::span<const std::byte> b) { return encode_u64(byte_sum(b)); });
  EXPECT_EQ(decode_u64(r), 2u * 4096);
  const auto delta = store.ledger().snapshot() - before;
  EXPECT_EQ(delta.bytes_in, 8u);
  EXPECT_EQ(delta.result_bytes, 8u);
  EXPECT_EQ(delta.offload_calls, 1u);
}

TEST(RemoteStore, CapacityIsReusedAfterRelease) {
  RemoteStore store(4096, 2);
  std::vector<std::byte> page(4096);
  const auto a = store.store_page(page, Space::normal, kNormalPage);
  store.store_page(page, Space::normal, kNormalPage);
  EXPECT_EQ(store.free_capacity(), 0u);
  store.load_page(a);
  EXPECT_NO_THROW(store.store_page(page, Space::normal, kNormalPage));
}

TEST(Ledger, AmplificationIsZeroWithoutUsefulBytes) {
  LedgerSnapshot l;
  l.bytes_in = 4096;
  EXPECT_EQ(l.io_amplification(), 0.0);
  l.useful_bytes = 64;
  EXPECT_DOUBLE_EQ(l.io_amplification(), 64.0);
}
