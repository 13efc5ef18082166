#pragma once

// Remotable functions over objects in the offload space.

namespace farpath {

template <class H>
void BasicRuntime<H>::register_remotable(std::string name, RemotableBody body) {
  if (!body) throw Error(Errc::invalid_argument, "remotable function without a body");
  std::lock_guard<std::mutex> g(fn_mu_);
  if (functions_.count(name)) throw Error(Errc::duplicate_name, "remotable function '" + name + "'");
  functions_.emplace(std::move(name), std::move(body));
}

// Runs the function where the object lives. While the offload bit is set the
// object cannot be fetched or moved, and its page stays pinned so a local
// object is not paged out mid-call.
template <class H>
std::vector<std::byte> BasicRuntime<H>::offload_invoke(RefCell& main, std::string_view name) {
  RemotableBody body;
  {
    std::lock_guard<std::mutex> g(fn_mu_);
    auto it = functions_.find(std::string(name));
    if (it == functions_.end()) throw Error(Errc::unknown_function, "remotable function '" + std::string(name) + "'");
    body = it->second;
  }

  Backoff<H> backoff;
  std::uint64_t w;
  for (;;) {
    w = main.load();
    if (w == 0) throw Error(Errc::invalid_argument, "offload through an empty reference");
    if (!RefMeta::busy(w) && main.meta.compare_exchange_weak(w, w | RefMeta::kOffload, std::memory_order_acq_rel))
      break;
    backoff.pause();
  }
  auto clear_bit = [&] { main.meta.fetch_and(~RefMeta::kOffload, std::memory_order_acq_rel); };
  const VirtAddr addr = RefMeta::addr_of(w);
  const std::size_t size = RefMeta::size_of(w);
  PageDescriptor* page = mm_.table().find(addr);
  if (!page || page->space != Space::offload) {
    clear_bit();
    throw Error(Errc::invalid_argument, "object is not in the offload space");
  }
  for (;;) {
    const std::uint32_t v = page->derefcnt.fetch_add(1, std::memory_order_acq_rel);
    if (!(v & PageDescriptor::kExclusive)) break;
    Allocator::unpin(*page);
    wait_exclusive(*page);
  }

  log(EventKind::offload_begin, *page);
  std::vector<std::byte> result;
  try {
    if (page->where() == Residency::local) {
      result = body(std::span<const std::byte>(mm_.host_ptr(*page, addr), size));
      store_.ledger().offload_local();
    } else {
      const std::uint64_t slot = page->slot.load(std::memory_order_acquire);
      const auto aligned = store_.aligned_addr(slot);
      if (!aligned) throw Error(Errc::invalid_argument, "offload page stored without an aligned address");
      const std::size_t off = addr.value - aligned->value;
      result = store_.invoke(slot, [&](std::span<const std::byte> remote) { return body(remote.subspan(off, size)); });
    }
  } catch (...) {
    log(EventKind::offload_end, *page);
    Allocator::unpin(*page);
    clear_bit();
    throw;
  }
  log(EventKind::offload_end, *page);
  Allocator::unpin(*page);
  clear_bit();
  return result;
}

}  // namespace farpath
