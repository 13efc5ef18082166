#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "farpath/error.hpp"

namespace farpath {

// Data-plane configuration of a run.
//   hybrid       object-in or page-in per page, chosen by the path selector
//   paging_only  every ingress is a page-in (swap baseline)
//   object_only  every ingress is an object fetch, egress evicts objects (object runtime baseline)
enum class Mode : std::uint8_t { hybrid, paging_only, object_only };

constexpr std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::hybrid: return "hybrid";
    case Mode::paging_only: return "paging_only";
    case Mode::object_only: return "object_only";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "hybrid") return Mode::hybrid;
  if (s == "paging_only" || s == "paging-only") return Mode::paging_only;
  if (s == "object_only" || s == "object-only") return Mode::object_only;
  throw Error(Errc::config_error, "unknown mode '" + std::string(s) + "'");
}

enum class LatencyMode : std::uint8_t { account_only, sleep };

inline LatencyMode parse_latency_mode(std::string_view s) {
  if (s == "account" || s == "account_only" || s == "account-only") return LatencyMode::account_only;
  if (s == "sleep") return LatencyMode::sleep;
  throw Error(Errc::config_error, "unknown latency mode '" + std::string(s) + "'");
}

struct LatencyModel {
  double per_op_ns = 2000.0;
  double per_byte_ns = 0.08;  // ~100 Gbit/s
  LatencyMode mode = LatencyMode::account_only;
};

struct Config {
  std::size_t page_size = 4096;
  std::size_t card_size = 16;
  std::size_t pool_capacity_pages = 1024;
  std::size_t remote_capacity_pages = std::size_t{1} << 20;
  Mode mode = Mode::hybrid;

  double car_threshold = 0.80;
  double pin_watermark = 0.90;
  double garbage_threshold = 0.50;
  // An evacuation cycle is due when free frames drop below this fraction of the pool.
  double evac_free_watermark = 0.10;
  // Remote segments are compacted only when free remote capacity drops below this fraction.
  double remote_free_watermark = 0.10;

  // Application workers plus evacuation workers; bounds the TLAB table.
  std::size_t max_workers = 64;
  LatencyModel latency;
  bool audit = false;

  void validate() const {
    auto pow2 = [](std::size_t v) { return v != 0 && std::has_single_bit(v); };
    if (!pow2(page_size) || page_size < 64 || page_size > 4096)
      throw Error(Errc::config_error, "page_size must be a power of two in [64, 4096]");
    if (!pow2(card_size) || card_size > page_size)
      throw Error(Errc::config_error, "card_size must be a power of two <= page_size");
    if (pool_capacity_pages == 0) throw Error(Errc::config_error, "pool_capacity_pages must be > 0");
    if (!(car_threshold >= 0.0 && car_threshold <= 1.0))
      throw Error(Errc::config_error, "car_threshold must be in [0, 1]");
    if (!(pin_watermark > 0.0 && pin_watermark <= 1.0))
      throw Error(Errc::config_error, "pin_watermark must be in (0, 1]");
    if (!(garbage_threshold >= 0.0 && garbage_threshold <= 1.0))
      throw Error(Errc::config_error, "garbage_threshold must be in [0, 1]");
    if (max_workers == 0) throw Error(Errc::config_error, "max_workers must be > 0");
  }
};

}  // namespace farpath
