#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "farpath/config.hpp"
#include "farpath/error.hpp"

namespace farpath {

enum class Generator : std::uint8_t { uniform, zipfian, sequential_scan, two_phase, trace };

constexpr std::string_view to_string(Generator g) noexcept {
  switch (g) {
    case Generator::uniform: return "uniform";
    case Generator::zipfian: return "zipfian";
    case Generator::sequential_scan: return "sequential_scan";
    case Generator::two_phase: return "two_phase";
    case Generator::trace: return "trace";
  }
  return "?";
}

inline Generator parse_generator(std::string_view s) {
  for (Generator g : {Generator::uniform, Generator::zipfian, Generator::sequential_scan, Generator::two_phase,
                      Generator::trace})
    if (s == to_string(g)) return g;
  if (s == "scan") return Generator::sequential_scan;
  throw Error(Errc::config_error, "unknown workload '" + std::string(s) + "'");
}

struct WorkloadSpec {
  Generator generator = Generator::uniform;
  double theta = 0.99;               // zipfian skew, in (0, 1)
  std::uint64_t churn_interval = 0;  // zipfian: ops between hot-set rotations; 0 = never
  std::uint32_t passes = 3;          // sequential_scan / two_phase
  std::string trace_path;

  std::uint64_t object_count = 100000;
  std::size_t object_size = 64;
  std::size_t max_object_size = 0;  // > object_size: sizes uniform in [object_size, max_object_size]
  std::uint64_t op_count = 1000000; // random generators only; scans run passes x object_count
  std::size_t worker_count = 1;
  double local_ratio = 0.25;
  Mode mode = Mode::hybrid;
  std::uint64_t seed = 1;

  double write_fraction = 0.0;    // in-place rewrites
  double replace_fraction = 0.0;  // re-allocations of a fresh home; the old copy becomes garbage

  double car_threshold = 0.80;
  double garbage_threshold = 0.50;
  LatencyMode latency_mode = LatencyMode::account_only;
  std::size_t page_size = 4096;

  std::size_t sample_ticks = 100;  // samples over the measured run
  bool audit = false;
  bool verify = true;  // compare object contents against the shadow oracle

  std::size_t min_size() const noexcept { return object_size; }
  std::size_t max_size() const noexcept { return std::max(object_size, max_object_size); }

  void validate() const {
    if (object_count == 0) throw Error(Errc::config_error, "object_count must be > 0");
    if (object_size == 0) throw Error(Errc::config_error, "object_size must be > 0");
    if (worker_count == 0 || worker_count > 256) throw Error(Errc::config_error, "worker_count must be in [1, 256]");
    if (!(local_ratio > 0.0 && local_ratio <= 1.0)) throw Error(Errc::config_error, "local_ratio must be in (0, 1]");
    if (generator == Generator::zipfian && !(theta > 0.0 && theta < 1.0))
      throw Error(Errc::config_error, "zipfian theta must be in (0, 1)");
    if ((generator == Generator::sequential_scan || generator == Generator::two_phase) && passes == 0)
      throw Error(Errc::config_error, "passes must be > 0");
    if (generator == Generator::trace && trace_path.empty()) throw Error(Errc::config_error, "trace workload needs a path");
    if (write_fraction < 0 || replace_fraction < 0 || write_fraction + replace_fraction > 1.0)
      throw Error(Errc::config_error, "write and replace fractions must be non-negative and sum to <= 1");
    if (max_object_size != 0 && max_object_size < object_size)
      throw Error(Errc::config_error, "max_object_size below object_size");
    if (sample_ticks == 0) throw Error(Errc::config_error, "sample_ticks must be > 0");
  }
};

// YCSB zipfian over [0, n) (Gray et al., "Quickly generating billion-record
// synthetic databases").
class ZipfianDistribution {
 public:
  ZipfianDistribution(std::uint64_t n, double theta) : n_(n), theta_(theta) {
    zetan_ = zeta(n, theta);
    const double zeta2 = zeta(std::min<std::uint64_t>(2, n), theta);
    alpha_ = 1.0 / (1.0 - theta);
    eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n), 1.0 - theta)) / (1.0 - zeta2 / zetan_);
    half_pow_theta_ = 1.0 + std::pow(0.5, theta);
  }

  template <class Rng>
  std::uint64_t operator()(Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double uz = u * zetan_;
    if (uz < 1.0) return 0;
    if (uz < half_pow_theta_) return std::min<std::uint64_t>(1, n_ - 1);
    const auto r = static_cast<std::uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
    return std::min(r, n_ - 1);
  }

  static double zeta(std::uint64_t n, double theta) {
    double sum = 0.0;
    for (std::uint64_t i = 1; i <= n; ++i) sum += 1.0 / std::pow(static_cast<double>(i), theta);
    return sum;
  }

 private:
  std::uint64_t n_;
  double theta_;
  double zetan_, alpha_, eta_, half_pow_theta_;
};

// Rank -> object id mapping shared by all workers: a seeded permutation so hot
// ranks are scattered over pages, rotated every churn interval so the hot set
// moves.
class HotSet {
 public:
  HotSet(std::uint64_t n, std::uint64_t seed) : ids_(n) {
    std::iota(ids_.begin(), ids_.end(), std::uint32_t{0});
    std::mt19937_64 rng(seed ^ 0x5bd1e995u);
    std::shuffle(ids_.begin(), ids_.end(), rng);
  }
  std::uint64_t id(std::uint64_t rank, std::uint64_t rotation) const noexcept {
    const std::uint64_t n = ids_.size();
    const std::uint64_t step = n / 16 + 1;
    return ids_[(rank + (rotation % n) * step) % n];
  }

 private:
  std::vector<std::uint32_t> ids_;
};

enum class OpKind : std::uint8_t { get, set, replace };

// Per-worker deterministic op stream for the random generators.
class KeyStream {
 public:
  KeyStream(const WorkloadSpec& spec, std::size_t worker, const ZipfianDistribution* zipf, const HotSet* hot)
      : spec_(spec), rng_(mix(spec.seed, worker)), zipf_(zipf), hot_(hot) {}

  std::uint64_t next_key() {
    ++ops_;
    if (spec_.generator == Generator::zipfian) {
      const std::uint64_t rotation = spec_.churn_interval ? ops_ / spec_.churn_interval : 0;
      return hot_->id((*zipf_)(rng_), rotation);
    }
    return std::uniform_int_distribution<std::uint64_t>(0, spec_.object_count - 1)(rng_);
  }

  OpKind next_op() {
    if (spec_.write_fraction == 0 && spec_.replace_fraction == 0) return OpKind::get;
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (u < spec_.replace_fraction) return OpKind::replace;
    if (u < spec_.replace_fraction + spec_.write_fraction) return OpKind::set;
    return OpKind::get;
  }

  std::size_t next_size() {
    if (spec_.max_size() == spec_.min_size()) return spec_.min_size();
    return std::uniform_int_distribution<std::size_t>(spec_.min_size(), spec_.max_size())(rng_);
  }

  std::mt19937_64& rng() noexcept { return rng_; }

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t worker) noexcept {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (worker + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  const WorkloadSpec& spec_;
  std::mt19937_64 rng_;
  const ZipfianDistribution* zipf_;
  const HotSet* hot_;
  std::uint64_t ops_ = 0;
};

// Shadow-oracle contents: a pure function of (object id, version).
inline void fill_content(std::uint64_t id, std::uint32_t version, std::span<std::byte> out) noexcept {
  std::uint64_t x = KeyStream::mix(id, version);
  for (std::size_t i = 0; i < out.size(); i += 8) {
    x = KeyStream::mix(x, i);
    const std::size_t n = std::min<std::size_t>(8, out.size() - i);
    for (std::size_t b = 0; b < n; ++b) out[i + b] = static_cast<std::byte>(x >> (8 * b));
  }
}

}  // namespace farpath
