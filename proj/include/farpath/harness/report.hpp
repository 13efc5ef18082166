#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "farpath/audit.hpp"
#include "farpath/remote_store.hpp"
#include "farpath/runtime.hpp"
#include "farpath/harness/workload.hpp"

namespace farpath {

struct Sample {
  std::uint64_t op = 0;  // ops completed when sampled
  std::string phase;
  LedgerSnapshot ledger;  // cumulative since the measured run began
  double psf_paging_fraction = 0.0;
  std::size_t resident_pages = 0;
};

struct PhaseReport {
  std::string name;
  std::uint64_t ops = 0;
  LedgerSnapshot ledger;  // delta over the phase
  double psf_paging_fraction = 0.0;  // mean over the phase's samples
};

struct RunReport {
  WorkloadSpec spec;
  std::size_t pool_capacity_pages = 0;
  std::size_t working_set_pages = 0;
  std::uint64_t ops = 0;
  LedgerSnapshot ledger;
  RuntimeStats stats;
  std::vector<Sample> samples;
  std::vector<PhaseReport> phases;
  bool audited = false;
  AuditReport audit;
  std::size_t pinned_pages_at_end = 0;
  std::uint64_t checksum_failures = 0;
  std::uint64_t objects_verified = 0;
  double wall_seconds = 0.0;

  double io_amplification() const noexcept { return ledger.io_amplification(); }
  double evict_work_per_byte() const noexcept { return ledger.evict_work_per_byte(); }
  double simulated_seconds() const noexcept { return ledger.simulated_seconds(); }
  bool sound() const noexcept {
    return checksum_failures == 0 && pinned_pages_at_end == 0 && stats.underflows == 0 && (!audited || audit.ok());
  }

  const PhaseReport* phase(const std::string& name) const {
    for (const auto& p : phases)
      if (p.name == name) return &p;
    return nullptr;
  }
};

enum class ReportFormat : std::uint8_t { json, csv };

inline ReportFormat parse_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw Error(Errc::config_error, "unknown format '" + std::string(s) + "'");
}

inline nlohmann::json to_json(const LedgerSnapshot& l) {
  return {{"pages_in", l.pages_in},         {"pages_out", l.pages_out},
          {"objects_in", l.objects_in},     {"objects_out", l.objects_out},
          {"bytes_in", l.bytes_in},         {"bytes_out", l.bytes_out},
          {"useful_bytes", l.useful_bytes}, {"evict_work_units", l.evict_work_units},
          {"offload_calls", l.offload_calls}, {"result_bytes", l.result_bytes},
          {"simulated_seconds", l.simulated_seconds()}};
}

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["workload"] = std::string(to_string(r.spec.generator));
  j["mode"] = std::string(to_string(r.spec.mode));
  j["seed"] = r.spec.seed;
  j["objects"] = r.spec.object_count;
  j["object_size"] = r.spec.object_size;
  j["workers"] = r.spec.worker_count;
  j["local_ratio"] = r.spec.local_ratio;
  j["car_threshold"] = r.spec.car_threshold;
  j["garbage_threshold"] = r.spec.garbage_threshold;
  j["pool_capacity_pages"] = r.pool_capacity_pages;
  j["working_set_pages"] = r.working_set_pages;
  j["ops"] = r.ops;
  j["ledger"] = to_json(r.ledger);
  j["io_amplification"] = r.io_amplification();
  j["evict_work_per_byte"] = r.evict_work_per_byte();
  j["simulated_seconds"] = r.simulated_seconds();
  j["wall_seconds"] = r.wall_seconds;
  j["flips"] = {{"runtime_to_paging", r.stats.runtime_to_paging_flips()},
                {"at_page_out", r.stats.pageout_flips},
                {"forced", r.stats.forced_flips},
                {"paging_to_runtime", r.stats.paging_to_runtime}};
  j["fetches"] = r.stats.fetches;
  j["objects_evicted"] = r.stats.objects_evicted;
  j["evacuation_cycles"] = r.stats.evacuation_cycles;
  j["segments_freed"] = r.stats.segments_freed;
  j["checksum_failures"] = r.checksum_failures;
  j["objects_verified"] = r.objects_verified;
  j["pinned_pages_at_end"] = r.pinned_pages_at_end;
  if (r.audited)
    j["audit"] = {{"ok", r.audit.ok()},
                  {"events", r.audit.events},
                  {"invariant1", r.audit.invariant1()},
                  {"invariant2", r.audit.invariant2()},
                  {"invariant3", r.audit.invariant3()},
                  {"violations", r.audit.violations()}};
  auto& phases = j["phases"] = nlohmann::json::array();
  for (const auto& p : r.phases)
    phases.push_back({{"name", p.name},
                      {"ops", p.ops},
                      {"ledger", to_json(p.ledger)},
                      {"io_amplification", p.ledger.io_amplification()},
                      {"psf_paging_fraction", p.psf_paging_fraction}});
  auto& series = j["psf_paging_fraction"] = nlohmann::json::array();
  auto& samples = j["samples"] = nlohmann::json::array();
  for (const auto& s : r.samples) {
    series.push_back(s.psf_paging_fraction);
    samples.push_back({{"op", s.op},
                       {"phase", s.phase},
                       {"psf_paging_fraction", s.psf_paging_fraction},
                       {"resident_pages", s.resident_pages},
                       {"ledger", to_json(s.ledger)}});
  }
  return j;
}

inline std::string emit_report(const RunReport& r, ReportFormat format) {
  if (format == ReportFormat::json) return to_json(r).dump(2) + "\n";
  std::ostringstream out;
  out << "tick,op,phase,pages_in,pages_out,objects_in,objects_out,bytes_in,bytes_out,useful_bytes,"
         "evict_work_units,io_amplification,psf_paging_fraction,resident_pages,simulated_seconds\n";
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const Sample& s = r.samples[i];
    const LedgerSnapshot& l = s.ledger;
    out << i << ',' << s.op << ',' << s.phase << ',' << l.pages_in << ',' << l.pages_out << ',' << l.objects_in << ','
        << l.objects_out << ',' << l.bytes_in << ',' << l.bytes_out << ',' << l.useful_bytes << ','
        << l.evict_work_units << ',' << l.io_amplification() << ',' << s.psf_paging_fraction << ','
        << s.resident_pages << ',' << l.simulated_seconds() << '\n';
  }
  return out.str();
}

}  // namespace farpath
