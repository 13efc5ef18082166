// farpath-sim: runs a workload against the simulated far-memory data plane and
// prints a JSON or CSV report.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "farpath/farpath.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Far-memory hybrid data plane simulator"};
  farpath::WorkloadSpec spec;
  std::string workload = "uniform", mode = "hybrid", latency = "account", format = "json", out;

  app.add_option("--workload", workload, "uniform | zipfian | sequential_scan | two_phase | trace")->capture_default_str();
  app.add_option("--trace", spec.trace_path, "trace file for --workload trace");
  app.add_option("--objects", spec.object_count, "number of objects")->capture_default_str();
  app.add_option("--object-size", spec.object_size, "object payload bytes")->capture_default_str();
  app.add_option("--max-object-size", spec.max_object_size, "if set, sizes are uniform in [object-size, this]");
  app.add_option("--ops", spec.op_count, "operations for the random generators")->capture_default_str();
  app.add_option("--passes", spec.passes, "scan passes")->capture_default_str();
  app.add_option("--theta", spec.theta, "zipfian skew")->capture_default_str();
  app.add_option("--churn", spec.churn_interval, "zipfian: ops between hot-set rotations (0 = off)");
  app.add_option("--write-fraction", spec.write_fraction, "fraction of in-place writes");
  app.add_option("--replace-fraction", spec.replace_fraction, "fraction of re-allocating writes");
  app.add_option("--workers", spec.worker_count, "application workers")->capture_default_str();
  app.add_option("--local-ratio", spec.local_ratio, "local pool / working set")->capture_default_str();
  app.add_option("--mode", mode, "hybrid | paging_only | object_only")->capture_default_str();
  app.add_option("--car-threshold", spec.car_threshold, "card access rate threshold")->capture_default_str();
  app.add_option("--garbage-threshold", spec.garbage_threshold, "evacuation garbage ratio")->capture_default_str();
  app.add_option("--seed", spec.seed, "random seed")->capture_default_str();
  app.add_option("--latency-mode", latency, "account | sleep")->capture_default_str();
  app.add_option("--samples", spec.sample_ticks, "sample ticks over the run")->capture_default_str();
  app.add_flag("--audit", spec.audit, "record and check the synchronization event log");
  app.add_option("--format", format, "json | csv")->capture_default_str();
  app.add_option("--out", out, "output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    spec.generator = farpath::parse_generator(workload);
    spec.mode = farpath::parse_mode(mode);
    spec.latency_mode = farpath::parse_latency_mode(latency);
    const auto fmt = farpath::parse_format(format);
    const farpath::RunReport report = farpath::run_workload(spec);
    const std::string text = farpath::emit_report(report, fmt);
    if (out.empty()) {
      std::cout << text;
    } else {
      std::ofstream f(out);
      if (!f) throw farpath::Error(farpath::Errc::config_error, "cannot write '" + out + "'");
      f << text;
    }
    if (!report.sound()) {
      std::cerr << "invariant audit failed: " << report.audit.summary() << " checksum_failures="
                << report.checksum_failures << " pinned=" << report.pinned_pages_at_end << '\n';
      return 3;
    }
  } catch (const farpath::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const farpath::Error& e) {
    std::cerr << farpath::to_string(e.code()) << ": " << e.what() << '\n';
    return e.code() == farpath::Errc::config_error ? 2 : 1;
  }
  return 0;
}
