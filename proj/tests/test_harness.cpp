#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace farpath;

namespace {

WorkloadSpec uniform(std::uint64_t objects, std::uint64_t ops, Mode mode) {
  WorkloadSpec s;
  s.generator = Generator::uniform;
  s.object_count = objects;
  s.op_count = ops;
  s.mode = mode;
  return s;
}

Errc config_error_of(const WorkloadSpec& s) {
  try {
    s.validate();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::invalid_argument;
}

}  // namespace

TEST(Harness, EverythingLocalMeansNoTransfers) {
  WorkloadSpec s = uniform(20000, 50000, Mode::hybrid);
  s.local_ratio = 1.0;
  const RunReport r = run_workload(s);
  EXPECT_EQ(r.ledger.pages_in + r.ledger.objects_in, 0u);
  EXPECT_EQ(r.ledger.bytes_in, 0u);
  EXPECT_EQ(r.checksum_failures, 0u);
  EXPECT_GT(r.objects_verified, 0u);
}

TEST(Harness, PagingOnlyAmplifiesSmallObjects) {
  const RunReport paging = run_workload(uniform(100000, 100000, Mode::paging_only));
  const RunReport hybrid = run_workload(uniform(100000, 100000, Mode::hybrid));
  EXPECT_GE(paging.io_amplification(), 40.0);
  EXPECT_LE(paging.io_amplification(), 64.0);
  EXPECT_LE(hybrid.io_amplification(), 0.1 * paging.io_amplification());
  EXPECT_EQ(paging.checksum_failures + hybrid.checksum_failures, 0u);
}

TEST(Harness, AmplificationIsBytesOverUseful) {
  const RunReport r = run_workload(uniform(30000, 30000, Mode::hybrid));
  ASSERT_GT(r.ledger.useful_bytes, 0u);
  EXPECT_DOUBLE_EQ(r.io_amplification(),
                   static_cast<double>(r.ledger.bytes_in) / static_cast<double>(r.ledger.useful_bytes));
  EXPECT_EQ(r.ledger.bytes_in, 4096 * r.ledger.pages_in + 64 * r.ledger.objects_in);
}

TEST(Trace, EmptyTraceMovesNothing) {
  WorkloadSpec s;
  s.object_count = 100;
  const RunReport r = replay_trace(std::vector<TraceOp>{}, s);
  EXPECT_EQ(r.ledger, LedgerSnapshot{});
  EXPECT_EQ(r.ops, 0u);
}

TEST(Trace, OneColdGetPerMode) {
  // Object 0 is written first; 8000 more 64 B objects push its page out.
  std::istringstream in("get 0\n");
  const auto ops = parse_trace(in);
  for (Mode m : {Mode::hybrid, Mode::paging_only, Mode::object_only}) {
    WorkloadSpec s;
    s.object_count = 8000;
    s.local_ratio = 0.1;
    s.mode = m;
    const RunReport r = replay_trace(ops, s);
    if (m == Mode::paging_only) {
      EXPECT_EQ(r.ledger.pages_in, 1u) << to_string(m);
      EXPECT_EQ(r.ledger.objects_in, 0u) << to_string(m);
    } else {
      EXPECT_EQ(r.ledger.objects_in, 1u) << to_string(m);
      EXPECT_EQ(r.ledger.pages_in, 0u) << to_string(m);
      EXPECT_EQ(r.ledger.bytes_in, 64u) << to_string(m);
    }
    EXPECT_EQ(r.checksum_failures, 0u);
  }
}

TEST(Trace, ParseErrorsCarryTheLine) {
  std::istringstream in("# header\nget 1\nset 2 64\n\nphase warm\nget 3\nfrobnicate 4\n");
  try {
    parse_trace(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
    EXPECT_EQ(e.code(), Errc::parse_error);
  }
  for (const char* bad : {"get\n", "get x\n", "set 1\n", "set 1 0\n", "get 1 2\n", "get -1\n", "phase\n"}) {
    std::istringstream b(bad);
    EXPECT_THROW(parse_trace(b), ParseError) << bad;
  }
}

TEST(Trace, PhasesAndSetsReplay) {
  std::istringstream in("phase warm\nget 0\nget 1\nset 10 64\nset 0 200\nphase measure\nget 0\nget 10\n");
  WorkloadSpec s;
  s.object_count = 10;
  const RunReport r = replay_trace(parse_trace(in), s);
  ASSERT_EQ(r.phases.size(), 2u);
  EXPECT_EQ(r.phases[0].name, "warm");
  EXPECT_EQ(r.phases[0].ops, 4u);
  EXPECT_EQ(r.phases[1].name, "measure");
  EXPECT_EQ(r.phases[1].ops, 2u);
  EXPECT_EQ(r.checksum_failures, 0u);
  EXPECT_EQ(r.objects_verified, 11u);
}

TEST(Trace, UnallocatedObjectIsRejected) {
  std::istringstream in("get 0\nget 5\n");
  WorkloadSpec s;
  s.object_count = 5;
  EXPECT_THROW(replay_trace(parse_trace(in), s), ParseError);
}

TEST(Report, JsonRoundTrip) {
  WorkloadSpec s = uniform(5000, 20000, Mode::hybrid);
  s.audit = true;
  const RunReport r = run_workload(s);
  const auto j = nlohmann::json::parse(emit_report(r, ReportFormat::json));
  EXPECT_EQ(j["mode"], "hybrid");
  EXPECT_EQ(j["ops"].get<std::uint64_t>(), r.ops);
  EXPECT_EQ(j["ledger"]["bytes_in"].get<std::uint64_t>(), r.ledger.bytes_in);
  EXPECT_EQ(j["ledger"]["pages_in"].get<std::uint64_t>(), r.ledger.pages_in);
  EXPECT_DOUBLE_EQ(j["io_amplification"].get<double>(), r.io_amplification());
  EXPECT_EQ(j["samples"].size(), r.samples.size());
  EXPECT_EQ(j["psf_paging_fraction"].size(), r.samples.size());
  EXPECT_TRUE(j["audit"]["ok"].get<bool>());
}

TEST(Report, CsvHasOneRowPerSample) {
  const RunReport r = run_workload(uniform(5000, 20000, Mode::paging_only));
  const std::string csv = emit_report(r, ReportFormat::csv);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.samples.size() + 1);
  ASSERT_FALSE(r.samples.empty());
  EXPECT_EQ(r.samples.back().ledger, r.ledger);
}

TEST(Harness, SingleWorkerRunsAreDeterministic) {
  WorkloadSpec s = uniform(20000, 40000, Mode::hybrid);
  s.write_fraction = 0.1;
  s.replace_fraction = 0.05;
  s.seed = 9;
  const RunReport a = run_workload(s);
  const RunReport b = run_workload(s);
  EXPECT_EQ(a.ledger.bytes_in, b.ledger.bytes_in);
  EXPECT_EQ(a.ledger.pages_in, b.ledger.pages_in);
  EXPECT_EQ(a.ledger.objects_in, b.ledger.objects_in);
  EXPECT_EQ(a.ledger.evict_work_units, b.ledger.evict_work_units);
  s.seed = 10;
  EXPECT_NE(run_workload(s).ledger.bytes_in, a.ledger.bytes_in);
}

TEST(Harness, MultiWorkerRunIsSound) {
  WorkloadSpec s = uniform(20000, 100000, Mode::hybrid);
  s.generator = Generator::zipfian;
  s.theta = 0.9;
  s.churn_interval = 10000;
  s.worker_count = 4;
  s.write_fraction = 0.2;
  s.replace_fraction = 0.1;
  s.audit = true;
  const RunReport r = run_workload(s);
  EXPECT_TRUE(r.sound()) << r.audit.summary();
  EXPECT_EQ(r.checksum_failures, 0u);
  EXPECT_EQ(r.pinned_pages_at_end, 0u);
  EXPECT_EQ(r.stats.underflows, 0u);
}

TEST(Harness, ScanPhasesAreReported) {
  WorkloadSpec s;
  s.generator = Generator::two_phase;
  s.object_count = 20000;
  s.passes = 2;
  const RunReport r = run_workload(s);
  ASSERT_NE(r.phase("build"), nullptr);
  ASSERT_NE(r.phase("scan2"), nullptr);
  EXPECT_EQ(r.phase("build")->ops, 20000u);
  EXPECT_EQ(r.phase("scan1")->ops, 20000u);
  EXPECT_EQ(r.phase("nope"), nullptr);
  EXPECT_EQ(r.checksum_failures, 0u);
}

TEST(Zipfian, RankZeroFrequencyMatchesZeta) {
  const std::uint64_t n = 1000;
  const double theta = 0.9;
  ZipfianDistribution z(n, theta);
  std::mt19937_64 rng(4);
  const int draws = 200000;
  int zero = 0;
  std::uint64_t maxv = 0;
  for (int i = 0; i < draws; ++i) {
    const auto v = z(rng);
    zero += v == 0;
    maxv = std::max(maxv, v);
  }
  double zeta = 0;
  for (std::uint64_t i = 1; i <= n; ++i) zeta += std::pow(static_cast<double>(i), -theta);
  const double p = 1.0 / zeta;
  const double sd = std::sqrt(p * (1 - p) / draws);
  EXPECT_NEAR(static_cast<double>(zero) / draws, p, 5 * sd);
  EXPECT_LT(maxv, n);
}

TEST(HotSetMap, EveryRotationIsAPermutation) {
  const std::uint64_t n = 997;
  HotSet h(n, 3);
  for (std::uint64_t rot : {0ull, 1ull, 5ull, 1234ull}) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t r = 0; r < n; ++r) seen.insert(h.id(r, rot));
    EXPECT_EQ(seen.size(), n);
    EXPECT_LT(*seen.rbegin(), n);
  }
  EXPECT_NE(h.id(0, 0), h.id(0, 1));
}

TEST(Validation, BadSpecsAreConfigErrors) {
  WorkloadSpec s;
  s.local_ratio = 0;
  EXPECT_EQ(config_error_of(s), Errc::config_error);
  s = {};
  s.generator = Generator::zipfian;
  s.theta = 1.0;
  EXPECT_EQ(config_error_of(s), Errc::config_error);
  s = {};
  s.write_fraction = 0.7;
  s.replace_fraction = 0.4;
  EXPECT_EQ(config_error_of(s), Errc::config_error);
  s = {};
  s.generator = Generator::trace;
  EXPECT_EQ(config_error_of(s), Errc::config_error);
  s = {};
  s.worker_count = 0;
  EXPECT_EQ(config_error_of(s), Errc::config_error);
  EXPECT_THROW(parse_mode("swapless"), Error);
  EXPECT_THROW(parse_generator("random"), Error);
  EXPECT_EQ(parse_generator("scan"), Generator::sequential_scan);

  Config c;
  c.page_size = 3000;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.car_threshold = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.card_size = 8192;
  EXPECT_THROW(c.validate(), Error);
}
