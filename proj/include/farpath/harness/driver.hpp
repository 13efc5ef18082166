#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "farpath/harness/report.hpp"
#include "farpath/harness/trace.hpp"
#include "farpath/harness/workload.hpp"
#include "farpath/runtime.hpp"

namespace farpath {

struct Layout {
  std::size_t objects_per_page = 0;
  std::size_t working_set_pages = 0;
  std::size_t pool_pages = 0;
  std::size_t remote_pages = 0;
};

// The pool holds local_ratio of the working set, plus a few frames per worker
// for open allocation buffers.
inline Layout plan_layout(const WorkloadSpec& spec) {
  Layout l;
  const std::size_t ps = spec.page_size;
  const std::size_t avg = (spec.min_size() + spec.max_size()) / 2;
  const std::size_t extent = avg + kHeaderSize;
  if (extent >= ps) {
    l.objects_per_page = 1;
    l.working_set_pages = spec.object_count * ((avg + ps - 1) / ps);
  } else {
    l.objects_per_page = ps / extent;
    l.working_set_pages = (spec.object_count + l.objects_per_page - 1) / l.objects_per_page;
  }
  const auto local = static_cast<std::size_t>(std::ceil(spec.local_ratio * static_cast<double>(l.working_set_pages)));
  l.pool_pages = local + 4 * spec.worker_count + 4;
  l.remote_pages = std::max<std::size_t>(4 * l.working_set_pages + 1024, 4096);
  return l;
}

inline Config make_config(const WorkloadSpec& spec, const Layout& l) {
  Config c;
  c.page_size = spec.page_size;
  c.pool_capacity_pages = l.pool_pages;
  c.remote_capacity_pages = l.remote_pages;
  c.mode = spec.mode;
  c.car_threshold = spec.car_threshold;
  c.garbage_threshold = spec.garbage_threshold;
  c.max_workers = spec.worker_count;
  c.latency.mode = spec.latency_mode;
  c.audit = spec.audit;
  c.validate();
  return c;
}

class WorkloadDriver {
 public:
  explicit WorkloadDriver(const WorkloadSpec& spec, std::size_t extra_objects = 0)
      : spec_((spec.validate(), spec)),
        layout_(plan_layout(spec_)),
        rt_(std::make_unique<Runtime>(make_config(spec_, layout_))),
        capacity_(spec_.object_count + extra_objects),
        refs_(std::make_unique<UniqueRef[]>(capacity_)),
        version_(capacity_, 0),
        size_(capacity_, 0) {
    report_.spec = spec_;
    report_.pool_capacity_pages = layout_.pool_pages;
    report_.working_set_pages = layout_.working_set_pages;
  }

  ~WorkloadDriver() { rt_->stop_background(); }

  Runtime& runtime() noexcept { return *rt_; }

  RunReport run() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t W = spec_.worker_count;
    const std::uint64_t N = spec_.object_count;
    if (spec_.generator == Generator::two_phase) {
      begin_measurement(N * (1 + spec_.passes));
      run_phase("build", [&](std::size_t w) {
        std::vector<std::uint64_t> mine;
        for (std::uint64_t id = w; id < N; id += W) mine.push_back(id);
        std::mt19937_64 rng(KeyStream::mix(spec_.seed, w + 1000));
        std::shuffle(mine.begin(), mine.end(), rng);
        KeyStream sizes(spec_, w, nullptr, nullptr);
        for (std::uint64_t id : mine) {
          create(id, sizes.next_size(), w);
          op_done(w);
        }
      });
      count_ = N;
      run_scans(N);
    } else {
      load(N);
      if (spec_.generator == Generator::sequential_scan) {
        begin_measurement(N * spec_.passes);
        run_scans(N);
      } else {
        begin_measurement(spec_.op_count);
        std::unique_ptr<ZipfianDistribution> zipf;
        std::unique_ptr<HotSet> hot;
        if (spec_.generator == Generator::zipfian) {
          zipf = std::make_unique<ZipfianDistribution>(N, spec_.theta);
          hot = std::make_unique<HotSet>(N, spec_.seed);
        }
        run_phase("run", [&](std::size_t w) {
          KeyStream ks(spec_, w, zipf.get(), hot.get());
          const std::uint64_t ops = spec_.op_count / W + (w < spec_.op_count % W ? 1 : 0);
          for (std::uint64_t i = 0; i < ops; ++i) {
            std::uint64_t key = ks.next_key();
            OpKind op = ks.next_op();
            if (op != OpKind::get && key % W != w) {
              key = key - key % W + w;
              if (key >= N) op = OpKind::get, key = ks.next_key();
            }
            execute(op, key, w, ks);
            op_done(w);
          }
        });
      }
    }
    return finish(t0);
  }

  RunReport replay(const std::vector<TraceOp>& ops) {
    const auto t0 = std::chrono::steady_clock::now();
    load(spec_.object_count);
    begin_measurement(ops.size());
    std::string phase = "trace";
    std::size_t i = 0;
    for (;;) {
      std::size_t end = i;
      while (end < ops.size() && ops[end].kind != TraceOp::phase) ++end;
      // A trace that opens with a phase marker has no unnamed leading phase.
      if (!(i == 0 && end == 0 && !ops.empty()))
        run_phase(phase, [&](std::size_t) {
          for (std::size_t k = i; k < end; ++k) {
            replay_op(ops[k]);
            op_done(0);
          }
        });
      if (end == ops.size()) break;
      phase = ops[end].name;
      i = end + 1;
    }
    return finish(t0);
  }

 private:
  template <class Body>
  void run_phase(const std::string& name, Body body) {
    phase_ = name;
    const LedgerSnapshot before = rt_->ledger();
    const std::uint64_t ops_before = ops_done_.load();
    const std::size_t first_sample = report_.samples.size();
    const std::size_t W = spec_.worker_count;
    if (W == 1) {
      body(0);
    } else {
      std::vector<std::thread> threads;
      std::vector<std::exception_ptr> errors(W);
      for (std::size_t w = 0; w < W; ++w)
        threads.emplace_back([&, w] {
          try {
            body(w);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      for (auto& t : threads) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    sample();
    PhaseReport p;
    p.name = name;
    p.ops = ops_done_.load() - ops_before;
    p.ledger = rt_->ledger() - before;
    double sum = 0.0;
    for (std::size_t i = first_sample; i < report_.samples.size(); ++i) sum += report_.samples[i].psf_paging_fraction;
    p.psf_paging_fraction = sum / static_cast<double>(report_.samples.size() - first_sample);
    report_.phases.push_back(std::move(p));
  }

  void run_scans(std::uint64_t N) {
    const std::size_t W = spec_.worker_count;
    for (std::uint32_t pass = 1; pass <= spec_.passes; ++pass) {
      run_phase("scan" + std::to_string(pass), [&](std::size_t w) {
        KeyStream ks(spec_, w, nullptr, nullptr);
        const std::uint64_t lo = N * w / W, hi = N * (w + 1) / W;
        for (std::uint64_t id = lo; id < hi; ++id) {
          execute(OpKind::get, id, w, ks);
          op_done(w);
        }
      });
    }
  }

  void load(std::uint64_t n) {
    phase_ = "load";
    KeyStream sizes(spec_, 0, nullptr, nullptr);
    for (std::uint64_t id = 0; id < n; ++id) create(id, sizes.next_size(), 0);
    count_ = n;
  }

  void begin_measurement(std::uint64_t expected_ops) {
    tick_every_ = std::max<std::uint64_t>(1, expected_ops / spec_.sample_ticks);
    next_tick_ = tick_every_;
    start_ = rt_->ledger();
    if (spec_.worker_count > 1) rt_->start_background();
  }

  RunReport finish(std::chrono::steady_clock::time_point t0) {
    rt_->stop_background();
    report_.ledger = rt_->ledger() - start_;
    report_.ops = ops_done_.load();
    report_.stats = rt_->stats();
    if (spec_.verify) {
      for (std::uint64_t id = 0; id < count_; ++id) {
        DerefScope s = rt_->deref(refs_[id], 0);
        report_.objects_verified++;
        if (!matches(s, id)) report_.checksum_failures++;
      }
    }
    report_.checksum_failures += failures_.load();
    report_.pinned_pages_at_end = rt_->pinned_pages();
    if (spec_.audit) {
      report_.audited = true;
      report_.audit = rt_->audit_events();
    }
    report_.stats = rt_->stats();
    report_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report_;
  }

  void op_done(std::size_t w) {
    const std::uint64_t done = ops_done_.fetch_add(1, std::memory_order_relaxed) + 1;
    if (w != 0 || done < next_tick_) return;
    next_tick_ = done + tick_every_;
    // A single worker has no background evacuator; the tick drives it.
    if (spec_.worker_count == 1) rt_->evacuation_cycle();
    sample();
  }

  void sample() {
    Sample s;
    s.op = ops_done_.load();
    s.phase = phase_;
    s.ledger = rt_->ledger() - start_;
    s.psf_paging_fraction = rt_->psf_paging_fraction();
    s.resident_pages = rt_->memory().pool().resident();
    std::lock_guard<std::mutex> g(sample_mu_);
    report_.samples.push_back(std::move(s));
  }

  bool read_only() const noexcept { return spec_.write_fraction == 0 && spec_.replace_fraction == 0; }

  std::vector<std::byte>& scratch(std::size_t n) {
    thread_local std::vector<std::byte> buf;
    buf.resize(n);
    return buf;
  }

  bool matches(const DerefScope& s, std::uint64_t id) {
    auto& got = scratch(2 * size_[id]);
    std::span<std::byte> actual(got.data(), size_[id]);
    std::span<std::byte> expected(got.data() + size_[id], size_[id]);
    s.read(0, actual);
    fill_content(id, version_[id], expected);
    return std::equal(actual.begin(), actual.end(), expected.begin());
  }

  void create(std::uint64_t id, std::size_t size, std::size_t w) {
    auto& buf = scratch(size);
    fill_content(id, 0, buf);
    rt_->allocate(refs_[id], size, w, buf);
    size_[id] = static_cast<std::uint32_t>(size);
    version_[id] = 0;
  }

  bool huge(std::uint64_t id) const noexcept { return size_[id] > rt_->max_object_size(); }

  void execute(OpKind op, std::uint64_t id, std::size_t w, KeyStream& ks) {
    const bool owned = id % spec_.worker_count == w;
    if (op == OpKind::replace) {
      const std::size_t size = ks.next_size();
      if (huge(id) || size > rt_->max_object_size()) {
        op = OpKind::set;
      } else {
        auto& buf = scratch(size);
        fill_content(id, version_[id] + 1, buf);
        rt_->reassign(refs_[id], size, w, buf);
        version_[id]++;
        size_[id] = static_cast<std::uint32_t>(size);
        return;
      }
    }
    if (op == OpKind::set) {
      auto& buf = scratch(size_[id]);
      fill_content(id, version_[id] + 1, buf);
      DerefScope s = rt_->deref(refs_[id], w);
      s.write(0, buf);
      version_[id]++;
      return;
    }
    DerefScope s = rt_->deref(refs_[id], w);
    if (spec_.verify && (owned || read_only()) && !matches(s, id)) failures_.fetch_add(1, std::memory_order_relaxed);
  }

  void replay_op(const TraceOp& op) {
    if (op.kind == TraceOp::get) {
      if (op.id >= count_) throw ParseError(op.line, "object " + std::to_string(op.id) + " was never allocated");
      DerefScope s = rt_->deref(refs_[op.id], 0);
      if (spec_.verify && !matches(s, op.id)) failures_.fetch_add(1);
      return;
    }
    if (op.id > count_) throw ParseError(op.line, "object ids must be allocated in order");
    if (op.size > rt_->max_object_size() && op.id < count_ && op.size != size_[op.id])
      throw ParseError(op.line, "huge objects cannot be resized");
    if (op.id == count_) {
      if (count_ == capacity_) throw ParseError(op.line, "more objects than planned");
      create(op.id, op.size, 0);
      ++count_;
      return;
    }
    auto& buf = scratch(op.size);
    fill_content(op.id, version_[op.id] + 1, buf);
    if (op.size == size_[op.id]) {
      DerefScope s = rt_->deref(refs_[op.id], 0);
      s.write(0, buf);
    } else {
      rt_->reassign(refs_[op.id], op.size, 0, buf);
      size_[op.id] = static_cast<std::uint32_t>(op.size);
    }
    version_[op.id]++;
  }

  WorkloadSpec spec_;
  Layout layout_;
  std::unique_ptr<Runtime> rt_;
  std::size_t capacity_;
  std::unique_ptr<UniqueRef[]> refs_;
  std::vector<std::uint32_t> version_;
  std::vector<std::uint32_t> size_;
  std::uint64_t count_ = 0;

  RunReport report_;
  LedgerSnapshot start_;
  std::string phase_;
  std::mutex sample_mu_;
  std::atomic<std::uint64_t> ops_done_{0};
  std::uint64_t tick_every_ = 1;
  std::uint64_t next_tick_ = 1;
  std::atomic<std::uint64_t> failures_{0};
};

inline RunReport replay_trace(const std::vector<TraceOp>& ops, WorkloadSpec spec) {
  spec.generator = Generator::trace;
  spec.worker_count = 1;
  if (spec.trace_path.empty()) spec.trace_path = "-";
  std::size_t fresh = 0;
  for (const auto& op : ops)
    if (op.kind == TraceOp::set) fresh++;
  WorkloadDriver d(spec, fresh);
  return d.replay(ops);
}

inline RunReport replay_trace(const std::string& path, WorkloadSpec spec = {}) {
  spec.trace_path = path;
  return replay_trace(parse_trace_file(path), spec);
}

inline RunReport run_workload(const WorkloadSpec& spec) {
  if (spec.generator == Generator::trace) return replay_trace(spec.trace_path, spec);
  WorkloadDriver d(spec);
  return d.run();
}

}  // namespace farpath
