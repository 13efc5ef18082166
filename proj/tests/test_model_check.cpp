#include <gtest/gtest.h>

#include <set>

#include "model_check.hpp"

using namespace farpath;
using namespace farpath::test;

TEST(ModelCheck, SchedulerEnumeratesEveryInterleaving) {
  // Two threads of three steps each: C(6,3) = 20 orders when the depth
  // covers every choice.
  std::size_t runs = 0;
  std::vector<std::size_t> prefix;
  std::set<std::string> orders;
  for (;;) {
    ModelScheduler sched(prefix, 64, [] {});
    std::string order;
    std::vector<std::function<void()>> bodies;
    for (char c : {'a', 'b'})
      bodies.push_back([&order, c] {
        for (int i = 0; i < 3; ++i) {
          ModelHooks::point(SyncPoint::post_barrier);
          order += c;
        }
      });
    const auto trace = sched.run(bodies);
    ++runs;
    orders.insert(order);
    auto next = next_prefix(trace);
    if (!next) break;
    prefix = std::move(*next);
  }
  EXPECT_EQ(orders.size(), 20u);
  EXPECT_GE(runs, 20u);
}

TEST(ModelCheck, SingleProgramsAreClean) {
  for (Start s : {Start::local, Start::remote_runtime, Start::remote_paging}) {
    SmallModel m(s);
    m.step(0, Op::pre);
    m.check();
    m.step(1, Op::page_out);
    m.check();
    m.step(1, Op::evacuate);
    m.check();
    m.step(0, Op::post);
    ModelResult r;
    m.finish(r, start_name(s));
    EXPECT_TRUE(r.ok()) << r.first_failure;
  }
}

TEST(ModelCheck, ShallowExhaustiveSearch) {
  const ModelResult r = explore_all(4);
  EXPECT_GT(r.schedules, 243u);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(ModelCheck, OperationSequences) {
  const ModelResult r = enumerate_sequences(5);
  EXPECT_EQ(r.schedules, 3u * 1024u);
  EXPECT_TRUE(r.ok()) << r.first_failure;
}
