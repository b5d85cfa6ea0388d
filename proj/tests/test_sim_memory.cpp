#include <doctest.h>

#include "wfq/explorer.hpp"
#include "wfq/sim_exec.hpp"

using namespace wfq;

namespace {

// Minimal run over raw cells for exercising the executor itself.
struct RawRun {
  explicit RawRun(int nprocs) : exec(nprocs) {}
  SimExec exec;
  std::vector<SimCell> cells{8};

  void step(int pid) { exec.step(pid); }
  bool process_active(int pid) const { return exec.process_active(pid); }
  bool all_done() const { return exec.all_done(); }
  std::vector<int> active_pids() const { return exec.active_pids(); }
  bool has_failures() const { return exec.has_failures(); }
  const std::vector<AssertionFailure>& failures() const {
    return exec.failures();
  }
  const History& history() const { return exec.history(); }
  std::pair<std::uint64_t, std::uint64_t> memo_key() const {
    return exec.memo_key();
  }
};

SimExec::Op raw_op(std::function<std::optional<Word>()> f) {
  return {{OpKind::Raw, 0}, std::move(f)};
}

}  // namespace

TEST_CASE("read returns unset initially and last write afterwards") {
  RawRun r(1);
  auto& ctx = r.exec.ctx(0);
  Word seen_first = 99, seen_second = 99;
  SimExec::Program p;
  p.push_back(raw_op([&]() -> std::optional<Word> {
    seen_first = ctx.read(r.cells[0]);
    ctx.write(r.cells[0], 5);
    seen_second = ctx.read(r.cells[0]);
    return std::nullopt;
  }));
  r.exec.set_program(0, std::move(p));
  while (!r.all_done()) r.step(0);
  CHECK(seen_first == kUnset);
  CHECK(seen_second == 5);
  CHECK(r.exec.metrics_of(0).steps == 3);
}

TEST_CASE("cas semantics: success from unset, failure on mismatch") {
  RawRun r(1);
  auto& ctx = r.exec.ctx(0);
  bool ok1 = false, ok2 = true;
  Word after = 0;
  SimExec::Program p;
  p.push_back(raw_op([&]() -> std::optional<Word> {
    ok1 = ctx.cas(r.cells[0], kUnset, 7);
    ok2 = ctx.cas(r.cells[0], 6, 8);
    after = ctx.read(r.cells[0]);
    return std::nullopt;
  }));
  r.exec.set_program(0, std::move(p));
  while (!r.all_done()) r.step(0);
  CHECK(ok1);
  CHECK_FALSE(ok2);
  CHECK(after == 7);
  auto m = r.exec.metrics_of(0);
  CHECK(m.cas_attempts == 2);
  CHECK(m.cas_successes == 1);
  CHECK(m.steps >= m.cas_attempts);
}

TEST_CASE("exhaustive: two racing CAS from unset, exactly one wins") {
  int interleavings = 0;
  auto make = [&]() {
    auto r = std::make_unique<RawRun>(2);
    for (int pid = 0; pid < 2; pid++) {
      auto* rr = r.get();
      SimExec::Program p;
      p.push_back(raw_op([rr, pid]() -> std::optional<Word> {
        bool ok = rr->exec.ctx(pid).cas(rr->cells[0], kUnset,
                                        static_cast<Word>(pid + 1));
        return ok ? std::optional<Word>(1) : std::optional<Word>(0);
      }));
      rr->exec.set_program(pid, std::move(p));
    }
    return r;
  };
  EnumStats st = enumerate_all<RawRun>(
      make, 100, [&](const Schedule&, RawRun& r) {
        interleavings++;
        int winners = 0;
        for (const auto& e : r.history().events)
          if (e.resp_value == 1) winners++;
        CHECK(winners == 1);
        CHECK(r.cells[0].v != kUnset);
      });
  CHECK(st.schedules == 2);  // one shared step each
  CHECK(!st.truncated);
  CHECK(interleavings == 2);
}

TEST_CASE("exhaustive: reads at adjacent steps see the same value") {
  // process 0 writes 5 then 6; process 1 reads twice; in every interleaving
  // the two reads observe a non-decreasing pair from {unset,5,6}
  auto make = [&]() {
    auto r = std::make_unique<RawRun>(2);
    auto* rr = r.get();
    SimExec::Program p0, p1;
    p0.push_back(raw_op([rr]() -> std::optional<Word> {
      rr->exec.ctx(0).write(rr->cells[0], 5);
      rr->exec.ctx(0).write(rr->cells[0], 6);
      return std::nullopt;
    }));
    p1.push_back(raw_op([rr]() -> std::optional<Word> {
      Word a = rr->exec.ctx(1).read(rr->cells[0]);
      Word b = rr->exec.ctx(1).read(rr->cells[0]);
      return a * 16 + b;
    }));
    rr->exec.set_program(0, std::move(p0));
    rr->exec.set_program(1, std::move(p1));
    return r;
  };
  EnumStats st = enumerate_all<RawRun>(
      make, 100, [&](const Schedule&, RawRun& r) {
        for (const auto& e : r.history().events) {
          if (e.op.pid != 1) continue;
          Word a = e.resp_value / 16, b = e.resp_value % 16;
          CHECK(a <= b);  // monotone writes, sequentially consistent reads
          CHECK((a == 0 || a == 5 || a == 6));
          CHECK((b == 0 || b == 5 || b == 6));
        }
      });
  CHECK(st.schedules == 6);  // C(4,2) interleavings of 2+2 steps
}

TEST_CASE("single-writer discipline is enforced for owned cells") {
  RawRun r(2);
  SimMem::label(r.cells[3], CellRole::Other, 0, /*owner=*/0, 0);
  SimExec::Program p1;
  p1.push_back(raw_op([&]() -> std::optional<Word> {
    r.exec.ctx(1).write(r.cells[3], 1);  // process 1 writes process 0's cell
    return std::nullopt;
  }));
  r.exec.set_program(1, std::move(p1));
  while (!r.all_done()) r.step(1);
  REQUIRE(r.has_failures());
  CHECK(r.failures()[0].hook == "single-writer");
}

TEST_CASE("owned leaf-style appends are readable at their indices") {
  RawRun r(1);
  SimMem::label(r.cells[1], CellRole::Other, 0, 0, 1);
  SimMem::label(r.cells[2], CellRole::Other, 0, 0, 2);
  SimExec::Program p;
  p.push_back(raw_op([&]() -> std::optional<Word> {
    auto& ctx = r.exec.ctx(0);
    ctx.write(r.cells[1], 11);
    ctx.write(r.cells[2], 22);
    return ctx.read(r.cells[1]) + ctx.read(r.cells[2]);
  }));
  r.exec.set_program(0, std::move(p));
  while (!r.all_done()) r.step(0);
  CHECK(r.history().events[0].resp_value == 33);
  CHECK(!r.has_failures());
}

TEST_CASE("determinism: identical programs and schedules give identical"
          " histories and metrics") {
  auto build = [&]() {
    auto r = std::make_unique<RawRun>(2);
    auto* rr = r.get();
    for (int pid = 0; pid < 2; pid++) {
      SimExec::Program p;
      p.push_back(raw_op([rr, pid]() -> std::optional<Word> {
        auto& ctx = rr->exec.ctx(pid);
        ctx.cas(rr->cells[0], kUnset, static_cast<Word>(pid + 1));
        return ctx.read(rr->cells[0]);
      }));
      rr->exec.set_program(pid, std::move(p));
    }
    return r;
  };
  Schedule s{0, 1, 1, 0};
  auto r1 = build();
  auto r2 = build();
  run_schedule(*r1, s);
  run_schedule(*r2, s);
  REQUIRE(r1->history().events.size() == r2->history().events.size());
  for (std::size_t i = 0; i < r1->history().events.size(); i++) {
    const auto& a = r1->history().events[i];
    const auto& b = r2->history().events[i];
    CHECK(a.op == b.op);
    CHECK(a.resp_value == b.resp_value);
    CHECK(a.invoke_ts == b.invoke_ts);
    CHECK(a.response_ts == b.response_ts);
  }
  CHECK(r1->exec.metrics_of(0).steps == r2->exec.metrics_of(0).steps);
  CHECK(r1->memo_key() == r2->memo_key());
}

TEST_CASE("enumerate_all counts multinomial interleavings for toy programs") {
  // 2 processes x 1 step -> 2 schedules; already covered above. 3 processes
  // x 1 step each -> 3! = 6.
  auto make = [&]() {
    auto r = std::make_unique<RawRun>(3);
    auto* rr = r.get();
    for (int pid = 0; pid < 3; pid++) {
      SimExec::Program p;
      p.push_back(raw_op([rr, pid]() -> std::optional<Word> {
        rr->exec.ctx(pid).read(rr->cells[static_cast<std::size_t>(pid)]);
        return std::nullopt;
      }));
      rr->exec.set_program(pid, std::move(p));
    }
    return r;
  };
  EnumStats st =
      enumerate_all<RawRun>(make, 100, [](const Schedule&, RawRun&) {});
  CHECK(st.schedules == 6);
}
