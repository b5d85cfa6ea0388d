#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <thread>
#include <vector>

#include "wfq/bounded_queue.hpp"
#include "wfq/harness.hpp"
#include "wfq/ordering_tree.hpp"

namespace wfq {

// One completed operation with its own-step counters (native runs).
struct NativeOpMetrics {
  OpId op;
  OpKind kind = OpKind::Raw;
  bool null_deq = false;
  std::uint64_t steps = 0, cas_attempts = 0, cas_successes = 0;
};

struct NativeResult {
  History history;  // populated when record_history is set
  Metrics merged;
  std::vector<NativeOpMetrics> op_metrics;
  double seconds = 0;
  std::uint64_t total_ops = 0;
};

struct NativeConfig {
  Variant variant = Variant::Unbounded;
  int nprocs = 1;
  std::int64_t gc_period = 0;
  bool record_history = true;
};

// Execute the programs on real threads over the atomic backing. Invocation
// and response timestamps come from one global monotonic counter so the
// resulting history feeds the same checker as simulated runs.
inline NativeResult run_native(const NativeConfig& cfg,
                               const std::vector<ProcessProgram>& programs) {
  NativeMem::Env env;
  std::unique_ptr<TreeQueue<NativeMem>> uq;
  std::unique_ptr<BoundedQueue<NativeMem>> bq;
  if (cfg.variant == Variant::Unbounded)
    uq = std::make_unique<TreeQueue<NativeMem>>(env, cfg.nprocs);
  else
    bq = std::make_unique<BoundedQueue<NativeMem>>(env, cfg.nprocs,
                                                   cfg.gc_period);

  std::vector<std::unique_ptr<NativeMem::Ctx>> ctxs;
  for (int p = 0; p < cfg.nprocs; p++)
    ctxs.push_back(std::make_unique<NativeMem::Ctx>(env, p));

  std::atomic<std::uint64_t> tick{1};
  std::atomic<int> ready{0};
  std::atomic<bool> go{false};
  std::vector<std::vector<Event>> events(
      static_cast<std::size_t>(cfg.nprocs));
  std::vector<std::vector<NativeOpMetrics>> oms(
      static_cast<std::size_t>(cfg.nprocs));

  auto worker = [&](int pid) {
    auto& ctx = *ctxs[static_cast<std::size_t>(pid)];
    typename TreeQueue<NativeMem>::Handle uh;
    typename BoundedQueue<NativeMem>::Handle bh;
    if (uq) uh = uq->make_handle(pid, ctx);
    if (bq) bh = bq->make_handle(pid, ctx);
    ready.fetch_add(1);
    while (!go.load(std::memory_order_acquire)) {
    }
    std::int64_t seq = 0;
    for (const auto& spec : programs[static_cast<std::size_t>(pid)].ops) {
      seq++;
      Event ev;
      ev.op = {pid, seq};
      ev.kind = spec.kind;
      ev.arg = spec.arg;
      Metrics before = ctx.metrics();
      if (cfg.record_history) ev.invoke_ts = tick.fetch_add(1);
      std::optional<Word> res;
      if (spec.kind == OpKind::Enq) {
        if (uq)
          uq->enqueue(uh, spec.arg);
        else
          bq->enqueue(bh, spec.arg);
      } else {
        res = uq ? uq->dequeue(uh) : bq->dequeue(bh);
      }
      if (cfg.record_history) ev.response_ts = tick.fetch_add(1);
      if (spec.kind == OpKind::Enq) {
        ev.resp = RespKind::Ok;
      } else if (res.has_value()) {
        ev.resp = RespKind::Value;
        ev.resp_value = *res;
      } else {
        ev.resp = RespKind::Empty;
      }
      Metrics after = ctx.metrics();
      NativeOpMetrics om;
      om.op = ev.op;
      om.kind = ev.kind;
      om.null_deq = (ev.kind == OpKind::Deq && ev.resp == RespKind::Empty);
      om.steps = after.steps - before.steps;
      om.cas_attempts = after.cas_attempts - before.cas_attempts;
      om.cas_successes = after.cas_successes - before.cas_successes;
      oms[static_cast<std::size_t>(pid)].push_back(om);
      if (cfg.record_history)
        events[static_cast<std::size_t>(pid)].push_back(ev);
    }
  };

  std::vector<std::thread> threads;
  for (int p = 0; p < cfg.nprocs; p++) threads.emplace_back(worker, p);
  while (ready.load() != cfg.nprocs) {
  }
  auto t0 = std::chrono::steady_clock::now();
  go.store(true, std::memory_order_release);
  for (auto& t : threads) t.join();
  auto t1 = std::chrono::steady_clock::now();

  NativeResult r;
  r.seconds = std::chrono::duration<double>(t1 - t0).count();
  r.history.nprocs = cfg.nprocs;
  for (auto& evs : events)
    r.history.events.insert(r.history.events.end(), evs.begin(), evs.end());
  std::sort(r.history.events.begin(), r.history.events.end(),
            [](const Event& a, const Event& b) {
              return a.invoke_ts < b.invoke_ts;
            });
  for (auto& v : oms) {
    r.total_ops += v.size();
    r.op_metrics.insert(r.op_metrics.end(), v.begin(), v.end());
  }
  for (int p = 0; p < cfg.nprocs; p++)
    r.merged += ctxs[static_cast<std::size_t>(p)]->metrics();
  return r;
}

}  // namespace wfq
