#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wfq/bounded_queue.hpp"
#include "wfq/checker.hpp"
#include "wfq/common.hpp"
#include "wfq/hooks.hpp"
#include "wfq/ordering_tree.hpp"
#include "wfq/sim_exec.hpp"

namespace wfq {

enum class Variant { Unbounded, Bounded };

// One process's operation list. Enqueue tags must be unique workload-wide.
struct ProcessProgram {
  std::vector<SimExec::OpSpec> ops;
};

inline std::vector<ProcessProgram> make_workload(int nprocs,
                                                 int ops_per_proc,
                                                 double enq_fraction,
                                                 std::uint64_t seed) {
  SplitMix64 rng(seed ^ 0x77f0cafeULL);
  std::vector<ProcessProgram> progs(static_cast<std::size_t>(nprocs));
  Word tag = 1;
  for (int p = 0; p < nprocs; p++)
    for (int k = 0; k < ops_per_proc; k++) {
      if (rng.unit() < enq_fraction)
        progs[static_cast<std::size_t>(p)].ops.push_back(
            {OpKind::Enq, tag++});
      else
        progs[static_cast<std::size_t>(p)].ops.push_back({OpKind::Deq, 0});
    }
  return progs;
}

// Enqueue-heavy prefix workload: process 0 first enqueues `prefill` values,
// then every process runs `ops_per_proc` mixed operations.
inline std::vector<ProcessProgram> make_prefilled_workload(
    int nprocs, int prefill, int ops_per_proc, double enq_fraction,
    std::uint64_t seed) {
  auto progs = make_workload(nprocs, ops_per_proc, enq_fraction, seed);
  std::vector<SimExec::OpSpec> pre;
  for (int i = 0; i < prefill; i++)
    pre.push_back({OpKind::Enq, 1000000000ull + static_cast<Word>(i)});
  auto& p0 = progs[0].ops;
  p0.insert(p0.begin(), pre.begin(), pre.end());
  return progs;
}

struct RunConfig {
  Variant variant = Variant::Unbounded;
  int nprocs = 1;
  std::int64_t gc_period = 0;  // bounded only; 0 = default p^2*ceil(log2 p)
  bool hooks = true;
  bool skip_second_refresh = false;  // mutation, test only
  bool skip_help_advance = false;    // mutation, test only
  int chunk_log2 = 8;
  std::int64_t dir_slots = 1 << 10;
  std::size_t fiber_stack = 256 * 1024;
};

// A deterministic simulated run of queue programs: owns the executor, the
// queue instance, per-process handles and the invariant hooks.
class QueueSimRun {
 public:
  QueueSimRun(const RunConfig& cfg, std::vector<ProcessProgram> programs)
      : cfg_(cfg), programs_(std::move(programs)) {
    exec_ = std::make_unique<SimExec>(cfg_.nprocs, cfg_.fiber_stack);
    if (cfg_.variant == Variant::Unbounded) {
      typename TreeQueue<SimMem>::Tuning t;
      t.chunk_log2 = cfg_.chunk_log2;
      t.dir_slots = cfg_.dir_slots;
      typename TreeQueue<SimMem>::Mutations m;
      m.skip_second_refresh = cfg_.skip_second_refresh;
      m.skip_help_advance = cfg_.skip_help_advance;
      uq_ = std::make_unique<TreeQueue<SimMem>>(*exec_, cfg_.nprocs, t, m);
      if (cfg_.hooks) {
        uinv_ = std::make_unique<UnboundedInvariants>(*exec_, *uq_);
        uinv_->install();
      }
      for (int p = 0; p < cfg_.nprocs; p++)
        uh_.push_back(uq_->make_handle(p, exec_->ctx(p)));
    } else {
      typename BoundedQueue<SimMem>::Mutations m;
      m.skip_second_refresh = cfg_.skip_second_refresh;
      bq_ = std::make_unique<BoundedQueue<SimMem>>(*exec_, cfg_.nprocs,
                                                   cfg_.gc_period, m);
      if (cfg_.hooks) {
        binv_ = std::make_unique<BoundedInvariants>(*exec_, *bq_);
        binv_->install();
      }
      for (int p = 0; p < cfg_.nprocs; p++)
        bh_.push_back(bq_->make_handle(p, exec_->ctx(p)));
    }
    for (int p = 0; p < cfg_.nprocs; p++) {
      SimExec::Program prog;
      for (const auto& spec : programs_[static_cast<std::size_t>(p)].ops) {
        if (spec.kind == OpKind::Enq) {
          Word tag = spec.arg;
          if (uq_) {
            auto* q = uq_.get();
            auto* h = &uh_[static_cast<std::size_t>(p)];
            prog.push_back({spec, [q, h, tag]() {
                              q->enqueue(*h, tag);
                              return std::optional<Word>{};
                            }});
          } else {
            auto* q = bq_.get();
            auto* h = &bh_[static_cast<std::size_t>(p)];
            prog.push_back({spec, [q, h, tag]() {
                              q->enqueue(*h, tag);
                              return std::optional<Word>{};
                            }});
          }
        } else {
          if (uq_) {
            auto* q = uq_.get();
            auto* h = &uh_[static_cast<std::size_t>(p)];
            prog.push_back({spec, [q, h]() { return q->dequeue(*h); }});
          } else {
            auto* q = bq_.get();
            auto* h = &bh_[static_cast<std::size_t>(p)];
            prog.push_back({spec, [q, h]() { return q->dequeue(*h); }});
          }
        }
      }
      exec_->set_program(p, std::move(prog));
    }
  }

  SimExec& exec() { return *exec_; }
  const RunConfig& config() const { return cfg_; }
  TreeQueue<SimMem>* unbounded() { return uq_.get(); }
  BoundedQueue<SimMem>* bounded() { return bq_.get(); }
  typename TreeQueue<SimMem>::Handle& uhandle(int pid) {
    return uh_[static_cast<std::size_t>(pid)];
  }
  typename BoundedQueue<SimMem>::Handle& bhandle(int pid) {
    return bh_[static_cast<std::size_t>(pid)];
  }
  UnboundedInvariants* unbounded_invariants() { return uinv_.get(); }
  BoundedInvariants* bounded_invariants() { return binv_.get(); }

  void step(int pid) { exec_->step(pid); }
  bool process_active(int pid) const { return exec_->process_active(pid); }
  bool all_done() const { return exec_->all_done(); }
  std::vector<int> active_pids() const { return exec_->active_pids(); }
  bool has_failures() const { return exec_->has_failures(); }
  const std::vector<AssertionFailure>& failures() const {
    return exec_->failures();
  }
  const History& history() const { return exec_->history(); }
  std::pair<std::uint64_t, std::uint64_t> memo_key() const {
    return exec_->memo_key();
  }

  // Run `pid` until `pred()` holds, checking after every step. Returns false
  // if the process went idle or `max_steps` elapsed first.
  bool run_until(int pid, const std::function<bool()>& pred,
                 std::uint64_t max_steps = 100000) {
    for (std::uint64_t k = 0; k < max_steps; k++) {
      if (pred()) return true;
      if (!process_active(pid)) return false;
      step(pid);
    }
    return false;
  }

  // Run `pid` until its current operation completes (and no further op
  // starts).
  void run_op_to_completion(int pid) {
    const auto base = completed_ops(pid);
    while (process_active(pid) && completed_ops(pid) == base) step(pid);
  }

  std::size_t completed_ops(int pid) const {
    std::size_t n = 0;
    for (const auto& e : exec_->history().events)
      if (e.op.pid == pid && e.completed()) n++;
    return n;
  }

  // Quiescent structure checks (no-op when hooks are off).
  void final_sweep() {
    if (uinv_) {
      uinv_->final_sweep();
      int c = history().point_contention();
      if (uinv_->max_direct_subblocks() > c)
        exec_->fail("subblocks-vs-contention",
                    "a block has more direct subblocks than the measured "
                    "point contention " +
                        std::to_string(c));
    }
  }

  Linearization extract_linearization() const {
    if (uq_) return uq_->extract_linearization_raw();
    return extract_bounded();
  }

 private:
  Linearization extract_bounded() const {
    Linearization lin;
    const auto* root = bq_->all_nodes()[0].get();
    const auto* ver = bq_->version_raw(root);
    std::int64_t min_idx = ver->min_blk->index;
    if (min_idx > 1) lin.partial = true;
    for (std::int64_t i = std::max<std::int64_t>(1, min_idx);
         i <= ver->max_blk->index; i++) {
      std::vector<LinOp> E, D;
      bool complete = expand_bounded(root, i, E, D);
      if (!complete) {
        lin.partial = true;
        lin.segments.clear();
        lin.sizes.clear();
        continue;  // only the intact suffix is reported
      }
      std::vector<LinOp> seg = std::move(E);
      seg.insert(seg.end(), D.begin(), D.end());
      lin.segments.push_back(std::move(seg));
      const Block<SimMem>* b = find_raw(root, i);
      lin.sizes.push_back(b ? b->size : 0);
    }
    return lin;
  }

  const Block<SimMem>* find_raw(const BoundedQueue<SimMem>::Node* v,
                                std::int64_t i) const {
    const auto* ver = bq_->version_raw(v);
    const auto* n = ver->root;
    while (n != nullptr) {
      if (n->blk->index == i) return n->blk;
      n = i < n->blk->index ? n->left : n->right;
    }
    return nullptr;
  }

  bool expand_bounded(const BoundedQueue<SimMem>::Node* v, std::int64_t i,
                      std::vector<LinOp>& E, std::vector<LinOp>& D) const {
    const Block<SimMem>* b = find_raw(v, i);
    if (b == nullptr) return false;
    if (v->is_leaf) {
      LinOp op{{v->pid, i}, b->is_enq ? OpKind::Enq : OpKind::Deq, b->element};
      (b->is_enq ? E : D).push_back(op);
      return true;
    }
    const Block<SimMem>* prev = find_raw(v, i - 1);
    if (prev == nullptr) return false;
    for (std::int64_t j = prev->end_left + 1; j <= b->end_left; j++)
      if (!expand_bounded(v->left, j, E, D)) return false;
    for (std::int64_t j = prev->end_right + 1; j <= b->end_right; j++)
      if (!expand_bounded(v->right, j, E, D)) return false;
    return true;
  }

  RunConfig cfg_;
  std::vector<ProcessProgram> programs_;
  std::unique_ptr<SimExec> exec_;
  std::unique_ptr<TreeQueue<SimMem>> uq_;
  std::unique_ptr<BoundedQueue<SimMem>> bq_;
  std::vector<typename TreeQueue<SimMem>::Handle> uh_;
  std::vector<typename BoundedQueue<SimMem>::Handle> bh_;
  std::unique_ptr<UnboundedInvariants> uinv_;
  std::unique_ptr<BoundedInvariants> binv_;
};

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

// Sequence of process ids; each entry grants one shared-cell access.
using Schedule = std::vector<int>;

// Geometric context-switch policy: with probability switch_prob pick a
// uniformly random active process, otherwise keep running the current one.
template <class Run>
Schedule run_random(Run& run, std::uint64_t seed, double switch_prob,
                    std::uint64_t max_steps = ~0ull) {
  SplitMix64 rng(seed);
  Schedule sched;
  int cur = -1;
  while (!run.all_done() && sched.size() < max_steps) {
    auto active = run.active_pids();
    if (active.empty()) break;
    bool stay = cur >= 0 && run.process_active(cur);
    if (!stay || rng.unit() < switch_prob) {
      cur = active[static_cast<std::size_t>(
          rng.below(static_cast<std::uint64_t>(active.size())))];
    }
    run.step(cur);
    sched.push_back(cur);
  }
  return sched;
}

// Materialize the schedule a (seed, switch_prob) policy would produce.
inline Schedule generate_random(const RunConfig& cfg,
                                const std::vector<ProcessProgram>& progs,
                                std::uint64_t seed, double switch_prob) {
  QueueSimRun run(cfg, progs);
  return run_random(run, seed, switch_prob);
}

// Replay an explicit schedule. Returns false (and stops) if an entry names a
// process with no steps remaining.
template <class Run>
bool run_schedule(Run& run, const Schedule& sched) {
  for (int pid : sched) {
    if (pid < 0 || !run.process_active(pid)) return false;
    run.step(pid);
  }
  return true;
}

// Deterministic round-robin completion of whatever is still pending.
template <class Run>
void drain(Run& run, std::uint64_t max_steps = ~0ull) {
  std::uint64_t k = 0;
  while (!run.all_done() && k < max_steps) {
    for (int pid : run.active_pids()) {
      run.step(pid);
      k++;
    }
  }
}

}  // namespace wfq
