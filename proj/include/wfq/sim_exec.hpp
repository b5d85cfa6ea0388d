#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "wfq/common.hpp"
#include "wfq/fiber.hpp"
#include "wfq/history.hpp"
#include "wfq/memory.hpp"

namespace wfq {

// What one shared-memory step did. Passed to invariant hooks right after the
// access takes effect, before the process continues.
struct StepInfo {
  enum class Kind : std::uint8_t { Read, Write, Cas };
  int pid = -1;
  Kind kind = Kind::Read;
  SimCell* cell = nullptr;
  Word before = 0;
  Word after = 0;
  Word attempted = 0;  // value written / CAS-desired
  bool cas_ok = false;
  std::uint64_t tick = 0;        // global event tick of this step
  std::uint64_t step_index = 0;  // # shared accesses performed before this one
};

struct AssertionFailure {
  std::string hook;
  std::string detail;
  std::uint64_t step_index = 0;
  int pid = -1;
};

class SimExec;

// Per-process accessor handed to queue code instantiated with SimMem.
// A context with pid < 0 is an "inspector": it accesses cells immediately,
// without scheduling, metering or logging. Inspectors are used by tests,
// invariant hooks and quiescent extraction.
class SimMem::Ctx {
 public:
  Ctx(SimExec& e, int pid) : exec_(&e), pid_(pid) {}
  Ctx(const Ctx&) = delete;
  Ctx& operator=(const Ctx&) = delete;

  inline Word read(SimCell& c);
  inline void write(SimCell& c, Word w);
  inline bool cas(SimCell& c, Word expected, Word desired);
  inline void local_fetch(std::uint64_t n = 1);
  template <class T, class... Args>
  T* create(Args&&... args);
  inline void* allocate(std::size_t bytes, std::size_t align);
  inline void note_container(std::int64_t n);
  inline void note_missing_block(SimCell* response_cell);
  inline Metrics& metrics();

  int pid() const { return pid_; }
  bool is_inspector() const { return pid_ < 0; }
  SimExec& exec() { return *exec_; }

 private:
  friend class SimExec;
  SimExec* exec_;
  int pid_;
};

// Deterministic single-threaded executor. Each simulated process runs on a
// fiber; every mutable shared-cell access suspends the fiber, the executor
// applies the access, runs invariant hooks, and resumes. One step() call
// performs exactly one shared-cell access of the chosen process.
class SimExec {
 public:
  struct OpSpec {
    OpKind kind = OpKind::Raw;
    Word arg = 0;
  };
  struct Op {
    OpSpec spec;
    std::function<std::optional<Word>()> body;  // runs on the process fiber
  };
  using Program = std::vector<Op>;

  explicit SimExec(int nprocs, std::size_t fiber_stack = 256 * 1024)
      : inspector_(*this, -1) {
    history_.nprocs = nprocs;
    procs_.reserve(static_cast<std::size_t>(nprocs));
    for (int p = 0; p < nprocs; p++)
      procs_.push_back(std::make_unique<Proc>(*this, p, fiber_stack));
  }

  SimExec(const SimExec&) = delete;
  SimExec& operator=(const SimExec&) = delete;

  int nprocs() const { return static_cast<int>(procs_.size()); }
  Arena& arena() { return arena_; }
  SimMem::Ctx& ctx(int pid) { return procs_[pid]->ctx; }
  SimMem::Ctx& inspector() { return inspector_; }

  void set_program(int pid, Program prog) {
    Proc& P = *procs_[pid];
    assert(P.state == Proc::State::Idle && P.next_op == 0);
    P.program = std::move(prog);
    max_ops_ = 1;
    for (auto& q : procs_) max_ops_ = std::max(max_ops_, q->program.size());
    std::size_t n = procs_.size() * max_ops_;
    prec_bits_.assign((n * n + 63) / 64, 0);
  }

  bool process_active(int pid) const {
    const Proc& P = *procs_[pid];
    return P.state != Proc::State::Idle ||
           P.next_op < static_cast<int>(P.program.size());
  }
  bool all_done() const {
    for (const auto& p : procs_)
      if (process_active(p->pid)) return false;
    return true;
  }
  std::vector<int> active_pids() const {
    std::vector<int> out;
    for (const auto& p : procs_)
      if (process_active(p->pid)) out.push_back(p->pid);
    return out;
  }

  // Grant one shared-cell access to `pid`. Lazily invokes the process's next
  // operation first if it is idle.
  void step(int pid) {
    Proc& P = *procs_[pid];
    assert(process_active(pid));
    if (P.state == Proc::State::Idle) invoke_next(P);
    assert(P.state == Proc::State::AtAccess);
    perform_access(P);
    P.fiber.resume(&sched_sp_);
    if (P.op_done) complete_op(P);
  }

  std::uint64_t total_steps() const { return total_steps_; }

  // --- results ---
  const History& history() const { return history_; }
  Metrics metrics_of(int pid) const { return procs_[pid]->metrics; }
  Metrics merged_metrics() const {
    Metrics m;
    for (const auto& p : procs_) m += p->metrics;
    return m;
  }
  struct OpMetrics {
    OpId op;
    OpKind kind = OpKind::Raw;
    bool null_deq = false;
    std::uint64_t steps = 0, cas_attempts = 0, cas_successes = 0;
  };
  const std::vector<OpMetrics>& op_metrics() const { return op_metrics_; }

  const std::vector<AssertionFailure>& failures() const { return failures_; }
  bool has_failures() const { return !failures_.empty(); }
  void fail(const std::string& hook, const std::string& detail, int pid = -1) {
    failures_.push_back({hook, detail, total_steps_, pid});
  }

  // --- hooks ---
  void add_step_hook(std::function<void(const StepInfo&)> h) {
    step_hooks_.push_back(std::move(h));
  }
  void add_response_hook(std::function<void(const Event&)> h) {
    response_hooks_.push_back(std::move(h));
  }
  // Bounded-variant early-termination notification (missing block observed).
  std::function<void(int pid, SimCell* response_cell)> on_missing_block;

  // Canonical key of the current configuration. Two configurations with equal
  // keys have identical per-process observation logs (hence identical local
  // and shared state up to record identity), identical op statuses and
  // responses, and identical real-time precedence among invoked ops; their
  // future behaviors and history verdicts therefore coincide.
  std::pair<std::uint64_t, std::uint64_t> memo_key() const {
    std::uint64_t h1 = kFnvOffset, h2 = 0x9e3779b97f4a7c15ull;
    auto mix = [&](std::uint64_t v) {
      h1 = fnv1a(h1, v);
      h2 = fnv1a(h2 ^ 0x5bd1e995ull, v ^ 0xabcdef12345ull);
    };
    for (const auto& p : procs_) {
      mix(p->obs_hash);
      mix(p->obs_log.size());
      mix(static_cast<std::uint64_t>(p->next_op) |
          (static_cast<std::uint64_t>(p->state != Proc::State::Idle) << 32));
    }
    for (std::uint64_t w : prec_bits_) mix(w);
    for (const auto& e : events_by_op()) {
      mix((static_cast<std::uint64_t>(e->op.pid) << 40) ^
          (static_cast<std::uint64_t>(e->op.seq) << 8) ^
          static_cast<std::uint64_t>(e->resp));
      mix(canonical_plain(e->resp_value));
    }
    return {h1, h2};
  }

  std::uint32_t next_canon(int pid) {
    return (static_cast<std::uint32_t>(pid + 1) << 20) |
           ++canon_counter_[static_cast<std::size_t>(pid)];
  }

 private:
  friend class SimMem::Ctx;

  struct Proc {
    Proc(SimExec& e, int p, std::size_t stack)
        : pid(p), fiber(stack), ctx(e, p) {}
    int pid;
    Fiber fiber;
    enum class State : std::uint8_t { Idle, AtAccess } state = State::Idle;

    // pending access
    StepInfo::Kind ikind = StepInfo::Kind::Read;
    SimCell* icell = nullptr;
    Word iexp = 0, inew = 0;
    Word access_result = 0;

    // current op
    Program program;
    int next_op = 0;
    const Op* cur_op = nullptr;
    bool op_done = false;
    std::optional<Word> op_result;
    std::size_t event_index = 0;
    std::uint64_t steps_at_invoke = 0, casa_at_invoke = 0, cass_at_invoke = 0;

    Metrics metrics;
    std::vector<std::uint64_t> obs_log;
    std::uint64_t obs_hash = kFnvOffset;
    SimMem::Ctx ctx;
    SimExec* exec_backref = nullptr;
  };

  static void fiber_entry(void* arg) {
    Proc* P = static_cast<Proc*>(arg);
    P->op_result = P->cur_op->body();
    P->op_done = true;
    // Final yield; the fiber is re-armed for the next operation.
    for (;;) P->fiber.yield_to(P->exec_backref->sched_sp_);
  }

  void invoke_next(Proc& P) {
    const Op& op = P.program[static_cast<std::size_t>(P.next_op)];
    P.next_op++;
    OpId id{P.pid, P.next_op};
    // real-time precedence: every already-completed op precedes this one
    for (const auto& e : history_.events)
      if (e.completed()) set_precedes(e.op, id);
    Event ev;
    ev.op = id;
    ev.kind = op.spec.kind;
    ev.arg = op.spec.arg;
    ev.invoke_ts = tick_++;
    P.event_index = history_.events.size();
    history_.events.push_back(ev);

    P.cur_op = &op;
    P.op_done = false;
    P.op_result.reset();
    P.steps_at_invoke = P.metrics.steps;
    P.casa_at_invoke = P.metrics.cas_attempts;
    P.cass_at_invoke = P.metrics.cas_successes;
    P.exec_backref = this;
    P.fiber.arm(&SimExec::fiber_entry, &P);
    // Prime: run to the first shared access (performs nothing yet).
    P.fiber.resume(&sched_sp_);
    assert(!P.op_done && "operations must perform at least one shared access");
    P.state = Proc::State::AtAccess;
  }

  void perform_access(Proc& P) {
    StepInfo si;
    si.pid = P.pid;
    si.kind = P.ikind;
    si.cell = P.icell;
    si.before = P.icell->v;
    si.attempted = P.inew;
    si.cas_ok = false;
    switch (P.ikind) {
      case StepInfo::Kind::Read:
        si.after = si.before;
        P.access_result = si.before;
        log_obs(P, si.kind, P.icell, canonical_value(*P.icell, si.before));
        break;
      case StepInfo::Kind::Write:
        if (P.icell->owner >= 0 && P.icell->owner != P.pid)
          fail("single-writer",
               "process " + std::to_string(P.pid) +
                   " wrote a cell owned by process " +
                   std::to_string(P.icell->owner),
               P.pid);
        P.icell->v = P.inew;
        si.after = P.inew;
        P.access_result = 0;
        log_obs(P, si.kind, P.icell, 0);
        break;
      case StepInfo::Kind::Cas: {
        bool ok = (si.before == P.iexp);
        if (ok) P.icell->v = P.inew;
        si.after = P.icell->v;
        si.cas_ok = ok;
        P.access_result = ok ? 1 : 0;
        P.metrics.cas_attempts++;
        if (ok) P.metrics.cas_successes++;
        log_obs(P, si.kind, P.icell, ok ? 1 : 0);
        break;
      }
    }
    P.metrics.steps++;
    si.tick = tick_++;
    si.step_index = total_steps_++;
    for (auto& h : step_hooks_) h(si);
  }

  void complete_op(Proc& P) {
    Event& ev = history_.events[P.event_index];
    ev.response_ts = tick_++;
    if (ev.kind == OpKind::Enq) {
      ev.resp = RespKind::Ok;
    } else if (P.op_result.has_value()) {
      ev.resp = RespKind::Value;
      ev.resp_value = *P.op_result;
    } else {
      ev.resp = ev.kind == OpKind::Deq ? RespKind::Empty : RespKind::Ok;
    }
    OpMetrics om;
    om.op = ev.op;
    om.kind = ev.kind;
    om.null_deq = (ev.kind == OpKind::Deq && ev.resp == RespKind::Empty);
    om.steps = P.metrics.steps - P.steps_at_invoke;
    om.cas_attempts = P.metrics.cas_attempts - P.casa_at_invoke;
    om.cas_successes = P.metrics.cas_successes - P.cass_at_invoke;
    op_metrics_.push_back(om);
    P.state = Proc::State::Idle;
    P.cur_op = nullptr;
    for (auto& h : response_hooks_) h(ev);
  }

  void log_obs(Proc& P, StepInfo::Kind k, const SimCell* c, Word canonical) {
    std::uint64_t e = (static_cast<std::uint64_t>(k) << 61) ^
                      (static_cast<std::uint64_t>(c->role) << 57) ^
                      (canonical & ((1ull << 57) - 1));
    P.obs_log.push_back(e);
    P.obs_hash = fnv1a(P.obs_hash, e);
  }

  static Word canonical_value(const SimCell& c, Word v) {
    if (v == kUnset) return 0;
    switch (c.role) {
      case CellRole::BlockSlot:
      case CellRole::Version:
      case CellRole::Response:
        return unpack_ptr<const CanonRecord>(v)->canon;
      case CellRole::ChunkSlot:
        return static_cast<Word>(c.index) + 1;
      default:
        return v;
    }
  }
  static Word canonical_plain(Word v) { return v; }

  std::vector<const Event*> events_by_op() const {
    std::vector<const Event*> evs;
    evs.reserve(history_.events.size());
    for (const auto& e : history_.events) evs.push_back(&e);
    std::sort(evs.begin(), evs.end(),
              [](const Event* a, const Event* b) { return a->op < b->op; });
    return evs;
  }

  std::size_t op_index(const OpId& id) const {
    return static_cast<std::size_t>(id.pid) * max_ops_ +
           static_cast<std::size_t>(id.seq - 1);
  }
  void set_precedes(const OpId& a, const OpId& b) {
    std::size_t n = procs_.size() * max_ops_;
    std::size_t bit = op_index(a) * n + op_index(b);
    if (bit / 64 < prec_bits_.size()) prec_bits_[bit / 64] |= 1ull << (bit % 64);
  }

  std::vector<std::unique_ptr<Proc>> procs_;
  Arena arena_;
  History history_;
  std::vector<OpMetrics> op_metrics_;
  std::vector<AssertionFailure> failures_;
  std::vector<std::function<void(const StepInfo&)>> step_hooks_;
  std::vector<std::function<void(const Event&)>> response_hooks_;
  std::vector<std::uint64_t> prec_bits_;
  std::vector<std::uint32_t> canon_counter_ =
      std::vector<std::uint32_t>(257, 0);
  std::size_t max_ops_ = 1;
  std::uint64_t tick_ = 1;
  std::uint64_t total_steps_ = 0;
  void* sched_sp_ = nullptr;
  SimMem::Ctx inspector_;
};

// --- SimMem::Ctx inline implementations -----------------------------------

inline Word SimMem::Ctx::read(SimCell& c) {
  if (pid_ < 0) return c.v;
  auto& P = *exec_->procs_[static_cast<std::size_t>(pid_)];
  P.ikind = StepInfo::Kind::Read;
  P.icell = &c;
  P.fiber.yield_to(exec_->sched_sp_);
  return P.access_result;
}

inline void SimMem::Ctx::write(SimCell& c, Word w) {
  if (pid_ < 0) {
    c.v = w;
    return;
  }
  auto& P = *exec_->procs_[static_cast<std::size_t>(pid_)];
  P.ikind = StepInfo::Kind::Write;
  P.icell = &c;
  P.inew = w;
  P.fiber.yield_to(exec_->sched_sp_);
}

inline bool SimMem::Ctx::cas(SimCell& c, Word expected, Word desired) {
  if (pid_ < 0) {
    if (c.v != expected) return false;
    c.v = desired;
    return true;
  }
  auto& P = *exec_->procs_[static_cast<std::size_t>(pid_)];
  P.ikind = StepInfo::Kind::Cas;
  P.icell = &c;
  P.iexp = expected;
  P.inew = desired;
  P.fiber.yield_to(exec_->sched_sp_);
  return P.access_result != 0;
}

inline void SimMem::Ctx::local_fetch(std::uint64_t n) {
  if (pid_ < 0) return;
  exec_->procs_[static_cast<std::size_t>(pid_)]->metrics.steps += n;
}

template <class T, class... Args>
T* SimMem::Ctx::create(Args&&... args) {
  T* t = exec_->arena().make<T>(std::forward<Args>(args)...);
  if constexpr (std::is_base_of_v<CanonRecord, T>)
    t->canon = exec_->next_canon(pid_ < 0 ? 255 : pid_);
  return t;
}

inline void* SimMem::Ctx::allocate(std::size_t bytes, std::size_t align) {
  return exec_->arena().allocate(bytes, align);
}

inline void SimMem::Ctx::note_container(std::int64_t n) {
  if (pid_ < 0) return;
  auto& m = exec_->procs_[static_cast<std::size_t>(pid_)]->metrics;
  if (n > m.container_peak) m.container_peak = n;
}

inline void SimMem::Ctx::note_missing_block(SimCell* response_cell) {
  if (pid_ >= 0 && exec_->on_missing_block)
    exec_->on_missing_block(pid_, response_cell);
}

inline Metrics& SimMem::Ctx::metrics() {
  static Metrics scratch;
  if (pid_ < 0) return scratch;
  return exec_->procs_[static_cast<std::size_t>(pid_)]->metrics;
}

}  // namespace wfq
