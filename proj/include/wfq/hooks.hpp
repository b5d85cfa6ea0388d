#pragma once

#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wfq/bounded_queue.hpp"
#include "wfq/checker.hpp"
#include "wfq/ordering_tree.hpp"
#include "wfq/sim_exec.hpp"

namespace wfq {

// Runtime-checkable invariants of the unbounded queue, evaluated
// incrementally on every simulated shared-memory step:
//   - heads are non-decreasing and only move h -> h+1
//   - slot discipline: installs happen exactly at the head position, heads
//     advance only over installed blocks with super set (non-root)
//   - end fields are non-decreasing, installed blocks are non-empty
//   - sum fields match the expanded E/D sequence lengths
//   - super is within one of the true superblock index
//   - root blocks replay to their size fields, no operation is duplicated
//   - every operation is contained in the root by the time it responds
class UnboundedInvariants {
 public:
  using Q = TreeQueue<SimMem>;
  using B = Block<SimMem>;

  UnboundedInvariants(SimExec& ex, Q& q) : ex_(ex), q_(q) {
    for (const auto& n : q_.all_nodes()) {
      if (n->id >= static_cast<int>(by_id_.size()))
        by_id_.resize(static_cast<std::size_t>(n->id) + 1, nullptr);
      by_id_[static_cast<std::size_t>(n->id)] = n.get();
    }
  }

  void install() {
    ex_.add_step_hook([this](const StepInfo& si) { on_step(si); });
    ex_.add_response_hook([this](const Event& e) { on_response(e); });
  }

  std::int64_t q_max() const { return q_max_; }
  std::int64_t max_direct_subblocks() const { return max_direct_sub_; }

  // Whole-structure checks for a quiescent configuration.
  void final_sweep() {
    for (const auto& nptr : q_.all_nodes()) {
      const Q::Node* v = nptr.get();
      std::int64_t hd = q_.head_raw(v);
      for (std::int64_t i = 0; i < hd; i++) {
        const B* b = q_.block_raw(v, i);
        if (b == nullptr) {
          ex_.fail("slot-discipline",
                   "node " + std::to_string(v->id) + " blocks[" +
                       std::to_string(i) + "] unset below head");
          continue;
        }
        if (i > 0 && v != q_.root() &&
            raw_super(b) == kUnset)
          ex_.fail("super-set", "node " + std::to_string(v->id) + " blocks[" +
                                    std::to_string(i) + "] super unset");
      }
      for (std::int64_t i = hd + 1; i <= hd + 2; i++)
        if (q_.block_raw(v, i) != nullptr)
          ex_.fail("slot-discipline",
                   "node " + std::to_string(v->id) + " blocks[" +
                       std::to_string(i) + "] set above head");
    }
  }

 private:
  static Word raw_super(const B* b) { return b->super.v; }

  Q::Node* node_of(const StepInfo& si) {
    return by_id_[static_cast<std::size_t>(si.cell->node_id)];
  }

  void on_step(const StepInfo& si) {
    switch (si.cell->role) {
      case CellRole::Head:
        if (si.kind == StepInfo::Kind::Write) {
          ex_.fail("head-monotone", "plain write to a head cell", si.pid);
        } else if (si.kind == StepInfo::Kind::Cas && si.cas_ok) {
          if (si.after != si.before + 1)
            ex_.fail("head-monotone", "head moved by more than one", si.pid);
          on_advanced(node_of(si), static_cast<std::int64_t>(si.before));
        }
        break;
      case CellRole::BlockSlot:
        if ((si.kind == StepInfo::Kind::Cas && si.cas_ok) ||
            si.kind == StepInfo::Kind::Write) {
          on_install(node_of(si), si.cell->index,
                     unpack_ptr<const B>(si.after));
        }
        break;
      case CellRole::Super:
        if (si.kind == StepInfo::Kind::Cas && si.cas_ok)
          on_super_set(si);
        break;
      default:
        break;
    }
  }

  // head CAS h -> h+1 succeeded at node v
  void on_advanced(Q::Node* v, std::int64_t h) {
    const B* b = q_.block_raw(v, h);
    if (b == nullptr) {
      ex_.fail("slot-discipline", "head advanced over an unset slot at node " +
                                      std::to_string(v->id));
      return;
    }
    if (v != q_.root() && h > 0 && raw_super(b) == kUnset)
      ex_.fail("super-set",
               "head advanced past a block with unset super at node " +
                   std::to_string(v->id));
  }

  void on_install(Q::Node* v, std::int64_t i, const B* b) {
    if (q_.head_raw(v) != i)
      ex_.fail("slot-discipline",
               "install at node " + std::to_string(v->id) + " index " +
                   std::to_string(i) + " while head is " +
                   std::to_string(q_.head_raw(v)));
    const B* prev = q_.block_raw(v, i - 1);
    if (prev == nullptr) {
      ex_.fail("slot-discipline", "install with unset predecessor");
      return;
    }
    if (!v->is_leaf) {
      if (b->end_left < prev->end_left || b->end_right < prev->end_right)
        ex_.fail("ends-monotone", "end fields decreased at node " +
                                      std::to_string(v->id));
      check_super_of_covered(v, i, b, prev);
    }
    std::vector<LinOp> E, D;
    q_.expand_raw(v, i, E, D);
    auto ne = static_cast<std::int64_t>(E.size());
    auto nd = static_cast<std::int64_t>(D.size());
    if (ne + nd == 0)
      ex_.fail("non-empty-block", "installed block contains no operations");
    if (b->sum_enq - prev->sum_enq != ne || b->sum_deq - prev->sum_deq != nd)
      ex_.fail("sum-fields", "sum fields disagree with expanded sequences at "
                             "node " +
                                 std::to_string(v->id) + " index " +
                                 std::to_string(i));
    std::set<int> pids;
    for (const auto& op : E) pids.insert(op.op.pid);
    for (const auto& op : D) pids.insert(op.op.pid);
    if (static_cast<std::int64_t>(pids.size()) != ne + nd)
      ex_.fail("one-op-per-process",
               "block contains two operations of one process");
    if (!v->is_leaf) {
      std::int64_t direct = (b->end_left - prev->end_left) +
                            (b->end_right - prev->end_right);
      if (direct > max_direct_sub_) max_direct_sub_ = direct;
    }
    if (v == q_.root()) on_root_block(i, b, prev, E, D);
  }

  void check_super_of_covered(Q::Node* v, std::int64_t s, const B* b,
                              const B* prev) {
    struct Side {
      Q::Node* child;
      std::int64_t from, to;
    };
    for (const Side& side : {Side{v->left, prev->end_left, b->end_left},
                             Side{v->right, prev->end_right, b->end_right}}) {
      for (std::int64_t bb = side.from + 1; bb <= side.to; bb++) {
        const B* cb = q_.block_raw(side.child, bb);
        if (cb == nullptr) {
          ex_.fail("slot-discipline", "covered child block missing");
          continue;
        }
        Word sup = raw_super(cb);
        if (sup == kUnset) {
          ex_.fail("super-set", "covered child block has unset super");
          continue;
        }
        auto sv = static_cast<std::int64_t>(sup);
        if (sv < s - 1 || sv > s)
          ex_.fail("super-range",
                   "super " + std::to_string(sv) + " not within one of " +
                       std::to_string(s));
      }
    }
  }

  void on_super_set(const StepInfo& si) {
    auto sv = static_cast<std::int64_t>(si.after);
    if (sv < 1) ex_.fail("super-range", "super set to a non-positive index");
  }

  void on_root_block(std::int64_t i, const B* b, const B* prev,
                     const std::vector<LinOp>& E, const std::vector<LinOp>& D) {
    if (i != next_root_index_)
      ex_.fail("root-order", "root install out of order");
    next_root_index_ = i + 1;
    for (const auto& op : E) record_once(op);
    for (const auto& op : D) record_once(op);
    std::int64_t size_before = static_cast<std::int64_t>(oracle_.size());
    for (const auto& op : E) oracle_.push_back(op.arg);
    auto peak = static_cast<std::int64_t>(oracle_.size());
    if (peak > q_max_) q_max_ = peak;
    for (std::size_t k = 0; k < D.size(); k++)
      if (!oracle_.empty()) oracle_.pop_front();
    (void)size_before;
    (void)prev;
    if (static_cast<std::int64_t>(oracle_.size()) != b->size)
      ex_.fail("size-field", "root block " + std::to_string(i) +
                                 " size " + std::to_string(b->size) +
                                 " but replay gives " +
                                 std::to_string(oracle_.size()));
  }

  void record_once(const LinOp& op) {
    if (!seen_ops_.insert({op.op.pid, op.op.seq}).second)
      ex_.fail("no-duplication",
               "operation " + std::to_string(op.op.pid) + "." +
                   std::to_string(op.op.seq) + " appears twice in the root");
  }

  // Lemma-7-style containment: by the time an operation responds, its leaf
  // block is covered by a chain of blocks up to the root.
  void on_response(const Event& e) {
    if (e.kind == OpKind::Raw) return;
    const Q::Node* v = q_.leaf_of(e.op.pid);
    std::int64_t idx = e.op.seq;
    while (v != q_.root()) {
      const Q::Node* p = v->parent;
      bool from_left = (p->left == v);
      std::int64_t top = q_.head_raw(p);
      if (q_.block_raw(p, top) == nullptr) top--;
      std::int64_t found = -1, lo = 1, hi = top;
      while (lo <= hi) {
        std::int64_t mid = lo + (hi - lo) / 2;
        const B* pb = q_.block_raw(p, mid);
        std::int64_t end = from_left ? pb->end_left : pb->end_right;
        if (end >= idx) {
          found = mid;
          hi = mid - 1;
        } else {
          lo = mid + 1;
        }
      }
      if (found < 0) {
        ex_.fail("propagation",
                 "operation " + std::to_string(e.op.pid) + "." +
                     std::to_string(e.op.seq) +
                     " not contained in the root at response time",
                 e.op.pid);
        return;
      }
      idx = found;
      v = p;
    }
  }

  SimExec& ex_;
  Q& q_;
  std::vector<Q::Node*> by_id_;
  std::deque<Word> oracle_;
  std::set<std::pair<int, std::int64_t>> seen_ops_;
  std::int64_t next_root_index_ = 1;
  std::int64_t q_max_ = 0;
  std::int64_t max_direct_sub_ = 0;
};

// Invariants of the bounded-space variant, tracked through a shadow copy of
// every block ever published (blocks are immutable and arena-lived, so the
// shadow just keeps pointers):
//   - published versions grow their maximum index by exactly one and never
//     decrease their minimum index
//   - node container sizes respect the GC bound (2*q_max + 4p + 1 right
//     after a GC publication, plus G slack at all times)
//   - every block below a version's minimum index is finished
//   - last[] entries are non-decreasing; response cells are write-once and
//     all writers agree; missing-block paths find the response already set
//   - root blocks replay to their size fields, no duplication, containment
class BoundedInvariants {
 public:
  using Q = BoundedQueue<SimMem>;
  using B = Block<SimMem>;
  using Ver = BlockTree<SimMem>::Version;

  BoundedInvariants(SimExec& ex, Q& q) : ex_(ex), q_(q) {
    for (const auto& n : q_.all_nodes()) {
      if (n->id >= static_cast<int>(by_id_.size())) {
        by_id_.resize(static_cast<std::size_t>(n->id) + 1, nullptr);
        shadow_.resize(by_id_.size());
      }
      by_id_[static_cast<std::size_t>(n->id)] = n.get();
      shadow_[static_cast<std::size_t>(n->id)].push_back(q_.dummy());
    }
    cur_count_.assign(by_id_.size(), 1);
    total_reachable_ = static_cast<std::int64_t>(by_id_.size());
  }

  void install() {
    ex_.add_step_hook([this](const StepInfo& si) { on_step(si); });
    ex_.add_response_hook([this](const Event& e) { on_response(e); });
    ex_.on_missing_block = [this](int pid, SimCell* rc) {
      on_miss(pid, rc);
    };
  }

  std::int64_t q_max() const { return q_max_; }
  std::int64_t max_container_after_gc() const { return max_after_gc_; }
  std::int64_t max_container() const { return max_any_; }
  std::int64_t max_total_reachable() const { return max_total_reachable_; }
  std::int64_t misses() const { return misses_; }

 private:
  Q::Node* node_of(int id) { return by_id_[static_cast<std::size_t>(id)]; }
  const B* shadow_blk(int node_id, std::int64_t idx) const {
    const auto& vec = shadow_[static_cast<std::size_t>(node_id)];
    if (idx < 0 || idx >= static_cast<std::int64_t>(vec.size()))
      return nullptr;
    return vec[static_cast<std::size_t>(idx)];
  }

  void on_step(const StepInfo& si) {
    switch (si.cell->role) {
      case CellRole::Version:
        if ((si.kind == StepInfo::Kind::Cas && si.cas_ok) ||
            si.kind == StepInfo::Kind::Write)
          on_publish(node_of(si.cell->node_id),
                     unpack_ptr<const Ver>(si.before),
                     unpack_ptr<const Ver>(si.after));
        break;
      case CellRole::Last:
        if (si.kind == StepInfo::Kind::Write)
          ex_.fail("last-monotone", "plain write to last[]", si.pid);
        else if (si.kind == StepInfo::Kind::Cas && si.cas_ok &&
                 si.after <= si.before)
          ex_.fail("last-monotone", "last[] did not increase", si.pid);
        break;
      case CellRole::Response:
        if (si.kind == StepInfo::Kind::Cas) {
          if (si.cas_ok) {
            record_response_cell(si.cell, si.after);
          } else if (si.before != kUnset) {
            auto a = Q::decode_response(si.before);
            auto b = Q::decode_response(si.attempted);
            if (a != b)
              ex_.fail("response-agree",
                       "two helpers computed different responses", si.pid);
          }
        }
        break;
      default:
        break;
    }
  }

  void on_publish(Q::Node* v, const Ver* oldv, const Ver* newv) {
    std::int64_t old_max = oldv->max_blk->index;
    std::int64_t old_min = oldv->min_blk->index;
    std::int64_t new_max = newv->max_blk->index;
    std::int64_t new_min = newv->min_blk->index;
    if (new_max != old_max + 1)
      ex_.fail("version-max", "published max index is not old max + 1");
    if (new_min < old_min)
      ex_.fail("version-min", "published min index decreased");
    // register the new block in the shadow
    auto& vec = shadow_[static_cast<std::size_t>(v->id)];
    const B* nb = newv->max_blk;
    if (static_cast<std::int64_t>(vec.size()) != new_max)
      ex_.fail("version-max", "shadow out of sync with published indices");
    vec.push_back(nb);
    if (v->is_leaf && !nb->is_enq) {
      SimMem::label(const_cast<B*>(nb)->response, CellRole::Response, v->id,
                    -1, nb->index);
    }
    check_new_block(v, nb);
    // container bounds
    std::int64_t p = q_.nprocs();
    std::int64_t bound_gc = 2 * q_max_ + 4 * p + 1;
    if (new_max % q_.gc_period() == 0) {
      if (newv->count > bound_gc)
        ex_.fail("gc-size-bound",
                 "node " + std::to_string(v->id) + " holds " +
                     std::to_string(newv->count) + " blocks after GC, bound " +
                     std::to_string(bound_gc));
      if (newv->count > max_after_gc_) max_after_gc_ = newv->count;
    }
    if (newv->count > bound_gc + q_.gc_period())
      ex_.fail("size-bound", "node " + std::to_string(v->id) + " holds " +
                                 std::to_string(newv->count) +
                                 " blocks, steady bound " +
                                 std::to_string(bound_gc + q_.gc_period()));
    if (newv->count > max_any_) max_any_ = newv->count;
    total_reachable_ +=
        newv->count - cur_count_[static_cast<std::size_t>(v->id)];
    cur_count_[static_cast<std::size_t>(v->id)] = newv->count;
    if (total_reachable_ > max_total_reachable_)
      max_total_reachable_ = total_reachable_;
    // finished prefix (Invariant 4)
    for (std::int64_t idx = old_min; idx < new_min; idx++)
      if (!finished(v, idx))
        ex_.fail("finished-prefix",
                 "node " + std::to_string(v->id) + " discarded unfinished "
                 "block " +
                     std::to_string(idx));
  }

  void check_new_block(Q::Node* v, const B* nb) {
    const B* prev = shadow_blk(v->id, nb->index - 1);
    if (prev == nullptr) {
      ex_.fail("version-max", "missing shadow predecessor");
      return;
    }
    if (!v->is_leaf &&
        (nb->end_left < prev->end_left || nb->end_right < prev->end_right))
      ex_.fail("ends-monotone", "end fields decreased at node " +
                                    std::to_string(v->id));
    std::vector<LinOp> E, D;
    expand_shadow(v, nb->index, E, D);
    auto ne = static_cast<std::int64_t>(E.size());
    auto nd = static_cast<std::int64_t>(D.size());
    if (ne + nd == 0)
      ex_.fail("non-empty-block", "published block contains no operations");
    if (nb->sum_enq - prev->sum_enq != ne || nb->sum_deq - prev->sum_deq != nd)
      ex_.fail("sum-fields",
               "sum fields disagree with expansion at node " +
                   std::to_string(v->id));
    std::set<int> pids;
    for (const auto& op : E) pids.insert(op.op.pid);
    for (const auto& op : D) pids.insert(op.op.pid);
    if (static_cast<std::int64_t>(pids.size()) != ne + nd)
      ex_.fail("one-op-per-process",
               "block contains two operations of one process");
    if (v == q_.root()) {
      if (nb->index != next_root_index_)
        ex_.fail("root-order", "root publish out of order");
      next_root_index_ = nb->index + 1;
      for (const auto& op : E) record_once(op);
      for (const auto& op : D) record_once(op);
      for (const auto& op : E) oracle_.push_back(op.arg);
      auto peak = static_cast<std::int64_t>(oracle_.size());
      if (peak > q_max_) q_max_ = peak;
      for (std::size_t k = 0; k < D.size(); k++)
        if (!oracle_.empty()) oracle_.pop_front();
      if (static_cast<std::int64_t>(oracle_.size()) != nb->size)
        ex_.fail("size-field",
                 "root block " + std::to_string(nb->index) + " size " +
                     std::to_string(nb->size) + " but replay gives " +
                     std::to_string(oracle_.size()));
    }
  }

  void expand_shadow(const Q::Node* v, std::int64_t idx, std::vector<LinOp>& E,
                     std::vector<LinOp>& D) const {
    const B* b = shadow_blk(v->id, idx);
    if (b == nullptr) return;
    if (v->is_leaf) {
      LinOp op{{v->pid, idx}, b->is_enq ? OpKind::Enq : OpKind::Deq,
               b->element};
      (b->is_enq ? E : D).push_back(op);
      return;
    }
    const B* prev = shadow_blk(v->id, idx - 1);
    for (std::int64_t j = prev->end_left + 1; j <= b->end_left; j++)
      expand_shadow(v->left, j, E, D);
    for (std::int64_t j = prev->end_right + 1; j <= b->end_right; j++)
      expand_shadow(v->right, j, E, D);
  }

  void record_once(const LinOp& op) {
    if (!seen_ops_.insert({op.op.pid, op.op.seq}).second)
      ex_.fail("no-duplication",
               "operation " + std::to_string(op.op.pid) + "." +
                   std::to_string(op.op.seq) + " appears twice in the root");
  }

  bool contained_in_root(const Q::Node* v, std::int64_t idx) const {
    while (v != by_id_[0]) {
      const Q::Node* p = v->parent;
      bool from_left = (p->left == v);
      const auto& vec = shadow_[static_cast<std::size_t>(p->id)];
      std::int64_t found = -1, lo = 1,
                   hi = static_cast<std::int64_t>(vec.size()) - 1;
      while (lo <= hi) {
        std::int64_t mid = lo + (hi - lo) / 2;
        const B* pb = vec[static_cast<std::size_t>(mid)];
        std::int64_t end = from_left ? pb->end_left : pb->end_right;
        if (end >= idx) {
          found = mid;
          hi = mid - 1;
        } else {
          lo = mid + 1;
        }
      }
      if (found < 0) return false;
      idx = found;
      v = p;
    }
    return true;
  }

  // A block is finished when it has propagated to the root, every enqueue in
  // it had its value returned or recorded, and every dequeue in it was
  // answered (by its owner or through its response cell).
  bool finished(const Q::Node* v, std::int64_t idx) {
    if (idx == 0) return true;  // dummy
    if (!contained_in_root(v, idx)) return false;
    std::vector<LinOp> E, D;
    expand_shadow(v, idx, E, D);
    for (const auto& op : E)
      if (!value_dequeued_.count(op.arg)) return false;
    for (const auto& op : D)
      if (!answered_.count({op.op.pid, op.op.seq})) return false;
    return true;
  }

  void record_response_cell(const SimCell* cell, Word w) {
    const Q::Node* leaf = node_of(cell->node_id);
    OpId op{leaf->pid, cell->index};
    answered_.insert({op.pid, op.seq});
    auto r = Q::decode_response(w);
    if (r.has_value()) value_dequeued_.insert(*r);
  }

  void on_response(const Event& e) {
    if (e.kind == OpKind::Deq && e.resp != RespKind::Pending) {
      answered_.insert({e.op.pid, e.op.seq});
      if (e.resp == RespKind::Value) value_dequeued_.insert(e.resp_value);
      // if a helper also wrote the response cell, the values must agree
      const B* blk = shadow_blk(q_.leaf_of(e.op.pid)->id, e.op.seq);
      if (blk != nullptr && blk->response.v != kUnset) {
        auto r = Q::decode_response(blk->response.v);
        bool same = (e.resp == RespKind::Empty)
                        ? !r.has_value()
                        : (r.has_value() && *r == e.resp_value);
        if (!same)
          ex_.fail("response-agree",
                   "owner response differs from helped response cell",
                   e.op.pid);
      }
    }
    // containment at response time (via the shadow, which never discards)
    if (e.kind != OpKind::Raw &&
        !contained_in_root(q_.leaf_of(e.op.pid), e.op.seq))
      ex_.fail("propagation",
               "operation " + std::to_string(e.op.pid) + "." +
                   std::to_string(e.op.seq) +
                   " not contained in the root at response time",
               e.op.pid);
  }

  void on_miss(int pid, SimCell* response_cell) {
    misses_++;
    if (response_cell != nullptr) {
      if (response_cell->v == kUnset)
        ex_.fail("early-termination",
                 "missing-block path taken but response cell unset", pid);
    } else {
      // an enqueue hit the missing-block path: it must already be in the root
      const auto& evs = ex_.history().events;
      for (auto it = evs.rbegin(); it != evs.rend(); ++it) {
        if (it->op.pid != pid) continue;
        if (it->completed()) break;
        if (it->kind == OpKind::Enq &&
            !contained_in_root(q_.leaf_of(pid), it->op.seq))
          ex_.fail("early-termination",
                   "enqueue hit missing-block path before reaching the root",
                   pid);
        break;
      }
    }
  }

  SimExec& ex_;
  Q& q_;
  std::vector<Q::Node*> by_id_;
  std::vector<std::vector<const B*>> shadow_;
  std::vector<std::int64_t> cur_count_;
  std::deque<Word> oracle_;
  std::set<std::pair<int, std::int64_t>> seen_ops_;
  std::set<Word> value_dequeued_;
  std::set<std::pair<int, std::int64_t>> answered_;
  std::int64_t next_root_index_ = 1;
  std::int64_t q_max_ = 0;
  std::int64_t max_after_gc_ = 0;
  std::int64_t max_any_ = 1;
  std::int64_t total_reachable_ = 0;
  std::int64_t max_total_reachable_ = 0;
  std::int64_t misses_ = 0;
};

}  // namespace wfq
