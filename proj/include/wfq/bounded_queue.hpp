#pragma once

#include <cassert>
#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "wfq/block.hpp"
#include "wfq/common.hpp"
#include "wfq/history.hpp"
#include "wfq/memory.hpp"
#include "wfq/prbt.hpp"

namespace wfq {

// Bounded-space variant of the ordering-tree queue. Each node's block
// container is an immutable block-tree version published by CAS; every G-th
// insertion at a node triggers a GC phase (SplitBlock + Help + split) that
// discards the finished prefix, keeping per-node size O(q_max + p + G).
//
// Lookups of discarded blocks throw BlockGone; the enclosing operation then
// terminates early (an enqueue just returns, a dequeue reads its response
// cell, a helper skips the leaf it was helping).
template <class M>
class BoundedQueue {
 public:
  using Ctx = typename M::Ctx;
  using Cell = typename M::Cell;
  using Env = typename M::Env;
  using B = Block<M>;
  using Tree = BlockTree<M>;
  using Ver = typename Tree::Version;

  struct Mutations {
    bool skip_second_refresh = false;
  };

  struct Node {
    Node* left = nullptr;
    Node* right = nullptr;
    Node* parent = nullptr;
    int id = 0;
    int pid = -1;
    bool is_leaf = false;
    Cell version;  // current BlockTree::Version*
  };

  struct Handle {
    int pid = -1;
    Ctx* ctx = nullptr;
    Node* leaf = nullptr;
    bool in_flight = false;
    Cell* miss_response = nullptr;  // response cell of the op being computed
  };

  static std::int64_t default_gc_period(int nprocs) {
    std::int64_t g = static_cast<std::int64_t>(nprocs) * nprocs *
                     ceil_log2(nprocs);
    return g > 0 ? g : 1;
  }

  BoundedQueue(Env& env, int nprocs, std::int64_t gc_period = 0,
               Mutations muts = {})
      : muts_(muts), nprocs_(nprocs),
        gc_period_(gc_period > 0 ? gc_period : default_gc_period(nprocs)) {
    assert(nprocs >= 1);
    std::int64_t nleaves = next_pow2(nprocs);
    std::int64_t total = 2 * nleaves - 1;
    nodes_.reserve(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; i++) {
      nodes_.push_back(std::make_unique<Node>());
      Node* n = nodes_.back().get();
      n->id = static_cast<int>(i);
      n->is_leaf = (i >= nleaves - 1);
    }
    for (std::int64_t i = 0; i < nleaves - 1; i++) {
      Node* n = nodes_[static_cast<std::size_t>(i)].get();
      n->left = nodes_[static_cast<std::size_t>(2 * i + 1)].get();
      n->right = nodes_[static_cast<std::size_t>(2 * i + 2)].get();
      n->left->parent = n;
      n->right->parent = n;
    }
    root_ = nodes_[0].get();
    for (int p = 0; p < nprocs; p++) {
      Node* lf = nodes_[static_cast<std::size_t>(nleaves - 1 + p)].get();
      lf->pid = p;
      leaves_.push_back(lf);
    }
    dummy_ = env.arena().template make<B>();
    const Ver* init = Tree::make_initial(env.arena(), dummy_);
    for (auto& uptr : nodes_) {
      Node* n = uptr.get();
      M::init_cell(n->version, pack_ptr(init));
      M::label(n->version, CellRole::Version, n->id,
               n->is_leaf ? n->pid : -1, -1);
    }
    last_ = std::make_unique<Cell[]>(static_cast<std::size_t>(nprocs));
    for (int p = 0; p < nprocs; p++) {
      M::init_cell(last_[static_cast<std::size_t>(p)], 0);
      M::label(last_[static_cast<std::size_t>(p)], CellRole::Last, -1, p, p);
    }
  }

  Handle make_handle(int pid, Ctx& ctx) {
    Handle h;
    h.pid = pid;
    h.ctx = &ctx;
    h.leaf = pid >= 0 ? leaves_[static_cast<std::size_t>(pid)] : nullptr;
    return h;
  }

  // ------------------------------------------------------------------ ops

  void enqueue(Handle& h, Word payload) {
    OpGuard g(h);
    MissScope ms(h, nullptr);
    try {
      const Ver* t = read_version(h, h.leaf);
      std::int64_t hd = t->max_blk->index + 1;
      const B* prev = max_blk(h, t);
      B* b = h.ctx->template create<B>();
      b->element = payload;
      b->is_enq = true;
      b->sum_enq = prev->sum_enq + 1;
      b->sum_deq = prev->sum_deq;
      b->index = hd;
      if (h.leaf == root_) b->size = prev->size + 1;
      append(h, t, b);
    } catch (BlockGone&) {
      // a block containing this enqueue was discarded, so it already
      // propagated to the root
    }
  }

  std::optional<Word> dequeue(Handle& h) {
    OpGuard g(h);
    const Ver* t;
    B* b;
    {
      MissScope ms(h, nullptr);
      t = read_version(h, h.leaf);
      std::int64_t hd = t->max_blk->index + 1;
      const B* prev = max_blk(h, t);
      b = h.ctx->template create<B>();
      b->is_enq = false;
      b->sum_enq = prev->sum_enq;
      b->sum_deq = prev->sum_deq + 1;
      b->index = hd;
      if (h.leaf == root_) b->size = prev->size > 0 ? prev->size - 1 : 0;
    }
    MissScope ms(h, &b->response);
    try {
      append(h, t, b);
      return complete_deq(h, h.leaf, b);
    } catch (BlockGone&) {
      // some process already wrote this dequeue's response before
      // discarding a block it needed
      Word w = h.ctx->read(b->response);
      assert(w != kUnset);
      return decode_response(w);
    }
  }

  // Finish the propagated dequeue represented by leaf block `blk`.
  std::optional<Word> complete_deq(Handle& h, Node* leaf, const B* blk) {
    auto [rb, ri] = index_dequeue(h, leaf, blk->index, 1);
    return find_response(h, rb, ri);
  }

  void append(Handle& h, const Ver* t, B* b) {
    const Ver* t2 = add_block(h, h.leaf, t, b);
    h.ctx->write(h.leaf->version, pack_ptr(t2));
    h.ctx->note_container(t2->count);
    if (h.leaf != root_) propagate(h, h.leaf->parent);
  }

  // Add b to version t of node v, running a GC phase when b's index is a
  // multiple of G.
  const Ver* add_block(Handle& h, Node* v, const Ver* t, const B* b) {
    if (b->index % gc_period_ == 0) {
      const B* sb = split_block(h, v);
      std::int64_t s = sb->index;
      help(h);
      // When this version is already stale the publish CAS will fail and the
      // result is discarded, so clamping the split point is harmless.
      if (s > t->max_blk->index) s = t->max_blk->index;
      const Ver* t2 = Tree::split_at(*h.ctx, t, s);
      return Tree::insert_max(*h.ctx, t2, b);
    }
    return Tree::insert_max(*h.ctx, t, b);
  }

  // Oldest block of v that must be kept: the last block of v that is a
  // subblock of root block m-1 (falling back to the minimum retained block
  // where another GC phase already discarded the lookup targets).
  const B* split_block(Handle& h, Node* v) {
    if (v == root_) {
      std::int64_t m = 0;
      for (int k = 0; k < nprocs_; k++) {
        auto lk = static_cast<std::int64_t>(
            h.ctx->read(last_[static_cast<std::size_t>(k)]));
        if (lk > m) m = lk;
      }
      const Ver* t = read_version(h, root_);
      const B* b = Tree::find(*h.ctx, t, m - 1);
      return b != nullptr ? b : min_blk(h, t);
    }
    const B* bp = split_block(h, v->parent);
    std::int64_t end = (v == v->parent->left) ? bp->end_left : bp->end_right;
    const Ver* t = read_version(h, v);
    const B* b = Tree::find(*h.ctx, t, end);
    return b != nullptr ? b : min_blk(h, t);
  }

  // Complete every propagated pending dequeue and publish its response.
  void help(Handle& h) {
    for (Node* lf : leaves_) {
      const Ver* t = read_version(h, lf);
      const B* b = max_blk(h, t);
      if (b->is_enq || b->index == 0) continue;
      MissScope ms(h, &const_cast<B*>(b)->response);
      try {
        if (!propagated(h, lf, b->index)) continue;
        std::optional<Word> res = complete_deq(h, lf, b);
        Response* r = h.ctx->template create<Response>();
        r->has_value = res.has_value();
        r->value = res.value_or(kUnset);
        h.ctx->cas(const_cast<B*>(b)->response, kUnset, pack_ptr(r));
      } catch (BlockGone&) {
        // response already written and the blocks discarded; nothing to do
      }
    }
  }

  // True iff v.blocks[b] is covered by a chain of superblocks up to the root.
  bool propagated(Handle& h, Node* v, std::int64_t b) {
    if (v == root_) return true;
    Node* p = v->parent;
    bool from_left = (p->left == v);
    const Ver* t = read_version(h, p);
    const B* mx = max_blk(h, t);
    if ((from_left ? mx->end_left : mx->end_right) < b) return false;
    const B* bp = Tree::min_end_geq(*h.ctx, t, from_left, b);
    assert(bp != nullptr);
    return propagated(h, p, bp->index);
  }

  void propagate(Handle& h, Node* v) {
    if (!refresh(h, v)) {
      if (!muts_.skip_second_refresh) refresh(h, v);
    }
    if (v != root_) propagate(h, v->parent);
  }

  bool refresh(Handle& h, Node* v) {
    const Ver* t = read_version(h, v);
    std::int64_t hd = t->max_blk->index + 1;
    B* nb = create_block(h, v, t, hd);
    if (nb == nullptr) return true;
    const Ver* t2 = add_block(h, v, t, nb);
    bool ok = h.ctx->cas(v->version, pack_ptr(t), pack_ptr(t2));
    if (ok) h.ctx->note_container(t2->count);
    return ok;
  }

  B* create_block(Handle& h, Node* v, const Ver* t, std::int64_t i) {
    const Ver* tl = read_version(h, v->left);
    const Ver* tr = read_version(h, v->right);
    const B* lb = max_blk(h, tl);
    const B* rb = max_blk(h, tr);
    const B* prev = max_blk(h, t);  // == blocks[i-1]
    std::int64_t sum_enq = lb->sum_enq + rb->sum_enq;
    std::int64_t sum_deq = lb->sum_deq + rb->sum_deq;
    std::int64_t num_enq = sum_enq - prev->sum_enq;
    std::int64_t num_deq = sum_deq - prev->sum_deq;
    if (num_enq + num_deq == 0) return nullptr;
    B* nb = h.ctx->template create<B>();
    nb->end_left = lb->index;
    nb->end_right = rb->index;
    nb->sum_enq = sum_enq;
    nb->sum_deq = sum_deq;
    nb->index = i;
    if (v == root_) {
      std::int64_t s = prev->size + num_enq - num_deq;
      nb->size = s > 0 ? s : 0;
    }
    return nb;
  }

  // Position of the i-th dequeue of v.blocks[b] within the root.
  std::pair<std::int64_t, std::int64_t> index_dequeue(Handle& h, Node* v,
                                                      std::int64_t b,
                                                      std::int64_t i) {
    if (v == root_) return {b, i};
    Node* p = v->parent;
    bool from_left = (p->left == v);
    const Ver* tp = read_version(h, p);
    const B* bp = Tree::min_end_geq(*h.ctx, tp, from_left, b);
    const B* bpp = Tree::max_end_lt(*h.ctx, tp, from_left, b);
    // bpp missing means the true superblock's predecessor was discarded, so
    // the block is finished and the op can terminate early
    if (bp == nullptr || bpp == nullptr) miss(h);
    const Ver* tv = read_version(h, v);
    const B* vprev = find_or_gone(h, tv, b - 1);
    const B* vstart =
        find_or_gone(h, tv, from_left ? bpp->end_left : bpp->end_right);
    i += vprev->sum_deq - vstart->sum_deq;
    if (!from_left) {
      const Ver* ts = read_version(h, p->left);
      const B* sl_end = find_or_gone(h, ts, bp->end_left);
      const B* sl_start = find_or_gone(h, ts, bpp->end_left);
      i += sl_end->sum_deq - sl_start->sum_deq;
    }
    return index_dequeue(h, p, bp->index, i);
  }

  std::optional<Word> find_response(Handle& h, std::int64_t b,
                                    std::int64_t i) {
    const Ver* t = read_version(h, root_);
    const B* blk = find_or_gone(h, t, b);
    const B* prev = find_or_gone(h, t, b - 1);
    std::int64_t num_enq = blk->sum_enq - prev->sum_enq;
    if (prev->size + num_enq < i) {
      bump_last(h, b);
      return std::nullopt;  // queue empty when this dequeue takes effect
    }
    std::int64_t e = i + prev->sum_enq - prev->size;
    const B* be = Tree::min_sum_enq_geq(*h.ctx, t, e);
    assert(be != nullptr && be->index <= b);
    const B* beprev = find_or_gone(h, t, be->index - 1);
    std::int64_t ie = e - beprev->sum_enq;
    Word res = get_enqueue(h, root_, t, be, ie);
    bump_last(h, be->index);
    return res;
  }

  Word get_enqueue(Handle& h, Node* v, const Ver* tv, const B* blk,
                   std::int64_t i) {
    if (v->is_leaf) {
      assert(blk->is_enq && i == 1);
      h.ctx->local_fetch();
      return blk->element;
    }
    const B* prev = find_or_gone(h, tv, blk->index - 1);
    const Ver* tl = read_version(h, v->left);
    const B* l_end = find_or_gone(h, tl, blk->end_left);
    const B* l_prev = find_or_gone(h, tl, prev->end_left);
    std::int64_t from_left = l_end->sum_enq - l_prev->sum_enq;
    Node* dir;
    const Ver* td;
    std::int64_t hi, prev_dir;
    if (i <= from_left) {
      dir = v->left;
      td = tl;
      hi = blk->end_left;
      prev_dir = l_prev->sum_enq;
    } else {
      i -= from_left;
      const Ver* tr = read_version(h, v->right);
      const B* r_prev = find_or_gone(h, tr, prev->end_right);
      dir = v->right;
      td = tr;
      hi = blk->end_right;
      prev_dir = r_prev->sum_enq;
    }
    std::int64_t target = i + prev_dir;
    const B* b2 = Tree::min_sum_enq_geq(*h.ctx, td, target);
    if (b2 == nullptr) miss(h);
    assert(b2->index <= hi);
    (void)hi;
    const B* b2prev = find_or_gone(h, td, b2->index - 1);
    std::int64_t i2 = i - (b2prev->sum_enq - prev_dir);
    return get_enqueue(h, dir, td, b2, i2);
  }

  // ------------------------------------------------------- introspection

  Node* root() { return root_; }
  Node* leaf_of(int pid) { return leaves_[static_cast<std::size_t>(pid)]; }
  int nprocs() const { return nprocs_; }
  std::int64_t gc_period() const { return gc_period_; }
  const std::vector<std::unique_ptr<Node>>& all_nodes() const {
    return nodes_;
  }
  const B* dummy() const { return dummy_; }
  Mutations& mutations() { return muts_; }

  const Ver* version_raw(const Node* v) const {
    return unpack_ptr<const Ver>(raw(v->version));
  }
  std::int64_t last_raw(int pid) const {
    return static_cast<std::int64_t>(
        raw(last_[static_cast<std::size_t>(pid)]));
  }

  static std::optional<Word> decode_response(Word w) {
    const Response* r = unpack_ptr<const Response>(w);
    if (r == nullptr || !r->has_value) return std::nullopt;
    return r->value;
  }

 private:
  struct OpGuard {
    explicit OpGuard(Handle& h) : h_(h) {
      assert(!h_.in_flight && "one operation in flight per handle");
      h_.in_flight = true;
    }
    ~OpGuard() { h_.in_flight = false; }
    Handle& h_;
  };

  // Scopes the response cell used when a missing-block path is taken, so
  // helping nests correctly inside an operation's own computation.
  struct MissScope {
    MissScope(Handle& h, Cell* rc) : h_(h), saved_(h.miss_response) {
      h_.miss_response = rc;
    }
    ~MissScope() { h_.miss_response = saved_; }
    Handle& h_;
    Cell* saved_;
  };

  [[noreturn]] void miss(Handle& h) {
    h.ctx->note_missing_block(h.miss_response);
    throw BlockGone{};
  }

  const B* find_or_gone(Handle& h, const Ver* t, std::int64_t i) {
    const B* b = Tree::find(*h.ctx, t, i);
    if (b == nullptr) miss(h);
    return b;
  }

  const Ver* read_version(Handle& h, Node* v) {
    return unpack_ptr<const Ver>(h.ctx->read(v->version));
  }
  const B* max_blk(Handle& h, const Ver* t) {
    h.ctx->local_fetch();
    return t->max_blk;
  }
  const B* min_blk(Handle& h, const Ver* t) {
    h.ctx->local_fetch();
    return t->min_blk;
  }

  void bump_last(Handle& h, std::int64_t idx) {
    Cell& c = last_[static_cast<std::size_t>(h.pid)];
    auto cur = static_cast<std::int64_t>(h.ctx->read(c));
    if (idx > cur) {
      bool ok = h.ctx->cas(c, static_cast<Word>(cur), static_cast<Word>(idx));
      assert(ok && "last[] entries are single-writer");
      (void)ok;
    }
  }

  static Word raw(const Cell& c) {
    if constexpr (std::is_same_v<Cell, SimCell>) {
      return c.v;
    } else {
      return c.v.load(std::memory_order_seq_cst);
    }
  }

  Mutations muts_;
  int nprocs_;
  std::int64_t gc_period_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<Node*> leaves_;
  std::unique_ptr<Cell[]> last_;
  Node* root_ = nullptr;
  B* dummy_ = nullptr;
};

}  // namespace wfq
