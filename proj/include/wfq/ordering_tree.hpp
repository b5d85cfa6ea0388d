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

namespace wfq {

// Unbounded-space wait-free FIFO queue. A static binary tree has one leaf per
// process; operations are appended to leaves, propagated to the root by
// double Refresh, and ordered by expanding root blocks (enqueues before
// dequeues within a block). Dequeue responses are computed by index
// arithmetic over the prefix sums stored in blocks.
template <class M>
class TreeQueue {
 public:
  using Ctx = typename M::Ctx;
  using Cell = typename M::Cell;
  using Env = typename M::Env;
  using B = Block<M>;

  struct Tuning {
    int chunk_log2 = 12;              // blocks per directory chunk
    std::int64_t dir_slots = 1 << 12; // chunks per node
  };

  // Test-only fault injection; both default off.
  struct Mutations {
    bool skip_second_refresh = false;
    bool skip_help_advance = false;
  };

  struct Node {
    Node* left = nullptr;
    Node* right = nullptr;
    Node* parent = nullptr;
    int id = 0;
    int pid = -1;  // owning process for leaves in use
    bool is_leaf = false;
    Cell head;
    std::unique_ptr<Cell[]> dir;  // chunk directory
  };

  struct Handle {
    int pid = -1;
    Ctx* ctx = nullptr;
    Node* leaf = nullptr;
    bool in_flight = false;
    // Chunk pointers are write-once; processes memoize them locally.
    std::vector<std::vector<Cell*>> chunk_cache;
  };

  TreeQueue(Env& env, int nprocs, Tuning t = {}, Mutations m = {})
      : tuning_(t), muts_(m), nprocs_(nprocs) {
    assert(nprocs >= 1);
    chunk_mask_ = (std::int64_t(1) << tuning_.chunk_log2) - 1;
    std::int64_t nleaves = next_pow2(nprocs);
    std::int64_t total = 2 * nleaves - 1;
    nodes_.reserve(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; i++) {
      nodes_.push_back(std::make_unique<Node>());
      Node* n = nodes_.back().get();
      n->id = static_cast<int>(i);
      n->is_leaf = (i >= nleaves - 1);
      n->dir = std::make_unique<Cell[]>(
          static_cast<std::size_t>(tuning_.dir_slots));
    }
    for (std::int64_t i = 0; i < total; i++) {
      Node* n = nodes_[static_cast<std::size_t>(i)].get();
      if (!n->is_leaf) {
        n->left = nodes_[static_cast<std::size_t>(2 * i + 1)].get();
        n->right = nodes_[static_cast<std::size_t>(2 * i + 2)].get();
        n->left->parent = n;
        n->right->parent = n;
      }
    }
    root_ = nodes_[0].get();
    for (int p = 0; p < nprocs; p++) {
      Node* lf = nodes_[static_cast<std::size_t>(nleaves - 1 + p)].get();
      lf->pid = p;
      leaves_.push_back(lf);
    }
    dummy_ = env.arena().template make<B>();
    for (auto& uptr : nodes_) {
      Node* n = uptr.get();
      M::init_cell(n->head, 1);
      M::label(n->head, CellRole::Head, n->id, -1, -1);
      for (std::int64_t d = 0; d < tuning_.dir_slots; d++) {
        M::init_cell(n->dir[static_cast<std::size_t>(d)], kUnset);
        M::label(n->dir[static_cast<std::size_t>(d)], CellRole::ChunkSlot,
                 n->id, n->is_leaf ? n->pid : -1, d);
      }
      // chunk 0 is pre-installed with the dummy block in slot 0
      Cell* c0 = build_chunk(env.arena(), n, 0);
      M::init_cell(n->dir[0], pack_ptr(c0));
      M::init_cell(c0[0], pack_ptr(dummy_));
    }
  }

  Handle make_handle(int pid, Ctx& ctx) {
    Handle h;
    h.pid = pid;
    h.ctx = &ctx;
    h.leaf = pid >= 0 ? leaves_[static_cast<std::size_t>(pid)] : nullptr;
    h.chunk_cache.resize(nodes_.size());
    return h;
  }

  // ------------------------------------------------------------------ ops

  void enqueue(Handle& h, Word payload) {
    OpGuard g(h);
    std::int64_t hd = read_head(h, h.leaf);
    B* prev = read_block(h, h.leaf, hd - 1);
    B* b = h.ctx->template create<B>();
    b->element = payload;
    b->is_enq = true;
    b->sum_enq = prev->sum_enq + 1;
    b->sum_deq = prev->sum_deq;
    b->index = hd;
    if (h.leaf == root_) b->size = prev->size + 1;
    append(h, b, hd);
  }

  std::optional<Word> dequeue(Handle& h) {
    OpGuard g(h);
    std::int64_t hd = read_head(h, h.leaf);
    B* prev = read_block(h, h.leaf, hd - 1);
    B* b = h.ctx->template create<B>();
    b->is_enq = false;
    b->sum_enq = prev->sum_enq;
    b->sum_deq = prev->sum_deq + 1;
    b->index = hd;
    if (h.leaf == root_) b->size = prev->size > 0 ? prev->size - 1 : 0;
    append(h, b, hd);
    auto [rb, ri] = index_dequeue(h, h.leaf, hd, 1);
    return find_response(h, rb, ri);
  }

  // Append a freshly created leaf block at the leaf's current head position
  // and propagate it to the root.
  void append(Handle& h, B* b, std::int64_t hd) {
    write_block_leaf(h, h.leaf, hd, b);
    advance(h, h.leaf, hd);
    if (h.leaf != root_) propagate(h, h.leaf->parent);
  }

  void propagate(Handle& h, Node* v) {
    if (!refresh(h, v)) {
      if (!muts_.skip_second_refresh) refresh(h, v);
    }
    if (v != root_) propagate(h, v->parent);
  }

  bool refresh(Handle& h, Node* v) {
    std::int64_t hd = read_head(h, v);
    for (Node* c : {v->left, v->right}) {
      std::int64_t ch = read_head(h, c);
      B* cb = read_block(h, c, ch);
      if (cb != nullptr && !muts_.skip_help_advance) advance(h, c, ch);
    }
    B* nb = create_block(h, v, hd);
    if (nb == nullptr) return true;
    bool ok = install_block(h, v, hd, nb);
    advance(h, v, hd);
    return ok;
  }

  // Builds the block a Refresh will try to install in v.blocks[i]; returns
  // null when the children hold nothing new.
  B* create_block(Handle& h, Node* v, std::int64_t i) {
    std::int64_t el = read_head(h, v->left) - 1;
    std::int64_t er = read_head(h, v->right) - 1;
    B* lb = read_block(h, v->left, el);
    B* rb = read_block(h, v->right, er);
    B* prev = read_block(h, v, i - 1);
    assert(lb && rb && prev);
    std::int64_t sum_enq = lb->sum_enq + rb->sum_enq;
    std::int64_t sum_deq = lb->sum_deq + rb->sum_deq;
    std::int64_t num_enq = sum_enq - prev->sum_enq;
    std::int64_t num_deq = sum_deq - prev->sum_deq;
    if (num_enq + num_deq == 0) return nullptr;
    B* nb = h.ctx->template create<B>();
    nb->end_left = el;
    nb->end_right = er;
    nb->sum_enq = sum_enq;
    nb->sum_deq = sum_deq;
    nb->index = i;
    if (v == root_) {
      std::int64_t s = prev->size + num_enq - num_deq;
      nb->size = s > 0 ? s : 0;
    }
    return nb;
  }

  // Sets blocks[hd].super (non-root) and advances v.head from hd to hd+1.
  // Both CAS steps may fail harmlessly when another process already did them.
  void advance(Handle& h, Node* v, std::int64_t hd) {
    if (v != root_) {
      std::int64_t hp = read_head(h, v->parent);
      B* b = read_block(h, v, hd);
      assert(b != nullptr);
      h.ctx->cas(b->super, kUnset, static_cast<Word>(hp));
    }
    cas_head(h, v, hd, hd + 1);
  }

  // Locates the i-th dequeue of v.blocks[b] in the root: returns (b', i')
  // such that it is the i'-th dequeue of D(root.blocks[b']).
  std::pair<std::int64_t, std::int64_t> index_dequeue(Handle& h, Node* v,
                                                      std::int64_t b,
                                                      std::int64_t i) {
    if (v == root_) return {b, i};
    Node* p = v->parent;
    bool from_left = (p->left == v);
    B* vb = read_block(h, v, b);
    assert(vb != nullptr);
    auto sup = static_cast<std::int64_t>(h.ctx->read(vb->super));
    assert(sup != 0);
    B* psup = read_block(h, p, sup);
    B* psup_prev;
    if (b > (from_left ? psup->end_left : psup->end_right)) {
      // super may lag the true superblock index by one
      sup += 1;
      psup_prev = psup;
      psup = read_block(h, p, sup);
    } else {
      psup_prev = read_block(h, p, sup - 1);
    }
    assert(psup != nullptr && psup_prev != nullptr);
    // rank shift: dequeues of earlier direct subblocks from v's side
    B* vprev = read_block(h, v, b - 1);
    std::int64_t start_dir = from_left ? psup_prev->end_left
                                       : psup_prev->end_right;
    B* vstart = read_block(h, v, start_dir);
    i += vprev->sum_deq - vstart->sum_deq;
    if (!from_left) {
      // all subblocks from the left sibling precede v's within the superblock
      Node* sib = p->left;
      B* sl_end = read_block(h, sib, psup->end_left);
      B* sl_start = read_block(h, sib, psup_prev->end_left);
      i += sl_end->sum_deq - sl_start->sum_deq;
    }
    return index_dequeue(h, p, sup, i);
  }

  // Response of the i-th dequeue of D(root.blocks[b]): the matching payload,
  // or nullopt when the queue is empty at its linearization point.
  std::optional<Word> find_response(Handle& h, std::int64_t b,
                                    std::int64_t i) {
    B* blk = read_block(h, root_, b);
    B* prev = read_block(h, root_, b - 1);
    std::int64_t num_enq = blk->sum_enq - prev->sum_enq;
    if (prev->size + num_enq < i) return std::nullopt;  // null dequeue
    std::int64_t e = i + prev->sum_enq - prev->size;
    std::int64_t be = doubling_search(h, b, e);
    B* bprev = read_block(h, root_, be - 1);
    std::int64_t ie = e - bprev->sum_enq;
    return get_enqueue(h, root_, be, ie);
  }

  // Argument of the i-th enqueue in E(v.blocks[b]).
  Word get_enqueue(Handle& h, Node* v, std::int64_t b, std::int64_t i) {
    if (v->is_leaf) {
      B* blk = read_block(h, v, b);
      assert(blk && blk->is_enq && i == 1);
      return blk->element;
    }
    B* blk = read_block(h, v, b);
    B* prev = read_block(h, v, b - 1);
    B* l_end = read_block(h, v->left, blk->end_left);
    B* l_prev = read_block(h, v->left, prev->end_left);
    std::int64_t from_left = l_end->sum_enq - l_prev->sum_enq;
    Node* dir;
    std::int64_t lo, hi, prev_dir;
    if (i <= from_left) {
      dir = v->left;
      lo = prev->end_left + 1;
      hi = blk->end_left;
      prev_dir = l_prev->sum_enq;
    } else {
      i -= from_left;
      B* r_prev = read_block(h, v->right, prev->end_right);
      dir = v->right;
      lo = prev->end_right + 1;
      hi = blk->end_right;
      prev_dir = r_prev->sum_enq;
    }
    // min b2 in [lo..hi] with dir.blocks[b2].sum_enq >= i + prev_dir
    std::int64_t target = i + prev_dir;
    std::int64_t a = lo - 1, z = hi;  // sums[a] < target <= sums[z]
    while (z - a > 1) {
      std::int64_t mid = a + (z - a) / 2;
      B* mb = read_block(h, dir, mid);
      if (mb->sum_enq >= target)
        z = mid;
      else
        a = mid;
    }
    std::int64_t b2 = z;
    B* before = read_block(h, dir, b2 - 1);
    std::int64_t i2 = i - (before->sum_enq - prev_dir);
    return get_enqueue(h, dir, b2, i2);
  }

  // Minimal b_e <= b with root.blocks[b_e].sum_enq >= e. Probes b-1, b-2,
  // b-4, ... to bracket the answer, then binary-searches the bracket.
  std::int64_t doubling_search(Handle& h, std::int64_t b, std::int64_t e,
                               std::int64_t* probes = nullptr) {
    std::int64_t lo = 0, hi = b;  // sums[lo] < e <= sums[hi]
    std::int64_t d = 1;
    std::int64_t nprobes = 0;
    while (b - d >= 1) {
      std::int64_t idx = b - d;
      B* x = read_block(h, root_, idx);
      nprobes++;
      if (x->sum_enq >= e) {
        hi = idx;
        d <<= 1;
      } else {
        lo = idx;
        break;
      }
    }
    while (hi - lo > 1) {
      std::int64_t mid = lo + (hi - lo) / 2;
      B* x = read_block(h, root_, mid);
      nprobes++;
      if (x->sum_enq >= e)
        hi = mid;
      else
        lo = mid;
    }
    if (probes) *probes = nprobes;
    return hi;
  }

  // ------------------------------------------------------- shared accesses

  std::int64_t read_head(Handle& h, Node* v) {
    return static_cast<std::int64_t>(h.ctx->read(v->head));
  }
  bool cas_head(Handle& h, Node* v, std::int64_t from, std::int64_t to) {
    return h.ctx->cas(v->head, static_cast<Word>(from),
                      static_cast<Word>(to));
  }

  B* read_block(Handle& h, Node* v, std::int64_t i) {
    assert(i >= 0);
    Cell* slot = try_slot(h, v, i);
    if (slot == nullptr) return nullptr;
    return unpack_ptr<B>(h.ctx->read(*slot));
  }

  bool install_block(Handle& h, Node* v, std::int64_t i, B* b) {
    Cell* slot = ensure_slot(h, v, i);
    return h.ctx->cas(*slot, kUnset, pack_ptr(b));
  }

  void write_block_leaf(Handle& h, Node* v, std::int64_t i, B* b) {
    Cell* slot = ensure_slot(h, v, i);
    h.ctx->write(*slot, pack_ptr(b));
  }

  // ------------------------------------------------------- introspection

  Node* root() { return root_; }
  const Node* root() const { return root_; }
  Node* leaf_of(int pid) { return leaves_[static_cast<std::size_t>(pid)]; }
  int nprocs() const { return nprocs_; }
  const std::vector<std::unique_ptr<Node>>& all_nodes() const {
    return nodes_;
  }
  const B* dummy() const { return dummy_; }
  Mutations& mutations() { return muts_; }

  // Raw (unscheduled, unmetered) reads for hooks, tests and extraction.
  std::int64_t head_raw(const Node* v) const { return raw(v->head); }
  const B* block_raw(const Node* v, std::int64_t i) const {
    if (i < 0) return nullptr;
    std::int64_t d = i >> tuning_.chunk_log2;
    if (d >= tuning_.dir_slots) return nullptr;
    Word cw = raw(v->dir[static_cast<std::size_t>(d)]);
    if (cw == kUnset) return nullptr;
    const Cell* chunk = unpack_ptr<const Cell>(cw);
    return unpack_ptr<const B>(raw(chunk[i & chunk_mask_]));
  }

  // E(B) and D(B) of block (v, i), as operation references.
  void expand_raw(const Node* v, std::int64_t i, std::vector<LinOp>& E,
                  std::vector<LinOp>& D) const {
    const B* b = block_raw(v, i);
    assert(b != nullptr);
    if (v->is_leaf) {
      LinOp op{{v->pid, i}, b->is_enq ? OpKind::Enq : OpKind::Deq, b->element};
      (b->is_enq ? E : D).push_back(op);
      return;
    }
    const B* prev = block_raw(v, i - 1);
    for (std::int64_t j = prev->end_left + 1; j <= b->end_left; j++)
      expand_raw(v->left, j, E, D);
    for (std::int64_t j = prev->end_right + 1; j <= b->end_right; j++)
      expand_raw(v->right, j, E, D);
  }

  // Root-block-segmented linearization of a quiescent queue.
  Linearization extract_linearization_raw() const {
    Linearization lin;
    for (std::int64_t i = 1;; i++) {
      const B* b = block_raw(root_, i);
      if (b == nullptr) break;
      std::vector<LinOp> E, D;
      expand_raw(root_, i, E, D);
      std::vector<LinOp> seg = std::move(E);
      seg.insert(seg.end(), D.begin(), D.end());
      lin.segments.push_back(std::move(seg));
      lin.sizes.push_back(b->size);
    }
    return lin;
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

  static Word raw(const Cell& c) {
    if constexpr (std::is_same_v<Cell, SimCell>) {
      return c.v;
    } else {
      return c.v.load(std::memory_order_seq_cst);
    }
  }

  Cell* build_chunk(Arena& ar, Node* n, std::int64_t d) {
    auto cap = std::size_t(1) << tuning_.chunk_log2;
    void* mem = ar.allocate(sizeof(Cell) * cap, alignof(Cell));
    Cell* cells = static_cast<Cell*>(mem);
    for (std::size_t k = 0; k < cap; k++) {
      new (&cells[k]) Cell();
      M::init_cell(cells[k], kUnset);
      M::label(cells[k], CellRole::BlockSlot, n->id,
               n->is_leaf ? n->pid : -1,
               (d << tuning_.chunk_log2) + static_cast<std::int64_t>(k));
    }
    return cells;
  }

  Cell*& cache_ref(Handle& h, Node* v, std::int64_t d) {
    auto& per_node = h.chunk_cache[static_cast<std::size_t>(v->id)];
    if (per_node.empty())
      per_node.resize(static_cast<std::size_t>(tuning_.dir_slots), nullptr);
    return per_node[static_cast<std::size_t>(d)];
  }

  Cell* try_slot(Handle& h, Node* v, std::int64_t i) {
    std::int64_t d = i >> tuning_.chunk_log2;
    assert(d < tuning_.dir_slots && "block directory capacity exceeded");
    Cell*& cached = cache_ref(h, v, d);
    if (cached == nullptr) {
      Word w = h.ctx->read(v->dir[static_cast<std::size_t>(d)]);
      if (w == kUnset) return nullptr;
      cached = unpack_ptr<Cell>(w);
    }
    return &cached[i & chunk_mask_];
  }

  Cell* ensure_slot(Handle& h, Node* v, std::int64_t i) {
    std::int64_t d = i >> tuning_.chunk_log2;
    assert(d < tuning_.dir_slots && "block directory capacity exceeded");
    Cell*& cached = cache_ref(h, v, d);
    if (cached == nullptr) {
      Word w = h.ctx->read(v->dir[static_cast<std::size_t>(d)]);
      if (w == kUnset) {
        Cell* fresh = build_chunk_runtime(h, v, d);
        if (v->is_leaf) {
          h.ctx->write(v->dir[static_cast<std::size_t>(d)], pack_ptr(fresh));
          w = pack_ptr(fresh);
        } else if (h.ctx->cas(v->dir[static_cast<std::size_t>(d)], kUnset,
                              pack_ptr(fresh))) {
          w = pack_ptr(fresh);
        } else {
          w = h.ctx->read(v->dir[static_cast<std::size_t>(d)]);
        }
      }
      cached = unpack_ptr<Cell>(w);
    }
    return &cached[i & chunk_mask_];
  }

  Cell* build_chunk_runtime(Handle& h, Node* v, std::int64_t d);

  Tuning tuning_;
  Mutations muts_;
  int nprocs_;
  std::int64_t chunk_mask_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<Node*> leaves_;
  Node* root_ = nullptr;
  B* dummy_ = nullptr;
};

template <class M>
typename TreeQueue<M>::Cell* TreeQueue<M>::build_chunk_runtime(
    Handle& h, Node* v, std::int64_t d) {
  auto cap = std::size_t(1) << tuning_.chunk_log2;
  void* mem = h.ctx->allocate(sizeof(Cell) * cap, alignof(Cell));
  Cell* cells = static_cast<Cell*>(mem);
  for (std::size_t k = 0; k < cap; k++) {
    new (&cells[k]) Cell();
    M::init_cell(cells[k], kUnset);
    M::label(cells[k], CellRole::BlockSlot, v->id,
             v->is_leaf ? v->pid : -1,
             (d << tuning_.chunk_log2) + static_cast<std::int64_t>(k));
  }
  return cells;
}

}  // namespace wfq
