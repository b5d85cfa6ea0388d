#pragma once

#include <cassert>
#include <cstdint>

#include "wfq/block.hpp"
#include "wfq/common.hpp"
#include "wfq/memory.hpp"

namespace wfq {

// Persistent (node-copying) red-black tree of blocks keyed by index.
// Versions are immutable: every update returns a new version built from
// O(log n) fresh nodes; old versions stay valid. Each version carries O(1)
// pointers to its minimum and maximum blocks and its block count.
//
// Because block fields sum_enq, end_left and end_right are non-decreasing in
// index order, the tree also answers monotone-aggregate searches on those
// fields in O(log n).
template <class M>
class BlockTree {
 public:
  using B = Block<M>;
  using Ctx = typename M::Ctx;

  struct Node {
    const B* blk = nullptr;
    const Node* left = nullptr;
    const Node* right = nullptr;
    bool red = false;
    std::int32_t bh = 0;        // black height (nil counts 0)
    std::int64_t count = 0;
  };

  struct Version : CanonRecord {
    const Node* root = nullptr;
    const B* min_blk = nullptr;
    const B* max_blk = nullptr;
    std::int64_t count = 0;
  };

  // Construction-time bootstrap (no ctx): a version holding just `dummy`.
  static const Version* make_initial(Arena& ar, const B* dummy) {
    Node* n = ar.make<Node>();
    n->blk = dummy;
    n->red = false;
    n->bh = 1;
    n->count = 1;
    Version* v = ar.make<Version>();
    v->root = n;
    v->min_blk = dummy;
    v->max_blk = dummy;
    v->count = 1;
    return v;
  }

  static const Version* insert_max(Ctx& c, const Version* t, const B* b) {
    assert(b->index == t->max_blk->index + 1 &&
           "insert_max requires index max+1");
    const Node* r = blacken(c, join(c, t->root, b, nullptr));
    Version* v = c.template create<Version>();
    v->root = r;
    v->min_blk = t->min_blk;
    v->max_blk = b;
    v->count = t->count + 1;
    return v;
  }

  // New version containing exactly the blocks with index >= s. A split at or
  // below the minimum returns the input version unchanged.
  static const Version* split_at(Ctx& c, const Version* t, std::int64_t s) {
    if (s <= t->min_blk->index) return t;
    assert(s <= t->max_blk->index && "split point beyond maximum");
    const Node* r = blacken(c, split_geq(c, t->root, s));
    Version* v = c.template create<Version>();
    v->root = r;
    v->max_blk = t->max_blk;
    v->min_blk = leftmost(c, r);
    v->count = r ? r->count : 0;
    assert(v->min_blk != nullptr && v->min_blk->index == s);
    return v;
  }

  static const B* find(Ctx& c, const Version* t, std::int64_t i) {
    const Node* n = t->root;
    while (n != nullptr) {
      c.local_fetch();
      if (n->blk->index == i) return n->blk;
      n = i < n->blk->index ? n->left : n->right;
    }
    return nullptr;
  }

  // Leftmost block whose monotone field f(blk) is >= target, or null.
  template <class F>
  static const B* min_with_geq(Ctx& c, const Version* t, F f,
                               std::int64_t target) {
    const Node* n = t->root;
    const B* best = nullptr;
    while (n != nullptr) {
      c.local_fetch();
      if (f(n->blk) >= target) {
        best = n->blk;
        n = n->left;
      } else {
        n = n->right;
      }
    }
    return best;
  }

  // Rightmost block whose monotone field f(blk) is < target, or null.
  template <class F>
  static const B* max_with_lt(Ctx& c, const Version* t, F f,
                              std::int64_t target) {
    const Node* n = t->root;
    const B* best = nullptr;
    while (n != nullptr) {
      c.local_fetch();
      if (f(n->blk) < target) {
        best = n->blk;
        n = n->right;
      } else {
        n = n->left;
      }
    }
    return best;
  }

  static const B* min_sum_enq_geq(Ctx& c, const Version* t, std::int64_t e) {
    return min_with_geq(c, t, [](const B* b) { return b->sum_enq; }, e);
  }
  static const B* min_end_geq(Ctx& c, const Version* t, bool left_side,
                              std::int64_t b) {
    return left_side
               ? min_with_geq(c, t, [](const B* x) { return x->end_left; }, b)
               : min_with_geq(c, t, [](const B* x) { return x->end_right; },
                              b);
  }
  static const B* max_end_lt(Ctx& c, const Version* t, bool left_side,
                             std::int64_t b) {
    return left_side
               ? max_with_lt(c, t, [](const B* x) { return x->end_left; }, b)
               : max_with_lt(c, t, [](const B* x) { return x->end_right; }, b);
  }

  // --- test support -------------------------------------------------------

  static int height(const Node* n) {
    if (!n) return 0;
    return 1 + std::max(height(n->left), height(n->right));
  }

  // Red-black structure check; returns black height or -1 on violation.
  static std::int64_t validate(const Node* n) {
    if (!n) return 0;
    if (n->red && (is_red(n->left) || is_red(n->right))) return -1;
    std::int64_t lb = validate(n->left);
    std::int64_t rb = validate(n->right);
    if (lb < 0 || rb < 0 || lb != rb) return -1;
    if (n->count != cnt(n->left) + cnt(n->right) + 1) return -1;
    if (n->bh != lb + (n->red ? 0 : 1)) return -1;
    if (n->left && n->left->blk->index >= n->blk->index) return -1;
    if (n->right && n->right->blk->index <= n->blk->index) return -1;
    return lb + (n->red ? 0 : 1);
  }

  template <class F>
  static void inorder(const Node* n, F&& f) {
    if (!n) return;
    inorder(n->left, f);
    f(n->blk);
    inorder(n->right, f);
  }

 private:
  static bool is_red(const Node* n) { return n != nullptr && n->red; }
  static std::int32_t bh(const Node* n) { return n ? n->bh : 0; }
  static std::int64_t cnt(const Node* n) { return n ? n->count : 0; }

  static const Node* mk(Ctx& c, const Node* l, const B* b, const Node* r,
                        bool red) {
    assert(bh(l) == bh(r));
    c.local_fetch();
    Node* n = c.template create<Node>();
    n->blk = b;
    n->left = l;
    n->right = r;
    n->red = red;
    n->bh = bh(l) + (red ? 0 : 1);
    n->count = cnt(l) + cnt(r) + 1;
    return n;
  }

  static const Node* blacken(Ctx& c, const Node* n) {
    if (!is_red(n)) return n;
    return mk(c, n->left, n->blk, n->right, false);
  }

  static const B* leftmost(Ctx& c, const Node* n) {
    if (!n) return nullptr;
    while (n->left != nullptr) {
      c.local_fetch();
      n = n->left;
    }
    c.local_fetch();
    return n->blk;
  }

  // pre: bh(l) >= bh(r), l and r valid with black roots (or nil). The result
  // contains l < k < r, has black height bh(l), and is valid except that its
  // root may be red, possibly with a red right child (fixed by the caller).
  static const Node* join_right(Ctx& c, const Node* l, const B* k,
                                const Node* r) {
    if (!is_red(l) && bh(l) == bh(r)) return mk(c, l, k, r, true);
    const Node* inner = join_right(c, l->right, k, r);
    if (!l->red && is_red(inner) && is_red(inner->right)) {
      // blacken the right-right grandchild and rotate left
      const Node* rr = mk(c, inner->right->left, inner->right->blk,
                          inner->right->right, false);
      const Node* nl = mk(c, l->left, l->blk, inner->left, false);
      return mk(c, nl, inner->blk, rr, true);
    }
    return mk(c, l->left, l->blk, inner, l->red);
  }

  static const Node* join_left(Ctx& c, const Node* l, const B* k,
                               const Node* r) {
    if (!is_red(r) && bh(l) == bh(r)) return mk(c, l, k, r, true);
    const Node* inner = join_left(c, l, k, r->left);
    if (!r->red && is_red(inner) && is_red(inner->left)) {
      const Node* ll = mk(c, inner->left->left, inner->left->blk,
                          inner->left->right, false);
      const Node* nr = mk(c, inner->right, r->blk, r->right, false);
      return mk(c, ll, inner->blk, nr, true);
    }
    return mk(c, inner, r->blk, r->right, r->red);
  }

  static const Node* join(Ctx& c, const Node* l, const B* k, const Node* r) {
    l = blacken(c, l);
    r = blacken(c, r);
    if (bh(l) > bh(r)) {
      const Node* t = join_right(c, l, k, r);
      if (is_red(t) && is_red(t->right))
        return mk(c, t->left, t->blk, t->right, false);
      return t;
    }
    if (bh(r) > bh(l)) {
      const Node* t = join_left(c, l, k, r);
      if (is_red(t) && is_red(t->left))
        return mk(c, t->left, t->blk, t->right, false);
      return t;
    }
    return mk(c, l, k, r, true);
  }

  static const Node* split_geq(Ctx& c, const Node* n, std::int64_t s) {
    if (!n) return nullptr;
    c.local_fetch();
    if (n->blk->index < s) return split_geq(c, n->right, s);
    const Node* l = split_geq(c, n->left, s);
    return join(c, l, n->blk, n->right);
  }
};

}  // namespace wfq
