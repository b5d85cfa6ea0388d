#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "wfq/prbt.hpp"
#include "wfq/sim_exec.hpp"

using namespace wfq;

namespace {

using Tree = BlockTree<SimMem>;
using B = Block<SimMem>;
using Ver = Tree::Version;

// Sorted-list reference implementation.
struct Oracle {
  std::vector<const B*> blocks;  // ascending index

  const B* find(std::int64_t i) const {
    for (const B* b : blocks)
      if (b->index == i) return b;
    return nullptr;
  }
  const B* min_sum_enq_geq(std::int64_t e) const {
    for (const B* b : blocks)
      if (b->sum_enq >= e) return b;
    return nullptr;
  }
  const B* min_end_geq(bool left, std::int64_t t) const {
    for (const B* b : blocks)
      if ((left ? b->end_left : b->end_right) >= t) return b;
    return nullptr;
  }
  const B* max_end_lt(bool left, std::int64_t t) const {
    const B* best = nullptr;
    for (const B* b : blocks)
      if ((left ? b->end_left : b->end_right) < t) best = b;
    return best;
  }
};

struct Fixture {
  SimExec ex{1};
  SimMem::Ctx& ctx = ex.inspector();
  SplitMix64 rng{12345};
  const Ver* tree = nullptr;
  Oracle oracle;
  std::int64_t next_sum_enq = 0, next_end_left = 0, next_end_right = 0;

  Fixture() {
    B* dummy = ex.arena().make<B>();
    tree = Tree::make_initial(ex.arena(), dummy);
    oracle.blocks.push_back(dummy);
  }

  const B* fresh_block() {
    B* b = ex.arena().make<B>();
    b->index = oracle.blocks.back()->index + 1;
    next_sum_enq += static_cast<std::int64_t>(rng.below(3));
    next_end_left += static_cast<std::int64_t>(rng.below(3));
    next_end_right += static_cast<std::int64_t>(rng.below(3));
    b->sum_enq = next_sum_enq;
    b->end_left = next_end_left;
    b->end_right = next_end_right;
    return b;
  }

  void insert() {
    const B* b = fresh_block();
    tree = Tree::insert_max(ctx, tree, b);
    oracle.blocks.push_back(b);
  }

  void split(std::int64_t s) {
    tree = Tree::split_at(ctx, tree, s);
    while (!oracle.blocks.empty() && oracle.blocks.front()->index < s)
      oracle.blocks.erase(oracle.blocks.begin());
  }

  void check_structure() const {
    REQUIRE(Tree::validate(tree->root) >= 0);
    REQUIRE(tree->count == static_cast<std::int64_t>(oracle.blocks.size()));
    REQUIRE(tree->min_blk == oracle.blocks.front());
    REQUIRE(tree->max_blk == oracle.blocks.back());
    int h = Tree::height(tree->root);
    double bound = 2.0 * std::log2(static_cast<double>(tree->count) + 1.0);
    REQUIRE(h <= static_cast<int>(bound) + 1);
  }
};

}  // namespace

TEST_CASE("insert into {0} gives {0,1}") {
  Fixture f;
  f.insert();
  f.check_structure();
  CHECK(Tree::find(f.ctx, f.tree, 0) != nullptr);
  CHECK(Tree::find(f.ctx, f.tree, 1) != nullptr);
  CHECK(Tree::find(f.ctx, f.tree, 2) == nullptr);
}

TEST_CASE("1000 sequential inserts stay balanced") {
  Fixture f;
  for (int i = 0; i < 1000; i++) f.insert();
  f.check_structure();
  CHECK(f.tree->count == 1001);
}

TEST_CASE("old versions answer queries after later inserts (persistence)") {
  Fixture f;
  for (int i = 0; i < 64; i++) f.insert();
  const Ver* old = f.tree;
  std::int64_t old_max = old->max_blk->index;
  for (int i = 0; i < 64; i++) f.insert();
  f.split(40);
  CHECK(old->max_blk->index == old_max);
  for (std::int64_t i = 0; i <= old_max; i++)
    CHECK(Tree::find(f.ctx, old, i) != nullptr);
  CHECK(Tree::find(f.ctx, old, old_max + 1) == nullptr);
}

TEST_CASE("split_at removes the prefix; min/max stay consistent") {
  Fixture f;
  for (int i = 0; i < 10; i++) f.insert();  // indices 0..10
  f.split(5);
  f.check_structure();
  CHECK(f.tree->min_blk->index == 5);
  CHECK(f.tree->max_blk->index == 10);
  CHECK(Tree::find(f.ctx, f.tree, 3) == nullptr);
  CHECK(Tree::find(f.ctx, f.tree, 5) != nullptr);
  SUBCASE("split at min is a no-op") {
    const Ver* before = f.tree;
    f.split(5);
    CHECK(f.tree == before);
  }
  SUBCASE("split then insert keeps consecutive indices") {
    f.insert();
    f.check_structure();
    CHECK(f.tree->max_blk->index == 11);
  }
}

TEST_CASE("monotone searches match the linear-scan oracle") {
  Fixture f;
  for (int i = 0; i < 200; i++) f.insert();
  for (int trial = 0; trial < 500; trial++) {
    std::int64_t e = static_cast<std::int64_t>(f.rng.below(
        static_cast<std::uint64_t>(f.next_sum_enq + 3)));
    CHECK(Tree::min_sum_enq_geq(f.ctx, f.tree, e) ==
          f.oracle.min_sum_enq_geq(e));
    std::int64_t t = static_cast<std::int64_t>(f.rng.below(
        static_cast<std::uint64_t>(f.next_end_left + 3)));
    bool left = f.rng.below(2) == 0;
    CHECK(Tree::min_end_geq(f.ctx, f.tree, left, t) ==
          f.oracle.min_end_geq(left, t));
    CHECK(Tree::max_end_lt(f.ctx, f.tree, left, t) ==
          f.oracle.max_end_lt(left, t));
  }
}

TEST_CASE("randomized insert/split/query agreement with the oracle") {
  Fixture f;
  std::vector<std::pair<const Ver*, Oracle>> retained;
  for (int step = 0; step < 20000; step++) {
    std::uint64_t r = f.rng.below(100);
    if (r < 70 || f.oracle.blocks.size() < 4) {
      f.insert();
    } else if (r < 80) {
      std::int64_t lo = f.oracle.blocks.front()->index;
      std::int64_t hi = f.oracle.blocks.back()->index;
      std::int64_t s = lo + static_cast<std::int64_t>(f.rng.below(
                                static_cast<std::uint64_t>(hi - lo + 1)));
      f.split(s);
    } else {
      std::int64_t lo = f.oracle.blocks.front()->index;
      std::int64_t hi = f.oracle.blocks.back()->index;
      std::int64_t i = lo - 2 +
                       static_cast<std::int64_t>(f.rng.below(
                           static_cast<std::uint64_t>(hi - lo + 5)));
      CHECK(Tree::find(f.ctx, f.tree, i) == f.oracle.find(i));
    }
    if (step % 500 == 0) {
      f.check_structure();
      if (retained.size() < 20) retained.push_back({f.tree, f.oracle});
    }
  }
  f.check_structure();
  // retained historical versions still answer as of their creation time
  for (auto& [ver, orc] : retained) {
    CHECK(ver->count == static_cast<std::int64_t>(orc.blocks.size()));
    for (int k = 0; k < 20; k++) {
      std::int64_t lo = orc.blocks.front()->index;
      std::int64_t hi = orc.blocks.back()->index;
      std::int64_t i = lo + static_cast<std::int64_t>(f.rng.below(
                                static_cast<std::uint64_t>(hi - lo + 1)));
      CHECK(Tree::find(f.ctx, ver, i) == orc.find(i));
    }
  }
}
