#pragma once

#include <cstdint>

#include "wfq/common.hpp"
#include "wfq/memory.hpp"

namespace wfq {

// Immutable record representing a batch of operations via prefix sums and
// child-range indices. Leaf blocks represent a single enqueue or dequeue;
// internal blocks represent the concatenation of consecutive child blocks.
// Only `super` (unbounded variant) and `response` (bounded variant, dequeue
// leaf blocks) are mutable, each set at most once through a CAS from unset.
template <class M>
struct Block : CanonRecord {
  using Cell = typename M::Cell;

  // number of enqueues / dequeues in this node's blocks[1..i], i = this index
  std::int64_t sum_enq = 0;
  std::int64_t sum_deq = 0;
  // internal nodes: index of last direct subblock in each child
  std::int64_t end_left = 0;
  std::int64_t end_right = 0;
  // root node: queue size after this block's operations
  std::int64_t size = 0;
  // leaf nodes: the operation
  Word element = kUnset;
  bool is_enq = false;
  // bounded variant: position this block would have in the blocks array
  std::int64_t index = 0;

  Cell super;     // approximate index of superblock in parent (unbounded)
  Cell response;  // helped dequeue result (bounded, leaf dequeue blocks)
};

// Bounded-variant dequeue result published through a response cell.
struct Response : CanonRecord {
  bool has_value = false;
  Word value = kUnset;
};

}  // namespace wfq
