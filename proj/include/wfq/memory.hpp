#pragma once

#include <atomic>
#include <cstdint>
#include <optional>

#include "wfq/common.hpp"

namespace wfq {

// Role of a shared cell, used by the simulated backing for invariant hooks
// and for canonicalizing observed values. The native backing ignores it.
enum class CellRole : std::uint8_t {
  Other,
  Head,       // per-node append position
  BlockSlot,  // blocks[i] within a node
  ChunkSlot,  // directory slot holding a chunk pointer
  Super,      // block's superblock hint
  Version,    // node's published block-tree version (bounded variant)
  Last,       // last[] entry (bounded variant)
  Response,   // helped dequeue result (bounded variant)
};

// Base for immutable records published through cells. `canon` is a
// schedule-independent identity (creator process + per-creator ordinal)
// assigned by the simulated backing; the native backing leaves it zero.
struct CanonRecord {
  std::uint32_t canon = 0;
};

// ---------------------------------------------------------------------------
// Native backing: plain seq_cst atomics, one context per OS thread.
// ---------------------------------------------------------------------------

struct NativeMem {
  struct Cell {
    std::atomic<Word> v{kUnset};
  };

  class Env {
   public:
    Arena& arena() { return arena_; }

   private:
    Arena arena_;  // construction-time records (nodes, dummy blocks)
  };

  class Ctx {
   public:
    Ctx(Env& env, int pid) : pid_(pid) { (void)env; }

    Word read(Cell& c) {
      m_.steps++;
      return c.v.load(std::memory_order_seq_cst);
    }
    void write(Cell& c, Word w) {
      m_.steps++;
      c.v.store(w, std::memory_order_seq_cst);
    }
    bool cas(Cell& c, Word expected, Word desired) {
      m_.steps++;
      m_.cas_attempts++;
      Word e = expected;
      bool ok = c.v.compare_exchange_strong(e, desired,
                                            std::memory_order_seq_cst);
      if (ok) m_.cas_successes++;
      return ok;
    }
    // Step accounting for hops through immutable shared records (tree-version
    // nodes). These are not scheduling-relevant but they are shared-memory
    // reads in the cost model.
    void local_fetch(std::uint64_t n = 1) { m_.steps += n; }

    template <class T, class... Args>
    T* create(Args&&... args) {
      return arena_.make<T>(std::forward<Args>(args)...);
    }
    void* allocate(std::size_t bytes, std::size_t align) {
      return arena_.allocate(bytes, align);
    }

    void note_container(std::int64_t n) {
      if (n > m_.container_peak) m_.container_peak = n;
    }
    void note_missing_block(Cell* /*response_cell*/) {}

    int pid() const { return pid_; }
    Metrics& metrics() { return m_; }

   private:
    int pid_;
    Metrics m_;
    Arena arena_;  // records created by this thread; freed with the run
  };

  static void init_cell(Cell& c, Word w) {
    c.v.store(w, std::memory_order_relaxed);
  }
  static void label(Cell&, CellRole, int /*node*/, int /*owner*/,
                    std::int64_t /*index*/) {}
};

// ---------------------------------------------------------------------------
// Simulated backing: plain cells carrying metadata; every access is mediated
// by the deterministic executor (sim_exec.hpp defines SimMem::Ctx).
// ---------------------------------------------------------------------------

struct SimCell {
  Word v = kUnset;
  CellRole role = CellRole::Other;
  std::int16_t node_id = -1;
  std::int16_t owner = -1;  // pid for single-writer cells, -1 otherwise
  std::int64_t index = -1;  // block index / directory slot / process slot
};

class SimExec;  // sim_exec.hpp

struct SimMem {
  using Cell = SimCell;
  class Ctx;               // defined in sim_exec.hpp
  using Env = SimExec;     // the executor owns the run's arena

  static void init_cell(Cell& c, Word w) { c.v = w; }
  static void label(Cell& c, CellRole role, int node, int owner,
                    std::int64_t index) {
    c.role = role;
    c.node_id = static_cast<std::int16_t>(node);
    c.owner = static_cast<std::int16_t>(owner);
    c.index = index;
  }
};

// Thrown by bounded-variant lookups when a block was discarded by another
// process's GC phase; callers terminate the enclosing operation early.
struct BlockGone {};

}  // namespace wfq
