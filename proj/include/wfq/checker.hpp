#pragma once

#include <optional>
#include <vector>

#include "wfq/history.hpp"

namespace wfq {

enum class Verdict { Accept, Reject, InputError };

// Sequential FIFO replay of a linearization order.
struct ReplayResult {
  // response per dequeue, in L order (nullopt = empty signal)
  std::vector<std::optional<Word>> dequeue_results;
  // matched enqueue rank (1-based among enqueues in L) per non-null dequeue
  std::vector<std::int64_t> matched_rank;
  std::int64_t final_size = 0;
  std::int64_t q_max = 0;  // maximum queue size at any point during replay
};
ReplayResult replay_fifo(const std::vector<LinOp>& lin);

// Queue size after each segment when replaying a root-block-segmented
// linearization (enqueues of a segment before its dequeues).
std::vector<std::int64_t> replay_segment_sizes(const Linearization& lin);

// Is `h` linearizable w.r.t. sequential FIFO queue semantics? Exploits
// unique enqueue values; pending operations may take effect or not.
Verdict check_history(const History& h);

// Independent oracle: brute-force enumeration of all orderings. Only
// feasible for small histories; requires all operations completed.
Verdict brute_force_check(const History& h);

// True iff `lin` (a) contains every completed op of `h` exactly once,
// (b) extends the real-time precedence of `h`, and (c) replays to the
// recorded responses.
bool verify_witness(const History& h, const std::vector<LinOp>& lin);

}  // namespace wfq
