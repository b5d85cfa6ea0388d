#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "wfq/common.hpp"

namespace wfq {

enum class RespKind : std::uint8_t { Pending, Ok, Value, Empty };

// One recorded operation: invocation and (possibly pending) response.
struct Event {
  OpId op;
  OpKind kind = OpKind::Raw;
  Word arg = 0;  // enqueue payload tag
  std::uint64_t invoke_ts = 0;
  RespKind resp = RespKind::Pending;
  Word resp_value = 0;
  std::uint64_t response_ts = 0;

  bool completed() const { return resp != RespKind::Pending; }
  // Real-time precedence: this op responded before `o` was invoked.
  bool precedes(const Event& o) const {
    return completed() && response_ts < o.invoke_ts;
  }
};

struct History {
  int nprocs = 0;
  std::vector<Event> events;

  // Maximum number of operations concurrently between invocation and
  // response (point contention), computed offline.
  int point_contention() const {
    struct Pt {
      std::uint64_t ts;
      int delta;
    };
    std::vector<Pt> pts;
    for (const auto& e : events) {
      pts.push_back({e.invoke_ts, 1});
      if (e.completed()) pts.push_back({e.response_ts, -1});
    }
    std::sort(pts.begin(), pts.end(),
              [](const Pt& a, const Pt& b) { return a.ts < b.ts; });
    int cur = 0, best = 0;
    for (const auto& p : pts) {
      cur += p.delta;
      if (cur > best) best = cur;
    }
    return best;
  }
};

// Operation reference used by linearizations and the replay oracle.
struct LinOp {
  OpId op;
  OpKind kind = OpKind::Enq;
  Word arg = 0;  // enqueue payload
  friend bool operator==(const LinOp& a, const LinOp& b) {
    return a.op == b.op && a.kind == b.kind && a.arg == b.arg;
  }
};

// Root-block-segmented linearization extracted from a quiescent queue:
// segment k holds E(B_k) followed by D(B_k).
struct Linearization {
  std::vector<std::vector<LinOp>> segments;
  std::vector<std::int64_t> sizes;  // root block size fields, per segment
  bool partial = false;             // bounded variant: prefix discarded by GC

  std::vector<LinOp> flatten() const {
    std::vector<LinOp> out;
    for (const auto& s : segments) out.insert(out.end(), s.begin(), s.end());
    return out;
  }
};

}  // namespace wfq
