#include "wfq/checker.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <unordered_set>

namespace wfq {

ReplayResult replay_fifo(const std::vector<LinOp>& lin) {
  ReplayResult r;
  std::deque<std::pair<Word, std::int64_t>> q;  // (payload, enqueue rank)
  std::int64_t enq_rank = 0;
  std::int64_t size = 0;
  for (const LinOp& op : lin) {
    if (op.kind == OpKind::Enq) {
      q.emplace_back(op.arg, ++enq_rank);
      if (++size > r.q_max) r.q_max = size;
    } else {
      if (q.empty()) {
        r.dequeue_results.push_back(std::nullopt);
        r.matched_rank.push_back(0);
      } else {
        r.dequeue_results.push_back(q.front().first);
        r.matched_rank.push_back(q.front().second);
        q.pop_front();
        size--;
      }
    }
  }
  r.final_size = size;
  return r;
}

std::vector<std::int64_t> replay_segment_sizes(const Linearization& lin) {
  std::vector<std::int64_t> sizes;
  std::deque<Word> q;
  for (const auto& seg : lin.segments) {
    for (const LinOp& op : seg)
      if (op.kind == OpKind::Enq) q.push_back(op.arg);
    for (const LinOp& op : seg)
      if (op.kind == OpKind::Deq && !q.empty()) q.pop_front();
    sizes.push_back(static_cast<std::int64_t>(q.size()));
  }
  return sizes;
}

namespace {

struct CheckInput {
  std::vector<const Event*> ops;
  // wait_mask[i]: ops that must be linearized before op i may be
  std::vector<std::uint64_t> wait_mask;
};

Verdict validate(const History& h, CheckInput& in) {
  if (h.events.size() > 64) return Verdict::InputError;  // checker scale limit
  std::map<int, std::vector<const Event*>> per_proc;
  for (const auto& e : h.events) {
    if (e.kind == OpKind::Raw) return Verdict::InputError;
    if (e.completed() && e.response_ts <= e.invoke_ts)
      return Verdict::InputError;
    per_proc[e.op.pid].push_back(&e);
    in.ops.push_back(&e);
  }
  for (auto& [pid, evs] : per_proc) {
    std::sort(evs.begin(), evs.end(), [](const Event* a, const Event* b) {
      return a->invoke_ts < b->invoke_ts;
    });
    for (std::size_t i = 0; i + 1 < evs.size(); i++) {
      if (!evs[i]->completed()) return Verdict::InputError;  // overlap
      if (evs[i]->response_ts >= evs[i + 1]->invoke_ts)
        return Verdict::InputError;  // same-process ops overlap
    }
  }
  std::set<Word> enq_tags;
  for (const auto* e : in.ops)
    if (e->kind == OpKind::Enq && !enq_tags.insert(e->arg).second)
      return Verdict::InputError;  // enqueue tags must be unique
  std::set<Word> deq_vals;
  for (const auto* e : in.ops) {
    if (e->kind == OpKind::Deq && e->resp == RespKind::Value) {
      if (!enq_tags.count(e->resp_value)) return Verdict::Reject;
      if (!deq_vals.insert(e->resp_value).second) return Verdict::Reject;
    }
  }
  in.wait_mask.assign(in.ops.size(), 0);
  for (std::size_t i = 0; i < in.ops.size(); i++)
    for (std::size_t j = 0; j < in.ops.size(); j++)
      if (i != j && in.ops[j]->precedes(*in.ops[i]))
        in.wait_mask[i] |= 1ull << j;
  return Verdict::Accept;
}

// DFS over linearization prefixes. State: mask of linearized ops plus the
// current queue content (enqueue op indices in order). Memoizes dead states.
struct Searcher {
  const CheckInput& in;
  std::uint64_t completed_mask = 0;
  std::unordered_set<std::uint64_t> dead;

  explicit Searcher(const CheckInput& ci) : in(ci) {
    for (std::size_t i = 0; i < in.ops.size(); i++)
      if (in.ops[i]->completed()) completed_mask |= 1ull << i;
  }

  static std::uint64_t state_key(std::uint64_t mask,
                                 const std::vector<int>& q) {
    std::uint64_t h = fnv1a(kFnvOffset, mask);
    for (int x : q) h = fnv1a(h, static_cast<std::uint64_t>(x) + 1);
    return h;
  }

  bool dfs(std::uint64_t mask, std::vector<int>& q) {
    if ((mask & completed_mask) == completed_mask) return true;
    std::uint64_t key = state_key(mask, q);
    if (dead.count(key)) return false;
    for (std::size_t i = 0; i < in.ops.size(); i++) {
      if (mask & (1ull << i)) continue;
      if ((in.wait_mask[i] & ~mask) != 0) continue;  // predecessor pending
      const Event* e = in.ops[i];
      std::uint64_t m2 = mask | (1ull << i);
      if (e->kind == OpKind::Enq) {
        q.push_back(static_cast<int>(i));
        if (dfs(m2, q)) return true;
        q.pop_back();
      } else if (e->resp == RespKind::Value) {
        if (!q.empty() && in.ops[static_cast<std::size_t>(q.front())]->arg ==
                              e->resp_value) {
          int front = q.front();
          q.erase(q.begin());
          if (dfs(m2, q)) return true;
          q.insert(q.begin(), front);
        }
      } else if (e->resp == RespKind::Empty) {
        if (q.empty() && dfs(m2, q)) return true;
      } else {
        // pending dequeue: may take effect on a non-empty queue, on an empty
        // queue, or never (the "never" case is simply not linearizing it)
        if (!q.empty()) {
          int front = q.front();
          q.erase(q.begin());
          if (dfs(m2, q)) return true;
          q.insert(q.begin(), front);
        } else {
          if (dfs(m2, q)) return true;
        }
      }
    }
    dead.insert(key);
    return false;
  }
};

}  // namespace

Verdict check_history(const History& h) {
  CheckInput in;
  Verdict v = validate(h, in);
  if (v != Verdict::Accept) return v;
  Searcher s(in);
  std::vector<int> q;
  return s.dfs(0, q) ? Verdict::Accept : Verdict::Reject;
}

Verdict brute_force_check(const History& h) {
  CheckInput in;
  Verdict v = validate(h, in);
  if (v != Verdict::Accept) return v;
  for (const auto* e : in.ops)
    if (!e->completed()) return Verdict::InputError;
  std::vector<int> perm(in.ops.size());
  for (std::size_t i = 0; i < perm.size(); i++) perm[i] = static_cast<int>(i);
  std::sort(perm.begin(), perm.end());
  do {
    bool ok = true;
    for (std::size_t a = 0; a < perm.size() && ok; a++)
      for (std::size_t b = a + 1; b < perm.size() && ok; b++)
        if (in.ops[static_cast<std::size_t>(perm[b])]->precedes(
                *in.ops[static_cast<std::size_t>(perm[a])]))
          ok = false;
    if (!ok) continue;
    std::vector<LinOp> lin;
    for (int i : perm) {
      const Event* e = in.ops[static_cast<std::size_t>(i)];
      lin.push_back({e->op, e->kind, e->arg});
    }
    ReplayResult r = replay_fifo(lin);
    std::size_t d = 0;
    ok = true;
    for (int i : perm) {
      const Event* e = in.ops[static_cast<std::size_t>(i)];
      if (e->kind != OpKind::Deq) continue;
      const auto& res = r.dequeue_results[d++];
      if (e->resp == RespKind::Empty ? res.has_value()
                                     : (!res.has_value() ||
                                        *res != e->resp_value)) {
        ok = false;
        break;
      }
    }
    if (ok) return Verdict::Accept;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return Verdict::Reject;
}

bool verify_witness(const History& h, const std::vector<LinOp>& lin) {
  // each completed op exactly once; pending ops at most once
  std::map<std::pair<int, std::int64_t>, const Event*> evs;
  for (const auto& e : h.events) evs[{e.op.pid, e.op.seq}] = &e;
  std::set<std::pair<int, std::int64_t>> seen;
  for (const auto& op : lin) {
    if (!seen.insert({op.op.pid, op.op.seq}).second) return false;
    if (!evs.count({op.op.pid, op.op.seq})) return false;
  }
  for (const auto& e : h.events)
    if (e.completed() && !seen.count({e.op.pid, e.op.seq})) return false;
  // extends real-time precedence
  for (std::size_t a = 0; a < lin.size(); a++)
    for (std::size_t b = a + 1; b < lin.size(); b++) {
      const Event* ea = evs[{lin[a].op.pid, lin[a].op.seq}];
      const Event* eb = evs[{lin[b].op.pid, lin[b].op.seq}];
      if (eb->precedes(*ea)) return false;
    }
  // replays to the recorded responses
  ReplayResult r = replay_fifo(lin);
  std::size_t d = 0;
  for (const auto& op : lin) {
    const Event* e = evs[{op.op.pid, op.op.seq}];
    if (op.kind == OpKind::Enq) {
      if (e->kind != OpKind::Enq || e->arg != op.arg) return false;
      continue;
    }
    if (e->kind != OpKind::Deq) return false;
    const auto& res = r.dequeue_results[d++];
    if (!e->completed()) continue;  // pending: any effect is consistent
    if (e->resp == RespKind::Empty) {
      if (res.has_value()) return false;
    } else {
      if (!res.has_value() || *res != e->resp_value) return false;
    }
  }
  return true;
}

}  // namespace wfq
