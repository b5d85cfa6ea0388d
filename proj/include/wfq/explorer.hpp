#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "wfq/harness.hpp"

namespace wfq {

// ---------------------------------------------------------------------------
// Raw schedule enumeration: every distinct interleaving exactly once, in DFS
// order. Practical only for tiny step counts; paths longer than step_bound
// are cut and reported as truncation.
// ---------------------------------------------------------------------------

struct EnumStats {
  std::uint64_t schedules = 0;
  bool truncated = false;
};

template <class Run>
EnumStats enumerate_all(const std::function<std::unique_ptr<Run>()>& make,
                        std::uint64_t step_bound,
                        const std::function<void(const Schedule&, Run&)>&
                            on_complete) {
  EnumStats st;
  Schedule prefix;
  auto run = make();
  struct Frame {
    std::vector<int> actives;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({run->active_pids(), 0});
  auto replay = [&]() {
    run = make();
    for (int pid : prefix) run->step(pid);
  };
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next >= f.actives.size()) {
      stack.pop_back();
      if (!prefix.empty()) prefix.pop_back();
      if (!stack.empty()) replay();
      continue;
    }
    int pid = f.actives[f.next++];
    run->step(pid);
    prefix.push_back(pid);
    if (run->all_done()) {
      st.schedules++;
      on_complete(prefix, *run);
      prefix.pop_back();
      replay();
      continue;
    }
    if (prefix.size() >= step_bound) {
      st.truncated = true;
      prefix.pop_back();
      replay();
      continue;
    }
    stack.push_back({run->active_pids(), 0});
  }
  return st;
}

// ---------------------------------------------------------------------------
// Exhaustive exploration with convergence collapsing.
//
// The raw interleaving tree of even two full queue operations is
// astronomically large (C(n1+n2, n1) for step counts n1, n2), but almost all
// of it is redundant: two configurations whose processes observed the same
// value sequences, whose operations have the same statuses and responses,
// and whose completed-vs-invoked real-time precedence agrees, have
// bit-identical futures. explore_all() walks the schedule tree depth-first
// and prunes any configuration whose class (SimExec::memo_key) was already
// visited. Every reachable configuration class — and hence every
// verdict-distinct history any interleaving can produce — is visited
// exactly once.
// ---------------------------------------------------------------------------

struct ExploreOpts {
  std::uint64_t max_classes = 200000000;
  std::uint64_t max_depth = 1000000;
  bool stop_on_failure = true;
};

struct ExploreStats {
  std::uint64_t classes = 1;  // distinct configuration classes reached
  std::uint64_t edges = 0;    // steps taken (excluding replays)
  std::uint64_t completed = 0;
  std::uint64_t memo_hits = 0;
  bool truncated = false;
  bool failure_found = false;
  Schedule failing_schedule;
  std::vector<AssertionFailure> first_failures;
};

template <class Run>
ExploreStats explore_all(const std::function<std::unique_ptr<Run>()>& make,
                         const ExploreOpts& opts,
                         const std::function<void(Run&, const Schedule&)>&
                             on_complete) {
  struct Key {
    std::uint64_t a, b;
    bool operator==(const Key& o) const { return a == o.a && b == o.b; }
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return k.a ^ (k.b * 0x9e3779b97f4a7c15ull);
    }
  };
  ExploreStats st;
  std::unordered_set<Key, KeyHash> visited;
  Schedule prefix;
  auto run = make();
  {
    auto [a, b] = run->memo_key();
    visited.insert({a, b});
  }
  struct Frame {
    std::vector<int> actives;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({run->active_pids(), 0});
  auto replay = [&]() {
    run = make();
    for (int pid : prefix) run->step(pid);
  };
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next >= f.actives.size()) {
      stack.pop_back();
      if (!prefix.empty()) prefix.pop_back();
      if (!stack.empty()) replay();
      continue;
    }
    int pid = f.actives[f.next++];
    run->step(pid);
    prefix.push_back(pid);
    st.edges++;
    if (run->has_failures()) {
      if (!st.failure_found) {
        st.failure_found = true;
        st.failing_schedule = prefix;
        st.first_failures = run->failures();
      }
      if (opts.stop_on_failure) return st;
      prefix.pop_back();
      replay();
      continue;
    }
    if (run->all_done()) {
      st.completed++;
      on_complete(*run, prefix);
      if (run->has_failures() && !st.failure_found) {
        st.failure_found = true;
        st.failing_schedule = prefix;
        st.first_failures = run->failures();
        if (opts.stop_on_failure) return st;
      }
      prefix.pop_back();
      replay();
      continue;
    }
    auto [a, b] = run->memo_key();
    if (!visited.insert({a, b}).second) {
      st.memo_hits++;
      prefix.pop_back();
      replay();
      continue;
    }
    st.classes++;
    if (visited.size() >= opts.max_classes ||
        prefix.size() >= opts.max_depth) {
      st.truncated = true;
      prefix.pop_back();
      replay();
      continue;
    }
    stack.push_back({run->active_pids(), 0});
  }
  return st;
}

}  // namespace wfq
