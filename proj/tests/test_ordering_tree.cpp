#include <doctest.h>

#include <cmath>
#include <deque>
#include <map>
#include <string>

#include "wfq/checker.hpp"
#include "wfq/explorer.hpp"
#include "wfq/harness.hpp"

using namespace wfq;

namespace {

RunConfig small_cfg(int p) {
  RunConfig rc;
  rc.variant = Variant::Unbounded;
  rc.nprocs = p;
  rc.chunk_log2 = 5;
  rc.dir_slots = 64;
  rc.fiber_stack = 64 * 1024;
  return rc;
}

ProcessProgram prog(std::initializer_list<SimExec::OpSpec> ops) {
  ProcessProgram p;
  p.ops = ops;
  return p;
}

}  // namespace

TEST_CASE("p=1 sequential operations match the FIFO oracle") {
  const int N = 400;
  auto progs = make_workload(1, N, 0.6, 42);
  QueueSimRun run(small_cfg(1), progs);
  drain(run);
  REQUIRE(!run.has_failures());
  std::deque<Word> oracle;
  std::size_t i = 0;
  for (const auto& e : run.history().events) {
    REQUIRE(e.completed());
    if (e.kind == OpKind::Enq) {
      oracle.push_back(e.arg);
    } else if (oracle.empty()) {
      CHECK(e.resp == RespKind::Empty);
    } else {
      REQUIRE(e.resp == RespKind::Value);
      CHECK(e.resp_value == oracle.front());
      oracle.pop_front();
    }
    i++;
  }
  CHECK(i == N);
  run.final_sweep();
  CHECK(!run.has_failures());
  // the extracted linearization is a witness for the recorded history
  auto lin = run.extract_linearization();
  CHECK(verify_witness(run.history(), lin.flatten()));
}

TEST_CASE("two sequential enqueues then dequeue returns the first") {
  QueueSimRun run(small_cfg(1), {prog({{OpKind::Enq, 7},
                                       {OpKind::Enq, 8},
                                       {OpKind::Deq, 0}})});
  drain(run);
  const auto& evs = run.history().events;
  REQUIRE(evs.size() == 3);
  CHECK(evs[2].resp == RespKind::Value);
  CHECK(evs[2].resp_value == 7);
  // root gained a block with sum_enq=1, size=1 for the first enqueue
  auto* q = run.unbounded();
  const auto* b1 = q->block_raw(q->root(), 1);
  REQUIRE(b1 != nullptr);
  CHECK(b1->sum_enq == 1);
  CHECK(b1->size == 1);
}

TEST_CASE("dequeue on a never-used queue returns the empty signal") {
  QueueSimRun run(small_cfg(2), {prog({{OpKind::Deq, 0}}), prog({})});
  drain(run);
  REQUIRE(run.history().events.size() == 1);
  CHECK(run.history().events[0].resp == RespKind::Empty);
  CHECK(!run.has_failures());
}

TEST_CASE("append: first append lands in blocks[1] and advances head") {
  QueueSimRun run(small_cfg(2), {prog({{OpKind::Enq, 5}}), prog({})});
  drain(run);
  auto* q = run.unbounded();
  auto* leaf = q->leaf_of(0);
  CHECK(q->block_raw(leaf, 1) != nullptr);
  CHECK(q->head_raw(leaf) == 2);
  // ... and the leaf block's super points at its superblock in the parent
  CHECK(q->block_raw(leaf, 1)->super.v != kUnset);
}

TEST_CASE("leaf prefix sums count enqueues among appended ops") {
  auto progs = make_workload(1, 64, 0.5, 9);
  QueueSimRun run(small_cfg(1), progs);
  drain(run);
  auto* q = run.unbounded();
  auto* leaf = q->leaf_of(0);
  std::int64_t enqs = 0;
  for (std::int64_t i = 1; i <= 64; i++) {
    const auto* b = q->block_raw(leaf, i);
    REQUIRE(b != nullptr);
    if (b->is_enq) enqs++;
    CHECK(b->sum_enq == enqs);
    CHECK(b->sum_deq == i - enqs);
  }
}

TEST_CASE("refresh with unchanged children returns true without installing") {
  QueueSimRun run(small_cfg(2), {prog({{OpKind::Enq, 1}}), prog({})});
  drain(run);
  auto* q = run.unbounded();
  auto ins = q->make_handle(-1, run.exec().inspector());
  std::int64_t head_before = q->head_raw(q->root());
  CHECK(q->refresh(ins, q->root()));  // nothing new: CreateBlock is empty
  CHECK(q->head_raw(q->root()) == head_before);
  CHECK(q->create_block(ins, q->root(), head_before) == nullptr);
}

TEST_CASE("advance is idempotent and the root guard skips super") {
  QueueSimRun run(small_cfg(2), {prog({{OpKind::Enq, 1}}), prog({})});
  drain(run);
  auto* q = run.unbounded();
  auto ins = q->make_handle(-1, run.exec().inspector());
  auto* root = q->root();
  std::int64_t h = q->head_raw(root);
  q->advance(ins, root, h - 1);  // already advanced: both CAS fail silently
  CHECK(q->head_raw(root) == h);
}

TEST_CASE("doubling search agrees with a linear scan and probes few slots") {
  // sequential enqueues so every root block holds one op: sums are 1..N
  const int N = 200;
  std::vector<SimExec::OpSpec> ops;
  for (int i = 0; i < N; i++)
    ops.push_back({OpKind::Enq, static_cast<Word>(100 + i)});
  QueueSimRun run(small_cfg(1), {ProcessProgram{ops}});
  drain(run);
  auto* q = run.unbounded();
  auto ins = q->make_handle(-1, run.exec().inspector());
  SplitMix64 rng(7);
  for (int t = 0; t < 300; t++) {
    std::int64_t b = 1 + static_cast<std::int64_t>(rng.below(N));
    std::int64_t e = 1 + static_cast<std::int64_t>(
                             rng.below(static_cast<std::uint64_t>(b)));
    // linear-scan oracle
    std::int64_t expect = -1;
    for (std::int64_t i = 1; i <= b; i++)
      if (q->block_raw(q->root(), i)->sum_enq >= e) {
        expect = i;
        break;
      }
    std::int64_t probes = 0;
    std::int64_t got = q->doubling_search(ins, b, e, &probes);
    CHECK(got == expect);
    double dist = static_cast<double>(b - got + 2);
    CHECK(probes <=
          2 * static_cast<std::int64_t>(std::ceil(std::log2(dist))) + 3);
  }
}

TEST_CASE("get_enqueue returns the r-th enqueued payload for every rank") {
  auto progs = make_workload(3, 30, 0.7, 21);
  QueueSimRun run(small_cfg(3), progs);
  run_random(run, 99, 0.7);
  REQUIRE(run.all_done());
  REQUIRE(!run.has_failures());
  auto lin = run.extract_linearization();
  auto flat = lin.flatten();
  std::vector<Word> enq_order;
  for (const auto& op : flat)
    if (op.kind == OpKind::Enq) enq_order.push_back(op.arg);
  auto* q = run.unbounded();
  auto ins = q->make_handle(-1, run.exec().inspector());
  for (std::int64_t r = 1; r <= static_cast<std::int64_t>(enq_order.size());
       r++) {
    std::int64_t be =
        q->doubling_search(ins, q->head_raw(q->root()) - 1, r);
    const auto* prev = q->block_raw(q->root(), be - 1);
    Word val = q->get_enqueue(ins, q->root(), be, r - prev->sum_enq);
    CHECK(val == enq_order[static_cast<std::size_t>(r - 1)]);
  }
}

// Reconstruction of the four-process example structure: five root blocks
//   [a e | d2] [b | d4 d5] [d f h | d1] [c | d3] [g]
// with process 3's second dequeue still in flight at the end.
TEST_CASE("four-process example structure white-box reconstruction") {
  enum : Word { A = 1, B, C, D, E, F, G, H };
  std::vector<ProcessProgram> progs(4);
  progs[0] = prog({{OpKind::Enq, A},
                   {OpKind::Enq, B},
                   {OpKind::Enq, D},
                   {OpKind::Enq, C}});
  progs[1] = prog({{OpKind::Deq, 0},
                   {OpKind::Deq, 0},
                   {OpKind::Enq, F},
                   {OpKind::Enq, G}});
  progs[2] = prog({{OpKind::Enq, E},
                   {OpKind::Deq, 0},
                   {OpKind::Enq, H},
                   {OpKind::Deq, 0}});
  progs[3] = prog({{OpKind::Deq, 0}, {OpKind::Deq, 0}});
  // dequeue naming in the rendered order: p1.1=Deq2 p1.2=Deq4 p2.2=Deq5
  // p2.4=Deq3 p3.1=Deq1 p3.2=Deq6
  QueueSimRun run(small_cfg(4), progs);
  auto* q = run.unbounded();
  auto* L = q->all_nodes()[1].get();
  auto* R = q->all_nodes()[2].get();
  auto at = [&](const TreeQueue<SimMem>::Node* v, std::int64_t i) {
    return [&, v, i] { return q->block_raw(v, i) != nullptr; };
  };

  // root block 1: [a e | d2]
  REQUIRE(run.run_until(0, at(L, 1)));
  REQUIRE(run.run_until(2, at(R, 1)));
  REQUIRE(run.run_until(1, at(L, 2)));
  run.run_op_to_completion(0);
  run.run_op_to_completion(2);
  run.run_op_to_completion(1);
  // root block 2: [b | d4 d5]
  REQUIRE(run.run_until(0, at(L, 3)));
  REQUIRE(run.run_until(1, at(L, 4)));
  REQUIRE(run.run_until(2, at(R, 2)));
  run.run_op_to_completion(0);
  run.run_op_to_completion(1);
  run.run_op_to_completion(2);
  // root block 3: [d f h | d1]
  REQUIRE(run.run_until(0, at(L, 5)));
  REQUIRE(run.run_until(1, at(L, 6)));
  REQUIRE(run.run_until(2, at(R, 3)));
  REQUIRE(run.run_until(3, at(R, 4)));
  run.run_op_to_completion(0);
  run.run_op_to_completion(1);
  run.run_op_to_completion(2);
  run.run_op_to_completion(3);
  // root block 4: [c | d3]
  REQUIRE(run.run_until(0, at(L, 7)));
  REQUIRE(run.run_until(2, at(R, 5)));
  run.run_op_to_completion(0);
  run.run_op_to_completion(2);
  // root block 5: [g]
  run.run_op_to_completion(1);
  // p3's second dequeue: appended to its leaf, still propagating
  REQUIRE(run.run_until(3, at(q->leaf_of(3), 2)));

  REQUIRE(!run.has_failures());

  // responses: d2=a d4=e d5=b d1=d d3=f
  std::map<std::pair<int, std::int64_t>, Word> deq_resp;
  for (const auto& e : run.history().events)
    if (e.kind == OpKind::Deq && e.resp == RespKind::Value)
      deq_resp[{e.op.pid, e.op.seq}] = e.resp_value;
  CHECK(deq_resp[{1, 1}] == A);
  CHECK(deq_resp[{1, 2}] == E);
  CHECK(deq_resp[{2, 2}] == B);
  CHECK(deq_resp[{3, 1}] == D);
  CHECK(deq_resp[{2, 4}] == F);

  // extracted linearization matches the example, block by block
  auto lin = run.extract_linearization();
  std::map<Word, std::string> letter{{A, "a"}, {B, "b"}, {C, "c"}, {D, "d"},
                                     {E, "e"}, {F, "f"}, {G, "g"}, {H, "h"}};
  std::map<std::pair<int, std::int64_t>, std::string> deq_name{
      {{1, 1}, "Deq2"}, {{1, 2}, "Deq4"}, {{2, 2}, "Deq5"},
      {{2, 4}, "Deq3"}, {{3, 1}, "Deq1"}, {{3, 2}, "Deq6"}};
  std::string rendered;
  for (std::size_t s = 0; s < lin.segments.size(); s++) {
    if (s) rendered += " | ";
    bool first = true;
    for (const auto& op : lin.segments[s]) {
      if (!first) rendered += " ";
      first = false;
      if (op.kind == OpKind::Enq)
        rendered += "Enq(" + letter[op.arg] + ")";
      else
        rendered += deq_name[{op.op.pid, op.op.seq}];
    }
  }
  CHECK(rendered ==
        "Enq(a) Enq(e) Deq2 | Enq(b) Deq4 Deq5 | Enq(d) Enq(f) Enq(h) Deq1 | "
        "Enq(c) Deq3 | Enq(g)");
  // size fields [1,0,2,2,3], also derived independently by replay
  REQUIRE(lin.sizes.size() == 5);
  CHECK(lin.sizes == std::vector<std::int64_t>{1, 0, 2, 2, 3});
  CHECK(replay_segment_sizes(lin) == lin.sizes);

  // index_dequeue spot checks: Deq1 -> (3,1), Deq5 -> (2,2)
  auto ins = q->make_handle(-1, run.exec().inspector());
  auto r1 = q->index_dequeue(ins, q->leaf_of(3), 1, 1);
  CHECK(r1.first == 3);
  CHECK(r1.second == 1);
  auto r5 = q->index_dequeue(ins, q->leaf_of(2), 2, 1);
  CHECK(r5.first == 2);
  CHECK(r5.second == 2);
  // find_response spot checks: (1,1) -> a ; (4,1) -> f (the 5th enqueue)
  auto fr = q->find_response(ins, 1, 1);
  REQUIRE(fr.has_value());
  CHECK(*fr == A);
  auto fr3 = q->find_response(ins, 4, 1);
  REQUIRE(fr3.has_value());
  CHECK(*fr3 == F);
  CHECK(q->get_enqueue(ins, q->root(), 3, 1) == D);
}

TEST_CASE("exhaustive p=2: one enqueue vs one dequeue, always linearizable") {
  auto progs = std::vector<ProcessProgram>{prog({{OpKind::Enq, 5}}),
                                           prog({{OpKind::Deq, 0}})};
  auto make = [&]() {
    return std::make_unique<QueueSimRun>(small_cfg(2), progs);
  };
  std::uint64_t histories = 0;
  bool saw_value = false, saw_empty = false;
  ExploreOpts opts;
  ExploreStats st = explore_all<QueueSimRun>(
      make, opts, [&](QueueSimRun& run, const Schedule&) {
        histories++;
        run.final_sweep();
        REQUIRE(!run.has_failures());
        CHECK(check_history(run.history()) == Verdict::Accept);
        CHECK(brute_force_check(run.history()) == Verdict::Accept);
        for (const auto& e : run.history().events)
          if (e.kind == OpKind::Deq)
            (e.resp == RespKind::Value ? saw_value : saw_empty) = true;
      });
  CHECK(!st.failure_found);
  CHECK(!st.truncated);
  CHECK(histories > 0);
  CHECK(saw_value);  // some interleaving dequeues the value
  CHECK(saw_empty);  // some interleaving sees the empty queue
  MESSAGE("classes=" << st.classes << " completed=" << st.completed
                     << " memo_hits=" << st.memo_hits);
}
