#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "wfq/checker.hpp"
#include "wfq/explorer.hpp"
#include "wfq/harness.hpp"
#include "wfq/history_io.hpp"
#include "wfq/native_run.hpp"

using namespace wfq;

namespace {

struct CommonOpts {
  int p = 2;
  int ops = 100;
  std::string variant = "unbounded";
  std::int64_t gc_constant = 0;
  double enq_fraction = 0.5;
  std::uint64_t seed = 1;
  double switch_prob = 0.5;
  std::string out;
};

Variant parse_variant(const std::string& s) {
  return s == "bounded" ? Variant::Bounded : Variant::Unbounded;
}

struct Agg {
  std::uint64_t n = 0;
  std::uint64_t steps_sum = 0, steps_max = 0;
  std::uint64_t cas_sum = 0, cas_max = 0;
  void add(std::uint64_t steps, std::uint64_t cas) {
    n++;
    steps_sum += steps;
    cas_sum += cas;
    if (steps > steps_max) steps_max = steps;
    if (cas > cas_max) cas_max = cas;
  }
};

void write_bench_csv(std::ostream& os, const CommonOpts& o,
                     const NativeResult& r) {
  Agg enq, deq, deq_null;
  for (const auto& om : r.op_metrics) {
    if (om.kind == OpKind::Enq)
      enq.add(om.steps, om.cas_attempts);
    else if (om.null_deq)
      deq_null.add(om.steps, om.cas_attempts);
    else
      deq.add(om.steps, om.cas_attempts);
  }
  double thr = r.seconds > 0 ? static_cast<double>(r.total_ops) / r.seconds
                             : 0.0;
  os << "p,variant,op_kind,mean_steps,max_steps,mean_cas,max_cas,"
        "max_container,throughput\n";
  auto row = [&](const char* kind, const Agg& a) {
    double ms = a.n ? static_cast<double>(a.steps_sum) /
                          static_cast<double>(a.n)
                    : 0.0;
    double mc = a.n ? static_cast<double>(a.cas_sum) /
                          static_cast<double>(a.n)
                    : 0.0;
    os << o.p << ',' << o.variant << ',' << kind << ',' << ms << ','
       << a.steps_max << ',' << mc << ',' << a.cas_max << ','
       << r.merged.container_peak << ',' << thr << '\n';
  };
  row("enqueue", enq);
  row("dequeue_nonnull", deq);
  row("dequeue_null", deq_null);
}

int cmd_bench(const CommonOpts& o) {
  if (o.p < 1 || o.enq_fraction < 0 || o.enq_fraction > 1) {
    std::cerr << "invalid bench configuration\n";
    return 1;
  }
  auto progs = make_workload(o.p, o.ops, o.enq_fraction, o.seed);
  NativeConfig cfg;
  cfg.variant = parse_variant(o.variant);
  cfg.nprocs = o.p;
  cfg.gc_period = o.gc_constant;
  cfg.record_history = false;
  NativeResult r = run_native(cfg, progs);
  if (o.out.empty()) {
    write_bench_csv(std::cout, o, r);
  } else {
    std::ofstream f(o.out);
    if (!f) {
      std::cerr << "cannot open " << o.out << "\n";
      return 1;
    }
    write_bench_csv(f, o, r);
  }
  return 0;
}

RunConfig sim_config(const CommonOpts& o, const std::string& mutation) {
  RunConfig rc;
  rc.variant = parse_variant(o.variant);
  rc.nprocs = o.p;
  rc.gc_period = o.gc_constant;
  rc.hooks = true;
  rc.skip_second_refresh = (mutation == "skip-second-refresh");
  rc.skip_help_advance = (mutation == "skip-help-advance");
  return rc;
}

void dump_history(const CommonOpts& o, const History& h) {
  if (o.out.empty()) return;
  std::ofstream f(o.out);
  write_history(f, h);
}

int cmd_simulate(const CommonOpts& o, const std::string& schedule_kind,
                 int runs, const std::string& mutation, bool run_checker) {
  RunConfig rc = sim_config(o, mutation);
  auto progs = make_workload(o.p, o.ops, o.enq_fraction, o.seed);
  if (schedule_kind == "exhaustive") {
    auto make = [&]() { return std::make_unique<QueueSimRun>(rc, progs); };
    ExploreOpts eo;
    std::uint64_t rejected = 0;
    ExploreStats st = explore_all<QueueSimRun>(
        make, eo, [&](QueueSimRun& run, const Schedule&) {
          run.final_sweep();
          if (run_checker && run.history().events.size() <= 40 &&
              check_history(run.history()) != Verdict::Accept)
            rejected++;
        });
    std::cout << "classes " << st.classes << "\ncomplete_histories "
              << st.completed << "\nmemo_hits " << st.memo_hits
              << "\ntruncated " << (st.truncated ? 1 : 0) << "\n";
    if (st.failure_found) {
      std::cerr << "assertion failure: " << st.first_failures[0].hook << ": "
                << st.first_failures[0].detail << "\nschedule:";
      for (int pid : st.failing_schedule) std::cerr << ' ' << pid;
      std::cerr << "\n";
      return 1;
    }
    if (rejected > 0) {
      std::cerr << rejected << " histories rejected by the checker\n";
      return 1;
    }
    return 0;
  }
  for (int i = 0; i < runs; i++) {
    std::uint64_t seed = o.seed + static_cast<std::uint64_t>(i);
    QueueSimRun run(rc, progs);
    run_random(run, seed, o.switch_prob);
    run.final_sweep();
    dump_history(o, run.history());
    if (run.has_failures()) {
      const auto& f = run.failures().front();
      std::cerr << "assertion failure (seed " << seed << "): " << f.hook
                << ": " << f.detail << "\nreplay with --seed " << seed
                << "\n";
      return 1;
    }
    if (run_checker && run.history().events.size() <= 40 &&
        check_history(run.history()) != Verdict::Accept) {
      std::cerr << "history rejected by the checker (seed " << seed << ")\n";
      return 1;
    }
  }
  std::cout << "ok: " << runs << " run(s) passed\n";
  return 0;
}

int cmd_check(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    std::cerr << "cannot open " << path << "\n";
    return 2;
  }
  auto h = parse_history(f);
  if (!h) {
    std::cerr << "parse error\n";
    return 2;
  }
  Verdict v = check_history(*h);
  switch (v) {
    case Verdict::Accept:
      std::cout << "accept\n";
      return 0;
    case Verdict::Reject:
      std::cout << "reject\n";
      return 1;
    case Verdict::InputError:
      std::cerr << "input error\n";
      return 2;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wait-free ordering-tree queue: bench, simulate, check"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string schedule_kind = "random";
  std::string mutation = "none";
  int runs = 1;
  bool no_check = false;
  std::string history_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--p", o.p, "number of processes");
    sub->add_option("--ops", o.ops, "operations per process");
    sub->add_option("--variant", o.variant,
                    "queue variant: unbounded|bounded");
    sub->add_option("--gc-constant", o.gc_constant,
                    "GC period G (bounded; 0 = p^2*ceil(log2 p))");
    sub->add_option("--enq-fraction", o.enq_fraction,
                    "fraction of enqueues in the workload");
    sub->add_option("--seed", o.seed, "workload/schedule seed");
    sub->add_option("--out", o.out, "output file");
  };

  CLI::App* bench = app.add_subcommand("bench", "native benchmark, CSV out");
  add_common(bench);

  CLI::App* sim = app.add_subcommand("simulate", "deterministic simulation");
  add_common(sim);
  sim->add_option("--schedule", schedule_kind, "random|exhaustive");
  sim->add_option("--switch-prob", o.switch_prob,
                  "context switch probability (random schedules)");
  sim->add_option("--runs", runs, "number of random-schedule runs");
  sim->add_option("--mutation", mutation,
                  "none|skip-second-refresh|skip-help-advance");
  sim->add_flag("--no-check", no_check, "skip the linearizability check");

  CLI::App* chk = app.add_subcommand("check", "check a recorded history");
  chk->add_option("history", history_path, "history file")->required();

  CLI11_PARSE(app, argc, argv);

  if (bench->parsed()) return cmd_bench(o);
  if (sim->parsed())
    return cmd_simulate(o, schedule_kind, runs, mutation, !no_check);
  if (chk->parsed()) return cmd_check(history_path);
  return 1;
}
