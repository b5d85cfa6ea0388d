#include "wfq/history_io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace wfq {

void write_history(std::ostream& os, const History& h) {
  os << "# wfq history v1 nprocs=" << h.nprocs << "\n";
  os << "# op_id process kind arg invoke_ts response response_ts\n";
  for (const auto& e : h.events) {
    os << e.op.pid << '.' << e.op.seq << ' ' << e.op.pid << ' '
       << (e.kind == OpKind::Enq ? "enq" : "deq") << ' ';
    if (e.kind == OpKind::Enq)
      os << e.arg;
    else
      os << '-';
    os << ' ' << e.invoke_ts << ' ';
    switch (e.resp) {
      case RespKind::Pending:
        os << "pending -";
        break;
      case RespKind::Ok:
        os << "ok " << e.response_ts;
        break;
      case RespKind::Empty:
        os << "empty " << e.response_ts;
        break;
      case RespKind::Value:
        os << e.resp_value << ' ' << e.response_ts;
        break;
    }
    os << '\n';
  }
}

std::string history_to_string(const History& h) {
  std::ostringstream os;
  write_history(os, h);
  return os.str();
}

namespace {
bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}
}  // namespace

std::optional<History> parse_history(std::istream& is) {
  History h;
  std::string line;
  int max_pid = -1;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') {
      auto pos = line.find("nprocs=");
      if (pos != std::string::npos) {
        std::uint64_t n = 0;
        if (parse_u64(line.substr(pos + 7), n))
          h.nprocs = static_cast<int>(n);
      }
      continue;
    }
    std::istringstream ls(line);
    std::string op_id, proc, kind, arg, invoke, resp, resp_ts;
    if (!(ls >> op_id >> proc >> kind >> arg >> invoke >> resp >> resp_ts))
      return std::nullopt;
    Event e;
    auto dot = op_id.find('.');
    if (dot == std::string::npos) return std::nullopt;
    std::uint64_t pid = 0, seq = 0, ts = 0;
    if (!parse_u64(op_id.substr(0, dot), pid) ||
        !parse_u64(op_id.substr(dot + 1), seq))
      return std::nullopt;
    e.op.pid = static_cast<int>(pid);
    e.op.seq = static_cast<std::int64_t>(seq);
    if (kind == "enq")
      e.kind = OpKind::Enq;
    else if (kind == "deq")
      e.kind = OpKind::Deq;
    else
      return std::nullopt;
    if (e.kind == OpKind::Enq) {
      if (!parse_u64(arg, e.arg)) return std::nullopt;
    } else if (arg != "-") {
      return std::nullopt;
    }
    if (!parse_u64(invoke, ts)) return std::nullopt;
    e.invoke_ts = ts;
    if (resp == "pending") {
      e.resp = RespKind::Pending;
      if (resp_ts != "-") return std::nullopt;
    } else {
      if (resp == "ok") {
        if (e.kind != OpKind::Enq) return std::nullopt;
        e.resp = RespKind::Ok;
      } else if (resp == "empty") {
        if (e.kind != OpKind::Deq) return std::nullopt;
        e.resp = RespKind::Empty;
      } else {
        if (e.kind != OpKind::Deq || !parse_u64(resp, e.resp_value))
          return std::nullopt;
        e.resp = RespKind::Value;
      }
      if (!parse_u64(resp_ts, ts)) return std::nullopt;
      e.response_ts = ts;
    }
    if (e.op.pid > max_pid) max_pid = e.op.pid;
    h.events.push_back(e);
  }
  if (h.nprocs <= max_pid) h.nprocs = max_pid + 1;
  return h;
}

std::optional<History> parse_history_string(const std::string& s) {
  std::istringstream is(s);
  return parse_history(is);
}

void write_metrics(std::ostream& os, const Metrics& m, int contention) {
  os << "steps " << m.steps << "\n"
     << "cas_attempts " << m.cas_attempts << "\n"
     << "cas_successes " << m.cas_successes << "\n"
     << "contention " << contention << "\n"
     << "container_peak " << m.container_peak << "\n";
}

}  // namespace wfq
