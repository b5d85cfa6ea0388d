#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "wfq/common.hpp"
#include "wfq/history.hpp"

namespace wfq {

// Line-delimited history format, one event per line:
//   op_id process kind arg invoke_ts response response_ts
// where op_id is "<pid>.<seq>", kind is enq|deq, arg is the enqueue tag or
// "-", response is "ok" (enqueue), the dequeued tag, "empty" or "pending",
// and response_ts is "-" while pending. Lines starting with '#' are comments.
void write_history(std::ostream& os, const History& h);
std::string history_to_string(const History& h);

// Returns nullopt on malformed input.
std::optional<History> parse_history(std::istream& is);
std::optional<History> parse_history_string(const std::string& s);

// Metrics export as `key value` lines.
void write_metrics(std::ostream& os, const Metrics& m, int contention);

}  // namespace wfq
