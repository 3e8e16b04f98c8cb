// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <string>

#include "sheetstream/value.hpp"

namespace sheetstream {

using Timestamp = std::int64_t;  // event time, milliseconds

struct WindowSpec {
  std::string stream;
  std::string attr;
  std::int64_t span_ms = 1;
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// Time-based window over one numeric stream attribute.
///
/// Holds the half-open interval (newest_ts - span, newest_ts]. Eviction only
/// happens inside insert(), so the state is a pure function of the insert
/// sequence. Sum is kept as a running value plus a compensation term; min and
/// max are kept in monotonic wedges, giving amortized O(1) per insert.
class WindowStore {
 public:
  struct Entry {
    Timestamp ts;
    double value;
  };

  explicit WindowStore(WindowSpec spec);

  /// Appends (ts, v) and evicts every entry with entry.ts <= ts - span.
  /// Returns the number of evicted entries. ts must not be older than the
  /// newest buffered entry.
  std::size_t insert(Timestamp ts, double v);

  double sum() const { return sum_ + compensation_; }
  std::size_t count() const { return buf_.size(); }
  /// #DIV/0! when empty.
  Value avg() const;
  double min() const { return min_wedge_.empty() ? 0.0 : min_wedge_.front().value; }
  double max() const { return max_wedge_.empty() ? 0.0 : max_wedge_.front().value; }
  WindowSummary summary() const;

  const WindowSpec& spec() const { return spec_; }
  const std::deque<Entry>& entries() const { return buf_; }
  /// Total push + pop operations performed on both wedges.
  std::uint64_t wedge_ops() const { return wedge_ops_; }

 private:
  void add_to_sum(double x);

  WindowSpec spec_;
  std::deque<Entry> buf_;
  std::deque<Entry> min_wedge_;  // values strictly increasing front to back
  std::deque<Entry> max_wedge_;  // values strictly decreasing front to back
  double sum_ = 0.0;
  double compensation_ = 0.0;
  std::uint64_t wedge_ops_ = 0;
};

}  // namespace sheetstream
