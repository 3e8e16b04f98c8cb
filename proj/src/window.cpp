// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/window.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace sheetstream {

WindowStore::WindowStore(WindowSpec spec) : spec_(std::move(spec)) {
  if (spec_.span_ms <= 0) throw std::invalid_argument("window span must be positive");
}

void WindowStore::add_to_sum(double x) {
  // Neumaier: the lost low-order part of each addition goes to compensation_.
  double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x))
    compensation_ += (sum_ - t) + x;
  else
    compensation_ += (x - t) + sum_;
  sum_ = t;
}

std::size_t WindowStore::insert(Timestamp ts, double v) {
  assert(buf_.empty() || ts >= buf_.back().ts);

  buf_.push_back({ts, v});
  add_to_sum(v);
  while (!min_wedge_.empty() && min_wedge_.back().value >= v) {
    min_wedge_.pop_back();
    ++wedge_ops_;
  }
  min_wedge_.push_back({ts, v});
  while (!max_wedge_.empty() && max_wedge_.back().value <= v) {
    max_wedge_.pop_back();
    ++wedge_ops_;
  }
  max_wedge_.push_back({ts, v});
  wedge_ops_ += 2;

  const Timestamp cutoff = ts - spec_.span_ms;
  std::size_t evicted = 0;
  while (buf_.front().ts <= cutoff) {
    add_to_sum(-buf_.front().value);
    buf_.pop_front();
    ++evicted;
  }
  while (min_wedge_.front().ts <= cutoff) {
    min_wedge_.pop_front();
    ++wedge_ops_;
  }
  while (max_wedge_.front().ts <= cutoff) {
    max_wedge_.pop_front();
    ++wedge_ops_;
  }
  if (buf_.size() == 1) {
    // Re-anchor so that drift from long-gone entries cannot linger.
    sum_ = buf_.front().value;
    compensation_ = 0.0;
  }
  return evicted;
}

Value WindowStore::avg() const {
  if (buf_.empty()) return Value::error(ErrorCode::Div0);
  return Value::number(sum() / static_cast<double>(buf_.size()));
}

WindowSummary WindowStore::summary() const {
  return WindowSummary{buf_.size(), sum(), min(), max()};
}

}  // namespace sheetstream
