// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "sheetstream/evaluate.hpp"
#include "sheetstream/model.hpp"
#include "sheetstream/value.hpp"
#include "sheetstream/window.hpp"

namespace sheetstream {

struct CellChange {
  CellAddr addr;
  Value old_value;
  Value new_value;
  friend bool operator==(const CellChange&, const CellChange&) = default;
};

struct ChangeSet {
  std::vector<CellChange> changed;
  bool exports_changed = false;
  friend bool operator==(const ChangeSet&, const ChangeSet&) = default;
};

/// Raised by apply_tuple for schema mismatches and out-of-order timestamps.
/// The instance is left unchanged.
class TupleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One materialized sheet: cell values, window buffers, and a fixed
/// evaluation order derived from the static references of every formula.
///
/// Copies are independent instances that share the immutable evaluation plan.
class Engine {
 public:
  /// Validates the model and fixes the evaluation order. Throws ModelError on
  /// validation failures or dependency cycles. Every formula is evaluated
  /// once so that the fresh instance is already quiescent.
  static Engine build(std::shared_ptr<const SheetModel> model);
  static Engine build(const SheetModel& model) { return build(std::make_shared<const SheetModel>(model)); }

  /// Writes the tuple into the stream's bindings and windows, then
  /// re-evaluates every formula reachable from them exactly once, in
  /// dependency order. Throws TupleError (state unchanged) on bad input.
  ChangeSet apply_tuple(std::string_view stream, std::span<const Value> tuple, Timestamp ts);

  /// Unbound, undefined cells read Blank.
  Value read_cell(CellAddr addr) const;

  /// Empty text removes the formula. Throws ModelError and leaves the
  /// instance unchanged on parse errors, stream-bound targets, or cycles.
  ChangeSet set_formula(CellAddr addr, std::string_view text);

  /// Swaps in an edited model, keeping bound values and compatible window
  /// buffers, and re-evaluates all formulas. Strong exception guarantee.
  ChangeSet rebind(std::shared_ptr<const SheetModel> model);

  /// Evaluates an arbitrary expression against the current cell values.
  Value evaluate(const Expr& expr) const;

  const SheetModel& model() const;
  const std::shared_ptr<const SheetModel>& model_ptr() const;
  const std::vector<CellAddr>& topo_order() const;
  /// Non-null when addr holds a WINDOW formula.
  const WindowStore* window_at(CellAddr addr) const;

  /// Current value of every formula or bound cell, in row-major order.
  std::vector<std::pair<CellAddr, Value>> snapshot() const;
  /// Values of the model's exports, in export order.
  std::vector<Value> export_values() const;

  std::uint64_t seq() const { return seq_; }
  /// apply_tuple calls that completed.
  std::uint64_t evaluation_passes() const { return passes_; }
  /// Individual formula evaluations performed by apply_tuple.
  std::uint64_t evaluations() const { return evaluations_; }

  struct Plan;

 private:
  class Context;

  Engine() = default;
  void evaluate_all();
  Value evaluate_slot(std::size_t formula) const;

  std::shared_ptr<const Plan> plan_;
  std::vector<Value> values_;
  std::vector<WindowStore> windows_;
  std::vector<std::optional<Timestamp>> last_ts_;
  std::uint64_t seq_ = 0;
  std::uint64_t passes_ = 0;
  std::uint64_t evaluations_ = 0;
};

}  // namespace sheetstream
