// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "sheetstream/formula.hpp"
#include "sheetstream/value.hpp"

namespace sheetstream {

/// Read access to cell values during evaluation.
class EvalContext {
 public:
  using RangeVisitor = std::function<void(CellAddr, const Value&)>;

  virtual ~EvalContext() = default;
  virtual Value cell(CellAddr addr) const = 0;
  /// Visits the non-blank cells of `range` in row-major order.
  virtual void visit_range(const RangeAddr& range, const RangeVisitor& visit) const = 0;
};

/// Evaluates a formula tree. Errors are expressed as Error values, never
/// thrown. A WINDOW call evaluates to #VALUE! here: window cells are
/// materialized by the engine, which owns their buffers.
Value evaluate(const Expr& expr, const EvalContext& ctx);

/// Evaluation of a whole cell formula: like evaluate(), plus a window value
/// surfacing at the root of a non-WINDOW formula becomes #VALUE!.
Value evaluate_formula(const Expr& expr, const EvalContext& ctx);

}  // namespace sheetstream
