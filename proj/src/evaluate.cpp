// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace sheetstream {

namespace {

const Value kValueError = Value::error(ErrorCode::Value);

// Arithmetic coercion: Blank -> 0, Bool -> 1/0, Text and windows -> #VALUE!.
std::optional<double> to_number(const Value& v, Value& err) {
  if (v.is_number()) return v.as_number();
  if (v.is_blank()) return 0.0;
  if (v.is_bool()) return v.as_bool() ? 1.0 : 0.0;
  err = v.is_error() ? v : kValueError;
  return std::nullopt;
}

// Condition coercion shared by IF, AND, OR, NOT.
std::optional<bool> to_condition(const Value& v, Value& err) {
  if (v.is_bool()) return v.as_bool();
  if (v.is_number()) return v.as_number() != 0.0;
  if (v.is_blank()) return false;
  err = v.is_error() ? v : kValueError;
  return std::nullopt;
}

int type_rank(const Value& v) {
  if (v.is_number()) return 0;
  if (v.is_text()) return 1;
  return 2;  // bool
}

// Three-way comparison with spreadsheet ordering: numbers < text < booleans.
// A blank operand takes the zero value of the other operand's type.
int compare(Value a, Value b) {
  auto zero_like = [](const Value& other) {
    if (other.is_text()) return Value::text("");
    if (other.is_bool()) return Value::boolean(false);
    return Value::number(0.0);
  };
  if (a.is_blank() && b.is_blank()) return 0;
  if (a.is_blank()) a = zero_like(b);
  if (b.is_blank()) b = zero_like(a);
  int ra = type_rank(a);
  int rb = type_rank(b);
  if (ra != rb) return ra < rb ? -1 : 1;
  if (a.is_number()) {
    double x = a.as_number(), y = b.as_number();
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  if (a.is_text()) {
    int c = a.as_text().compare(b.as_text());
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  return static_cast<int>(a.as_bool()) - static_cast<int>(b.as_bool());
}

Value arithmetic(BinaryOp op, double x, double y) {
  switch (op) {
    case BinaryOp::Add: return Value::number(x + y);
    case BinaryOp::Sub: return Value::number(x - y);
    case BinaryOp::Mul: return Value::number(x * y);
    case BinaryOp::Div:
      if (y == 0.0) return Value::error(ErrorCode::Div0);
      return Value::number(x / y);
    case BinaryOp::Pow:
      if (x == 0.0 && y < 0.0) return Value::error(ErrorCode::Div0);
      return Value::number(std::pow(x, y));
    default: return kValueError;
  }
}

struct Accumulator {
  std::uint64_t count = 0;
  double sum = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::optional<Value> error;

  void add(double x) {
    if (count == 0) {
      min = max = x;
    } else {
      min = std::min(min, x);
      max = std::max(max, x);
    }
    sum += x;
    ++count;
  }

  void add(const WindowSummary& w) {
    if (w.count == 0) return;
    if (count == 0) {
      min = w.min;
      max = w.max;
    } else {
      min = std::min(min, w.min);
      max = std::max(max, w.max);
    }
    sum += w.sum;
    count += w.count;
  }

  // A cell reached through a reference: non-numeric content is skipped.
  void add_referenced(const Value& v) {
    if (error) return;
    if (v.is_number()) add(v.as_number());
    else if (v.is_window()) add(v.as_window().summary);
    else if (v.is_error()) error = v;
  }
};

class Evaluator {
 public:
  explicit Evaluator(const EvalContext& ctx) : ctx_(ctx) {}

  Value eval(const Expr& e) const {
    switch (e.kind) {
      case ExprKind::Number: return Value::number(e.number);
      case ExprKind::Text: return Value::text(e.text);
      case ExprKind::Bool: return Value::boolean(e.boolean);
      case ExprKind::Cell: return ctx_.cell(e.cell);
      case ExprKind::Range:
      case ExprKind::StreamAttr: return kValueError;
      case ExprKind::Negate: {
        Value v = eval(e.args[0]);
        Value err;
        auto x = to_number(v, err);
        return x ? Value::number(-*x) : err;
      }
      case ExprKind::Binary: return binary(e);
      case ExprKind::Call: return call(e);
    }
    return kValueError;
  }

 private:
  Value binary(const Expr& e) const {
    Value l = eval(e.args[0]);
    Value r = eval(e.args[1]);
    if (l.is_error()) return l;
    if (r.is_error()) return r;
    if (is_comparison(e.op)) {
      if (l.is_window() || r.is_window()) return kValueError;
      int c = compare(l, r);
      switch (e.op) {
        case BinaryOp::Eq: return Value::boolean(c == 0);
        case BinaryOp::Ne: return Value::boolean(c != 0);
        case BinaryOp::Lt: return Value::boolean(c < 0);
        case BinaryOp::Le: return Value::boolean(c <= 0);
        case BinaryOp::Gt: return Value::boolean(c > 0);
        default: return Value::boolean(c >= 0);
      }
    }
    Value err;
    auto x = to_number(l, err);
    if (!x) return err;
    auto y = to_number(r, err);
    if (!y) return err;
    return arithmetic(e.op, *x, *y);
  }

  Value aggregate(const Expr& e) const {
    Accumulator acc;
    for (const auto& arg : e.args) {
      if (arg.kind == ExprKind::Range) {
        ctx_.visit_range(arg.range, [&](CellAddr, const Value& v) { acc.add_referenced(v); });
      } else if (arg.kind == ExprKind::Cell) {
        acc.add_referenced(ctx_.cell(arg.cell));
      } else {
        Value v = eval(arg);
        if (v.is_error()) {
          acc.error = v;
        } else if (v.is_number()) {
          acc.add(v.as_number());
        } else if (v.is_bool()) {
          acc.add(v.as_bool() ? 1.0 : 0.0);
        } else if (v.is_window()) {
          acc.add(v.as_window().summary);
        } else if (v.is_text() && e.fn != Function::Count) {
          acc.error = kValueError;
        }
      }
      if (acc.error) return *acc.error;
    }
    switch (e.fn) {
      case Function::Sum: return Value::number(acc.sum);
      case Function::Count: return Value::number(static_cast<double>(acc.count));
      case Function::Average:
        if (acc.count == 0) return Value::error(ErrorCode::Div0);
        return Value::number(acc.sum / static_cast<double>(acc.count));
      case Function::Min: return Value::number(acc.count == 0 ? 0.0 : acc.min);
      default: return Value::number(acc.count == 0 ? 0.0 : acc.max);
    }
  }

  Value logical(const Expr& e) const {
    std::vector<Value> values;
    for (const auto& arg : e.args) {
      if (arg.kind == ExprKind::Range) {
        ctx_.visit_range(arg.range, [&](CellAddr, const Value& v) {
          if (!v.is_text()) values.push_back(v);
        });
      } else {
        values.push_back(eval(arg));
      }
    }
    for (const auto& v : values)
      if (v.is_error()) return v;
    bool result = e.fn == Function::And;
    for (const auto& v : values) {
      Value err;
      auto b = to_condition(v, err);
      if (!b) return err;
      if (e.fn == Function::And) result = result && *b;
      else result = result || *b;
    }
    return Value::boolean(result);
  }

  Value match(const Expr& e) const {
    Value needle = eval(e.args[0]);
    if (needle.is_error()) return needle;
    if (needle.is_window()) return kValueError;
    const Expr& hay = e.args[1];
    RangeAddr range;
    if (hay.kind == ExprKind::Range) range = hay.range;
    else if (hay.kind == ExprKind::Cell) range = RangeAddr{hay.cell, hay.cell};
    else return kValueError;

    std::optional<Value> bad;
    std::optional<std::int64_t> found;
    ctx_.visit_range(range, [&](CellAddr a, const Value& v) {
      if (bad) return;
      if (v.is_error()) bad = v;
      else if (v.is_window()) bad = kValueError;
      else if (!found && !needle.is_blank() && v == needle)
        found = static_cast<std::int64_t>(a.row - range.top_left.row) * range.width() +
                (a.col - range.top_left.col) + 1;
    });
    if (bad) return *bad;
    if (!found) return Value::error(ErrorCode::NA);
    return Value::number(static_cast<double>(*found));
  }

  Value call(const Expr& e) const {
    if (is_aggregator(e.fn)) return aggregate(e);
    switch (e.fn) {
      case Function::If: {
        Value c = eval(e.args[0]);
        Value err;
        auto b = to_condition(c, err);
        if (!b) return err;
        if (!*b && e.args.size() < 3) return Value::boolean(false);
        Value branch = eval(e.args[*b ? 1 : 2]);
        return branch.is_window() ? kValueError : branch;
      }
      case Function::And:
      case Function::Or: return logical(e);
      case Function::Not: {
        Value err;
        auto b = to_condition(eval(e.args[0]), err);
        return b ? Value::boolean(!*b) : err;
      }
      case Function::Abs: {
        Value err;
        auto x = to_number(eval(e.args[0]), err);
        return x ? Value::number(std::abs(*x)) : err;
      }
      case Function::Match: return match(e);
      default: return kValueError;
    }
  }

  const EvalContext& ctx_;
};

}  // namespace

Value evaluate(const Expr& expr, const EvalContext& ctx) { return Evaluator(ctx).eval(expr); }

Value evaluate_formula(const Expr& expr, const EvalContext& ctx) {
  Value v = evaluate(expr, ctx);
  return v.is_window() ? kValueError : v;
}

}  // namespace sheetstream
