// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sheetstream {

inline constexpr std::int32_t kMaxCol = 16384;
inline constexpr std::int32_t kMaxRow = 1048576;

/// A1-style absolute cell address. Ordering is row-major (row, then column).
struct CellAddr {
  std::int32_t col = 1;
  std::int32_t row = 1;

  friend bool operator==(const CellAddr&, const CellAddr&) = default;
  friend std::strong_ordering operator<=>(const CellAddr& a, const CellAddr& b) {
    if (auto c = a.row <=> b.row; c != 0) return c;
    return a.col <=> b.col;
  }
};

struct RangeAddr {
  CellAddr top_left;
  CellAddr bottom_right;

  std::int32_t width() const { return bottom_right.col - top_left.col + 1; }
  std::int32_t height() const { return bottom_right.row - top_left.row + 1; }
  bool contains(CellAddr a) const {
    return a.col >= top_left.col && a.col <= bottom_right.col && a.row >= top_left.row &&
           a.row <= bottom_right.row;
  }
  bool intersects(const RangeAddr& o) const {
    return top_left.col <= o.bottom_right.col && o.top_left.col <= bottom_right.col &&
           top_left.row <= o.bottom_right.row && o.top_left.row <= bottom_right.row;
  }

  friend bool operator==(const RangeAddr&, const RangeAddr&) = default;
  friend auto operator<=>(const RangeAddr&, const RangeAddr&) = default;
};

/// Thrown for malformed formula or address text. `offset` is a byte offset
/// into the text that was being parsed.
class FormulaError : public std::runtime_error {
 public:
  FormulaError(std::size_t offset, const std::string& message)
      : std::runtime_error(message), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

CellAddr parse_addr(std::string_view text);
std::string format_addr(CellAddr addr);

/// Accepts "A3:C22" or a single cell "A29" (a 1x1 range).
RangeAddr parse_range(std::string_view text);
std::string format_range(const RangeAddr& range);

enum class ExprKind { Number, Text, Bool, Cell, Range, StreamAttr, Negate, Binary, Call };

enum class BinaryOp { Add, Sub, Mul, Div, Pow, Eq, Ne, Lt, Le, Gt, Ge };

enum class Function { Sum, Count, Average, Min, Max, If, And, Or, Not, Match, Abs, Window };

std::string_view function_name(Function fn);
std::string_view binary_op_symbol(BinaryOp op);
bool is_aggregator(Function fn);
bool is_comparison(BinaryOp op);

/// Formula syntax tree. A flat tagged node: only the fields relevant to
/// `kind` are meaningful, the rest stay default-initialized so that
/// defaulted equality is structural.
struct Expr {
  ExprKind kind = ExprKind::Number;
  double number = 0.0;
  bool boolean = false;
  std::string text;    // Text literal
  CellAddr cell;       // Cell
  RangeAddr range;     // Range
  std::string stream;  // StreamAttr
  std::string attr;    // StreamAttr
  BinaryOp op = BinaryOp::Add;
  Function fn = Function::Sum;
  std::vector<Expr> args;  // Negate: 1, Binary: 2, Call: n

  static Expr number_lit(double v);
  static Expr text_lit(std::string v);
  static Expr bool_lit(bool v);
  static Expr cell_ref(CellAddr a);
  static Expr range_ref(RangeAddr r);
  static Expr stream_attr(std::string stream, std::string attr);
  static Expr negate(Expr e);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);
  static Expr call(Function fn, std::vector<Expr> args);

  friend bool operator==(const Expr&, const Expr&) = default;
};

/// Parses `=expr`. Function names are case-insensitive; the resulting tree
/// is canonical (upper-case names, no parentheses nodes).
Expr parse_formula(std::string_view text);

/// Canonical text, always starting with '='. parse_formula(format(e)) == e.
std::string format(const Expr& expr);

struct StreamAttrRef {
  std::string stream;
  std::string attr;
  friend bool operator==(const StreamAttrRef&, const StreamAttrRef&) = default;
  friend auto operator<=>(const StreamAttrRef&, const StreamAttrRef&) = default;
};

using Reference = std::variant<CellAddr, RangeAddr, StreamAttrRef>;

/// Static reads of a formula; ranges are kept whole.
std::set<Reference> references(const Expr& expr);

/// Shortest decimal text that parses back to the same double. Fixed notation
/// for decimal exponents in [-4, 16), scientific ("1e+16", "1.5e-05")
/// otherwise; integral values carry no trailing ".0".
std::string format_number(double value);

}  // namespace sheetstream

template <>
struct std::hash<sheetstream::CellAddr> {
  std::size_t operator()(const sheetstream::CellAddr& a) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(a.row) << 32) |
                                      static_cast<std::uint32_t>(a.col));
  }
};
