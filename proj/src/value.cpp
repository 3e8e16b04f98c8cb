// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/value.hpp"

#include <cmath>

#include "sheetstream/formula.hpp"

namespace sheetstream {

std::string_view error_text(ErrorCode code) {
  switch (code) {
    case ErrorCode::Value: return "#VALUE!";
    case ErrorCode::Div0: return "#DIV/0!";
    case ErrorCode::NA: return "#N/A";
    case ErrorCode::Ref: return "#REF!";
    case ErrorCode::Cycle: return "#CYCLE!";
  }
  return "#VALUE!";
}

std::optional<ErrorCode> parse_error_text(std::string_view text) {
  for (auto c : {ErrorCode::Value, ErrorCode::Div0, ErrorCode::NA, ErrorCode::Ref, ErrorCode::Cycle})
    if (error_text(c) == text) return c;
  return std::nullopt;
}

Value Value::number(double v) {
  if (!std::isfinite(v)) return error(ErrorCode::Value);
  return Value(Storage(v));
}

std::string describe(const Value& v) {
  if (v.is_blank()) return "<blank>";
  if (v.is_number()) return format_number(v.as_number());
  if (v.is_text()) return "\"" + v.as_text() + "\"";
  if (v.is_bool()) return v.as_bool() ? "TRUE" : "FALSE";
  if (v.is_error()) return std::string(error_text(v.as_error()));
  const auto& w = v.as_window();
  return "<window #" + std::to_string(w.id) + " n=" + std::to_string(w.summary.count) +
         " sum=" + format_number(w.summary.sum) + ">";
}

}  // namespace sheetstream
