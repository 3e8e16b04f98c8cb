// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace sheetstream {

enum class ErrorCode { Value, Div0, NA, Ref, Cycle };

std::string_view error_text(ErrorCode code);
std::optional<ErrorCode> parse_error_text(std::string_view text);

struct Blank {
  friend bool operator==(Blank, Blank) { return true; }
};

/// Aggregate view of a window buffer; every builtin that may consume a
/// window only needs these four numbers.
struct WindowSummary {
  std::uint64_t count = 0;
  double sum = 0.0;
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const WindowSummary&, const WindowSummary&) = default;
};

struct WindowRef {
  std::uint32_t id = 0;
  WindowSummary summary;
  friend bool operator==(const WindowRef&, const WindowRef&) = default;
};

/// Tagged cell value. Numbers are always finite: use Value::number() to
/// build one from an arbitrary double.
class Value {
 public:
  Value() = default;

  static Value blank() { return Value(); }
  /// Non-finite input becomes #VALUE!.
  static Value number(double v);
  static Value text(std::string v) { return Value(Storage(std::move(v))); }
  static Value boolean(bool v) { return Value(Storage(v)); }
  static Value error(ErrorCode c) { return Value(Storage(c)); }
  static Value window(WindowRef w) { return Value(Storage(w)); }

  bool is_blank() const { return std::holds_alternative<Blank>(v_); }
  bool is_number() const { return std::holds_alternative<double>(v_); }
  bool is_text() const { return std::holds_alternative<std::string>(v_); }
  bool is_bool() const { return std::holds_alternative<bool>(v_); }
  bool is_error() const { return std::holds_alternative<ErrorCode>(v_); }
  bool is_window() const { return std::holds_alternative<WindowRef>(v_); }

  double as_number() const { return std::get<double>(v_); }
  const std::string& as_text() const { return std::get<std::string>(v_); }
  bool as_bool() const { return std::get<bool>(v_); }
  ErrorCode as_error() const { return std::get<ErrorCode>(v_); }
  const WindowRef& as_window() const { return std::get<WindowRef>(v_); }

  friend bool operator==(const Value&, const Value&) = default;

 private:
  using Storage = std::variant<Blank, double, bool, std::string, ErrorCode, WindowRef>;
  explicit Value(Storage s) : v_(std::move(s)) {}
  Storage v_;
};

/// Human-readable rendering used in diagnostics and test output.
std::string describe(const Value& v);

}  // namespace sheetstream
