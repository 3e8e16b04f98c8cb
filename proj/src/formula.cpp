// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/formula.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <system_error>

namespace sheetstream {

namespace {

constexpr int kMaxDepth = 200;

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// Returns true if `text` is exactly [A-Z]+[1-9][0-9]*; does not range-check.
bool looks_like_addr(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && is_upper(text[i])) ++i;
  if (i == 0 || i == text.size() || text[i] == '0') return false;
  for (std::size_t j = i; j < text.size(); ++j)
    if (!is_digit(text[j])) return false;
  return true;
}

struct FunctionInfo {
  Function fn;
  std::string_view name;
  std::size_t min_args;
  std::size_t max_args;
};

constexpr std::size_t kVariadic = static_cast<std::size_t>(-1);

constexpr std::array<FunctionInfo, 12> kFunctions{{
    {Function::Sum, "SUM", 1, kVariadic},
    {Function::Count, "COUNT", 1, kVariadic},
    {Function::Average, "AVERAGE", 1, kVariadic},
    {Function::Min, "MIN", 1, kVariadic},
    {Function::Max, "MAX", 1, kVariadic},
    {Function::If, "IF", 2, 3},
    {Function::And, "AND", 1, kVariadic},
    {Function::Or, "OR", 1, kVariadic},
    {Function::Not, "NOT", 1, 1},
    {Function::Match, "MATCH", 2, 2},
    {Function::Abs, "ABS", 1, 1},
    {Function::Window, "WINDOW", 2, 2},
}};

const FunctionInfo* find_function(std::string_view upper_name) {
  for (const auto& info : kFunctions)
    if (info.name == upper_name) return &info;
  return nullptr;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse() {
    if (text_.empty() || text_[0] != '=') fail(0, "formula must start with '='");
    pos_ = 1;
    Expr e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail(pos_, "unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(std::size_t at, const std::string& msg) { throw FormulaError(at, msg); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c)
      fail(pos_, std::string("expected '") + c + "'");
    ++pos_;
  }

  struct DepthGuard {
    Parser& p;
    explicit DepthGuard(Parser& parser) : p(parser) {
      if (++p.depth_ > kMaxDepth) p.fail(p.pos_, "expression nested too deeply");
    }
    ~DepthGuard() { --p.depth_; }
  };

  Expr expr() {
    DepthGuard guard(*this);
    Expr lhs = add();
    skip_ws();
    BinaryOp op;
    if (eat("<>")) op = BinaryOp::Ne;
    else if (eat("<=")) op = BinaryOp::Le;
    else if (eat(">=")) op = BinaryOp::Ge;
    else if (eat("=")) op = BinaryOp::Eq;
    else if (eat("<")) op = BinaryOp::Lt;
    else if (eat(">")) op = BinaryOp::Gt;
    else return lhs;
    Expr rhs = add();
    return Expr::binary(op, std::move(lhs), std::move(rhs));
  }

  Expr add() {
    Expr lhs = mul();
    for (;;) {
      if (eat("+")) lhs = Expr::binary(BinaryOp::Add, std::move(lhs), mul());
      else if (eat("-")) lhs = Expr::binary(BinaryOp::Sub, std::move(lhs), mul());
      else return lhs;
    }
  }

  Expr mul() {
    Expr lhs = neg();
    for (;;) {
      if (eat("*")) lhs = Expr::binary(BinaryOp::Mul, std::move(lhs), neg());
      else if (eat("/")) lhs = Expr::binary(BinaryOp::Div, std::move(lhs), neg());
      else return lhs;
    }
  }

  Expr neg() {
    if (eat("-")) {
      DepthGuard guard(*this);
      return Expr::negate(neg());
    }
    return pow();
  }

  Expr pow() {
    Expr base = atom(false);
    if (eat("^")) {
      DepthGuard guard(*this);
      return Expr::binary(BinaryOp::Pow, std::move(base), neg());
    }
    return base;
  }

  Expr number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      if (pos_ >= text_.size() || !is_digit(text_[pos_])) fail(pos_, "expected digit after '.'");
      while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ >= text_.size() || !is_digit(text_[pos_])) fail(pos_, "expected exponent digits");
      while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc() || ptr != text_.data() + pos_ || !std::isfinite(v))
      fail(start, "number out of range");
    return Expr::number_lit(v);
  }

  Expr string_lit() {
    std::size_t start = pos_;
    ++pos_;  // opening quote
    std::string out;
    for (;;) {
      if (pos_ >= text_.size()) fail(start, "unterminated string");
      char c = text_[pos_++];
      if (c == '"') {
        if (pos_ < text_.size() && text_[pos_] == '"') {
          out.push_back('"');
          ++pos_;
        } else {
          break;
        }
      } else {
        out.push_back(c);
      }
    }
    return Expr::text_lit(std::move(out));
  }

  std::string_view ident() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  CellAddr addr_at(std::string_view word, std::size_t at) {
    try {
      return parse_addr(word);
    } catch (const FormulaError& e) {
      fail(at + e.offset(), e.what());
    }
  }

  Expr atom(bool window_first_arg) {
    skip_ws();
    if (pos_ >= text_.size()) fail(pos_, "unexpected end of formula");
    char c = text_[pos_];
    if (is_digit(c)) return number();
    if (c == '"') return string_lit();
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      expect(')');
      return e;
    }
    if (c == '$') fail(pos_, "absolute-reference '$' syntax is not supported");
    if (!is_ident_start(c)) fail(pos_, std::string("unexpected character '") + c + "'");

    std::size_t start = pos_;
    std::string_view word = ident();
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') return call(word, start);
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      skip_ws();
      if (pos_ >= text_.size() || !is_ident_start(text_[pos_]))
        fail(pos_, "expected attribute name after '.'");
      std::string_view attr = ident();
      if (!window_first_arg)
        fail(start, "stream attribute reference is only allowed as the first argument of WINDOW");
      return Expr::stream_attr(std::string(word), std::string(attr));
    }
    std::string up = upper(word);
    if (up == "TRUE") return Expr::bool_lit(true);
    if (up == "FALSE") return Expr::bool_lit(false);
    if (pos_ < text_.size() && text_[pos_] == '$')
      fail(pos_, "absolute-reference '$' syntax is not supported");
    if (!looks_like_addr(word)) fail(start, "unknown name '" + std::string(word) + "'");
    CellAddr first = addr_at(word, start);
    if (eat(":")) {
      skip_ws();
      std::size_t second_start = pos_;
      std::string_view second = ident();
      if (!looks_like_addr(second)) fail(second_start, "expected cell reference after ':'");
      CellAddr last = addr_at(second, second_start);
      if (last.col < first.col || last.row < first.row)
        fail(start, "range corners must be top-left then bottom-right");
      return Expr::range_ref(RangeAddr{first, last});
    }
    return Expr::cell_ref(first);
  }

  Expr call(std::string_view name, std::size_t name_at) {
    std::string up = upper(name);
    const FunctionInfo* info = find_function(up);
    if (info == nullptr) fail(name_at, "unknown function '" + std::string(name) + "'");
    expect('(');
    std::vector<Expr> args;
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ')') {
      ++pos_;
    } else {
      for (;;) {
        bool window_first = info->fn == Function::Window && args.empty();
        if (window_first) {
          DepthGuard guard(*this);
          std::size_t arg_at = pos_;
          Expr a = atom(true);
          if (a.kind != ExprKind::StreamAttr)
            fail(arg_at, "WINDOW requires a stream.attr reference as its first argument");
          args.push_back(std::move(a));
        } else {
          std::size_t arg_at = pos_;
          args.push_back(expr());
          if (info->fn == Function::Window && args.size() == 2) {
            const Expr& span = args.back();
            if (span.kind != ExprKind::Number || span.number < 1 ||
                span.number != std::floor(span.number) || span.number > 9.007199254740992e15)
              fail(arg_at, "WINDOW span must be a positive integer literal (milliseconds)");
          }
        }
        if (eat(",")) continue;
        expect(')');
        break;
      }
    }
    if (args.size() < info->min_args || args.size() > info->max_args) {
      std::string want = info->max_args == kVariadic
                             ? "at least " + std::to_string(info->min_args)
                         : info->min_args == info->max_args
                             ? std::to_string(info->min_args)
                             : std::to_string(info->min_args) + " to " + std::to_string(info->max_args);
      fail(name_at, std::string(info->name) + " takes " + want + " argument(s), got " +
                        std::to_string(args.size()));
    }
    return Expr::call(info->fn, std::move(args));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int depth_ = 0;
};

// Binding strength used by the printer; mirrors the grammar levels.
int precedence(const Expr& e) {
  switch (e.kind) {
    case ExprKind::Binary:
      switch (e.op) {
        case BinaryOp::Add:
        case BinaryOp::Sub: return 2;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 3;
        case BinaryOp::Pow: return 5;
        default: return 1;
      }
    case ExprKind::Negate: return 4;
    default: return 6;
  }
}

void print(const Expr& e, std::string& out);

void print_at_least(const Expr& e, int min_prec, std::string& out) {
  if (precedence(e) < min_prec) {
    out.push_back('(');
    print(e, out);
    out.push_back(')');
  } else {
    print(e, out);
  }
}

void print(const Expr& e, std::string& out) {
  switch (e.kind) {
    case ExprKind::Number: out += format_number(e.number); break;
    case ExprKind::Text:
      out.push_back('"');
      for (char c : e.text) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
      }
      out.push_back('"');
      break;
    case ExprKind::Bool: out += e.boolean ? "TRUE" : "FALSE"; break;
    case ExprKind::Cell: out += format_addr(e.cell); break;
    case ExprKind::Range: out += format_range(e.range); break;
    case ExprKind::StreamAttr: out += e.stream + "." + e.attr; break;
    case ExprKind::Negate:
      out.push_back('-');
      print_at_least(e.args[0], 4, out);
      break;
    case ExprKind::Binary: {
      int p = precedence(e);
      int lhs_min = p;
      int rhs_min = p + 1;
      if (e.op == BinaryOp::Pow) {
        lhs_min = 6;
        rhs_min = 4;
      } else if (p == 1) {
        lhs_min = rhs_min = 2;
      } else if (p == 3) {
        rhs_min = 4;
      }
      print_at_least(e.args[0], lhs_min, out);
      out += binary_op_symbol(e.op);
      print_at_least(e.args[1], rhs_min, out);
      break;
    }
    case ExprKind::Call: {
      out += function_name(e.fn);
      out.push_back('(');
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out.push_back(',');
        print(e.args[i], out);
      }
      out.push_back(')');
      break;
    }
  }
}

void collect(const Expr& e, std::set<Reference>& out) {
  switch (e.kind) {
    case ExprKind::Cell: out.insert(e.cell); break;
    case ExprKind::Range: out.insert(e.range); break;
    case ExprKind::StreamAttr: out.insert(StreamAttrRef{e.stream, e.attr}); break;
    default:
      for (const auto& a : e.args) collect(a, out);
  }
}

}  // namespace

CellAddr parse_addr(std::string_view text) {
  std::size_t i = 0;
  std::int64_t col = 0;
  while (i < text.size() && is_upper(text[i])) {
    col = col * 26 + (text[i] - 'A' + 1);
    if (col > kMaxCol) throw FormulaError(0, "column out of range in '" + std::string(text) + "'");
    ++i;
  }
  if (i == 0) throw FormulaError(0, "malformed cell address '" + std::string(text) + "'");
  if (i == text.size() || text[i] == '0')
    throw FormulaError(i, "malformed cell address '" + std::string(text) + "'");
  std::int64_t row = 0;
  for (std::size_t j = i; j < text.size(); ++j) {
    if (!is_digit(text[j]))
      throw FormulaError(j, "malformed cell address '" + std::string(text) + "'");
    row = row * 10 + (text[j] - '0');
    if (row > kMaxRow) throw FormulaError(i, "row out of range in '" + std::string(text) + "'");
  }
  return CellAddr{static_cast<std::int32_t>(col), static_cast<std::int32_t>(row)};
}

std::string format_addr(CellAddr addr) {
  std::string letters;
  for (std::int32_t c = addr.col; c > 0; c = (c - 1) / 26)
    letters.insert(letters.begin(), static_cast<char>('A' + (c - 1) % 26));
  return letters + std::to_string(addr.row);
}

RangeAddr parse_range(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    CellAddr a = parse_addr(text);
    return RangeAddr{a, a};
  }
  CellAddr a = parse_addr(text.substr(0, colon));
  CellAddr b;
  try {
    b = parse_addr(text.substr(colon + 1));
  } catch (const FormulaError& e) {
    throw FormulaError(colon + 1 + e.offset(), e.what());
  }
  if (b.col < a.col || b.row < a.row)
    throw FormulaError(0, "range corners must be top-left then bottom-right");
  return RangeAddr{a, b};
}

std::string format_range(const RangeAddr& range) {
  return format_addr(range.top_left) + ":" + format_addr(range.bottom_right);
}

std::string_view function_name(Function fn) {
  for (const auto& info : kFunctions)
    if (info.fn == fn) return info.name;
  return "?";
}

std::string_view binary_op_symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Pow: return "^";
    case BinaryOp::Eq: return "=";
    case BinaryOp::Ne: return "<>";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
  }
  return "?";
}

bool is_aggregator(Function fn) {
  return fn == Function::Sum || fn == Function::Count || fn == Function::Average ||
         fn == Function::Min || fn == Function::Max;
}

bool is_comparison(BinaryOp op) {
  return op == BinaryOp::Eq || op == BinaryOp::Ne || op == BinaryOp::Lt || op == BinaryOp::Le ||
         op == BinaryOp::Gt || op == BinaryOp::Ge;
}

Expr Expr::number_lit(double v) {
  Expr e;
  e.kind = ExprKind::Number;
  e.number = v;
  return e;
}

Expr Expr::text_lit(std::string v) {
  Expr e;
  e.kind = ExprKind::Text;
  e.text = std::move(v);
  return e;
}

Expr Expr::bool_lit(bool v) {
  Expr e;
  e.kind = ExprKind::Bool;
  e.boolean = v;
  return e;
}

Expr Expr::cell_ref(CellAddr a) {
  Expr e;
  e.kind = ExprKind::Cell;
  e.cell = a;
  return e;
}

Expr Expr::range_ref(RangeAddr r) {
  Expr e;
  e.kind = ExprKind::Range;
  e.range = r;
  return e;
}

Expr Expr::stream_attr(std::string stream, std::string attr) {
  Expr e;
  e.kind = ExprKind::StreamAttr;
  e.stream = std::move(stream);
  e.attr = std::move(attr);
  return e;
}

Expr Expr::negate(Expr inner) {
  Expr e;
  e.kind = ExprKind::Negate;
  e.args.push_back(std::move(inner));
  return e;
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  Expr e;
  e.kind = ExprKind::Binary;
  e.op = op;
  e.args.push_back(std::move(lhs));
  e.args.push_back(std::move(rhs));
  return e;
}

Expr Expr::call(Function fn, std::vector<Expr> args) {
  Expr e;
  e.kind = ExprKind::Call;
  e.fn = fn;
  e.args = std::move(args);
  return e;
}

Expr parse_formula(std::string_view text) { return Parser(text).parse(); }

std::string format(const Expr& expr) {
  std::string out = "=";
  print(expr, out);
  return out;
}

std::set<Reference> references(const Expr& expr) {
  std::set<Reference> out;
  collect(expr, out);
  return out;
}

std::string format_number(double value) {
  if (value == 0.0) return std::signbit(value) ? "-0" : "0";
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::scientific);
  std::string_view sci(buf.data(), static_cast<std::size_t>(res.ptr - buf.data()));

  std::string sign;
  if (sci.front() == '-') {
    sign = "-";
    sci.remove_prefix(1);
  }
  auto e_pos = sci.find('e');
  std::string digits;
  for (char c : sci.substr(0, e_pos))
    if (c != '.') digits.push_back(c);
  int exp10 = 0;
  std::string_view exp_text = sci.substr(e_pos + 1);
  if (exp_text.front() == '+') exp_text.remove_prefix(1);
  std::from_chars(exp_text.data(), exp_text.data() + exp_text.size(), exp10);

  if (exp10 < -4 || exp10 >= 16) {
    std::string out = sign + digits.substr(0, 1);
    if (digits.size() > 1) out += "." + digits.substr(1);
    out += exp10 < 0 ? "e-" : "e+";
    int mag = exp10 < 0 ? -exp10 : exp10;
    if (mag < 10) out.push_back('0');
    out += std::to_string(mag);
    return out;
  }
  int point = exp10 + 1;  // digits before the decimal point
  std::string out = sign;
  if (point <= 0) {
    out += "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
  } else if (static_cast<std::size_t>(point) >= digits.size()) {
    out += digits + std::string(static_cast<std::size_t>(point) - digits.size(), '0');
  } else {
    out += digits.substr(0, static_cast<std::size_t>(point)) + "." +
           digits.substr(static_cast<std::size_t>(point));
  }
  return out;
}

}  // namespace sheetstream
