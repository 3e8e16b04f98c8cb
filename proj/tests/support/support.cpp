// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifndef SHEETSTREAM_FIXTURE_DIR
#error "SHEETSTREAM_FIXTURE_DIR must be defined"
#endif

namespace sstest {

std::shared_ptr<const SheetModel> model_from(const json& doc) {
  return std::make_shared<const SheetModel>(load_model(doc.dump()));
}

double exact_sum(const std::vector<double>& xs) {
  std::vector<double> partials;
  for (double x : xs) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      double hi = x + y;
      double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  double total = 0.0;
  for (auto it = partials.rbegin(); it != partials.rend(); ++it) total += *it;
  return total;
}

bool same_value(const Value& a, const Value& b) {
  if (a.is_window() && b.is_window()) return a.as_window().summary == b.as_window().summary;
  return a == b;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixture(const std::string& name) { return std::string(SHEETSTREAM_FIXTURE_DIR) + "/" + name; }

std::string run_to_string(std::shared_ptr<const SheetModel> model, const std::map<std::string, std::string>& inputs,
                          DataFormat format, RunStats* stats, std::size_t max_partitions) {
  std::map<std::string, InputSource> sources;
  for (const auto& [name, text] : inputs)
    sources.emplace(name, InputSource{name, std::make_unique<std::istringstream>(text), DataFormat::Csv});
  MergedCursor cursor(*model, std::move(sources));
  std::ostringstream out;
  auto sink = make_sink(format, out);
  RunStats s = run(model, cursor, *sink, RunConfig{max_partitions});
  if (stats) *stats = s;
  return out.str();
}

json vwap_model_doc(bool partitioned) {
  json cells = json::array();
  for (int r = 3; r <= 22; ++r)
    cells.push_back({{"addr", "D" + std::to_string(r)},
                     {"formula", "=B" + std::to_string(r) + "*C" + std::to_string(r)}});
  cells.push_back({{"addr", "G3"}, {"formula", "=SUM(D3:D22)/SUM(C3:C22)"}});
  cells.push_back({{"addr", "G7"}, {"formula", "=IF(COUNT(B29)=0,FALSE,B29<G3)"}});
  json trades = {{"name", "trades"},
                 {"attrs",
                  {{{"name", "sym"}, {"type", "text"}},
                   {{"name", "price"}, {"type", "number"}},
                   {{"name", "vol"}, {"type", "number"}},
                   {{"name", "ts"}, {"type", "timestamp"}}}},
                 {"ts_attr", "ts"}};
  json quotes = {{"name", "quotes"},
                 {"attrs",
                  {{{"name", "sym"}, {"type", "text"}},
                   {{"name", "price"}, {"type", "number"}},
                   {{"name", "ts"}, {"type", "timestamp"}}}},
                 {"ts_attr", "ts"}};
  if (partitioned) {
    trades["partition_by"] = "sym";
    quotes["partition_by"] = "sym";
  }
  return {{"streams", {trades, quotes}},
          {"bindings",
           {{{"stream", "trades"},
             {"kind", "scroll"},
             {"region", "A3:C22"},
             {"rows", 20},
             {"projection", {"sym", "price", "vol"}}},
            {{"stream", "quotes"}, {"kind", "latest"}, {"region", "A29:B29"}, {"projection", {"sym", "price"}}}}},
          {"cells", cells},
          {"exports", {{{"addr", "G3"}, {"name", "vwap"}}, {{"addr", "G7"}, {"name", "isBargain"}}}}};
}

namespace {

constexpr int kFormulaCols = 6;
constexpr int kFirstFormulaCol = 6;  // F

CellAddr formula_addr(int index) { return {kFirstFormulaCol + index % kFormulaCols, 1 + index / kFormulaCols}; }

}  // namespace

RandomModel::RandomModel(std::uint64_t seed, int max_cells) : rng_(seed) {
  std::uniform_int_distribution<int> rows_dist(1, 6);
  scroll_rows = rows_dist(rng_);
  int n_cells = std::uniform_int_distribution<int>(1, max_cells)(rng_);

  doc["streams"] = {
      {{"name", "s1"},
       {"attrs", {{{"name", "a"}, {"type", "number"}}, {{"name", "tag"}, {"type", "text"}}, {{"name", "ts"}, {"type", "timestamp"}}}},
       {"ts_attr", "ts"}},
      {{"name", "s2"},
       {"attrs", {{{"name", "x"}, {"type", "number"}}, {{"name", "ts"}, {"type", "timestamp"}}}},
       {"ts_attr", "ts"}}};
  doc["bindings"] = {{{"stream", "s1"},
                      {"kind", "scroll"},
                      {"region", "A1:B" + std::to_string(scroll_rows)},
                      {"rows", scroll_rows},
                      {"projection", {"a", "tag"}}},
                     {{"stream", "s2"}, {"kind", "latest"}, {"region", "D1:D1"}, {"projection", {"x"}}}};

  std::bernoulli_distribution window_coin(0.15);
  const int span_choices[] = {1, 5, 50, 1000};
  json cells = json::array();
  json exports = json::array();
  for (int i = 0; i < n_cells; ++i) {
    std::string text;
    if (window_coin(rng_)) {
      window_cells_.push_back(i);
      int span = span_choices[std::uniform_int_distribution<int>(0, 3)(rng_)];
      text = std::string("=WINDOW(") + (rng_() % 2 ? "s1.a" : "s2.x") + "," + std::to_string(span) + ")";
    } else {
      text = "=" + expr(3, i);
      if (rng_() % 4 == 0) exports.push_back({{"addr", format_addr(formula_addr(i))}, {"name", "e" + std::to_string(i)}});
    }
    cells.push_back({{"addr", format_addr(formula_addr(i))}, {"formula", text}});
  }
  doc["cells"] = cells;
  doc["exports"] = exports;
}

std::string RandomModel::cell_before(int self_index) {
  if (self_index == 0 || rng_() % 3 == 0) {
    // bound or empty cell
    switch (rng_() % 4) {
      case 0: return "D1";
      case 1: return "L20";
      default: {
        int row = 1 + static_cast<int>(rng_() % static_cast<std::uint64_t>(scroll_rows));
        return std::string(rng_() % 2 ? "A" : "B") + std::to_string(row);
      }
    }
  }
  int target = static_cast<int>(rng_() % static_cast<std::uint64_t>(self_index));
  return format_addr(formula_addr(target));
}

std::string RandomModel::range_before(int self_index) {
  if (self_index < 2 || rng_() % 2 == 0) {
    int r1 = 1 + static_cast<int>(rng_() % static_cast<std::uint64_t>(scroll_rows));
    int r2 = r1 + static_cast<int>(rng_() % static_cast<std::uint64_t>(scroll_rows - r1 + 1));
    return "A" + std::to_string(r1) + ":" + (rng_() % 2 ? "B" : "A") +
           std::to_string(r2);
  }
  // Any rectangle whose bottom-right precedes self_index holds only earlier cells.
  int last = static_cast<int>(rng_() % static_cast<std::uint64_t>(self_index));
  CellAddr br = formula_addr(last);
  int c1 = kFirstFormulaCol + static_cast<int>(rng_() % static_cast<std::uint64_t>(br.col - kFirstFormulaCol + 1));
  int r1 = 1 + static_cast<int>(rng_() % static_cast<std::uint64_t>(br.row));
  return format_range({{c1, r1}, br});
}

std::string RandomModel::operand(int self_index) {
  switch (rng_() % 7) {
    case 0: {
      const char* lits[] = {"0", "1", "2", "3", "0.5", "10", "1e3", "7"};
      return lits[rng_() % 8];
    }
    case 1: {
      const char* lits[] = {"\"x\"", "\"Q\"", "\"\"", "TRUE", "FALSE"};
      return lits[rng_() % 5];
    }
    default: return cell_before(self_index);
  }
}

std::string RandomModel::expr(int depth, int self_index) {
  if (depth <= 0) return operand(self_index);
  auto sub = [&] { return expr(depth - 1, self_index); };
  auto list = [&](int lo, int hi, bool ranges) {
    int n = lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
    std::string out;
    for (int k = 0; k < n; ++k) {
      if (k) out += ",";
      out += ranges && rng_() % 2 ? range_before(self_index) : sub();
    }
    return out;
  };
  switch (rng_() % 10) {
    case 0:
    case 1: return operand(self_index);
    case 2: {
      const char* ops[] = {"+", "-", "*", "/", "^", "=", "<>", "<", "<=", ">", ">="};
      return "(" + sub() + ops[rng_() % 11] + sub() + ")";
    }
    case 3: return "-" + operand(self_index);
    case 4: {
      const char* aggs[] = {"SUM", "COUNT", "AVERAGE", "MIN", "MAX"};
      return std::string(aggs[rng_() % 5]) + "(" + list(1, 3, true) + ")";
    }
    case 5: return "IF(" + list(2, 3, false) + ")";
    case 6: return std::string(rng_() % 2 ? "AND(" : "OR(") + list(1, 3, false) + ")";
    case 7: return "NOT(" + sub() + ")";
    case 8: return "MATCH(" + sub() + "," + range_before(self_index) + ")";
    default: return "ABS(" + sub() + ")";
  }
}

std::vector<RandomModel::Event> RandomModel::events(int n) {
  std::vector<Event> out;
  const char* tags[] = {"x", "Q", "y"};
  for (int i = 0; i < n; ++i) {
    ts_ += static_cast<Timestamp>(rng_() % 20);
    double v = static_cast<double>(static_cast<int>(rng_() % 101) - 50);
    if (rng_() % 3)
      out.push_back({"s1", {num(v), txt(tags[rng_() % 3]), num(static_cast<double>(ts_))}, ts_});
    else
      out.push_back({"s2", {num(v), num(static_cast<double>(ts_))}, ts_});
  }
  return out;
}

void ReferenceSheet::push(const std::string& stream, const std::vector<Value>& tuple, Timestamp ts) {
  history_[stream].emplace_back(ts, tuple);
  memo_.clear();
}

Value ReferenceSheet::cell(CellAddr addr) const {
  if (auto it = memo_.find(addr); it != memo_.end()) return it->second;
  for (const CellAddr& a : active_)
    if (a == addr) throw std::logic_error("reference sheet found a cycle at " + format_addr(addr));

  Value out;
  for (const Binding& b : model_.bindings) {
    if (!b.region.contains(addr)) continue;
    const StreamDecl* decl = model_.find_stream(b.stream);
    auto hist_it = history_.find(b.stream);
    std::size_t m = hist_it == history_.end() ? 0 : hist_it->second.size();
    int offset = addr.row - b.region.top_left.row;  // row within region
    // Scroll(N) row r holds tuple m - N + r (0-based); latest is Scroll(1).
    long idx = static_cast<long>(m) - b.rows + offset;
    if (idx >= 0) {
      const auto& tuple = hist_it->second[static_cast<std::size_t>(idx)].second;
      const std::string& attr = b.projection[static_cast<std::size_t>(addr.col - b.region.top_left.col)];
      out = tuple[static_cast<std::size_t>(decl->attr_index(attr))];
    }
    memo_[addr] = out;
    return out;
  }

  if (const CellDef* def = model_.find_cell(addr)) {
    const Expr& e = def->ast;
    if (e.kind == ExprKind::Call && e.fn == Function::Window) {
      const Expr& sa = e.args[0];
      auto span = static_cast<Timestamp>(e.args[1].number);
      WindowSummary s;
      auto hist_it = history_.find(sa.stream);
      if (hist_it != history_.end() && !hist_it->second.empty()) {
        Timestamp now = hist_it->second.back().first;
        int k = model_.find_stream(sa.stream)->attr_index(sa.attr);
        std::vector<double> xs;
        for (const auto& [ts, tuple] : hist_it->second) {
          if (ts <= now - span) continue;
          double x = tuple[static_cast<std::size_t>(k)].as_number();
          if (xs.empty()) {
            s.min = s.max = x;
          } else {
            s.min = std::min(s.min, x);
            s.max = std::max(s.max, x);
          }
          xs.push_back(x);
        }
        s.count = xs.size();
        s.sum = exact_sum(xs);
      }
      out = Value::window(WindowRef{0, s});
    } else {
      active_.push_back(addr);
      out = evaluate_formula(e, *this);
      active_.pop_back();
    }
  }
  memo_[addr] = out;
  return out;
}

void ReferenceSheet::visit_range(const RangeAddr& range, const RangeVisitor& visit) const {
  for (int r = range.top_left.row; r <= range.bottom_right.row; ++r)
    for (int c = range.top_left.col; c <= range.bottom_right.col; ++c) {
      Value v = cell({c, r});
      if (!v.is_blank()) visit({c, r}, v);
    }
}

}  // namespace sstest
