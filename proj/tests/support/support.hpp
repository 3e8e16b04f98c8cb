// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "sheetstream/engine.hpp"
#include "sheetstream/evaluate.hpp"
#include "sheetstream/io.hpp"
#include "sheetstream/model.hpp"

namespace sstest {

using namespace sheetstream;
using json = nlohmann::json;

inline Value num(double v) { return Value::number(v); }
inline Value txt(std::string s) { return Value::text(std::move(s)); }
inline Value boolean(bool b) { return Value::boolean(b); }
inline Value err(ErrorCode c) { return Value::error(c); }
inline CellAddr A(const char* s) { return parse_addr(s); }

std::shared_ptr<const SheetModel> model_from(const json& doc);

/// Exactly rounded sum (Shewchuk partials), used as the reference for
/// compensated window sums.
double exact_sum(const std::vector<double>& xs);

/// Values equal; windows compare by summary only (ids are internal).
bool same_value(const Value& a, const Value& b);

/// Read one file entirely.
std::string slurp(const std::string& path);

/// Directory holding the bundled fixtures.
std::string fixture(const std::string& name);

/// Runs the CSV pipeline in memory and returns the output text.
std::string run_to_string(std::shared_ptr<const SheetModel> model, const std::map<std::string, std::string>& inputs,
                          DataFormat format = DataFormat::Csv, RunStats* stats = nullptr,
                          std::size_t max_partitions = kDefaultMaxPartitions);

/// The bundled VWAP model with a `D` helper column.
json vwap_model_doc(bool partitioned);

/// Random acyclic models over a scroll-bound stream `s1(a, tag, ts)`, a
/// latest-bound stream `s2(x, ts)` and a formula block in F1:K9. Stream
/// values are small integers so window sums are exact in any order.
class RandomModel {
 public:
  explicit RandomModel(std::uint64_t seed, int max_cells = 50);

  json doc;
  int scroll_rows = 1;
  struct Event {
    std::string stream;
    std::vector<Value> tuple;
    Timestamp ts;
  };
  std::vector<Event> events(int n);

 private:
  std::string expr(int depth, int self_index);
  std::string operand(int self_index);
  std::string cell_before(int self_index);
  std::string range_before(int self_index);
  std::mt19937_64 rng_;
  std::vector<int> window_cells_;
  std::vector<int> spans_;
  Timestamp ts_ = 0;
};

/// Recomputes every cell from the tuple history alone: bound cells from the
/// last tuples, windows by brute force, formulas by recursive evaluation
/// without any ordering or dirty tracking.
class ReferenceSheet : public EvalContext {
 public:
  explicit ReferenceSheet(const SheetModel& model) : model_(model) {}
  void push(const std::string& stream, const std::vector<Value>& tuple, Timestamp ts);

  Value cell(CellAddr addr) const override;
  void visit_range(const RangeAddr& range, const RangeVisitor& visit) const override;

 private:
  const SheetModel& model_;
  std::map<std::string, std::vector<std::pair<Timestamp, std::vector<Value>>>> history_;
  mutable std::map<CellAddr, Value> memo_;
  mutable std::vector<CellAddr> active_;
};

}  // namespace sstest
