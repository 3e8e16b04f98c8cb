// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace sheetstream {

namespace {

struct RangeHash {
  std::size_t operator()(const RangeAddr& r) const noexcept {
    std::hash<CellAddr> h;
    return h(r.top_left) * 31u ^ h(r.bottom_right);
  }
};

constexpr int kNoWindow = -1;

}  // namespace

struct Engine::Plan {
  struct Formula {
    CellAddr addr;
    std::size_t slot = 0;
    const Expr* ast = nullptr;
    int window = kNoWindow;  // ordinal into the instance's window stores
  };
  struct BoundRegion {
    std::size_t stream = 0;
    BindingKind kind = BindingKind::Latest;
    int rows = 1;
    int width = 1;
    std::vector<std::size_t> slots;  // row-major
    std::vector<std::size_t> attrs;  // projection as attr indices
  };
  struct WindowSource {
    std::size_t formula = 0;
    std::size_t stream = 0;
    std::size_t attr = 0;
    WindowSpec spec;
  };
  struct StreamPlan {
    std::vector<std::size_t> bindings;
    std::vector<std::size_t> windows;
    std::vector<std::size_t> affected;  // formula indices in evaluation order
    int ts_attr = -1;
  };

  std::shared_ptr<const SheetModel> model;
  std::vector<CellAddr> slot_addr;
  std::unordered_map<CellAddr, std::size_t> slot_of;
  std::vector<std::size_t> sorted_slots;  // row-major
  std::vector<Formula> formulas;
  std::vector<std::size_t> order;  // formula indices, dependency order
  std::vector<CellAddr> order_addrs;
  std::vector<BoundRegion> regions;
  std::vector<WindowSource> windows;
  std::vector<StreamPlan> streams;
  std::unordered_map<RangeAddr, std::vector<std::pair<CellAddr, std::size_t>>, RangeHash> ranges;
  std::vector<bool> exported;  // per slot
  std::vector<std::size_t> export_slots;
  std::unordered_map<CellAddr, std::size_t> window_of_addr;

  std::optional<std::size_t> slot(CellAddr a) const {
    auto it = slot_of.find(a);
    if (it == slot_of.end()) return std::nullopt;
    return it->second;
  }
};

namespace {

using Plan = Engine::Plan;

std::vector<std::pair<CellAddr, std::size_t>> cells_in_range(const Plan& plan, const RangeAddr& r) {
  std::vector<std::pair<CellAddr, std::size_t>> out;
  for (std::size_t s : plan.sorted_slots)
    if (r.contains(plan.slot_addr[s])) out.emplace_back(plan.slot_addr[s], s);
  return out;
}

std::string cycle_text(const std::vector<CellAddr>& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += " → ";
    out += format_addr(path[i]);
  }
  return out;
}

std::shared_ptr<const Plan> make_plan(std::shared_ptr<const SheetModel> model_ptr) {
  const SheetModel& model = *model_ptr;
  auto plan = std::make_shared<Plan>();
  plan->model = model_ptr;
  plan->streams.resize(model.streams.size());
  for (std::size_t s = 0; s < model.streams.size(); ++s) {
    const auto& decl = model.streams[s];
    if (decl.ts_attr) plan->streams[s].ts_attr = decl.attr_index(*decl.ts_attr);
  }

  auto add_slot = [&](CellAddr a) {
    std::size_t s = plan->slot_addr.size();
    plan->slot_addr.push_back(a);
    plan->slot_of.emplace(a, s);
    return s;
  };

  for (std::size_t b = 0; b < model.bindings.size(); ++b) {
    const Binding& binding = model.bindings[b];
    Plan::BoundRegion region;
    region.stream = static_cast<std::size_t>(model.stream_index(binding.stream));
    region.kind = binding.kind;
    region.rows = binding.region.height();
    region.width = binding.region.width();
    const StreamDecl& decl = model.streams[region.stream];
    for (const auto& p : binding.projection) region.attrs.push_back(static_cast<std::size_t>(decl.attr_index(p)));
    for (std::int32_t r = binding.region.top_left.row; r <= binding.region.bottom_right.row; ++r)
      for (std::int32_t c = binding.region.top_left.col; c <= binding.region.bottom_right.col; ++c)
        region.slots.push_back(add_slot(CellAddr{c, r}));
    plan->streams[region.stream].bindings.push_back(plan->regions.size());
    plan->regions.push_back(std::move(region));
  }

  std::unordered_map<CellAddr, std::size_t> formula_of;
  for (const CellDef& def : model.cells) {
    Plan::Formula f;
    f.addr = def.addr;
    f.slot = add_slot(def.addr);
    f.ast = &def.ast;
    formula_of.emplace(def.addr, plan->formulas.size());
    if (def.ast.kind == ExprKind::Call && def.ast.fn == Function::Window) {
      const Expr& src = def.ast.args[0];
      Plan::WindowSource w;
      w.formula = plan->formulas.size();
      w.stream = static_cast<std::size_t>(model.stream_index(src.stream));
      w.attr = static_cast<std::size_t>(model.streams[w.stream].attr_index(src.attr));
      w.spec = WindowSpec{src.stream, src.attr, static_cast<std::int64_t>(def.ast.args[1].number)};
      f.window = static_cast<int>(plan->windows.size());
      plan->streams[w.stream].windows.push_back(plan->windows.size());
      plan->window_of_addr.emplace(def.addr, plan->windows.size());
      plan->windows.push_back(std::move(w));
    }
    plan->formulas.push_back(f);
  }

  plan->sorted_slots.resize(plan->slot_addr.size());
  for (std::size_t i = 0; i < plan->sorted_slots.size(); ++i) plan->sorted_slots[i] = i;
  std::sort(plan->sorted_slots.begin(), plan->sorted_slots.end(),
            [&](std::size_t a, std::size_t b) { return plan->slot_addr[a] < plan->slot_addr[b]; });

  // Static dependency graph.
  const std::size_t n = plan->formulas.size();
  std::vector<std::vector<std::size_t>> deps(n);        // formula -> formulas it reads
  std::vector<std::vector<std::size_t>> dependents(n);  // reverse
  std::vector<std::set<std::size_t>> input_streams(n);
  for (std::size_t f = 0; f < n; ++f) {
    std::set<std::size_t> dep_set;
    for (const Reference& ref : references(*plan->formulas[f].ast)) {
      if (const auto* a = std::get_if<CellAddr>(&ref)) {
        if (auto it = formula_of.find(*a); it != formula_of.end()) dep_set.insert(it->second);
        if (int b = model.binding_at(*a); b >= 0)
          input_streams[f].insert(plan->regions[static_cast<std::size_t>(b)].stream);
      } else if (const auto* r = std::get_if<RangeAddr>(&ref)) {
        for (const auto& [addr, g] : formula_of)
          if (r->contains(addr)) dep_set.insert(g);
        for (std::size_t b = 0; b < model.bindings.size(); ++b)
          if (model.bindings[b].region.intersects(*r)) input_streams[f].insert(plan->regions[b].stream);
        if (!plan->ranges.contains(*r)) plan->ranges.emplace(*r, cells_in_range(*plan, *r));
      }
    }
    deps[f].assign(dep_set.begin(), dep_set.end());
    for (std::size_t d : deps[f]) dependents[d].push_back(f);
  }

  // Kahn's algorithm; ties broken by address so the order is deterministic.
  std::vector<std::size_t> indegree(n);
  auto by_addr = [&](std::size_t a, std::size_t b) { return plan->formulas[a].addr < plan->formulas[b].addr; };
  std::set<std::size_t, decltype(by_addr)> ready(by_addr);
  for (std::size_t f = 0; f < n; ++f) {
    indegree[f] = deps[f].size();
    if (indegree[f] == 0) ready.insert(f);
  }
  while (!ready.empty()) {
    std::size_t f = *ready.begin();
    ready.erase(ready.begin());
    plan->order.push_back(f);
    for (std::size_t g : dependents[f])
      if (--indegree[g] == 0) ready.insert(g);
  }
  if (plan->order.size() != n) {
    // Every leftover formula reads another leftover one, so walking those
    // reads from the smallest leftover address must revisit a cell.
    std::vector<std::size_t> leftover;
    for (std::size_t f = 0; f < n; ++f)
      if (indegree[f] > 0) leftover.push_back(f);
    std::sort(leftover.begin(), leftover.end(), by_addr);
    std::vector<std::size_t> path{leftover.front()};
    std::map<std::size_t, std::size_t> seen{{leftover.front(), 0}};
    for (;;) {
      std::size_t cur = path.back();
      std::size_t next = n;
      for (std::size_t d : deps[cur])
        if (indegree[d] > 0 && (next == n || by_addr(d, next))) next = d;
      if (auto it = seen.find(next); it != seen.end()) {
        std::vector<CellAddr> cycle;
        for (std::size_t i = it->second; i < path.size(); ++i) cycle.push_back(plan->formulas[path[i]].addr);
        cycle.push_back(plan->formulas[next].addr);
        throw ModelError(std::vector<Diagnostic>{{format_addr(cycle.front()), "dependency cycle: " + cycle_text(cycle)}});
      }
      seen.emplace(next, path.size());
      path.push_back(next);
    }
  }
  std::vector<std::size_t> position(n);
  for (std::size_t i = 0; i < n; ++i) {
    position[plan->order[i]] = i;
    plan->order_addrs.push_back(plan->formulas[plan->order[i]].addr);
  }

  // Formulas reachable from each stream's bindings and windows.
  for (std::size_t s = 0; s < plan->streams.size(); ++s) {
    std::vector<bool> hit(n, false);
    std::vector<std::size_t> stack;
    for (std::size_t f = 0; f < n; ++f)
      if (input_streams[f].contains(s)) stack.push_back(f);
    for (std::size_t w : plan->streams[s].windows) stack.push_back(plan->windows[w].formula);
    while (!stack.empty()) {
      std::size_t f = stack.back();
      stack.pop_back();
      if (hit[f]) continue;
      hit[f] = true;
      for (std::size_t g : dependents[f]) stack.push_back(g);
    }
    auto& affected = plan->streams[s].affected;
    for (std::size_t f = 0; f < n; ++f)
      if (hit[f]) affected.push_back(f);
    std::sort(affected.begin(), affected.end(), [&](std::size_t a, std::size_t b) { return position[a] < position[b]; });
  }

  plan->exported.assign(plan->slot_addr.size(), false);
  for (const auto& x : model.exports) {
    std::size_t s = plan->slot_of.at(x.addr);
    plan->exported[s] = true;
    plan->export_slots.push_back(s);
  }
  return plan;
}

}  // namespace

class Engine::Context : public EvalContext {
 public:
  Context(const Plan& plan, const std::vector<Value>& values) : plan_(plan), values_(values) {}

  Value cell(CellAddr addr) const override {
    auto s = plan_.slot(addr);
    return s ? values_[*s] : Value::blank();
  }

  void visit_range(const RangeAddr& range, const RangeVisitor& visit) const override {
    auto it = plan_.ranges.find(range);
    if (it != plan_.ranges.end()) {
      for (const auto& [addr, slot] : it->second)
        if (!values_[slot].is_blank()) visit(addr, values_[slot]);
      return;
    }
    for (const auto& [addr, slot] : cells_in_range(plan_, range))
      if (!values_[slot].is_blank()) visit(addr, values_[slot]);
  }

 private:
  const Plan& plan_;
  const std::vector<Value>& values_;
};

Engine Engine::build(std::shared_ptr<const SheetModel> model) {
  if (auto diags = validate(*model); !diags.empty()) throw ModelError(std::move(diags));
  Engine e;
  e.plan_ = make_plan(std::move(model));
  e.values_.assign(e.plan_->slot_addr.size(), Value::blank());
  for (const auto& w : e.plan_->windows) e.windows_.emplace_back(w.spec);
  e.last_ts_.assign(e.plan_->streams.size(), std::nullopt);
  e.evaluate_all();
  return e;
}

Value Engine::evaluate_slot(std::size_t formula) const {
  const auto& f = plan_->formulas[formula];
  if (f.window != kNoWindow) {
    auto id = static_cast<std::uint32_t>(f.window);
    return Value::window(WindowRef{id, windows_[id].summary()});
  }
  return evaluate_formula(*f.ast, Context(*plan_, values_));
}

void Engine::evaluate_all() {
  for (std::size_t f : plan_->order) values_[plan_->formulas[f].slot] = evaluate_slot(f);
}

ChangeSet Engine::apply_tuple(std::string_view stream, std::span<const Value> tuple, Timestamp ts) {
  const SheetModel& model = *plan_->model;
  int si = model.stream_index(stream);
  if (si < 0) throw TupleError("unknown stream '" + std::string(stream) + "'");
  const auto s = static_cast<std::size_t>(si);
  const StreamDecl& decl = model.streams[s];
  if (tuple.size() != decl.attrs.size())
    throw TupleError("stream '" + decl.name + "' expects " + std::to_string(decl.attrs.size()) +
                     " values, got " + std::to_string(tuple.size()));
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    const Attr& a = decl.attrs[i];
    const Value& v = tuple[i];
    bool ok = a.type == AttrType::Text ? v.is_text() : v.is_number();
    if (ok && a.type == AttrType::Timestamp)
      ok = v.as_number() >= 0 && v.as_number() == std::floor(v.as_number());
    if (!ok)
      throw TupleError("attribute '" + decl.name + "." + a.name + "' expects " +
                       std::string(attr_type_name(a.type)) + ", got " + describe(v));
  }
  const auto& sp = plan_->streams[s];
  if (sp.ts_attr >= 0 && tuple[static_cast<std::size_t>(sp.ts_attr)].as_number() != static_cast<double>(ts))
    throw TupleError("timestamp argument does not match attribute '" + *decl.ts_attr + "'");
  if (ts < 0) throw TupleError("negative timestamp");
  if (last_ts_[s] && ts < *last_ts_[s])
    throw TupleError("out-of-order timestamp on stream '" + decl.name + "': " + std::to_string(ts) + " after " +
                     std::to_string(*last_ts_[s]));

  ChangeSet cs;
  std::size_t bound = sp.affected.size();
  for (std::size_t b : sp.bindings) bound += plan_->regions[b].slots.size();
  cs.changed.reserve(bound);
  auto store = [&](std::size_t slot, Value v) {
    if (values_[slot] == v) return;
    if (plan_->exported[slot]) cs.exports_changed = true;
    cs.changed.push_back(CellChange{plan_->slot_addr[slot], std::move(values_[slot]), v});
    values_[slot] = std::move(v);
  };

  for (std::size_t b : sp.bindings) {
    const auto& region = plan_->regions[b];
    const auto width = static_cast<std::size_t>(region.width);
    const auto rows = static_cast<std::size_t>(region.rows);
    if (region.kind == BindingKind::Scroll) {
      for (std::size_t r = 0; r + 1 < rows; ++r)
        for (std::size_t c = 0; c < width; ++c)
          store(region.slots[r * width + c], values_[region.slots[(r + 1) * width + c]]);
    }
    for (std::size_t c = 0; c < width; ++c)
      store(region.slots[(rows - 1) * width + c], tuple[region.attrs[c]]);
  }
  for (std::size_t w : sp.windows) windows_[w].insert(ts, tuple[plan_->windows[w].attr].as_number());
  for (std::size_t f : sp.affected) {
    store(plan_->formulas[f].slot, evaluate_slot(f));
    ++evaluations_;
  }
  last_ts_[s] = ts;
  ++seq_;
  ++passes_;
  return cs;
}

Value Engine::read_cell(CellAddr addr) const {
  auto s = plan_->slot(addr);
  return s ? values_[*s] : Value::blank();
}

ChangeSet Engine::set_formula(CellAddr addr, std::string_view text) {
  return rebind(std::make_shared<const SheetModel>(with_formula(*plan_->model, addr, text)));
}

ChangeSet Engine::rebind(std::shared_ptr<const SheetModel> model) {
  if (auto diags = validate(*model); !diags.empty()) throw ModelError(std::move(diags));
  auto plan = make_plan(std::move(model));

  std::vector<Value> values(plan->slot_addr.size(), Value::blank());
  for (const auto& region : plan->regions)
    for (std::size_t slot : region.slots)
      values[slot] = read_cell(plan->slot_addr[slot]);

  std::vector<WindowStore> windows;
  for (std::size_t w = 0; w < plan->windows.size(); ++w) {
    const auto& src = plan->windows[w];
    CellAddr addr = plan->formulas[src.formula].addr;
    auto old = plan_->window_of_addr.find(addr);
    if (old != plan_->window_of_addr.end() && windows_[old->second].spec() == src.spec)
      windows.push_back(windows_[old->second]);
    else
      windows.emplace_back(src.spec);
  }

  std::vector<std::optional<Timestamp>> last_ts(plan->streams.size());
  for (std::size_t s = 0; s < plan->streams.size(); ++s) {
    int old = plan_->model->stream_index(plan->model->streams[s].name);
    if (old >= 0) last_ts[s] = last_ts_[static_cast<std::size_t>(old)];
  }

  std::vector<std::pair<CellAddr, Value>> before = snapshot();

  Engine next;
  next.plan_ = std::move(plan);
  next.values_ = std::move(values);
  next.windows_ = std::move(windows);
  next.last_ts_ = std::move(last_ts);
  next.evaluate_all();

  ChangeSet cs;
  std::map<CellAddr, std::pair<Value, Value>> diff;
  for (auto& [addr, v] : before) diff[addr].first = std::move(v);
  for (auto& [addr, v] : next.snapshot()) diff[addr].second = std::move(v);
  for (auto& [addr, pair] : diff) {
    if (pair.first == pair.second) continue;
    auto s = next.plan_->slot(addr);
    if (s && next.plan_->exported[*s]) cs.exports_changed = true;
    cs.changed.push_back(CellChange{addr, std::move(pair.first), std::move(pair.second)});
  }

  plan_ = std::move(next.plan_);
  values_ = std::move(next.values_);
  windows_ = std::move(next.windows_);
  last_ts_ = std::move(next.last_ts_);
  return cs;
}

Value Engine::evaluate(const Expr& expr) const { return sheetstream::evaluate(expr, Context(*plan_, values_)); }

const SheetModel& Engine::model() const { return *plan_->model; }
const std::shared_ptr<const SheetModel>& Engine::model_ptr() const { return plan_->model; }
const std::vector<CellAddr>& Engine::topo_order() const { return plan_->order_addrs; }

const WindowStore* Engine::window_at(CellAddr addr) const {
  auto it = plan_->window_of_addr.find(addr);
  return it == plan_->window_of_addr.end() ? nullptr : &windows_[it->second];
}

std::vector<std::pair<CellAddr, Value>> Engine::snapshot() const {
  std::vector<std::pair<CellAddr, Value>> out;
  out.reserve(plan_->sorted_slots.size());
  for (std::size_t s : plan_->sorted_slots) out.emplace_back(plan_->slot_addr[s], values_[s]);
  return out;
}

std::vector<Value> Engine::export_values() const {
  std::vector<Value> out;
  out.reserve(plan_->export_slots.size());
  for (std::size_t s : plan_->export_slots) out.push_back(values_[s]);
  return out;
}

}  // namespace sheetstream
