// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/model.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include <json.hpp>

#include "sheetstream/partition.hpp"

namespace sheetstream {

using json = nlohmann::json;

namespace {

class DocReader {
 public:
  std::vector<Diagnostic> diags;

  void error(const std::string& where, const std::string& msg) { diags.push_back({where, msg}); }

  // Reports unknown and missing keys; returns false if `j` is not an object.
  bool object(const json& j, const std::string& where, std::initializer_list<std::string_view> required,
              std::initializer_list<std::string_view> optional) {
    if (!j.is_object()) {
      error(where, "expected an object");
      return false;
    }
    for (const auto& [key, _] : j.items()) {
      bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                   std::find(optional.begin(), optional.end(), key) != optional.end();
      if (!known) error(where, "unknown key '" + key + "'");
    }
    for (auto key : required)
      if (!j.contains(key)) error(where, "missing key '" + std::string(key) + "'");
    return true;
  }

  std::optional<std::string> string(const json& j, std::string_view key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return std::nullopt;
    if (!it->is_string()) {
      error(where, "'" + std::string(key) + "' must be a string");
      return std::nullopt;
    }
    return it->get<std::string>();
  }

  const json* array(const json& j, std::string_view key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return nullptr;
    if (!it->is_array()) {
      error(where, "'" + std::string(key) + "' must be an array");
      return nullptr;
    }
    return &*it;
  }

  std::optional<CellAddr> addr(const json& j, std::string_view key, const std::string& where) {
    auto s = string(j, key, where);
    if (!s) return std::nullopt;
    try {
      return parse_addr(*s);
    } catch (const FormulaError& e) {
      error(where, e.what());
      return std::nullopt;
    }
  }
};

std::string at(std::string_view section, std::size_t i) {
  return std::string(section) + "[" + std::to_string(i) + "]";
}

std::string at(std::string_view section, std::size_t i, std::string_view name) {
  return at(section, i) + " (" + std::string(name) + ")";
}

std::optional<AttrType> parse_attr_type(std::string_view s) {
  if (s == "number") return AttrType::Number;
  if (s == "text") return AttrType::Text;
  if (s == "timestamp") return AttrType::Timestamp;
  return std::nullopt;
}

void read_streams(DocReader& r, const json& arr, SheetModel& model) {
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& js = arr[i];
    std::string where = at("streams", i);
    if (!r.object(js, where, {"name", "attrs"}, {"ts_attr", "select", "partition_by"})) continue;
    StreamDecl s;
    if (auto name = r.string(js, "name", where)) {
      s.name = *name;
      where = at("streams", i, s.name);
    }
    if (const json* attrs = r.array(js, "attrs", where)) {
      for (std::size_t k = 0; k < attrs->size(); ++k) {
        const json& ja = (*attrs)[k];
        std::string awhere = where + ".attrs[" + std::to_string(k) + "]";
        if (!r.object(ja, awhere, {"name", "type"}, {})) continue;
        Attr a;
        if (auto n = r.string(ja, "name", awhere)) a.name = *n;
        if (auto t = r.string(ja, "type", awhere)) {
          if (auto parsed = parse_attr_type(*t))
            a.type = *parsed;
          else
            r.error(awhere, "attribute type must be number, text, or timestamp (got '" + *t + "')");
        }
        s.attrs.push_back(std::move(a));
      }
    }
    s.ts_attr = r.string(js, "ts_attr", where);
    s.partition_by = r.string(js, "partition_by", where);
    if (auto it = js.find("select"); it != js.end()) {
      std::string swhere = where + ".select";
      if (r.object(*it, swhere, {"attr", "value"}, {})) {
        SelectClause sel;
        if (auto a = r.string(*it, "attr", swhere)) sel.attr = *a;
        if (auto v = it->find("value"); v != it->end()) {
          if (v->is_string())
            sel.value = v->get<std::string>();
          else if (v->is_number())
            sel.value = v->get<double>();
          else
            r.error(swhere, "'value' must be a string or number");
        }
        s.select = std::move(sel);
      }
    }
    model.streams.push_back(std::move(s));
  }
}

void read_bindings(DocReader& r, const json& arr, SheetModel& model) {
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& jb = arr[i];
    std::string where = at("bindings", i);
    if (!r.object(jb, where, {"stream", "kind", "region", "projection"}, {"rows"})) continue;
    Binding b;
    if (auto s = r.string(jb, "stream", where)) b.stream = *s;
    if (auto k = r.string(jb, "kind", where)) {
      if (*k == "scroll")
        b.kind = BindingKind::Scroll;
      else if (*k == "latest")
        b.kind = BindingKind::Latest;
      else
        r.error(where, "kind must be 'scroll' or 'latest' (got '" + *k + "')");
    }
    if (auto reg = r.string(jb, "region", where)) {
      try {
        b.region = parse_range(*reg);
      } catch (const FormulaError& e) {
        r.error(where, std::string("region: ") + e.what());
      }
    }
    if (auto it = jb.find("rows"); it != jb.end()) {
      if (b.kind != BindingKind::Scroll)
        r.error(where, "'rows' is only allowed on scroll bindings");
      else if (!it->is_number_integer() || it->get<std::int64_t>() < 1 ||
               it->get<std::int64_t>() > kMaxRow)
        r.error(where, "'rows' must be a positive integer");
      else
        b.rows = static_cast<int>(it->get<std::int64_t>());
    } else if (b.kind == BindingKind::Scroll && jb.contains("kind")) {
      r.error(where, "scroll binding requires 'rows'");
    }
    if (const json* proj = r.array(jb, "projection", where)) {
      for (const auto& p : *proj) {
        if (p.is_string())
          b.projection.push_back(p.get<std::string>());
        else
          r.error(where, "projection entries must be strings");
      }
    }
    model.bindings.push_back(std::move(b));
  }
}

void read_cells(DocReader& r, const json& arr, SheetModel& model) {
  std::set<CellAddr> seen;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& jc = arr[i];
    std::string where = at("cells", i);
    if (!r.object(jc, where, {"addr", "formula"}, {})) continue;
    auto addr = r.addr(jc, "addr", where);
    auto formula = r.string(jc, "formula", where);
    if (!addr || !formula) continue;
    where = at("cells", i, format_addr(*addr));
    if (!seen.insert(*addr).second) {
      r.error(where, "duplicate cell definition for " + format_addr(*addr));
      continue;
    }
    try {
      model.cells.push_back(CellDef{*addr, *formula, parse_formula(*formula)});
    } catch (const FormulaError& e) {
      r.error(where + " offset " + std::to_string(e.offset()), e.what());
    }
  }
}

void read_exports(DocReader& r, const json& arr, SheetModel& model) {
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& je = arr[i];
    std::string where = at("exports", i);
    if (!r.object(je, where, {"addr", "name"}, {})) continue;
    auto addr = r.addr(je, "addr", where);
    auto name = r.string(je, "name", where);
    if (addr && name) model.exports.push_back(ExportDecl{*addr, *name});
  }
}

bool literal_matches(const Literal& lit, AttrType t) {
  return std::holds_alternative<std::string>(lit) ? t == AttrType::Text : t != AttrType::Text;
}

bool has_window_call(const Expr& e) {
  if (e.kind == ExprKind::Call && e.fn == Function::Window) return true;
  return std::any_of(e.args.begin(), e.args.end(), has_window_call);
}

bool has_stream_attr(const Expr& e) {
  if (e.kind == ExprKind::StreamAttr) return true;
  return std::any_of(e.args.begin(), e.args.end(), has_stream_attr);
}

bool is_window_root(const Expr& e) { return e.kind == ExprKind::Call && e.fn == Function::Window; }

void validate_streams(const SheetModel& m, std::vector<Diagnostic>& out) {
  if (m.streams.empty()) out.push_back({"streams", "model declares no streams"});
  std::set<std::string> names;
  for (std::size_t i = 0; i < m.streams.size(); ++i) {
    const StreamDecl& s = m.streams[i];
    std::string where = at("streams", i, s.name);
    if (!is_identifier(s.name)) out.push_back({where, "stream name must be an identifier"});
    if (!names.insert(s.name).second) out.push_back({where, "duplicate stream name '" + s.name + "'"});
    if (s.attrs.empty()) out.push_back({where, "stream declares no attributes"});
    std::set<std::string> attr_names;
    for (const auto& a : s.attrs) {
      if (!is_identifier(a.name))
        out.push_back({where, "attribute name '" + a.name + "' must be an identifier"});
      if (!attr_names.insert(a.name).second)
        out.push_back({where, "duplicate attribute name '" + a.name + "'"});
    }
    if (s.ts_attr) {
      int k = s.attr_index(*s.ts_attr);
      if (k < 0)
        out.push_back({where, "ts_attr '" + *s.ts_attr + "' is not a declared attribute"});
      else if (s.attrs[static_cast<std::size_t>(k)].type != AttrType::Timestamp)
        out.push_back({where, "ts_attr '" + *s.ts_attr + "' must have type timestamp"});
    } else if (m.streams.size() > 1) {
      out.push_back({where, "stream lacks ts_attr; only a single-stream model may omit it"});
    }
    if (s.select) {
      int k = s.attr_index(s.select->attr);
      if (k < 0)
        out.push_back({where, "select attribute '" + s.select->attr + "' is not declared"});
      else if (!literal_matches(s.select->value, s.attrs[static_cast<std::size_t>(k)].type))
        out.push_back({where, "select value type does not match attribute '" + s.select->attr + "'"});
    }
    if (s.partition_by && s.attr_index(*s.partition_by) < 0)
      out.push_back({where, "partition_by attribute '" + *s.partition_by + "' is not declared"});
    if (s.select && s.partition_by)
      out.push_back({where, "a stream may carry select or partition_by, not both"});
  }
}

void validate_bindings(const SheetModel& m, std::vector<Diagnostic>& out) {
  for (std::size_t i = 0; i < m.bindings.size(); ++i) {
    const Binding& b = m.bindings[i];
    std::string where = at("bindings", i, format_range(b.region));
    const StreamDecl* s = m.find_stream(b.stream);
    if (s == nullptr) {
      out.push_back({where, "unknown stream '" + b.stream + "'"});
    } else {
      for (const auto& p : b.projection)
        if (s->attr_index(p) < 0)
          out.push_back({where, "projection attribute '" + p + "' is not declared on stream '" + b.stream + "'"});
    }
    if (b.projection.empty()) out.push_back({where, "projection is empty"});
    if (b.region.width() != static_cast<std::int32_t>(b.projection.size()))
      out.push_back({where, "region width " + std::to_string(b.region.width()) +
                                " does not match projection length " + std::to_string(b.projection.size())});
    if (b.kind == BindingKind::Scroll) {
      if (b.rows < 1) out.push_back({where, "scroll rows must be positive"});
      else if (b.region.height() != b.rows)
        out.push_back({where, "scroll region height " + std::to_string(b.region.height()) +
                                  " does not match rows " + std::to_string(b.rows)});
    } else if (b.region.height() != 1) {
      out.push_back({where, "latest binding region must be one row high"});
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (m.bindings[j].region.intersects(b.region))
        out.push_back({where, "overlapping bindings: " + format_range(m.bindings[j].region) + " (bindings[" +
                                  std::to_string(j) + "]) and " + format_range(b.region)});
    }
  }
}

void validate_cells(const SheetModel& m, std::vector<Diagnostic>& out) {
  std::set<CellAddr> seen;
  for (std::size_t i = 0; i < m.cells.size(); ++i) {
    const CellDef& c = m.cells[i];
    std::string where = at("cells", i, format_addr(c.addr));
    if (!seen.insert(c.addr).second) out.push_back({where, "duplicate cell definition"});
    if (m.binding_at(c.addr) >= 0) out.push_back({where, "cell is stream-bound"});
    const Expr& e = c.ast;
    if (is_window_root(e)) {
      const Expr& src = e.args.size() == 2 ? e.args[0] : e;
      if (e.args.size() != 2 || src.kind != ExprKind::StreamAttr) {
        out.push_back({where, "WINDOW requires (stream.attr, span_ms)"});
        continue;
      }
      const Expr& span = e.args[1];
      if (span.kind != ExprKind::Number || span.number < 1 || span.number != static_cast<double>(static_cast<std::int64_t>(span.number)))
        out.push_back({where, "WINDOW span must be a positive integer literal"});
      if (has_window_call(span) || has_stream_attr(span))
        out.push_back({where, "WINDOW span must be a literal"});
      const StreamDecl* s = m.find_stream(src.stream);
      if (s == nullptr) {
        out.push_back({where, "WINDOW references unknown stream '" + src.stream + "'"});
        continue;
      }
      int k = s->attr_index(src.attr);
      if (k < 0)
        out.push_back({where, "WINDOW references unknown attribute '" + src.stream + "." + src.attr + "'"});
      else if (s->attrs[static_cast<std::size_t>(k)].type != AttrType::Number)
        out.push_back({where, "WINDOW attribute '" + src.stream + "." + src.attr + "' must be a number"});
      if (!s->ts_attr) out.push_back({where, "WINDOW stream '" + src.stream + "' must declare ts_attr"});
    } else if (has_window_call(e)) {
      out.push_back({where, "WINDOW must be the entire formula of its cell"});
    } else if (has_stream_attr(e)) {
      out.push_back({where, "stream attribute references are only allowed inside WINDOW"});
    }
  }
}

void validate_exports(const SheetModel& m, std::vector<Diagnostic>& out) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < m.exports.size(); ++i) {
    const ExportDecl& x = m.exports[i];
    std::string where = at("exports", i, x.name);
    if (!is_identifier(x.name) || x.name.starts_with("__"))
      out.push_back({where, "export name must be an identifier not starting with '__'"});
    if (!names.insert(x.name).second) out.push_back({where, "duplicate export name '" + x.name + "'"});
    const CellDef* c = m.find_cell(x.addr);
    if (c == nullptr && m.binding_at(x.addr) < 0)
      out.push_back({where, format_addr(x.addr) + " is neither a formula cell nor a bound cell"});
    if (c != nullptr && is_window_root(c->ast))
      out.push_back({where, format_addr(x.addr) + " holds a WINDOW; export an aggregate of it instead"});
  }
}

}  // namespace

std::string_view attr_type_name(AttrType t) {
  switch (t) {
    case AttrType::Number: return "number";
    case AttrType::Text: return "text";
    case AttrType::Timestamp: return "timestamp";
  }
  return "number";
}

std::string format_literal(const Literal& lit) {
  if (const auto* s = std::get_if<std::string>(&lit)) return *s;
  return format_number(std::get<double>(lit));
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

int StreamDecl::attr_index(std::string_view attr) const {
  for (std::size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i].name == attr) return static_cast<int>(i);
  return -1;
}

bool SheetModel::partitioned() const {
  return std::any_of(streams.begin(), streams.end(), [](const StreamDecl& s) { return s.partition_by.has_value(); });
}

const StreamDecl* SheetModel::find_stream(std::string_view name) const {
  int i = stream_index(name);
  return i < 0 ? nullptr : &streams[static_cast<std::size_t>(i)];
}

int SheetModel::stream_index(std::string_view name) const {
  for (std::size_t i = 0; i < streams.size(); ++i)
    if (streams[i].name == name) return static_cast<int>(i);
  return -1;
}

const CellDef* SheetModel::find_cell(CellAddr addr) const {
  for (const auto& c : cells)
    if (c.addr == addr) return &c;
  return nullptr;
}

int SheetModel::binding_at(CellAddr addr) const {
  for (std::size_t i = 0; i < bindings.size(); ++i)
    if (bindings[i].region.contains(addr)) return static_cast<int>(i);
  return -1;
}

SheetModel parse_model_document(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ModelError(std::vector<Diagnostic>{{"byte " + std::to_string(e.byte), "invalid JSON document"}});
  }
  DocReader r;
  SheetModel model;
  if (r.object(doc, "document", {"streams", "bindings", "cells", "exports"}, {})) {
    if (const json* a = r.array(doc, "streams", "document")) read_streams(r, *a, model);
    if (const json* a = r.array(doc, "bindings", "document")) read_bindings(r, *a, model);
    if (const json* a = r.array(doc, "cells", "document")) read_cells(r, *a, model);
    if (const json* a = r.array(doc, "exports", "document")) read_exports(r, *a, model);
  }
  if (!r.diags.empty()) throw ModelError(std::move(r.diags));
  return model;
}

std::vector<Diagnostic> validate(const SheetModel& model) {
  std::vector<Diagnostic> out;
  validate_streams(model, out);
  validate_bindings(model, out);
  validate_cells(model, out);
  validate_exports(model, out);
  auto keys = check_keys(model);
  out.insert(out.end(), keys.begin(), keys.end());
  return out;
}

SheetModel load_model(std::string_view document) {
  SheetModel model = parse_model_document(document);
  auto diags = validate(model);
  if (!diags.empty()) throw ModelError(std::move(diags));
  return model;
}

std::string to_json(const SheetModel& model) {
  using ojson = nlohmann::ordered_json;
  ojson doc;
  doc["streams"] = ojson::array();
  for (const auto& s : model.streams) {
    ojson js;
    js["name"] = s.name;
    js["attrs"] = ojson::array();
    for (const auto& a : s.attrs) js["attrs"].push_back({{"name", a.name}, {"type", attr_type_name(a.type)}});
    if (s.ts_attr) js["ts_attr"] = *s.ts_attr;
    if (s.select) {
      ojson v = std::holds_alternative<std::string>(s.select->value)
                    ? ojson(std::get<std::string>(s.select->value))
                    : ojson(std::get<double>(s.select->value));
      js["select"] = {{"attr", s.select->attr}, {"value", v}};
    }
    if (s.partition_by) js["partition_by"] = *s.partition_by;
    doc["streams"].push_back(std::move(js));
  }
  doc["bindings"] = ojson::array();
  for (const auto& b : model.bindings) {
    ojson jb;
    jb["stream"] = b.stream;
    jb["kind"] = b.kind == BindingKind::Scroll ? "scroll" : "latest";
    jb["region"] = format_range(b.region);
    if (b.kind == BindingKind::Scroll) jb["rows"] = b.rows;
    jb["projection"] = b.projection;
    doc["bindings"].push_back(std::move(jb));
  }
  doc["cells"] = ojson::array();
  for (const auto& c : model.cells) doc["cells"].push_back({{"addr", format_addr(c.addr)}, {"formula", c.source}});
  doc["exports"] = ojson::array();
  for (const auto& x : model.exports) doc["exports"].push_back({{"addr", format_addr(x.addr)}, {"name", x.name}});
  return doc.dump(2) + "\n";
}

SheetModel with_formula(const SheetModel& model, CellAddr addr, std::string_view text) {
  if (model.binding_at(addr) >= 0) throw ModelError(std::vector<Diagnostic>{{format_addr(addr), "cell is stream-bound"}});
  SheetModel out = model;
  auto it = std::find_if(out.cells.begin(), out.cells.end(), [&](const CellDef& c) { return c.addr == addr; });
  bool blank = std::all_of(text.begin(), text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  if (blank) {
    if (it != out.cells.end()) out.cells.erase(it);
    return out;
  }
  Expr ast;
  try {
    ast = parse_formula(text);
  } catch (const FormulaError& e) {
    throw ModelError(std::vector<Diagnostic>{{format_addr(addr) + " offset " + std::to_string(e.offset()), e.what()}});
  }
  if (it != out.cells.end()) {
    it->source = std::string(text);
    it->ast = std::move(ast);
  } else {
    out.cells.push_back(CellDef{addr, std::string(text), std::move(ast)});
  }
  return out;
}

SheetModel with_export(const SheetModel& model, CellAddr addr, std::string_view name, bool on) {
  SheetModel out = model;
  auto it = std::find_if(out.exports.begin(), out.exports.end(), [&](const ExportDecl& x) { return x.addr == addr; });
  if (!on) {
    if (it == out.exports.end()) throw ModelError(std::vector<Diagnostic>{{format_addr(addr), "cell is not exported"}});
    out.exports.erase(it);
    return out;
  }
  if (it != out.exports.end())
    it->name = std::string(name);
  else
    out.exports.push_back(ExportDecl{addr, std::string(name)});
  return out;
}

}  // namespace sheetstream
