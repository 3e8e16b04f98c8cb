// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sheetstream/diagnostic.hpp"
#include "sheetstream/formula.hpp"

namespace sheetstream {

enum class AttrType { Number, Text, Timestamp };

std::string_view attr_type_name(AttrType t);

/// A number (compared by value) or text (case-sensitive). Used for SELECT
/// literals and partition keys.
using Literal = std::variant<double, std::string>;

std::string format_literal(const Literal& lit);

struct Attr {
  std::string name;
  AttrType type = AttrType::Number;
  friend bool operator==(const Attr&, const Attr&) = default;
};

struct SelectClause {
  std::string attr;
  Literal value;
  friend bool operator==(const SelectClause&, const SelectClause&) = default;
};

struct StreamDecl {
  std::string name;
  std::vector<Attr> attrs;
  std::optional<std::string> ts_attr;
  std::optional<SelectClause> select;
  std::optional<std::string> partition_by;

  /// -1 when absent.
  int attr_index(std::string_view attr) const;
  friend bool operator==(const StreamDecl&, const StreamDecl&) = default;
};

enum class BindingKind { Scroll, Latest };

struct Binding {
  std::string stream;
  BindingKind kind = BindingKind::Latest;
  RangeAddr region;
  int rows = 1;  // Scroll only; 1 for Latest
  std::vector<std::string> projection;
  friend bool operator==(const Binding&, const Binding&) = default;
};

struct CellDef {
  CellAddr addr;
  std::string source;
  Expr ast;
  friend bool operator==(const CellDef&, const CellDef&) = default;
};

struct ExportDecl {
  CellAddr addr;
  std::string name;
  friend bool operator==(const ExportDecl&, const ExportDecl&) = default;
};

struct SheetModel {
  std::vector<StreamDecl> streams;
  std::vector<Binding> bindings;
  std::vector<CellDef> cells;
  std::vector<ExportDecl> exports;

  bool partitioned() const;
  const StreamDecl* find_stream(std::string_view name) const;
  int stream_index(std::string_view name) const;
  const CellDef* find_cell(CellAddr addr) const;
  /// Index of the binding whose region contains addr, or -1.
  int binding_at(CellAddr addr) const;

  friend bool operator==(const SheetModel&, const SheetModel&) = default;
};

/// Structural parse of a model document: JSON syntax, strict keys, field
/// types, addresses, and formula syntax. Does not check cross references.
/// Throws ModelError with one diagnostic per problem found.
SheetModel parse_model_document(std::string_view document);

/// All model invariants: names, types, bindings, references, exports, and
/// partition key agreement. Empty iff the model is well formed.
std::vector<Diagnostic> validate(const SheetModel& model);

/// parse_model_document followed by validate; a returned model is always
/// valid. Dependency cycles are left to the engine.
SheetModel load_model(std::string_view document);

std::string to_json(const SheetModel& model);

/// Copy of `model` with the formula at addr replaced (empty text removes the
/// cell). Throws ModelError on parse errors or stream-bound cells.
SheetModel with_formula(const SheetModel& model, CellAddr addr, std::string_view text);

/// Copy with the export for addr added (on) or removed (off).
SheetModel with_export(const SheetModel& model, CellAddr addr, std::string_view name, bool on);

bool is_identifier(std::string_view s);

}  // namespace sheetstream
