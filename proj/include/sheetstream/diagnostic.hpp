// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sheetstream {

struct Diagnostic {
  std::string where;  // e.g. "cells[2] (G3)", "byte 17", "streams[1] (quotes)"
  std::string message;

  std::string to_string() const { return where.empty() ? message : where + ": " + message; }
  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

/// Raised when a model cannot be loaded, built, or edited.
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(std::vector<Diagnostic> diagnostics)
      : std::runtime_error(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  static std::string join(const std::vector<Diagnostic>& ds) {
    std::string out;
    for (const auto& d : ds) {
      if (!out.empty()) out += "\n";
      out += d.to_string();
    }
    return out;
  }
  std::vector<Diagnostic> diagnostics_;
};

}  // namespace sheetstream
