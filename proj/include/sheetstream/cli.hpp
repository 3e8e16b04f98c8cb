// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sheetstream {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // diagnostics, aborted run, bad usage
inline constexpr int kExitIo = 2;       // unreadable input, busy port

/// Entry point of the `sheetstream` tool: check, run and serve.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_check(const std::string& model_path, std::ostream& out, std::ostream& err);

}  // namespace sheetstream
