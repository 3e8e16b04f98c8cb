// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "sheetstream/engine.hpp"
#include "sheetstream/io.hpp"
#include "sheetstream/model.hpp"
#include "sheetstream/serve.hpp"

namespace sheetstream {

namespace {

struct Unreadable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Unreadable("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Unreadable("error reading '" + path + "'");
  return ss.str();
}

void print_diagnostics(const std::string& path, const std::vector<Diagnostic>& ds, std::ostream& err) {
  for (const auto& d : ds) err << path << ": " << d.to_string() << "\n";
}

// Loads and builds; prints diagnostics and returns nullptr on failure.
std::shared_ptr<const SheetModel> load_checked(const std::string& path, std::ostream& err) {
  std::string text = read_file(path);
  try {
    auto model = std::make_shared<const SheetModel>(load_model(text));
    Engine::build(model);
    return model;
  } catch (const ModelError& e) {
    print_diagnostics(path, e.diagnostics(), err);
    return nullptr;
  }
}

std::map<std::string, std::string> parse_inputs(const std::vector<std::string>& specs) {
  std::map<std::string, std::string> out;
  for (const auto& s : specs) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
      throw CLI::ValidationError("--input", "expected NAME=PATH, got '" + s + "'");
    if (!out.emplace(s.substr(0, eq), s.substr(eq + 1)).second)
      throw CLI::ValidationError("--input", "stream '" + s.substr(0, eq) + "' given twice");
  }
  return out;
}

// Missing files are I/O failures (exit 2); everything the cursor rejects
// afterwards is a data problem.
std::unique_ptr<MergedCursor> open_checked(const SheetModel& model, const std::map<std::string, std::string>& inputs) {
  for (const auto& [name, path] : inputs) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw Unreadable("cannot open input '" + path + "' for stream '" + name + "'");
  }
  return open_inputs(model, inputs);
}

struct RunOptions {
  std::string model;
  std::vector<std::string> inputs;
  std::string output;
  std::string format = "csv";
  std::size_t max_partitions = kDefaultMaxPartitions;
};

int cmd_run(const RunOptions& o, std::ostream& err) {
  auto model = load_checked(o.model, err);
  if (!model) return kExitFailure;
  auto inputs = parse_inputs(o.inputs);
  DataFormat format = *parse_data_format(o.format);
  std::unique_ptr<MergedCursor> cursor;
  try {
    cursor = open_checked(*model, inputs);
  } catch (const IoError& e) {
    err << "sheetstream: " << e.what() << "\n";
    return kExitFailure;
  }
  std::ofstream out(o.output, std::ios::binary | std::ios::trunc);
  if (!out) throw Unreadable("cannot write '" + o.output + "'");
  auto sink = make_sink(format, out);
  RunStats stats;
  try {
    stats = run(model, *cursor, *sink, RunConfig{o.max_partitions});
  } catch (const RunError& e) {
    out.close();
    err << "sheetstream: run aborted: " << e.what() << "\n";
    return kExitFailure;
  }
  out.close();
  if (!out) throw Unreadable("error writing '" + o.output + "'");
  err << stats.summary() << "\n";
  return kExitOk;
}

struct ServeOptions {
  std::string model;
  std::vector<std::string> inputs;
  int port = 8080;
  double replay_speed = 0.0;
  std::size_t max_partitions = kDefaultMaxPartitions;
  std::string ui_dir;
  std::string address = "127.0.0.1";
  bool start_paused = false;
};

int cmd_serve(const ServeOptions& o, std::ostream& out, std::ostream& err) {
  auto model = load_checked(o.model, err);
  if (!model) return kExitFailure;
  std::unique_ptr<MergedCursor> cursor;
  try {
    // Without inputs the grid is static but still editable.
    if (!o.inputs.empty()) cursor = open_checked(*model, parse_inputs(o.inputs));
  } catch (const IoError& e) {
    err << "sheetstream: " << e.what() << "\n";
    return kExitFailure;
  }
  ServeConfig config;
  config.address = o.address;
  config.port = static_cast<std::uint16_t>(o.port);
  config.replay_speed = o.replay_speed;
  config.max_partitions = o.max_partitions;
  config.ui_dir = o.ui_dir;
  config.start_paused = o.start_paused;
  config.handle_signals = true;
  try {
    Server server(model, std::move(cursor), config);
    err << "sheetstream: serving on http://" << o.address << ":" << server.port() << "/ (websocket /ws)\n";
    server.run();
    out << to_json(*server.current_model()) << "\n";
  } catch (const ServeError& e) {
    err << "sheetstream: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace

int cmd_check(const std::string& model_path, std::ostream& out, std::ostream& err) {
  try {
    if (!load_checked(model_path, err)) return kExitFailure;
  } catch (const Unreadable& e) {
    err << "sheetstream: " << e.what() << "\n";
    return kExitIo;
  }
  out << model_path << ": ok\n";
  return kExitOk;
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spreadsheet models as streaming operators", "sheetstream"};
  app.require_subcommand(1);

  std::string check_model;
  auto* check = app.add_subcommand("check", "Validate a model and report diagnostics");
  check->add_option("model", check_model, "Model file (.sheet.json)")->required();

  RunOptions ro;
  auto* run_cmd = app.add_subcommand("run", "Replay inputs through a model and write the exported rows");
  run_cmd->add_option("model", ro.model, "Model file")->required();
  run_cmd->add_option("--input", ro.inputs, "Stream input as NAME=PATH (repeatable)")->take_all();
  run_cmd->add_option("--output", ro.output, "Output file")->required();
  run_cmd->add_option("--format", ro.format, "Output format")->check(CLI::IsMember({"csv", "jsonl"}));
  run_cmd->add_option("--max-partitions", ro.max_partitions, "Partition instance limit")
      ->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()));

  ServeOptions so;
  auto* serve = app.add_subcommand("serve", "Serve the live grid over HTTP and a websocket at /ws");
  serve->add_option("model", so.model, "Model file")->required();
  serve->add_option("--input", so.inputs, "Stream input as NAME=PATH (repeatable)")->take_all();
  serve->add_option("--port", so.port, "Listening port")->check(CLI::Range(1, 65535));
  serve->add_option("--address", so.address, "Listening address");
  serve->add_option("--replay-speed", so.replay_speed, "0 replays as fast as possible, 1 follows timestamps")
      ->check(CLI::NonNegativeNumber);
  serve->add_option("--max-partitions", so.max_partitions, "Partition instance limit")
      ->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()));
  serve->add_option("--ui-dir", so.ui_dir, "Directory of static UI assets");
  serve->add_flag("--start-paused", so.start_paused, "Wait for a resume or step before replaying");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    if (!std::isfinite(so.replay_speed)) throw CLI::ValidationError("--replay-speed", "must be finite");
    if (*check) return cmd_check(check_model, out, err);
    if (*run_cmd) return cmd_run(ro, err);
    return cmd_serve(so, out, err);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFailure;
  } catch (const Unreadable& e) {
    err << "sheetstream: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace sheetstream
