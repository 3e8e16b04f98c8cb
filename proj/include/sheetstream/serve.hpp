// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sheetstream/engine.hpp"
#include "sheetstream/io.hpp"
#include "sheetstream/partition.hpp"

namespace sheetstream {

// Websocket session protocol. One JSON message per frame.
namespace protocol {

nlohmann::json encode_value(const Value& v);
nlohmann::json encode_key(const std::optional<Key>& key);
/// Accepts a JSON string or number; anything else is nullopt.
std::optional<Key> decode_key(const nlohmann::json& j);

nlohmann::json snapshot(const Engine& instance, const std::optional<Key>& key, std::uint64_t seq);
nlohmann::json delta(std::uint64_t seq, const ChangeSet& changes);
nlohmann::json keys(const std::vector<Key>& keys);
nlohmann::json error(const std::string& message);

}  // namespace protocol

struct ServeConfig {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  double replay_speed = 0.0;  // 0: as fast as possible; 1: paced by timestamps
  std::size_t max_partitions = kDefaultMaxPartitions;
  std::string ui_dir;         // static assets; a placeholder page when empty
  bool start_paused = false;
  bool handle_signals = false;  // stop on SIGINT/SIGTERM
};

class ServeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// HTTP + websocket front end for one operator. A single thread owns the
/// operator and the replay cursor; connection handlers only exchange
/// messages with it, so edits always land between two tuples.
class Server {
 public:
  /// Binds immediately; throws ServeError if the port is unavailable.
  Server(std::shared_ptr<const SheetModel> model, std::unique_ptr<TupleSource> cursor, ServeConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;
  /// Serves until stop() (or a signal, if enabled).
  void run();
  /// Thread-safe.
  void stop();
  /// The model including every accepted live edit. Call after run() returns.
  std::shared_ptr<const SheetModel> current_model() const;

  class Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace sheetstream
