// SPDX-License-Identifier: Apache-2.0

#include "sheetstream/serve.hpp"

#include <chrono>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace sheetstream {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using json = nlohmann::json;

namespace protocol {

json encode_value(const Value& v) {
  if (v.is_number()) return {{"t", "num"}, {"v", v.as_number()}};
  if (v.is_text()) return {{"t", "text"}, {"v", v.as_text()}};
  if (v.is_bool()) return {{"t", "bool"}, {"v", v.as_bool()}};
  if (v.is_blank()) return {{"t", "blank"}};
  if (v.is_error()) return {{"t", "err"}, {"v", std::string(error_text(v.as_error()))}};
  const auto& s = v.as_window().summary;
  return {{"t", "win"}, {"v", {{"count", s.count}, {"sum", s.sum}, {"min", s.min}, {"max", s.max}}}};
}

json encode_key(const std::optional<Key>& key) {
  if (!key) return nullptr;
  if (const auto* s = std::get_if<std::string>(&*key)) return *s;
  return std::get<double>(*key);
}

std::optional<Key> decode_key(const json& j) {
  if (j.is_string()) return Key(j.get<std::string>());
  if (j.is_number()) return Key(j.get<double>());
  return std::nullopt;
}

json snapshot(const Engine& instance, const std::optional<Key>& key, std::uint64_t seq) {
  const SheetModel& model = instance.model();
  json cells = json::array();
  for (const auto& [addr, value] : instance.snapshot()) {
    json cell;
    cell["addr"] = format_addr(addr);
    const CellDef* def = model.find_cell(addr);
    cell["formula"] = def ? json(def->source) : json(nullptr);
    cell["value"] = encode_value(value);
    cell["export"] = nullptr;
    for (const auto& x : model.exports)
      if (x.addr == addr) cell["export"] = x.name;
    cells.push_back(std::move(cell));
  }
  return {{"type", "snapshot"}, {"instance", encode_key(key)}, {"seq", seq}, {"cells", std::move(cells)}};
}

json delta(std::uint64_t seq, const ChangeSet& changes) {
  json list = json::array();
  for (const auto& c : changes.changed)
    list.push_back({{"addr", format_addr(c.addr)}, {"value", encode_value(c.new_value)}});
  return {{"type", "delta"}, {"seq", seq}, {"changes", std::move(list)}};
}

json keys(const std::vector<Key>& ks) {
  json list = json::array();
  for (const auto& k : ks) list.push_back(encode_key(k));
  return {{"type", "keys"}, {"keys", std::move(list)}};
}

json error(const std::string& message) { return {{"type", "error"}, {"msg", message}}; }

}  // namespace protocol

namespace {

constexpr std::string_view kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>sheetstream</title></head>"
    "<body><h1>sheetstream</h1><p>Session endpoint: <code>/ws</code>. "
    "Start the server with <code>--ui-dir</code> to serve the grid UI.</p></body></html>";

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string_view mime_type(std::string_view path) {
  auto ends = [&](std::string_view ext) { return path.ends_with(ext); };
  if (ends(".html") || ends(".htm")) return "text/html";
  if (ends(".js") || ends(".mjs")) return "application/javascript";
  if (ends(".css")) return "text/css";
  if (ends(".json")) return "application/json";
  if (ends(".svg")) return "image/svg+xml";
  if (ends(".png")) return "image/png";
  if (ends(".ico")) return "image/x-icon";
  return "application/octet-stream";
}

class Connection;

}  // namespace

class Server::Impl : public std::enable_shared_from_this<Server::Impl> {
 public:
  Impl(std::shared_ptr<const SheetModel> model, std::unique_ptr<TupleSource> cursor, ServeConfig config)
      : config_(std::move(config)),
        op_(std::move(model), config_.max_partitions),
        cursor_(std::move(cursor)),
        acceptor_(ioc_),
        timer_(ioc_),
        signals_(ioc_),
        paused_(config_.start_paused) {
    beast::error_code ec;
    auto address = asio::ip::make_address(config_.address, ec);
    if (ec) throw ServeError("invalid address '" + config_.address + "'");
    tcp::endpoint endpoint(address, config_.port);
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw ServeError("cannot listen on " + config_.address + ":" + std::to_string(config_.port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    pull_next();
  }

  std::uint16_t port() const { return port_; }

  void run() {
    do_accept();
    if (config_.handle_signals) {
      signals_.add(SIGINT);
      signals_.add(SIGTERM);
      signals_.async_wait([self = shared_from_this()](beast::error_code ec, int) {
        if (!ec) self->shutdown();
      });
    }
    schedule();
    ioc_.run();
  }

  void stop() {
    asio::post(ioc_, [self = shared_from_this()] { self->shutdown(); });
  }

  std::shared_ptr<const SheetModel> current_model() const { return op_.model_ptr(); }

  // Called by connections, always on the io thread.
  void attach(const std::shared_ptr<Connection>& conn);
  void detach(Connection* conn);
  void handle(const std::shared_ptr<Connection>& conn, const std::string& text);
  const std::string& ui_dir() const { return config_.ui_dir; }
  asio::io_context& io() { return ioc_; }

 private:
  void do_accept();
  void shutdown();
  void pull_next();
  void schedule();
  void apply_one();
  void send_snapshot(Connection& conn);
  void broadcast_snapshots();
  void broadcast(const json& msg);
  std::optional<Key> default_key() const;

  ServeConfig config_;
  Operator op_;
  std::unique_ptr<TupleSource> cursor_;
  std::optional<TupleRecord> next_;
  std::optional<Timestamp> prev_ts_;
  asio::io_context ioc_;
  tcp::acceptor acceptor_;
  asio::steady_timer timer_;
  asio::signal_set signals_;
  std::uint16_t port_ = 0;
  bool paused_ = false;
  bool scheduled_ = false;
  bool stopping_ = false;
  std::uint64_t seq_ = 0;  // tuples consumed
  std::vector<std::shared_ptr<Connection>> connections_;
};

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::shared_ptr<Server::Impl> owner)
      : ws_(std::move(socket)), owner_(std::move(owner)) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->owner_->attach(self);
      self->do_read();
    });
  }

  void send(const json& msg) {
    if (closed_) return;
    queue_.push_back(std::make_shared<std::string>(dump(msg)));
    if (queue_.size() == 1) do_write();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  void close_for_violation(const std::string& reason) {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    websocket::close_reason cr(websocket::close_code::policy_error, reason.substr(0, 120));
    ws_.async_close(cr, [self = shared_from_this()](beast::error_code) {});
    owner_->detach(this);
  }

  std::optional<Key> selected;
  bool has_selection = false;

 private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->owner_->detach(self.get());
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->owner_->handle(self, text);
      if (!self->closed_) self->do_read();
    });
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->queue_.clear();
        return;
      }
      if (self->queue_.empty()) return;
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->do_write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Server::Impl> owner_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<std::string>> queue_;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, std::shared_ptr<Server::Impl> owner)
      : stream_(std::move(socket)), owner_(std::move(owner)) {}

  void start() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (!ec) self->on_request();
    });
  }

 private:
  void on_request() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<Connection>(stream_.release_socket(), owner_)->start(std::move(req_));
        return;
      }
      respond(http::status::not_found, "text/plain", "unknown websocket endpoint");
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      respond(http::status::method_not_allowed, "text/plain", "GET only");
      return;
    }
    std::string target(req_.target());
    if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target.back() == '/') target += "index.html";
    if (target.find("..") != std::string::npos || target.front() != '/') {
      respond(http::status::bad_request, "text/plain", "bad path");
      return;
    }
    if (owner_->ui_dir().empty()) {
      if (target == "/index.html")
        respond(http::status::ok, "text/html", std::string(kPlaceholderPage));
      else
        respond(http::status::not_found, "text/plain", "not found");
      return;
    }
    std::ifstream file(owner_->ui_dir() + target, std::ios::binary);
    if (!file) {
      respond(http::status::not_found, "text/plain", "not found");
      return;
    }
    std::ostringstream body;
    body << file.rdbuf();
    respond(http::status::ok, mime_type(target), body.str());
  }

  void respond(http::status status, std::string_view type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::server, "sheetstream");
    res->set(http::field::content_type, beast::string_view(type.data(), type.size()));
    res->keep_alive(false);
    res->body() = req_.method() == http::verb::head ? std::string() : std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<Server::Impl> owner_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

void Server::Impl::do_accept() {
  acceptor_.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpSession>(std::move(socket), self)->start();
    self->do_accept();
  });
}

void Server::Impl::shutdown() {
  if (stopping_) return;
  stopping_ = true;
  beast::error_code ignored;
  acceptor_.close(ignored);
  timer_.cancel();
  signals_.cancel(ignored);
  for (auto& c : connections_) c->close();
  connections_.clear();
  // Let the close handshakes go out, then stop regardless.
  auto deadline = std::make_shared<asio::steady_timer>(ioc_, std::chrono::milliseconds(200));
  deadline->async_wait([this, deadline](beast::error_code) { ioc_.stop(); });
}

std::optional<Key> Server::Impl::default_key() const {
  auto ks = op_.keys();
  if (ks.empty()) return std::nullopt;
  return ks.front();
}

void Server::Impl::send_snapshot(Connection& conn) {
  if (!op_.partitioned()) {
    conn.send(protocol::snapshot(*op_.instance(std::nullopt), std::nullopt, seq_));
    return;
  }
  const Engine* inst = conn.has_selection ? op_.instance(conn.selected) : nullptr;
  if (inst == nullptr) {
    conn.send(protocol::snapshot(op_.prototype(), std::nullopt, seq_));
    return;
  }
  conn.send(protocol::snapshot(*inst, conn.selected, seq_));
}

void Server::Impl::attach(const std::shared_ptr<Connection>& conn) {
  if (stopping_) {
    conn->close();
    return;
  }
  connections_.push_back(conn);
  if (op_.partitioned()) {
    if (auto k = default_key()) {
      conn->selected = k;
      conn->has_selection = true;
    }
    send_snapshot(*conn);
    conn->send(protocol::keys(op_.keys()));
  } else {
    send_snapshot(*conn);
  }
}

void Server::Impl::detach(Connection* conn) {
  std::erase_if(connections_, [conn](const auto& c) { return c.get() == conn; });
}

void Server::Impl::broadcast(const json& msg) {
  for (auto& c : connections_) c->send(msg);
}

void Server::Impl::broadcast_snapshots() {
  for (auto& c : connections_) send_snapshot(*c);
}

void Server::Impl::handle(const std::shared_ptr<Connection>& conn, const std::string& text) {
  json msg = json::parse(text, nullptr, false);
  if (msg.is_discarded() || !msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    conn->close_for_violation("malformed message");
    return;
  }
  const std::string type = msg["type"].get<std::string>();
  auto str_field = [&](const char* name) -> std::optional<std::string> {
    auto it = msg.find(name);
    if (it == msg.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
  };

  if (type == "set_formula" || type == "mark_export") {
    auto addr_text = str_field("addr");
    std::optional<std::string> text;
    bool on = true;
    if (type == "set_formula") {
      text = str_field("formula");
    } else {
      text = str_field("name");
      auto it = msg.find("on");
      if (it == msg.end() || !it->is_boolean()) text.reset();
      else on = it->get<bool>();
    }
    if (!addr_text || !text) {
      conn->close_for_violation("missing fields in " + type);
      return;
    }
    try {
      CellAddr addr = parse_addr(*addr_text);
      SheetModel edited = type == "set_formula" ? with_formula(op_.model(), addr, *text)
                                                : with_export(op_.model(), addr, *text, on);
      op_.rebind(std::make_shared<const SheetModel>(std::move(edited)));
    } catch (const std::exception& e) {
      conn->send(protocol::error(e.what()));
      return;
    }
    broadcast_snapshots();
    return;
  }
  if (type == "select_instance") {
    auto it = msg.find("key");
    if (it == msg.end()) {
      conn->close_for_violation("missing key");
      return;
    }
    std::optional<Key> key = protocol::decode_key(*it);
    if (!it->is_null() && !key) {
      conn->close_for_violation("key must be a string, number, or null");
      return;
    }
    if (op_.partitioned() && (!key || op_.instance(key) == nullptr)) {
      conn->send(protocol::error(key ? "unknown instance key '" + format_literal(*key) + "'"
                                     : std::string("a partitioned model needs an instance key")));
      return;
    }
    if (!op_.partitioned() && key) {
      conn->send(protocol::error("model is not partitioned"));
      return;
    }
    conn->selected = key;
    conn->has_selection = true;
    send_snapshot(*conn);
    return;
  }
  if (type == "control") {
    auto action = str_field("action");
    if (!action) {
      conn->close_for_violation("missing action");
      return;
    }
    if (*action == "pause") {
      paused_ = true;
      timer_.cancel();
    } else if (*action == "resume") {
      paused_ = false;
      schedule();
    } else if (*action == "step") {
      if (!paused_) {
        conn->send(protocol::error("step requires the replay to be paused"));
      } else if (!next_) {
        conn->send(protocol::error("input exhausted"));
      } else {
        apply_one();
      }
    } else {
      conn->close_for_violation("unknown control action");
    }
    return;
  }
  conn->close_for_violation("unknown message type '" + type + "'");
}

void Server::Impl::pull_next() {
  try {
    next_ = cursor_ ? cursor_->next() : std::nullopt;
  } catch (const std::exception& e) {
    next_.reset();
    std::cerr << "sheetstream: input error: " << e.what() << "\n";
    broadcast(protocol::error(std::string("input error: ") + e.what()));
  }
}

void Server::Impl::schedule() {
  if (paused_ || scheduled_ || stopping_ || !next_) return;
  scheduled_ = true;
  auto delay = std::chrono::milliseconds(0);
  if (config_.replay_speed > 0 && prev_ts_) {
    double ms = static_cast<double>(next_->ts - *prev_ts_) / config_.replay_speed;
    delay = std::chrono::milliseconds(static_cast<std::int64_t>(ms));
  }
  timer_.expires_after(delay);
  timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
    self->scheduled_ = false;
    if (ec || self->paused_) return;
    self->apply_one();
    self->schedule();
  });
}

void Server::Impl::apply_one() {
  TupleRecord rec = std::move(*next_);
  pull_next();
  Operator::Step step;
  try {
    step = op_.push(rec.stream, rec.values, rec.ts);
  } catch (const std::exception& e) {
    std::cerr << "sheetstream: input seq " << rec.seq << ": " << e.what() << "\n";
    broadcast(protocol::error("input seq " + std::to_string(rec.seq) + ": " + e.what()));
    next_.reset();
    return;
  }
  prev_ts_ = rec.ts;
  seq_ = rec.seq + 1;
  if (!step.admitted) return;
  if (step.created) {
    json ks = protocol::keys(op_.keys());
    for (auto& c : connections_) {
      c->send(ks);
      if (!c->has_selection) {
        c->selected = step.key;
        c->has_selection = true;
        send_snapshot(*c);
      }
    }
  }
  if (step.changes.changed.empty()) return;
  json d = protocol::delta(seq_, step.changes);
  for (auto& c : connections_)
    if (c->has_selection || !op_.partitioned())
      if (!op_.partitioned() || c->selected == step.key) c->send(d);
}

Server::Server(std::shared_ptr<const SheetModel> model, std::unique_ptr<TupleSource> cursor, ServeConfig config)
    : impl_(std::make_shared<Impl>(std::move(model), std::move(cursor), std::move(config))) {}

Server::~Server() = default;

std::uint16_t Server::port() const { return impl_->port(); }
void Server::run() { impl_->run(); }
void Server::stop() { impl_->stop(); }
std::shared_ptr<const SheetModel> Server::current_model() const { return impl_->current_model(); }

}  // namespace sheetstream
