#include <atomic>
#include <chrono>
#include <deque>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "mskteach/bridge.hpp"

namespace msk::bridge {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxQueuedStates = 32;  // per connection; older snapshots are dropped first

json error_body(const std::string& message, std::optional<long> in_reply_to = std::nullopt) {
  json j{{"type", "error"}, {"message", message}};
  if (in_reply_to) j["in_reply_to"] = *in_reply_to;
  return j;
}

}  // namespace

struct Server::Impl {
  struct Connection;

  // Messages from the network thread to the simulation loop.
  struct Incoming {
    int connection = 0;
    std::optional<Inbound> message;  // empty: the controller disconnected
  };

  LiveSession& session;
  ServerOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::optional<net::signal_set> signals;
  std::thread io_thread;
  std::atomic<bool> stopping{false};

  std::mutex incoming_mutex;
  std::deque<Incoming> incoming;

  // Network thread only.
  std::string session_name;
  std::map<int, std::shared_ptr<Connection>> connections;
  int next_id = 1;
  int controller = 0;

  Impl(LiveSession& s, ServerOptions o) : session(s), options(std::move(o)) {}

  void push_incoming(Incoming in) {
    std::lock_guard lock(incoming_mutex);
    incoming.push_back(std::move(in));
  }

  std::deque<Incoming> drain_incoming() {
    std::lock_guard lock(incoming_mutex);
    return std::exchange(incoming, {});
  }

  void accept();
  void opened(const std::shared_ptr<Connection>& c);
  void closed(int id);
  void received(int id, const std::string& text);

  // Called from the simulation loop; delivery happens on the network thread.
  void send(int id, json body);
  void broadcast(json body);
};

struct Server::Impl::Connection : std::enable_shared_from_this<Connection> {
  Connection(Impl& s, tcp::socket socket, int i) : server(s), ws(std::move(socket)), id(i) {}

  Impl& server;
  websocket::stream<beast::tcp_stream> ws;
  int id;
  beast::flat_buffer buffer;
  std::deque<json> queue;
  std::string writing;
  long out_seq = 0;
  long last_in_seq = std::numeric_limits<long>::min();
  bool busy = false, open = false;

  void start() {
    ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open = true;
      self->server.opened(self);
      self->read();
    });
  }

  void read() {
    ws.async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open = false;
        self->server.closed(self->id);
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer.data());
      self->buffer.consume(self->buffer.size());
      self->server.received(self->id, text);
      self->read();
    });
  }

  void enqueue(json body) {
    if (!open) return;
    if (body["type"] == "state") {
      std::size_t states = 0;
      for (const json& q : queue) states += q["type"] == "state";
      if (states >= kMaxQueuedStates)
        for (auto it = queue.begin(); it != queue.end(); ++it)
          if ((*it)["type"] == "state") {
            queue.erase(it);
            break;
          }
    }
    queue.push_back(std::move(body));
    if (!busy) write();
  }

  void write() {
    busy = true;
    // Sequence numbers are stamped at send time, so dropped snapshots leave no gap.
    writing = envelope(std::move(queue.front()), ++out_seq);
    queue.pop_front();
    ws.text(true);
    ws.async_write(net::buffer(writing), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->busy = false;
        return;
      }
      if (self->queue.empty())
        self->busy = false;
      else
        self->write();
    });
  }
};

void Server::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    const int id = next_id++;
    auto c = std::make_shared<Connection>(*this, std::move(socket), id);
    connections[id] = c;
    c->start();
    accept();
  });
}

void Server::Impl::opened(const std::shared_ptr<Connection>& c) {
  if (controller == 0) controller = c->id;
  json names = json::array();
  for (MethodVariant v : kAllVariants) names.push_back(variant_name(v));
  c->enqueue({{"type", "hello"},
              {"role", controller == c->id ? "controller" : "observer"},
              {"scenario", session_name},
              {"variants", names},
              {"tick_s", kControlPeriod},
              {"snapshot_hz", 1.0 / kSnapshotPeriod}});
}

void Server::Impl::closed(int id) {
  connections.erase(id);
  if (id == controller) {
    controller = 0;
    push_incoming({id, std::nullopt});
  }
}

void Server::Impl::received(int id, const std::string& text) {
  auto it = connections.find(id);
  if (it == connections.end()) return;
  Connection& c = *it->second;
  Inbound in;
  try {
    in = parse_inbound(text);
  } catch (const ProtocolError& e) {
    c.enqueue(error_body(e.what()));
    return;
  }
  if (in.seq <= c.last_in_seq) {
    c.enqueue(error_body("seq must increase; last was " + std::to_string(c.last_in_seq), in.seq));
    return;
  }
  c.last_in_seq = in.seq;
  if (id != controller) {
    if (controller == 0) {
      controller = id;  // the session is free again
    } else {
      c.enqueue(error_body("observers are read-only", in.seq));
      return;
    }
  }
  push_incoming({id, std::move(in)});
}

void Server::Impl::send(int id, json body) {
  net::post(ioc, [this, id, body = std::move(body)]() mutable {
    auto it = connections.find(id);
    if (it != connections.end()) it->second->enqueue(std::move(body));
  });
}

void Server::Impl::broadcast(json body) {
  net::post(ioc, [this, body = std::move(body)] {
    for (auto& [id, c] : connections) c->enqueue(body);
  });
}

// ---------------------------------------------------------------------------

Server::Server(LiveSession& session, ServerOptions options) : impl_(std::make_unique<Impl>(session, std::move(options))) {
  Impl& s = *impl_;
  s.session_name = session.scenario().name;
  beast::error_code ec;
  const net::ip::address address = net::ip::make_address(s.options.bind, ec);
  if (ec) throw BindError("bad bind address '" + s.options.bind + "': " + ec.message());
  const tcp::endpoint endpoint(address, s.options.port);
  s.acceptor.open(endpoint.protocol(), ec);
  if (!ec) s.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(endpoint, ec);
  if (!ec) s.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw BindError("cannot listen on " + s.options.bind + ":" + std::to_string(s.options.port) + ": " + ec.message());
  if (s.options.handle_signals) {
    s.signals.emplace(s.ioc, SIGINT, SIGTERM);
    s.signals->async_wait([this](beast::error_code e, int) {
      if (!e) stop();
    });
  }
  s.accept();
}

Server::~Server() {
  stop();
  impl_->ioc.stop();
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
}

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::stop() { impl_->stopping = true; }

void Server::run() {
  Impl& s = *impl_;
  s.io_thread = std::thread([&s] { s.ioc.run(); });

  using clock = std::chrono::steady_clock;
  const auto snapshot_period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(kSnapshotPeriod));
  auto next_tick = clock::now();
  auto next_snapshot = next_tick;
  while (!s.stopping) {
    for (Impl::Incoming& in : s.drain_incoming()) {
      if (!in.message) {
        s.session.release_wrench();
        continue;
      }
      json reply = s.session.apply(in.message->command);
      reply["in_reply_to"] = in.message->seq;
      if (reply["type"] == "ack" && std::holds_alternative<LoadScenario>(in.message->command))
        net::post(s.ioc, [&s, name = s.session.scenario().name] { s.session_name = name; });
      s.send(in.connection, std::move(reply));
    }
    s.session.tick();
    for (json& e : s.session.take_events()) s.broadcast(std::move(e));

    const auto now = clock::now();
    if (now >= next_snapshot) {
      s.broadcast(to_json(s.session.snapshot()));
      next_snapshot += snapshot_period;
      if (next_snapshot < now) next_snapshot = now + snapshot_period;
    }
    next_tick += std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(kControlPeriod / s.session.step_rate()));
    if (next_tick < now - std::chrono::seconds(1)) next_tick = now;  // do not bank a long stall
    std::this_thread::sleep_until(next_tick);
  }

  // Flush what is queued, then shut the network side down.
  net::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
    for (auto& [id, c] : s.connections)
      if (!c->busy) c->ws.async_close(websocket::close_code::going_away, [c](beast::error_code) {});
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  s.ioc.stop();
  s.io_thread.join();
}

}  // namespace msk::bridge
