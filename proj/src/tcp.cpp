#include <future>
#include <istream>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>

#include "ffcm/transport.hpp"

namespace ffcm::transport {
namespace {

namespace asio = boost::asio;
using asio::ip::tcp;
using Clock = std::chrono::steady_clock;

// Each connection owns its io_context so a blocking receive can be bounded
// with run_until without touching other sessions.
class TcpConnection final : public Connection {
 public:
  TcpConnection(std::unique_ptr<asio::io_context> io, tcp::socket socket)
      : io_(std::move(io)), socket_(std::move(socket)) {}
  ~TcpConnection() override { close(); }

  void send(std::string_view line) override {
    if (!socket_.is_open()) throw std::runtime_error("connection closed");
    asio::write(socket_, asio::buffer(line.data(), line.size()));
  }

  Received receive(Clock::time_point deadline) override {
    if (auto line = buffered_line()) return {ReceiveStatus::Line, std::move(*line)};
    if (!socket_.is_open()) return {ReceiveStatus::Closed, {}};

    bool done = false;
    boost::system::error_code ec;
    asio::async_read_until(socket_, buffer_, '\n', [&](const boost::system::error_code &e, std::size_t) {
      ec = e;
      done = true;
    });
    io_->restart();
    io_->run_until(deadline);
    if (!done) {
      boost::system::error_code ignored;
      socket_.cancel(ignored);
      io_->restart();
      io_->run();
      if (!ec) {
        if (auto line = buffered_line()) return {ReceiveStatus::Line, std::move(*line)};
      }
      return {ReceiveStatus::Timeout, {}};
    }
    if (auto line = buffered_line()) return {ReceiveStatus::Line, std::move(*line)};
    return {ReceiveStatus::Closed, {}};
  }

  void close() override {
    if (!socket_.is_open()) return;
    boost::system::error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
  }

 private:
  std::optional<std::string> buffered_line() {
    const auto data = buffer_.data();
    const auto begin = asio::buffers_begin(data), end = asio::buffers_end(data);
    const auto newline = std::find(begin, end, '\n');
    if (newline == end) return std::nullopt;
    std::string line(begin, newline);
    buffer_.consume(line.size() + 1);
    return line;
  }

  std::unique_ptr<asio::io_context> io_;
  tcp::socket socket_;
  asio::streambuf buffer_;
};

std::string list_ids(const std::set<int> &expected, const std::vector<int> &connected) {
  std::string out;
  for (int id : expected) {
    if (std::find(connected.begin(), connected.end(), id) != connected.end()) continue;
    if (!out.empty()) out += ", ";
    out += std::to_string(id);
  }
  return out;
}

}  // namespace

FederationLog serve(const TcpServerOptions &options, Server &server) {
  asio::io_context io;
  tcp::acceptor acceptor(io);
  const tcp::endpoint endpoint(asio::ip::make_address(options.bind_address), options.port);
  acceptor.open(endpoint.protocol());
  acceptor.set_option(tcp::acceptor::reuse_address(true));
  acceptor.bind(endpoint);
  acceptor.listen();
  if (options.on_listening) options.on_listening(acceptor.local_endpoint().port());

  std::vector<std::pair<int, std::unique_ptr<Connection>>> sessions;
  std::vector<int> connected;
  std::vector<std::string> concepts;
  const auto deadline = Clock::now() + options.session.round_timeout;
  while (connected.size() < server.expected().size()) {
    auto conn_io = std::make_unique<asio::io_context>();
    tcp::socket socket(*conn_io);
    bool done = false;
    boost::system::error_code ec;
    acceptor.async_accept(socket, [&](const boost::system::error_code &e) {
      ec = e;
      done = true;
    });
    io.restart();
    io.run_until(deadline);
    if (!done) {
      acceptor.cancel();
      io.restart();
      io.run();
      const auto text = "timed out waiting for participants: " + list_ids(server.expected(), connected);
      for (auto &[id, conn] : sessions) {
        try {
          const auto line = encode(Error{"timeout", text});
          if (options.session.tap) options.session.tap(line);
          conn->send(line);
        } catch (...) {
        }
        conn->close();
      }
      throw ProtocolError(text);
    }
    if (ec) continue;

    auto conn = std::make_unique<TcpConnection>(std::move(conn_io), std::move(socket));
    if (auto id = accept_hello(*conn, server, connected, concepts, deadline, options.session.tap)) {
      connected.push_back(*id);
      sessions.emplace_back(*id, std::move(conn));
    }
  }
  acceptor.close();
  return run_server_sessions(server, sessions, options.session);
}

std::unique_ptr<Connection> connect_tcp(const std::string &host, unsigned short port,
                                        std::chrono::milliseconds timeout) {
  auto io = std::make_unique<asio::io_context>();
  tcp::resolver resolver(*io);
  const auto endpoints = resolver.resolve(host, std::to_string(port));
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    tcp::socket socket(*io);
    boost::system::error_code ec;
    asio::connect(socket, endpoints, ec);
    if (!ec) {
      socket.set_option(tcp::no_delay(true));
      return std::make_unique<TcpConnection>(std::move(io), std::move(socket));
    }
    if (Clock::now() >= deadline)
      throw ProtocolError("cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

ParticipantOutcome join(const JoinOptions &options, Participant &participant) {
  auto conn = connect_tcp(options.host, options.port, options.connect_timeout);
  return run_participant_session(participant, *conn, options.tap);
}

FederationLog run_tcp_local(const FederationConfig &config, std::span<const data::DatasetPartition> partitions,
                            std::chrono::milliseconds round_timeout, const MessageTap &tap) {
  if (partitions.empty()) throw std::invalid_argument("run_tcp_local: no partitions");
  std::mutex tap_mutex;
  MessageTap safe_tap;
  if (tap)
    safe_tap = [&](std::string_view line) {
      std::lock_guard lock(tap_mutex);
      tap(line);
    };

  std::set<int> ids;
  std::vector<Participant> participants;
  for (const auto &p : partitions) {
    if (!ids.insert(p.participant_id).second)
      throw std::invalid_argument("run_tcp_local: duplicate participant id " + std::to_string(p.participant_id));
    participants.emplace_back(p, config);
  }
  Server server(ids, config.max_rounds);

  std::promise<unsigned short> port_promise;
  auto port_future = port_promise.get_future();
  TcpServerOptions options;
  options.bind_address = "127.0.0.1";
  options.port = 0;
  options.session = {round_timeout, safe_tap};
  options.on_listening = [&](unsigned short p) { port_promise.set_value(p); };

  FederationLog log;
  std::exception_ptr server_failure;
  std::thread server_thread([&] {
    try {
      log = serve(options, server);
    } catch (...) {
      server_failure = std::current_exception();
      try {
        port_promise.set_value(0);
      } catch (const std::future_error &) {
      }
    }
  });
  const auto port = port_future.get();

  std::vector<std::exception_ptr> failures(participants.size());
  std::vector<std::thread> clients;
  if (port != 0) {
    for (std::size_t i = 0; i < participants.size(); ++i)
      clients.emplace_back([&, i] {
        try {
          join({"127.0.0.1", port, std::chrono::seconds(30), safe_tap}, participants[i]);
        } catch (...) {
          failures[i] = std::current_exception();
        }
      });
  }
  for (auto &t : clients) t.join();
  server_thread.join();
  if (server_failure) std::rethrow_exception(server_failure);
  for (auto &f : failures)
    if (f) std::rethrow_exception(f);
  return log;
}

}  // namespace ffcm::transport
