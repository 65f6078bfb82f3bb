#include <algorithm>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "ffcm/transport.hpp"

namespace ffcm::transport {
namespace {

using Clock = std::chrono::steady_clock;

Clock::time_point far_future() { return Clock::now() + std::chrono::hours(24 * 365); }

struct Pipe {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<std::string> lines;
  bool closed = false;
};

class LoopbackConnection final : public Connection {
 public:
  LoopbackConnection(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out) : in_(std::move(in)), out_(std::move(out)) {}
  ~LoopbackConnection() override { close(); }

  void send(std::string_view line) override {
    std::lock_guard lock(out_->mutex);
    if (out_->closed) throw std::runtime_error("loopback connection closed");
    out_->lines.emplace_back(line);
    out_->ready.notify_all();
  }

  Received receive(Clock::time_point deadline) override {
    std::unique_lock lock(in_->mutex);
    if (!in_->ready.wait_until(lock, deadline, [&] { return !in_->lines.empty() || in_->closed; }))
      return {ReceiveStatus::Timeout, {}};
    if (in_->lines.empty()) return {ReceiveStatus::Closed, {}};
    Received r{ReceiveStatus::Line, std::move(in_->lines.front())};
    in_->lines.pop_front();
    return r;
  }

  void close() override {
    for (auto *pipe : {in_.get(), out_.get()}) {
      std::lock_guard lock(pipe->mutex);
      pipe->closed = true;
      pipe->ready.notify_all();
    }
  }

 private:
  std::shared_ptr<Pipe> in_;
  std::shared_ptr<Pipe> out_;
};

void send_message(Connection &conn, const Message &m, const MessageTap &tap) {
  const auto line = encode(m);
  if (tap) tap(line);
  conn.send(line);
}

void send_quietly(Connection &conn, const Message &m, const MessageTap &tap) {
  try {
    send_message(conn, m, tap);
  } catch (...) {
  }
}

}  // namespace

std::pair<std::unique_ptr<Connection>, std::unique_ptr<Connection>> make_loopback_pair() {
  auto a_to_b = std::make_shared<Pipe>();
  auto b_to_a = std::make_shared<Pipe>();
  return {std::make_unique<LoopbackConnection>(b_to_a, a_to_b), std::make_unique<LoopbackConnection>(a_to_b, b_to_a)};
}

std::optional<int> accept_hello(Connection &conn, const Server &server, const std::vector<int> &connected,
                                std::vector<std::string> &concepts, Clock::time_point deadline,
                                const MessageTap &tap) {
  auto reject = [&](const std::string &code, const std::string &text) -> std::optional<int> {
    send_quietly(conn, Error{code, text}, tap);
    conn.close();
    return std::nullopt;
  };

  const auto received = conn.receive(deadline);
  if (received.status != ReceiveStatus::Line) {
    if (received.status == ReceiveStatus::Timeout) return reject("timeout", "no hello before the deadline");
    conn.close();
    return std::nullopt;
  }
  Message message;
  try {
    message = decode(received.line);
  } catch (const DecodeError &e) {
    return reject(e.code(), e.what());
  }
  const auto *hello = std::get_if<Hello>(&message);
  if (!hello) return reject("unexpected_message", "expected hello");
  const auto id = std::to_string(hello->participant_id);
  if (!server.expected().contains(hello->participant_id))
    return reject("unknown_participant", "participant " + id + " is not part of this federation");
  if (std::find(connected.begin(), connected.end(), hello->participant_id) != connected.end())
    return reject("duplicate_participant", "participant " + id + " is already connected");
  if (concepts.empty())
    concepts = hello->concept_names;
  else if (concepts != hello->concept_names)
    return reject("schema", "participant " + id + " uses a different concept schema");
  return hello->participant_id;
}

FederationLog run_server_sessions(Server &server, std::vector<std::pair<int, std::unique_ptr<Connection>>> &sessions,
                                  const ServerOptions &options) {
  const auto &tap = options.tap;
  auto close_all = [&] {
    for (auto &[id, conn] : sessions) conn->close();
  };
  auto abort = [&](const std::string &code, const std::string &text) {
    for (auto &[id, conn] : sessions) send_quietly(*conn, Error{code, text}, tap);
    close_all();
    throw ProtocolError(text);
  };
  auto broadcast = [&](const Message &m) {
    for (auto &[id, conn] : sessions) {
      try {
        send_message(*conn, m, tap);
      } catch (const std::exception &e) {
        abort("straggler", "participant " + std::to_string(id) + " disconnected: " + e.what());
      }
    }
  };
  auto collect = [&](int round) {
    const auto deadline = Clock::now() + options.round_timeout;
    const auto where = " in round " + std::to_string(round);
    for (auto &[id, conn] : sessions) {
      const auto who = "participant " + std::to_string(id);
      const auto received = conn->receive(deadline);
      if (received.status == ReceiveStatus::Timeout) abort("timeout", who + " timed out" + where + " (straggler)");
      if (received.status == ReceiveStatus::Closed)
        abort("straggler", who + " disconnected" + where + " (straggler)");

      Message message;
      try {
        message = decode(received.line);
      } catch (const DecodeError &e) {
        abort(e.code(), who + " sent an invalid message" + where + ": " + e.what());
      }
      if (const auto *err = std::get_if<Error>(&message))
        abort("participant_error", who + " failed" + where + ": " + err->code + ": " + err->text);
      const auto *result = std::get_if<TrainResult>(&message);
      if (!result) abort("unexpected_message", who + " sent something other than a train result" + where);
      if (result->report.participant_id != id)
        abort("schema", who + " reported as participant " + std::to_string(result->report.participant_id));
      try {
        server.submit(result->report);
      } catch (const std::exception &e) {
        abort("protocol", e.what());
      }
    }
  };

  if (sessions.size() != server.expected().size()) abort("protocol", "not every participant is connected");

  broadcast(ModelPush{0, {}});
  collect(0);
  if (server.max_rounds() == 0) {
    auto log = server.finish();
    broadcast(Terminate{});
    close_all();
    return log;
  }
  for (;;) {
    auto decision = server.step();
    if (decision.kind == ServerDecision::Kind::Broadcast) {
      broadcast(ModelPush{decision.round, std::move(decision.federated)});
      collect(decision.round);
      continue;
    }
    broadcast(Terminate{std::move(decision.federated)});
    collect(decision.round);
    auto log = server.finish();
    close_all();
    return log;
  }
}

ParticipantOutcome run_participant_session(Participant &participant, Connection &conn, const MessageTap &tap) {
  auto fail = [&](const std::string &code, const std::string &text) {
    send_quietly(conn, Error{code, text}, tap);
    conn.close();
    throw ProtocolError(text);
  };

  send_message(conn, Hello{participant.id(), participant.local_matrix().concept_names}, tap);
  int last_round = 0;
  for (;;) {
    const auto received = conn.receive(far_future());
    if (received.status != ReceiveStatus::Line) throw ProtocolError("server closed the connection");
    Message message;
    try {
      message = decode(received.line);
    } catch (const DecodeError &e) {
      fail(e.code(), std::string("invalid message from server: ") + e.what());
    }

    if (const auto *push = std::get_if<ModelPush>(&message)) {
      try {
        auto report = push->round == 0 ? participant.initial_train() : participant.step(push->matrix, push->round);
        last_round = push->round;
        send_message(conn, TrainResult{std::move(report)}, tap);
      } catch (const ProtocolError &e) {
        fail("protocol", e.what());
      }
    } else if (const auto *done = std::get_if<Terminate>(&message)) {
      if (done->matrix.concept_names.empty()) {
        conn.close();
        return {};
      }
      try {
        send_message(conn, TrainResult{participant.step(done->matrix, last_round + 1)}, tap);
      } catch (const ProtocolError &e) {
        fail("protocol", e.what());
      }
      conn.close();
      return {done->matrix};
    } else if (const auto *err = std::get_if<Error>(&message)) {
      conn.close();
      throw ProtocolError("server aborted the federation: " + err->code + ": " + err->text);
    } else {
      fail("unexpected_message", "participant received an unexpected message");
    }
  }
}

FederationLog run_loopback(const FederationConfig &config, std::span<const data::DatasetPartition> partitions,
                           const MessageTap &tap) {
  if (partitions.empty()) throw std::invalid_argument("run_loopback: no partitions");
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
      throw std::invalid_argument("run_loopback: duplicate participant id " + std::to_string(p.participant_id));
    participants.emplace_back(p, config);
  }
  Server server(ids, config.max_rounds);

  std::vector<std::unique_ptr<Connection>> server_ends;
  std::vector<std::unique_ptr<Connection>> client_ends;
  for (std::size_t i = 0; i < participants.size(); ++i) {
    auto [a, b] = make_loopback_pair();
    server_ends.push_back(std::move(a));
    client_ends.push_back(std::move(b));
  }

  std::vector<std::exception_ptr> failures(participants.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < participants.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        run_participant_session(participants[i], *client_ends[i], safe_tap);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    });
  }

  std::exception_ptr server_failure;
  FederationLog log;
  try {
    std::vector<std::pair<int, std::unique_ptr<Connection>>> sessions;
    std::vector<int> connected;
    std::vector<std::string> concepts;
    const auto deadline = Clock::now() + std::chrono::seconds(300);
    for (auto &end : server_ends) {
      auto id = accept_hello(*end, server, connected, concepts, deadline, safe_tap);
      if (!id) throw ProtocolError("loopback participant failed the handshake");
      connected.push_back(*id);
      sessions.emplace_back(*id, std::move(end));
    }
    log = run_server_sessions(server, sessions, {std::chrono::seconds(300), safe_tap});
  } catch (...) {
    server_failure = std::current_exception();
    for (auto &end : server_ends)
      if (end) end->close();
  }
  for (auto &t : threads) t.join();
  if (server_failure) std::rethrow_exception(server_failure);
  for (auto &f : failures)
    if (f) std::rethrow_exception(f);
  return log;
}

}  // namespace ffcm::transport
