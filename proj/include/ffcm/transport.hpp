#pragma once

// Wire protocol between the federation server and its participants: one
// JSON object per line, reals printed with 17 significant digits. Sessions
// run over TCP or over an in-process loopback with the same protocol code.

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ffcm/federation.hpp"

namespace ffcm::transport {

inline constexpr int kProtocolVersion = 1;

struct Hello {
  int participant_id = 0;
  std::vector<std::string> concept_names;
  friend bool operator==(const Hello &, const Hello &) = default;
};

/// Round 0 carries an empty matrix and asks for local training.
struct ModelPush {
  int round = 0;
  Matrix matrix;
  friend bool operator==(const ModelPush &, const ModelPush &) = default;
};

struct TrainResult {
  ParticipantReport report;
  friend bool operator==(const TrainResult &, const TrainResult &) = default;
};

/// Final federated matrix. Empty when no round ran.
struct Terminate {
  Matrix matrix;
  friend bool operator==(const Terminate &, const Terminate &) = default;
};

struct Error {
  std::string code;
  std::string text;
  friend bool operator==(const Error &, const Error &) = default;
};

using Message = std::variant<Hello, ModelPush, TrainResult, Terminate, Error>;

/// Raised by decode; `code` is what goes into the Error reply.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(std::string code, const std::string &what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string &code() const { return code_; }

 private:
  std::string code_;
};

/// Canonical single-line encoding, newline included.
std::string encode(const Message &message);

/// Accepts one line with or without its trailing newline.
Message decode(std::string_view line);

std::string format_real(double value);

// ---------------------------------------------------------------------------

/// Called with every encoded line either side sends.
using MessageTap = std::function<void(std::string_view line)>;

enum class ReceiveStatus { Line, Timeout, Closed };

struct Received {
  ReceiveStatus status = ReceiveStatus::Closed;
  std::string line;
};

/// A bidirectional line channel.
class Connection {
 public:
  virtual ~Connection() = default;
  virtual void send(std::string_view line) = 0;
  virtual Received receive(std::chrono::steady_clock::time_point deadline) = 0;
  virtual void close() = 0;
};

/// Two connected in-memory endpoints.
std::pair<std::unique_ptr<Connection>, std::unique_ptr<Connection>> make_loopback_pair();

struct ServerOptions {
  std::chrono::milliseconds round_timeout{std::chrono::seconds(300)};
  MessageTap tap;
};

/// Read and validate the Hello on a fresh connection. Returns the participant
/// id, or nullopt after replying with an Error and closing the connection.
/// `connected` lists ids already in session; `concepts` is the agreed schema
/// (filled from the first valid Hello when empty).
std::optional<int> accept_hello(Connection &conn, const Server &server, const std::vector<int> &connected,
                                std::vector<std::string> &concepts, std::chrono::steady_clock::time_point deadline,
                                const MessageTap &tap);

/// Drive a full federation over established sessions (one per expected
/// participant, keyed by id). Throws ProtocolError after sending Error to
/// every remaining session if a participant times out, disconnects or
/// misbehaves.
FederationLog run_server_sessions(Server &server, std::vector<std::pair<int, std::unique_ptr<Connection>>> &sessions,
                                  const ServerOptions &options);

struct ParticipantOutcome {
  std::optional<Matrix> federated;  // final federated matrix, if any round ran
};

/// Participant side: Hello, then answer every ModelPush with a TrainResult;
/// on Terminate merge the final matrix, report once more and stop.
ParticipantOutcome run_participant_session(Participant &participant, Connection &conn, const MessageTap &tap = {});

/// Federation with every participant in its own thread over loopback connections.
FederationLog run_loopback(const FederationConfig &config, std::span<const data::DatasetPartition> partitions,
                           const MessageTap &tap = {});

// ---------------------------------------------------------------------------

struct TcpServerOptions {
  std::string bind_address = "127.0.0.1";
  unsigned short port = 5555;  // 0 picks a free port
  ServerOptions session;
  std::function<void(unsigned short port)> on_listening;
};

/// Accept one connection per expected participant and run the federation.
FederationLog serve(const TcpServerOptions &options, Server &server);

struct JoinOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 5555;
  std::chrono::milliseconds connect_timeout{std::chrono::seconds(30)};
  MessageTap tap;
};

ParticipantOutcome join(const JoinOptions &options, Participant &participant);

/// Server and participants in one process, talking over TCP on an ephemeral
/// localhost port. `tap` sees both directions and may be called from any thread
/// (calls are serialized).
FederationLog run_tcp_local(const FederationConfig &config, std::span<const data::DatasetPartition> partitions,
                            std::chrono::milliseconds round_timeout = std::chrono::seconds(300),
                            const MessageTap &tap = {});

/// Open a TCP connection (retrying until the timeout); used by join and tests.
std::unique_ptr<Connection> connect_tcp(const std::string &host, unsigned short port,
                                        std::chrono::milliseconds timeout);

}  // namespace ffcm::transport
