#pragma once

// The federated round protocol as two state machines (server and participant)
// plus an in-process driver. Nothing here does I/O.

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffcm/data.hpp"
#include "ffcm/pso.hpp"
#include "ffcm/report.hpp"

namespace ffcm {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FederationConfig {
  int max_rounds = 20;
  double merge_alpha = 0.5;  // weight of the federated matrix in the local merge
  bool retrain_per_round = false;
  std::uint64_t seed = 0;
  bool shared_pso_seed = false;  // every participant trains with the same PSO stream
  PsoConfig pso;
  ClassifierSpec spec;
};

/// Classifier layout for WDBC: thirty inputs, Malignant and Benign outputs.
ClassifierSpec wdbc_classifier_spec();

/// Independent, reproducible PSO seed for a participant (and round, when retraining).
std::uint64_t participant_seed(std::uint64_t base, int participant_id, int round = 0);

/// Order-sensitive 64-bit FNV-1a digest of names and entry bit patterns, as hex.
std::string checksum(const Matrix &m);

class Participant {
 public:
  Participant(data::DatasetPartition partition, const FederationConfig &config);

  /// Train on the local train split and report round 0.
  ParticipantReport initial_train();

  /// Merge the federated matrix into the local one (optionally retrain from
  /// there), evaluate on the local test split and report `round`.
  ParticipantReport step(const Matrix &federated, int round);

  int id() const { return partition_.participant_id; }
  const Matrix &local_matrix() const { return local_; }
  double pre_federation_accuracy() const { return pre_accuracy_; }
  double current_accuracy() const { return current_accuracy_; }
  const data::DatasetPartition &partition() const { return partition_; }
  double accuracy_of(const Matrix &m) const;

 private:
  Matrix to_matrix(const Vector &position) const;
  Vector to_position(const Matrix &m) const;

  data::DatasetPartition partition_;
  std::vector<Sample> train_;
  std::vector<Sample> test_;
  FederationConfig config_;
  Matrix local_;
  double pre_accuracy_ = 0.0;
  double current_accuracy_ = 0.0;
  bool trained_ = false;
};

struct RoundRecord {
  int round = 0;
  std::string federated_checksum;
  std::map<int, double> accuracy;            // after the local merge
  std::map<int, double> federated_accuracy;  // federated matrix before the merge
};

struct FederationLog {
  std::map<int, double> pre_accuracy;
  std::vector<RoundRecord> rounds;
  std::map<int, double> post_accuracy;  // empty when no round ran
  std::optional<Matrix> federated;
};

/// Deterministic text rendering; equal logs give byte-identical output.
void write_log(std::ostream &out, const FederationLog &log);

struct ServerDecision {
  enum class Kind { Broadcast, Terminate };
  Kind kind = Kind::Broadcast;
  int round = 0;
  Matrix federated;
};

/// Server side of the protocol. Reports for the current round go through
/// `submit` (one owner; callers serialize); `step` aggregates once every
/// expected participant has reported.
class Server {
 public:
  Server(std::set<int> expected_participants, int max_rounds);

  int round() const { return round_; }
  int max_rounds() const { return max_rounds_; }
  const std::set<int> &expected() const { return expected_; }
  bool terminated() const { return terminated_; }

  void submit(const ParticipantReport &report);
  bool complete() const { return received_.size() == expected_.size(); }
  std::vector<int> missing() const;

  /// Aggregate the current reports weighted by accuracy and advance the round.
  ServerDecision step();

  /// Record the reports answering the last broadcast (or the initial ones when
  /// max_rounds is 0) and close the log.
  const FederationLog &finish();

  const FederationLog &log() const { return log_; }

 private:
  void record_received();

  std::set<int> expected_;
  int max_rounds_;
  int round_ = 0;
  bool terminated_ = false;
  std::map<int, ParticipantReport> received_;
  FederationLog log_;
};

/// Whole protocol in one process: initial training, then max_rounds of
/// server_step / participant_step. Participants train concurrently.
FederationLog run_simulation(const FederationConfig &config, std::span<const data::DatasetPartition> partitions);

}  // namespace ffcm
