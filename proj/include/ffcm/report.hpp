#pragma once

#include <optional>
#include <span>

#include "ffcm/aggregation.hpp"

namespace ffcm {

using Matrix = LabeledMatrix<double>;

/// What a participant sends to the server after a round: its adjacency matrix
/// and its accuracy on the local test shard. Nothing else crosses the wire.
struct ParticipantReport {
  int participant_id = 0;
  int round = 0;
  Matrix matrix;
  double accuracy = 0.0;
  // Accuracy of the received federated matrix itself on the local test shard,
  // measured before the local merge. Absent for the initial report.
  std::optional<double> federated_accuracy;

  friend bool operator==(const ParticipantReport &, const ParticipantReport &) = default;
};

/// Accuracy-weighted average of the reported matrices. All reports must share
/// one concept set; if every accuracy is zero, weights fall back to uniform.
Matrix server_aggregate(std::span<const ParticipantReport> reports);

}  // namespace ffcm
