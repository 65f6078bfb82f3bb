#include <stdexcept>
#include <string>
#include <vector>

#include "ffcm/log.hpp"
#include "ffcm/report.hpp"

namespace ffcm {

Matrix server_aggregate(std::span<const ParticipantReport> reports) {
  if (reports.empty()) throw std::invalid_argument("server_aggregate: no reports");

  std::vector<Matrix> matrices;
  std::vector<double> weights;
  matrices.reserve(reports.size());
  weights.reserve(reports.size());
  for (const auto &r : reports) {
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0))
      throw std::invalid_argument("server_aggregate: accuracy of participant " + std::to_string(r.participant_id) +
                                  " outside [0, 1]");
    if (!same_concept_set(r.matrix, reports.front().matrix))
      throw std::invalid_argument("server_aggregate: participant " + std::to_string(r.participant_id) +
                                  " reports a different concept set");
    matrices.push_back(reorder(r.matrix, reports.front().matrix.concept_names));
    weights.push_back(r.accuracy);
  }

  bool all_zero = true;
  for (double w : weights) all_zero = all_zero && w == 0.0;
  if (all_zero) {
    log::warn("server_aggregate: every reported accuracy is zero; using uniform weights");
    weights.assign(weights.size(), 1.0);
  }
  return merge_common<double>(matrices, weights);
}

}  // namespace ffcm
