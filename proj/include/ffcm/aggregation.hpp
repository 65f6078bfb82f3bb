#pragma once

// Combining adjacency matrices: direct sum for disjoint concept sets, weighted
// averaging on shared concepts, and the two federated merge rules.

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ffcm/fcm.hpp"

namespace ffcm {

/// Square matrix whose rows and columns are indexed by concept name.
template <typename Scalar>
struct LabeledMatrix {
  std::vector<std::string> concept_names;
  AdjacencyMatrix<Scalar> matrix;

  Eigen::Index size() const { return static_cast<Eigen::Index>(concept_names.size()); }

  Eigen::Index index_of(const std::string &name) const {
    auto it = std::find(concept_names.begin(), concept_names.end(), name);
    return it == concept_names.end() ? -1 : static_cast<Eigen::Index>(it - concept_names.begin());
  }

  friend bool operator==(const LabeledMatrix &a, const LabeledMatrix &b) {
    return a.concept_names == b.concept_names && a.matrix.rows() == b.matrix.rows() &&
           a.matrix.cols() == b.matrix.cols() && a.matrix == b.matrix;
  }
};

template <typename Scalar>
void validate(const LabeledMatrix<Scalar> &m) {
  const auto n = m.size();
  if (m.matrix.rows() != n || m.matrix.cols() != n)
    throw std::invalid_argument("LabeledMatrix: dimensions do not match concept names");
  std::unordered_set<std::string> seen;
  for (const auto &name : m.concept_names)
    if (!seen.insert(name).second) throw std::invalid_argument("LabeledMatrix: duplicate concept name '" + name + "'");
  for (Eigen::Index i = 0; i < m.matrix.size(); ++i) {
    const Scalar w = m.matrix.data()[i];
    if (!(w >= Scalar(-1) && w <= Scalar(1))) throw std::invalid_argument("LabeledMatrix: entry outside [-1, 1]");
  }
}

template <typename Scalar>
bool same_concept_set(const LabeledMatrix<Scalar> &a, const LabeledMatrix<Scalar> &b) {
  if (a.concept_names.size() != b.concept_names.size()) return false;
  return std::all_of(a.concept_names.begin(), a.concept_names.end(),
                     [&](const std::string &n) { return b.index_of(n) >= 0; });
}

/// Rearrange `m` so that its concepts follow `order` (same set, any order).
template <typename Scalar>
LabeledMatrix<Scalar> reorder(const LabeledMatrix<Scalar> &m, const std::vector<std::string> &order) {
  LabeledMatrix<Scalar> out{order, AdjacencyMatrix<Scalar>(m.size(), m.size())};
  std::vector<Eigen::Index> src(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    src[i] = m.index_of(order[i]);
    if (src[i] < 0) throw std::invalid_argument("reorder: concept '" + order[i] + "' missing");
  }
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = 0; j < order.size(); ++j)
      out.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m.matrix(src[i], src[j]);
  return out;
}

/// Block-diagonal augmentation of maps with pairwise disjoint concept sets.
template <typename Scalar>
LabeledMatrix<Scalar> direct_sum(std::span<const LabeledMatrix<Scalar>> matrices) {
  if (matrices.empty()) throw std::invalid_argument("direct_sum: empty input");
  std::unordered_set<std::string> names;
  Eigen::Index total = 0;
  for (const auto &m : matrices) {
    validate(m);
    for (const auto &n : m.concept_names)
      if (!names.insert(n).second)
        throw std::invalid_argument("direct_sum: concept '" + n + "' is shared; use merge_common");
    total += m.size();
  }

  LabeledMatrix<Scalar> out{{}, AdjacencyMatrix<Scalar>::Zero(total, total)};
  out.concept_names.reserve(static_cast<std::size_t>(total));
  Eigen::Index offset = 0;
  for (const auto &m : matrices) {
    out.matrix.block(offset, offset, m.size(), m.size()) = m.matrix;
    out.concept_names.insert(out.concept_names.end(), m.concept_names.begin(), m.concept_names.end());
    offset += m.size();
  }
  return out;
}

/// Weighted element-wise average over the union of concepts. An entry (i, j)
/// averages only the matrices that contain both concepts; entries no matrix
/// defines are zero. Concepts appear in order of first occurrence.
template <typename Scalar>
LabeledMatrix<Scalar> merge_common(std::span<const LabeledMatrix<Scalar>> matrices, std::span<const Scalar> weights) {
  if (matrices.empty()) throw std::invalid_argument("merge_common: empty input");
  if (matrices.size() != weights.size()) throw std::invalid_argument("merge_common: one weight per matrix required");
  Scalar total_weight(0);
  for (auto w : weights) {
    if (!(w >= Scalar(0))) throw std::invalid_argument("merge_common: weights must be non-negative");
    total_weight += w;
  }
  if (!(total_weight > Scalar(0))) throw std::invalid_argument("merge_common: weights sum to zero");

  std::vector<std::string> names;
  std::unordered_map<std::string, Eigen::Index> position;
  for (const auto &m : matrices) {
    validate(m);
    for (const auto &n : m.concept_names)
      if (position.emplace(n, static_cast<Eigen::Index>(names.size())).second) names.push_back(n);
  }

  const auto n = static_cast<Eigen::Index>(names.size());
  AdjacencyMatrix<Scalar> sum = AdjacencyMatrix<Scalar>::Zero(n, n);
  AdjacencyMatrix<Scalar> weight_sum = AdjacencyMatrix<Scalar>::Zero(n, n);
  AdjacencyMatrix<Scalar> plain_sum = AdjacencyMatrix<Scalar>::Zero(n, n);
  AdjacencyMatrix<Scalar> count = AdjacencyMatrix<Scalar>::Zero(n, n);
  AdjacencyMatrix<Scalar> lo = AdjacencyMatrix<Scalar>::Constant(n, n, Scalar(2));
  AdjacencyMatrix<Scalar> hi = AdjacencyMatrix<Scalar>::Constant(n, n, Scalar(-2));
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const auto &m = matrices[k];
    std::vector<Eigen::Index> map(m.concept_names.size());
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = position.at(m.concept_names[i]);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      for (Eigen::Index j = 0; j < m.size(); ++j) {
        const auto gi = map[static_cast<std::size_t>(i)];
        const auto gj = map[static_cast<std::size_t>(j)];
        sum(gi, gj) += weights[k] * m.matrix(i, j);
        weight_sum(gi, gj) += weights[k];
        plain_sum(gi, gj) += m.matrix(i, j);
        count(gi, gj) += Scalar(1);
        lo(gi, gj) = std::min(lo(gi, gj), m.matrix(i, j));
        hi(gi, gj) = std::max(hi(gi, gj), m.matrix(i, j));
      }
    }
  }

  LabeledMatrix<Scalar> out{std::move(names), AdjacencyMatrix<Scalar>::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      Scalar v(0);
      if (count(i, j) > Scalar(0) && lo(i, j) == hi(i, j))
        v = lo(i, j);  // unanimous entries are reproduced exactly
      else if (weight_sum(i, j) > Scalar(0))
        v = sum(i, j) / weight_sum(i, j);
      else if (count(i, j) > Scalar(0))
        v = plain_sum(i, j) / count(i, j);  // defined only by zero-weight maps
      out.matrix(i, j) = std::clamp(v, Scalar(-1), Scalar(1));
    }
  }
  return out;
}

/// Participant-side merge of the federated map into the local one:
/// alpha * federated + (1 - alpha) * local, aligned by name, in local order.
template <typename Scalar>
LabeledMatrix<Scalar> local_merge(const LabeledMatrix<Scalar> &federated, const LabeledMatrix<Scalar> &local,
                                  Scalar alpha = Scalar(0.5)) {
  if (!(alpha >= Scalar(0) && alpha <= Scalar(1))) throw std::invalid_argument("local_merge: alpha must be in [0, 1]");
  validate(federated);
  validate(local);
  if (!same_concept_set(federated, local)) throw std::invalid_argument("local_merge: concept sets differ");

  const auto aligned = reorder(federated, local.concept_names);
  LabeledMatrix<Scalar> out{local.concept_names, alpha * aligned.matrix + (Scalar(1) - alpha) * local.matrix};
  out.matrix = out.matrix.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
  return out;
}

}  // namespace ffcm
