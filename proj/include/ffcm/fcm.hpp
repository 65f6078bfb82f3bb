#pragma once

// Fuzzy cognitive map representation, dynamics and the two-output classifier
// readout. Everything here is templated on the scalar type and header-only.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ffcm {

enum class Activation { UnipolarSigmoid, HyperbolicTangent };

enum class ConceptRole { Input, Output };

// Label of a binary classifier: Class1 is read from the first output concept.
enum class ClassLabel { Class1 = 0, Class2 = 1 };

struct Concept {
  std::string name;
  ConceptRole role = ConceptRole::Input;

  friend bool operator==(const Concept &, const Concept &) = default;
};

template <typename Scalar>
struct StateRange {
  Scalar lower;
  Scalar upper;

  bool contains(Scalar v) const { return v >= lower && v <= upper; }
};

template <typename Scalar>
StateRange<Scalar> range_of(Activation activation) {
  if (activation == Activation::UnipolarSigmoid) return {Scalar(0), Scalar(1)};
  return {Scalar(-1), Scalar(1)};
}

template <typename Scalar>
using StateVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using AdjacencyMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
Scalar activate(Scalar x, Activation activation, Scalar lambda) {
  if (!std::isfinite(x)) throw std::invalid_argument("activate: non-finite input");
  if (!(lambda > Scalar(0)) || !std::isfinite(lambda))
    throw std::invalid_argument("activate: lambda must be a positive finite number");
  if (activation == Activation::UnipolarSigmoid) return Scalar(1) / (Scalar(1) + std::exp(-lambda * x));
  return std::tanh(lambda * x);
}

/// The 4-tuple of concepts, adjacency matrix, activation and state range.
/// Entry (j, i) of the adjacency matrix is the causal weight of concept j on
/// concept i. The range is implied by the activation.
template <typename Scalar>
class FcmModel {
 public:
  FcmModel(std::vector<Concept> concepts, AdjacencyMatrix<Scalar> adjacency,
           Activation activation = Activation::UnipolarSigmoid, Scalar lambda = Scalar(1))
      : concepts_(std::move(concepts)),
        adjacency_(std::move(adjacency)),
        activation_(activation),
        lambda_(lambda) {
    const auto n = static_cast<Eigen::Index>(concepts_.size());
    if (adjacency_.rows() != n || adjacency_.cols() != n)
      throw std::invalid_argument("FcmModel: adjacency dimension must equal concept count");
    if (!(lambda_ > Scalar(0)) || !std::isfinite(lambda_))
      throw std::invalid_argument("FcmModel: lambda must be positive");
    for (Eigen::Index i = 0; i < adjacency_.size(); ++i) {
      const Scalar w = adjacency_.data()[i];
      if (!(w >= Scalar(-1) && w <= Scalar(1)))
        throw std::invalid_argument("FcmModel: adjacency entries must lie in [-1, 1]");
    }
  }

  const std::vector<Concept> &concepts() const { return concepts_; }
  const AdjacencyMatrix<Scalar> &adjacency() const { return adjacency_; }
  Activation activation() const { return activation_; }
  Scalar lambda() const { return lambda_; }
  StateRange<Scalar> range() const { return range_of<Scalar>(activation_); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(concepts_.size()); }

  std::vector<Eigen::Index> indices_of(ConceptRole role) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < concepts_.size(); ++i)
      if (concepts_[i].role == role) out.push_back(static_cast<Eigen::Index>(i));
    return out;
  }

  bool is_classifier() const {
    return !indices_of(ConceptRole::Input).empty() && indices_of(ConceptRole::Output).size() == 2;
  }

 private:
  std::vector<Concept> concepts_;
  AdjacencyMatrix<Scalar> adjacency_;
  Activation activation_;
  Scalar lambda_;
};

/// Concepts whose state is held fixed while the dynamics run.
class ClampedSet {
 public:
  ClampedSet() = default;
  ClampedSet(Eigen::Index n, std::span<const Eigen::Index> indices) : mask_(static_cast<std::size_t>(n), false) {
    for (auto i : indices) {
      if (i < 0 || i >= n) throw std::invalid_argument("ClampedSet: index out of range");
      mask_[static_cast<std::size_t>(i)] = true;
    }
  }

  static ClampedSet all(Eigen::Index n) {
    ClampedSet s;
    s.mask_.assign(static_cast<std::size_t>(n), true);
    return s;
  }

  bool contains(Eigen::Index i) const {
    return i >= 0 && static_cast<std::size_t>(i) < mask_.size() && mask_[static_cast<std::size_t>(i)];
  }

 private:
  std::vector<bool> mask_;
};

template <typename Scalar>
bool in_range(const FcmModel<Scalar> &model, const StateVector<Scalar> &state) {
  const auto r = model.range();
  return (state.array() >= r.lower).all() && (state.array() <= r.upper).all();
}

/// One synchronous update: c_i(t) = f(sum_j w_ji c_j(t-1)) for free concepts,
/// c_i(t) = c_i(t-1) for clamped ones.
template <typename Scalar>
StateVector<Scalar> step(const FcmModel<Scalar> &model, const StateVector<Scalar> &state, const ClampedSet &clamped) {
  if (state.size() != model.size()) throw std::invalid_argument("step: state dimension does not match model");
  if (!in_range(model, state)) throw std::invalid_argument("step: state outside the model range");

  StateVector<Scalar> pre = model.adjacency().transpose() * state;
  StateVector<Scalar> next(state.size());
  for (Eigen::Index i = 0; i < state.size(); ++i)
    next[i] = clamped.contains(i) ? state[i] : activate(pre[i], model.activation(), model.lambda());
  return next;
}

enum class OutcomeKind { FixedPoint, LimitCycle, Exhausted };

template <typename Scalar>
struct DynamicsOutcome {
  OutcomeKind kind = OutcomeKind::Exhausted;
  int period = 0;  // cycle length for LimitCycle, 1 for FixedPoint, 0 otherwise
  StateVector<Scalar> final_state;
  int iterations = 0;
};

template <typename Scalar>
Scalar max_abs_diff(const StateVector<Scalar> &a, const StateVector<Scalar> &b) {
  return a.size() == 0 ? Scalar(0) : (a - b).cwiseAbs().maxCoeff();
}

/// Iterate `step` until two consecutive states agree within tol (fixed point),
/// an earlier state recurs within tol (limit cycle) or max_iters is reached.
template <typename Scalar>
DynamicsOutcome<Scalar> run_dynamics(const FcmModel<Scalar> &model, const StateVector<Scalar> &initial,
                                     const ClampedSet &clamped, Scalar tol, int max_iters) {
  if (!(tol > Scalar(0))) throw std::invalid_argument("run_dynamics: tol must be positive");
  if (max_iters <= 0) throw std::invalid_argument("run_dynamics: max_iters must be positive");

  std::vector<StateVector<Scalar>> history;
  history.reserve(static_cast<std::size_t>(max_iters) + 1);
  history.push_back(initial);

  for (int t = 1; t <= max_iters; ++t) {
    StateVector<Scalar> next = step(model, history.back(), clamped);
    if (max_abs_diff(next, history.back()) < tol) return {OutcomeKind::FixedPoint, 1, std::move(next), t};
    // history[k] is the state at time k; compare against all but the previous one
    for (std::size_t k = history.size() - 1; k-- > 0;) {
      if (max_abs_diff(next, history[k]) < tol) {
        const int period = t - static_cast<int>(k);
        return {OutcomeKind::LimitCycle, period, std::move(next), t};
      }
    }
    history.push_back(std::move(next));
  }
  return {OutcomeKind::Exhausted, 0, std::move(history.back()), max_iters};
}

struct DynamicsBudget {
  double tol = 1e-5;
  int max_iters = 100;
};

/// Decide between the two output concepts from their final states.
/// Ties go to Class1 (the lower concept index).
template <typename Scalar>
ClassLabel readout(Scalar first_output, Scalar second_output) {
  return second_output > first_output ? ClassLabel::Class2 : ClassLabel::Class1;
}

/// Clamp the input concepts to the features, run the dynamics and compare
/// the two output concepts. The final state is read whatever the outcome kind.
template <typename Scalar>
ClassLabel classify(const FcmModel<Scalar> &model, const StateVector<Scalar> &features,
                    const DynamicsBudget &budget = {}) {
  const auto inputs = model.indices_of(ConceptRole::Input);
  const auto outputs = model.indices_of(ConceptRole::Output);
  if (inputs.empty() || outputs.size() != 2)
    throw std::invalid_argument("classify: model needs at least one input and exactly two output concepts");
  if (features.size() != static_cast<Eigen::Index>(inputs.size()))
    throw std::invalid_argument("classify: feature count does not match input concepts");

  const auto r = model.range();
  StateVector<Scalar> state = StateVector<Scalar>::Constant(model.size(), std::max(r.lower, Scalar(0)));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!r.contains(features[static_cast<Eigen::Index>(k)]))
      throw std::invalid_argument("classify: feature outside the model range");
    state[inputs[k]] = features[static_cast<Eigen::Index>(k)];
  }
  const ClampedSet clamped(model.size(), inputs);
  const auto outcome = run_dynamics(model, state, clamped, Scalar(budget.tol), budget.max_iters);
  return readout(outcome.final_state[outputs[0]], outcome.final_state[outputs[1]]);
}

template <typename Scalar>
struct LabeledSample {
  StateVector<Scalar> features;
  ClassLabel label;
};

template <typename Scalar>
double evaluate_accuracy(const FcmModel<Scalar> &model, std::span<const LabeledSample<Scalar>> samples,
                         const DynamicsBudget &budget = {}) {
  if (samples.empty()) throw std::invalid_argument("evaluate_accuracy: empty sample list");
  std::size_t correct = 0;
  for (const auto &s : samples)
    if (classify(model, s.features, budget) == s.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

/// Concepts of a classifier: the named inputs followed by two outputs.
inline std::vector<Concept> classifier_concepts(std::span<const std::string> inputs, const std::string &class1,
                                                const std::string &class2) {
  std::vector<Concept> out;
  out.reserve(inputs.size() + 2);
  for (const auto &name : inputs) out.push_back({name, ConceptRole::Input});
  out.push_back({class1, ConceptRole::Output});
  out.push_back({class2, ConceptRole::Output});
  return out;
}

}  // namespace ffcm
