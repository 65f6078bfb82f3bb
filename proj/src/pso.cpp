#include "ffcm/pso.hpp"

#include <cmath>

namespace ffcm {

double jaccard_complement(std::span<const ClassLabel> truth, std::span<const ClassLabel> predicted, JaccardMode mode) {
  if (truth.empty()) throw std::invalid_argument("jaccard_complement: empty label set");
  if (truth.size() != predicted.size()) throw std::invalid_argument("jaccard_complement: length mismatch");

  std::size_t inter[2] = {0, 0};
  std::size_t uni[2] = {0, 0};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      const bool in_truth = static_cast<int>(truth[i]) == k;
      const bool in_pred = static_cast<int>(predicted[i]) == k;
      inter[k] += (in_truth && in_pred) ? 1 : 0;
      uni[k] += (in_truth || in_pred) ? 1 : 0;
    }
  }
  auto coefficient = [&](int k) {
    return uni[k] == 0 ? 1.0 : static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
  };
  const double similarity = mode == JaccardMode::Macro ? 0.5 * (coefficient(0) + coefficient(1)) : coefficient(0);
  return 1.0 - similarity;
}

void PsoConfig::validate() const {
  if (swarm_size < 2) throw std::invalid_argument("PsoConfig: swarm_size must be at least 2");
  if (max_iterations < 1) throw std::invalid_argument("PsoConfig: max_iterations must be positive");
  if (!(phi1 >= 0.0) || !(phi2 >= 0.0)) throw std::invalid_argument("PsoConfig: phi1 and phi2 must be non-negative");
  if (!(v_max > 0.0)) throw std::invalid_argument("PsoConfig: v_max must be positive");
  if (!std::isfinite(inertia)) throw std::invalid_argument("PsoConfig: inertia must be finite");
}

FcmModel<double> classifier_from_position(const ClassifierSpec &spec, const Vector &position) {
  const auto n_in = static_cast<Eigen::Index>(spec.feature_names.size());
  if (position.size() != spec.dimension()) throw std::invalid_argument("classifier_from_position: wrong dimension");
  AdjacencyMatrix<double> w = AdjacencyMatrix<double>::Zero(n_in + 2, n_in + 2);
  for (Eigen::Index k = 0; k < 2; ++k) w.col(n_in + k).head(n_in) = position.segment(k * n_in, n_in);
  return {spec.concepts(), std::move(w), spec.activation, spec.lambda};
}

Vector position_from_adjacency(const ClassifierSpec &spec, const AdjacencyMatrix<double> &adjacency) {
  const auto n_in = static_cast<Eigen::Index>(spec.feature_names.size());
  if (adjacency.rows() != n_in + 2 || adjacency.cols() != n_in + 2)
    throw std::invalid_argument("position_from_adjacency: wrong dimension");
  Vector position(spec.dimension());
  for (Eigen::Index k = 0; k < 2; ++k) position.segment(k * n_in, n_in) = adjacency.col(n_in + k).head(n_in);
  return position;
}

double fitness(const Vector &position, std::span<const Sample> train_set, const ClassifierSpec &spec) {
  if (train_set.empty()) throw std::invalid_argument("fitness: empty training set");
  const auto model = classifier_from_position(spec, position);
  std::vector<ClassLabel> truth, predicted;
  truth.reserve(train_set.size());
  predicted.reserve(train_set.size());
  for (const auto &s : train_set) {
    truth.push_back(s.label);
    predicted.push_back(classify(model, s.features, spec.budget));
  }
  return jaccard_complement(truth, predicted, spec.jaccard);
}

TrainOutcome train(std::span<const Sample> train_set, const ClassifierSpec &spec, const PsoConfig &config,
                   const std::optional<Vector> &initial_position, const SwarmObserver &observer) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  config.validate();
  const auto d = spec.dimension();
  if (initial_position && initial_position->size() != d)
    throw std::invalid_argument("train: initial position has the wrong dimension");

  UniformSource uniform(config.seed);
  Swarm swarm;
  swarm.particles.resize(static_cast<std::size_t>(config.swarm_size));
  for (auto &p : swarm.particles) {
    p.position.resize(d);
    p.velocity.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) p.position[i] = uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < d; ++i) p.velocity[i] = uniform(-config.v_max, config.v_max);
    p.best_position = p.position;
  }
  if (initial_position) {
    swarm.particles.front().position = initial_position->cwiseMax(-1.0).cwiseMin(1.0);
    swarm.particles.front().best_position = swarm.particles.front().position;
  }
  swarm.global_best_position = swarm.particles.front().position;

  TrainOutcome out;
  out.fitness_history.reserve(static_cast<std::size_t>(config.max_iterations));
  std::vector<double> scores(swarm.particles.size());
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    // fitness evaluations are independent; no RNG is consumed here
    for (std::size_t k = 0; k < swarm.particles.size(); ++k)
      scores[k] = fitness(swarm.particles[k].position, train_set, spec);

    for (std::size_t k = 0; k < swarm.particles.size(); ++k) {
      auto &p = swarm.particles[k];
      if (scores[k] < p.best_fitness) {
        p.best_fitness = scores[k];
        p.best_position = p.position;
      }
      if (scores[k] < swarm.global_best_fitness) {
        swarm.global_best_fitness = scores[k];
        swarm.global_best_position = p.position;
      }
    }
    out.fitness_history.push_back(swarm.global_best_fitness);
    if (observer) observer(iter, swarm);
    if (iter + 1 == config.max_iterations) break;

    for (auto &p : swarm.particles) p = update_particle(std::move(p), swarm.global_best_position, config, uniform);
  }

  out.position = swarm.global_best_position;
  out.fitness = swarm.global_best_fitness;
  return out;
}

}  // namespace ffcm
