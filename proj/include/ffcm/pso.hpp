#pragma once

// Particle swarm learning of classifier FCMs. A particle's position holds the
// learnable adjacency entries (input -> output arcs) flattened output-major.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ffcm/fcm.hpp"

namespace ffcm {

using Vector = Eigen::VectorXd;
using Sample = LabeledSample<double>;

/// Uniform reals in [0, 1) from a 64-bit Mersenne twister. The conversion is
/// spelled out so streams are identical across standard libraries.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double operator()(double lo, double hi) { return lo + (hi - lo) * (*this)(); }

 private:
  std::mt19937_64 engine_;
};

enum class JaccardMode { Macro, PositiveClass };

/// 1 - Jaccard similarity between true and predicted label sets. Macro mode
/// averages the two per-class coefficients; a class absent from both sets
/// scores 1.
double jaccard_complement(std::span<const ClassLabel> truth, std::span<const ClassLabel> predicted,
                          JaccardMode mode = JaccardMode::Macro);

struct PsoConfig {
  int swarm_size = 30;
  int max_iterations = 100;
  double phi1 = 2.0;
  double phi2 = 2.0;
  double v_max = 0.5;
  double inertia = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Fixed structure of the classifier being learned.
struct ClassifierSpec {
  std::vector<std::string> feature_names;
  std::string class1 = "class1";
  std::string class2 = "class2";
  Activation activation = Activation::UnipolarSigmoid;
  double lambda = 1.0;
  DynamicsBudget budget;
  JaccardMode jaccard = JaccardMode::Macro;

  Eigen::Index dimension() const { return 2 * static_cast<Eigen::Index>(feature_names.size()); }
  std::vector<Concept> concepts() const { return classifier_concepts(feature_names, class1, class2); }
};

FcmModel<double> classifier_from_position(const ClassifierSpec &spec, const Vector &position);

/// Learnable entries of a classifier adjacency matrix; other arcs are ignored.
Vector position_from_adjacency(const ClassifierSpec &spec, const AdjacencyMatrix<double> &adjacency);

double fitness(const Vector &position, std::span<const Sample> train_set, const ClassifierSpec &spec);

struct Particle {
  Vector position;
  Vector velocity;
  Vector best_position;
  double best_fitness = std::numeric_limits<double>::infinity();
};

struct Swarm {
  std::vector<Particle> particles;
  Vector global_best_position;
  double global_best_fitness = std::numeric_limits<double>::infinity();
};

/// One velocity/position update. `uniform` yields reals in [0, 1); each
/// attraction term draws a fresh vector, scaled to [0, phi).
template <typename Uniform>
Particle update_particle(Particle p, const Vector &global_best, const PsoConfig &config, Uniform &&uniform) {
  const auto d = p.position.size();
  if (p.velocity.size() != d || p.best_position.size() != d || global_best.size() != d)
    throw std::invalid_argument("update_particle: dimension mismatch");

  Vector r1(d), r2(d);
  for (Eigen::Index i = 0; i < d; ++i) r1[i] = config.phi1 * uniform();
  for (Eigen::Index i = 0; i < d; ++i) r2[i] = config.phi2 * uniform();

  p.velocity = config.inertia * p.velocity + r1.cwiseProduct(p.best_position - p.position) +
               r2.cwiseProduct(global_best - p.position);
  p.velocity = p.velocity.cwiseMax(-config.v_max).cwiseMin(config.v_max);
  p.position = (p.position + p.velocity).cwiseMax(-1.0).cwiseMin(1.0);
  return p;
}

struct TrainOutcome {
  Vector position;
  double fitness = 1.0;
  std::vector<double> fitness_history;  // global best after each iteration
};

using SwarmObserver = std::function<void(int iteration, const Swarm &)>;

/// Runs the swarm for config.max_iterations iterations. When `initial_position`
/// is given, particle 0 starts there.
TrainOutcome train(std::span<const Sample> train_set, const ClassifierSpec &spec, const PsoConfig &config,
                   const std::optional<Vector> &initial_position = std::nullopt, const SwarmObserver &observer = {});

}  // namespace ffcm
