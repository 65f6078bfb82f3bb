#pragma once

// Small generators shared by the test binaries.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ffcm/aggregation.hpp"
#include "ffcm/data.hpp"

namespace ffcm::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  bool coin() { return integer(0, 1) == 1; }
  std::uint64_t bits() { return engine_(); }

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = real(lo, hi);
    return m;
  }

  Eigen::VectorXd vector(Eigen::Index n, double lo, double hi) { return matrix(n, 1, lo, hi); }

  std::mt19937_64 &engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline std::vector<std::string> names(int n, const std::string &prefix = "c") {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline LabeledMatrix<double> labeled(std::vector<std::string> names, Eigen::MatrixXd m) {
  return {std::move(names), std::move(m)};
}

/// A one-feature data sample with a fixed id.
inline data::Sample sample(std::string id, double feature, data::Diagnosis label, int features = data::kFeatureCount) {
  data::Sample s;
  s.id = std::move(id);
  s.features = Eigen::VectorXd::Constant(features, feature);
  s.label = label;
  return s;
}

}  // namespace ffcm::testing
