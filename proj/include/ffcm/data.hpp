#pragma once

// WDBC ingestion, per-participant min-max scaling and seeded partitioning.

#include <cstdint>
#include <istream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ffcm/fcm.hpp"

namespace ffcm::data {

inline constexpr int kFeatureCount = 30;

enum class Diagnosis { Malignant, Benign };

/// Malignant is read from the first output concept.
inline ClassLabel to_label(Diagnosis d) { return d == Diagnosis::Malignant ? ClassLabel::Class1 : ClassLabel::Class2; }

/// Feature names in file order: ten measurements as mean, standard error, worst.
const std::vector<std::string> &feature_names();
inline const std::string kMalignant = "Malignant";
inline const std::string kBenign = "Benign";

struct Sample {
  std::string id;
  Eigen::VectorXd features;
  Diagnosis label = Diagnosis::Benign;
};

/// Problems with input files: unreadable, malformed or schema-violating.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string &what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Rows of `id,diagnosis,30 reals`, diagnosis in {M, B}. Blank lines are skipped.
std::vector<Sample> parse_wdbc(std::istream &in);
std::vector<Sample> load_wdbc(const std::string &path);

struct Scaler {
  Eigen::VectorXd min;
  Eigen::VectorXd max;
};

struct Normalized {
  Scaler scaler;
  std::vector<Sample> samples;
};

/// Min-max to [0, 1]; a constant feature maps to 0.
Normalized fit_normalize(std::span<const Sample> train);
std::vector<Sample> apply_scaler(const Scaler &scaler, std::span<const Sample> samples);

struct DatasetPartition {
  int participant_id = 0;
  std::vector<Sample> train;  // normalized
  std::vector<Sample> test;   // normalized with the train scaler, clipped
  Scaler scaler;
};

/// Seeded shuffle, near-equal shards (participant ids 1..n), then a stratified
/// train/test split inside each shard. Each scaler sees only its own train split.
std::vector<DatasetPartition> partition(std::span<const Sample> samples, int n_participants, double train_fraction,
                                        std::uint64_t seed);

/// Rebuild one participant's partition from sample ids (e.g. read back from a manifest).
DatasetPartition partition_from_ids(std::span<const Sample> samples, int participant_id,
                                    std::span<const std::string> train_ids, std::span<const std::string> test_ids);

std::vector<LabeledSample<double>> to_labeled(std::span<const Sample> samples);

}  // namespace ffcm::data
