#pragma once

// On-disk formats: model files, partition manifests and federation reports.

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ffcm/data.hpp"
#include "ffcm/federation.hpp"

namespace ffcm::files {

class SchemaError : public data::DataError {
 public:
  using data::DataError::DataError;
};

std::string read_text(const std::string &path);
void write_text(const std::string &path, std::string_view content);

/// SHA-1 of the git blob object for `content` (what `git hash-object` prints).
std::string git_blob_sha1(std::string_view content);

// Model file: JSON with concepts (name, role), activation, lambda and the
// adjacency matrix as rows.
std::string model_to_text(const FcmModel<double> &model);
FcmModel<double> model_from_text(std::string_view text);
void write_model(const std::string &path, const FcmModel<double> &model);
FcmModel<double> read_model(const std::string &path);

FcmModel<double> model_from_matrix(const Matrix &m, const ClassifierSpec &spec);

/// Throws SchemaError unless the model has the inputs and outputs of `spec`,
/// in that order.
void check_classifier_schema(const FcmModel<double> &model, const ClassifierSpec &spec);

struct Manifest {
  int participant_id = 0;
  int n_participants = 0;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::string dataset;       // path as given when splitting
  std::string dataset_hash;  // git blob SHA-1 of the dataset file
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  data::Scaler scaler;
};

Manifest make_manifest(const data::DatasetPartition &p, int n_participants, double train_fraction, std::uint64_t seed,
                       const std::string &dataset, const std::string &dataset_hash);
std::string manifest_to_text(const Manifest &m);
Manifest manifest_from_text(std::string_view text);
Manifest read_manifest(const std::string &path);

/// Rebuild the participant's normalized splits using the manifest's scaler.
data::DatasetPartition load_partition(const Manifest &m, std::span<const data::Sample> samples);

/// round,participant,accuracy,federated_accuracy,federated_checksum
void write_round_table(std::ostream &out, const FederationLog &log);

/// participant,pre_federated[,post_federated] plus a mean row.
void write_accuracy_table(std::ostream &out, const FederationLog &log);

void write_summary(std::ostream &out, const FederationLog &log);

void write_matrix_csv(std::ostream &out, const Matrix &m);

}  // namespace ffcm::files
