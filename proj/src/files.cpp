#include "ffcm/files.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <openssl/evp.h>

#include "json.hpp"

namespace ffcm::files {

using nlohmann::json;
using nlohmann::ordered_json;

std::string read_text(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data::DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string &path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data::DataError("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw data::DataError("failed writing '" + path + "'");
}

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX *ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

// --- models -------------------------------------------------------------------

namespace {

const char *activation_name(Activation a) {
  return a == Activation::UnipolarSigmoid ? "unipolar_sigmoid" : "hyperbolic_tangent";
}

json parse_json(std::string_view text, const char *what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error &e) {
    throw SchemaError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

template <typename T>
T field(const json &j, const char *key, const char *what) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(std::string(what) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &) {
    throw SchemaError(std::string(what) + ": field '" + key + "' has the wrong type");
  }
}

json scaler_json(const data::Scaler &s) {
  return {{"min", std::vector<double>(s.min.data(), s.min.data() + s.min.size())},
          {"max", std::vector<double>(s.max.data(), s.max.data() + s.max.size())}};
}

}  // namespace

std::string model_to_text(const FcmModel<double> &model) {
  ordered_json j;
  j["format"] = "ffcm-model";
  j["version"] = 1;
  j["activation"] = activation_name(model.activation());
  j["lambda"] = model.lambda();
  j["concepts"] = ordered_json::array();
  for (const auto &c : model.concepts())
    j["concepts"].push_back({{"name", c.name}, {"role", c.role == ConceptRole::Input ? "input" : "output"}});
  j["adjacency"] = ordered_json::array();
  for (Eigen::Index i = 0; i < model.size(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(model.size()));
    for (Eigen::Index k = 0; k < model.size(); ++k) row[static_cast<std::size_t>(k)] = model.adjacency()(i, k);
    j["adjacency"].push_back(row);
  }
  return j.dump(1) + "\n";
}

FcmModel<double> model_from_text(std::string_view text) {
  const auto j = parse_json(text, "model file");
  if (field<std::string>(j, "format", "model file") != "ffcm-model")
    throw SchemaError("model file: format must be 'ffcm-model'");
  if (field<int>(j, "version", "model file") != 1) throw SchemaError("model file: unsupported version");

  const auto act = field<std::string>(j, "activation", "model file");
  Activation activation;
  if (act == "unipolar_sigmoid")
    activation = Activation::UnipolarSigmoid;
  else if (act == "hyperbolic_tangent")
    activation = Activation::HyperbolicTangent;
  else
    throw SchemaError("model file: unknown activation '" + act + "'");

  std::vector<Concept> concepts;
  const auto &cs = j.at("concepts");
  if (!cs.is_array()) throw SchemaError("model file: concepts must be an array");
  for (const auto &c : cs) {
    const auto role = field<std::string>(c, "role", "model concept");
    if (role != "input" && role != "output") throw SchemaError("model file: unknown role '" + role + "'");
    concepts.push_back({field<std::string>(c, "name", "model concept"),
                        role == "input" ? ConceptRole::Input : ConceptRole::Output});
  }
  const auto rows = field<std::vector<std::vector<double>>>(j, "adjacency", "model file");
  const auto n = static_cast<Eigen::Index>(concepts.size());
  if (static_cast<Eigen::Index>(rows.size()) != n)
    throw SchemaError("model file: adjacency has " + std::to_string(rows.size()) + " rows for " + std::to_string(n) +
                      " concepts");
  AdjacencyMatrix<double> w(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n)
      throw SchemaError("model file: adjacency row " + std::to_string(i) + " has the wrong length");
    for (Eigen::Index k = 0; k < n; ++k) w(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  try {
    return {std::move(concepts), std::move(w), activation, field<double>(j, "lambda", "model file")};
  } catch (const std::invalid_argument &e) {
    throw SchemaError(std::string("model file: ") + e.what());
  }
}

void write_model(const std::string &path, const FcmModel<double> &model) { write_text(path, model_to_text(model)); }

FcmModel<double> read_model(const std::string &path) {
  try {
    return model_from_text(read_text(path));
  } catch (const SchemaError &e) {
    throw SchemaError(path + ": " + e.what());
  }
}

FcmModel<double> model_from_matrix(const Matrix &m, const ClassifierSpec &spec) {
  std::vector<std::string> names;
  for (const auto &c : spec.concepts()) names.push_back(c.name);
  return {spec.concepts(), reorder(m, names).matrix, spec.activation, spec.lambda};
}

void check_classifier_schema(const FcmModel<double> &model, const ClassifierSpec &spec) {
  const auto expected = spec.concepts();
  const auto &actual = model.concepts();
  if (actual.size() != expected.size())
    throw SchemaError("model has " + std::to_string(actual.size()) + " concepts, expected " +
                      std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (!(actual[i] == expected[i]))
      throw SchemaError("concept " + std::to_string(i) + " is '" + actual[i].name + "' (" +
                        (actual[i].role == ConceptRole::Input ? "input" : "output") + "), expected '" +
                        expected[i].name + "' (" + (expected[i].role == ConceptRole::Input ? "input" : "output") +
                        ")");
  }
}

// --- manifests ----------------------------------------------------------------

Manifest make_manifest(const data::DatasetPartition &p, int n_participants, double train_fraction, std::uint64_t seed,
                       const std::string &dataset, const std::string &dataset_hash) {
  Manifest m;
  m.participant_id = p.participant_id;
  m.n_participants = n_participants;
  m.train_fraction = train_fraction;
  m.seed = seed;
  m.dataset = dataset;
  m.dataset_hash = dataset_hash;
  for (const auto &s : p.train) m.train_ids.push_back(s.id);
  for (const auto &s : p.test) m.test_ids.push_back(s.id);
  m.scaler = p.scaler;
  return m;
}

std::string manifest_to_text(const Manifest &m) {
  ordered_json j;
  j["format"] = "ffcm-manifest";
  j["version"] = 1;
  j["participant_id"] = m.participant_id;
  j["n_participants"] = m.n_participants;
  j["train_fraction"] = m.train_fraction;
  j["seed"] = m.seed;
  j["dataset"] = m.dataset;
  j["dataset_hash"] = m.dataset_hash;
  j["train_ids"] = m.train_ids;
  j["test_ids"] = m.test_ids;
  j["scaler"] = scaler_json(m.scaler);
  return j.dump(1) + "\n";
}

Manifest manifest_from_text(std::string_view text) {
  const auto j = parse_json(text, "manifest");
  if (field<std::string>(j, "format", "manifest") != "ffcm-manifest")
    throw SchemaError("manifest: format must be 'ffcm-manifest'");
  if (field<int>(j, "version", "manifest") != 1) throw SchemaError("manifest: unsupported version");
  Manifest m;
  m.participant_id = field<int>(j, "participant_id", "manifest");
  m.n_participants = field<int>(j, "n_participants", "manifest");
  m.train_fraction = field<double>(j, "train_fraction", "manifest");
  m.seed = field<std::uint64_t>(j, "seed", "manifest");
  m.dataset = field<std::string>(j, "dataset", "manifest");
  m.dataset_hash = field<std::string>(j, "dataset_hash", "manifest");
  m.train_ids = field<std::vector<std::string>>(j, "train_ids", "manifest");
  m.test_ids = field<std::vector<std::string>>(j, "test_ids", "manifest");
  if (!j.contains("scaler")) throw SchemaError("manifest: missing field 'scaler'");
  const auto lo = field<std::vector<double>>(j.at("scaler"), "min", "manifest scaler");
  const auto hi = field<std::vector<double>>(j.at("scaler"), "max", "manifest scaler");
  if (lo.size() != static_cast<std::size_t>(data::kFeatureCount) || hi.size() != lo.size())
    throw SchemaError("manifest: scaler must hold " + std::to_string(data::kFeatureCount) + " min/max pairs");
  m.scaler.min = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  m.scaler.max = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  if ((m.scaler.max.array() < m.scaler.min.array()).any()) throw SchemaError("manifest: scaler max below min");
  if (m.train_ids.empty() || m.test_ids.empty()) throw SchemaError("manifest: empty train or test split");
  return m;
}

Manifest read_manifest(const std::string &path) {
  try {
    return manifest_from_text(read_text(path));
  } catch (const SchemaError &e) {
    throw SchemaError(path + ": " + e.what());
  }
}

data::DatasetPartition load_partition(const Manifest &m, std::span<const data::Sample> samples) {
  std::unordered_map<std::string, const data::Sample *> by_id;
  for (const auto &s : samples) by_id.emplace(s.id, &s);
  auto collect = [&](const std::vector<std::string> &ids) {
    std::vector<data::Sample> out;
    out.reserve(ids.size());
    for (const auto &id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw SchemaError("manifest names sample '" + id + "' which is not in the dataset");
      out.push_back(*it->second);
    }
    return out;
  };
  data::DatasetPartition p;
  p.participant_id = m.participant_id;
  p.scaler = m.scaler;
  p.train = data::apply_scaler(m.scaler, collect(m.train_ids));
  p.test = data::apply_scaler(m.scaler, collect(m.test_ids));
  return p;
}

// --- reports ------------------------------------------------------------------

namespace {

std::string fixed4(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

double mean_of(const std::map<int, double> &m) {
  if (m.empty()) return 0.0;
  double sum = 0.0;
  for (const auto &[id, v] : m) sum += v;
  return sum / static_cast<double>(m.size());
}

}  // namespace

void write_round_table(std::ostream &out, const FederationLog &log) {
  out << "round,participant,accuracy,federated_accuracy,federated_checksum\n";
  for (const auto &[id, acc] : log.pre_accuracy) out << "0," << id << ',' << fixed4(acc) << ",,\n";
  for (const auto &r : log.rounds) {
    for (const auto &[id, acc] : r.accuracy) {
      out << r.round << ',' << id << ',' << fixed4(acc) << ',';
      if (auto it = r.federated_accuracy.find(id); it != r.federated_accuracy.end()) out << fixed4(it->second);
      out << ',' << r.federated_checksum << '\n';
    }
  }
}

void write_accuracy_table(std::ostream &out, const FederationLog &log) {
  const bool post = !log.post_accuracy.empty();
  out << "participant,pre_federated" << (post ? ",post_federated" : "") << '\n';
  for (const auto &[id, pre] : log.pre_accuracy) {
    out << id << ',' << fixed4(pre);
    if (post) out << ',' << fixed4(log.post_accuracy.at(id));
    out << '\n';
  }
  out << "mean," << fixed4(mean_of(log.pre_accuracy));
  if (post) out << ',' << fixed4(mean_of(log.post_accuracy));
  out << '\n';
}

void write_summary(std::ostream &out, const FederationLog &log) {
  const bool post = !log.post_accuracy.empty();
  out << "Participant  Accuracy pre-federation" << (post ? "  Accuracy post-federation" : "") << '\n';
  for (const auto &[id, pre] : log.pre_accuracy) {
    out << std::setw(11) << id << "  " << std::setw(23) << fixed4(pre);
    if (post) out << "  " << std::setw(24) << fixed4(log.post_accuracy.at(id));
    out << '\n';
  }
  out << std::setw(11) << "mean" << "  " << std::setw(23) << fixed4(mean_of(log.pre_accuracy));
  if (post) out << "  " << std::setw(24) << fixed4(mean_of(log.post_accuracy));
  out << '\n' << "rounds: " << log.rounds.size() << '\n';
  if (!log.rounds.empty()) out << "final federated checksum: " << log.rounds.back().federated_checksum << '\n';
}

void write_matrix_csv(std::ostream &out, const Matrix &m) {
  out << "concept";
  for (const auto &n : m.concept_names) out << ',' << n;
  out << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out << m.concept_names[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < m.size(); ++k) out << ',' << m.matrix(i, k);
    out << '\n';
  }
}

}  // namespace ffcm::files
