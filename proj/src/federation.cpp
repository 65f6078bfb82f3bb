#include "ffcm/federation.hpp"

#include <bit>
#include <cstring>
#include <future>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "ffcm/log.hpp"

namespace ffcm {

ClassifierSpec wdbc_classifier_spec() {
  ClassifierSpec spec;
  spec.feature_names = data::feature_names();
  spec.class1 = data::kMalignant;
  spec.class2 = data::kBenign;
  return spec;
}

std::uint64_t participant_seed(std::uint64_t base, int participant_id, int round) {
  // splitmix64 finalizer over the combined inputs
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(participant_id) +
                    0xbf58476d1ce4e5b9ULL * static_cast<std::uint64_t>(round);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string checksum(const Matrix &m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void *data, std::size_t n) {
    const auto *bytes = static_cast<const unsigned char *>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto &name : m.concept_names) {
    mix(name.data(), name.size());
    mix("\0", 1);
  }
  for (Eigen::Index i = 0; i < m.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.matrix.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(m.matrix(i, j));
      unsigned char le[8];
      for (int b = 0; b < 8; ++b) le[b] = static_cast<unsigned char>(bits >> (8 * b));
      mix(le, 8);
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

// ---------------------------------------------------------------------------

Participant::Participant(data::DatasetPartition partition, const FederationConfig &config)
    : partition_(std::move(partition)),
      train_(data::to_labeled(partition_.train)),
      test_(data::to_labeled(partition_.test)),
      config_(config) {
  if (train_.empty() || test_.empty())
    throw std::invalid_argument("participant " + std::to_string(id()) + " needs non-empty train and test splits");
  local_ = to_matrix(Vector::Zero(config_.spec.dimension()));
}

Matrix Participant::to_matrix(const Vector &position) const {
  auto model = classifier_from_position(config_.spec, position);
  Matrix m;
  for (const auto &c : model.concepts()) m.concept_names.push_back(c.name);
  m.matrix = model.adjacency();
  return m;
}

Vector Participant::to_position(const Matrix &m) const {
  std::vector<std::string> names;
  for (const auto &c : config_.spec.concepts()) names.push_back(c.name);
  return position_from_adjacency(config_.spec, reorder(m, names).matrix);
}

double Participant::accuracy_of(const Matrix &m) const {
  return evaluate_accuracy<double>(classifier_from_position(config_.spec, to_position(m)), test_, config_.spec.budget);
}

ParticipantReport Participant::initial_train() {
  PsoConfig pso = config_.pso;
  pso.seed = participant_seed(config_.seed, config_.shared_pso_seed ? 0 : id());
  const auto outcome = train(train_, config_.spec, pso);
  local_ = to_matrix(outcome.position);
  pre_accuracy_ = current_accuracy_ = accuracy_of(local_);
  trained_ = true;
  return {id(), 0, local_, current_accuracy_, std::nullopt};
}

ParticipantReport Participant::step(const Matrix &federated, int round) {
  if (!trained_) throw ProtocolError("participant " + std::to_string(id()) + " received a model before training");
  if (!same_concept_set(federated, local_))
    throw ProtocolError("participant " + std::to_string(id()) + ": federated concept set does not match the local one");

  const double federated_accuracy = accuracy_of(federated);
  local_ = local_merge(federated, local_, config_.merge_alpha);
  if (config_.retrain_per_round) {
    PsoConfig pso = config_.pso;
    pso.seed = participant_seed(config_.seed, config_.shared_pso_seed ? 0 : id(), round);
    local_ = to_matrix(train(train_, config_.spec, pso, to_position(local_)).position);
  }
  current_accuracy_ = accuracy_of(local_);
  return {id(), round, local_, current_accuracy_, federated_accuracy};
}

// ---------------------------------------------------------------------------

Server::Server(std::set<int> expected_participants, int max_rounds)
    : expected_(std::move(expected_participants)), max_rounds_(max_rounds) {
  if (expected_.empty()) throw std::invalid_argument("Server: no participants expected");
  if (max_rounds_ < 0) throw std::invalid_argument("Server: max_rounds must be non-negative");
}

void Server::submit(const ParticipantReport &report) {
  if (!expected_.contains(report.participant_id))
    throw ProtocolError("report from unexpected participant " + std::to_string(report.participant_id));
  if (report.round != round_)
    throw ProtocolError("participant " + std::to_string(report.participant_id) + " reported round " +
                        std::to_string(report.round) + " during round " + std::to_string(round_));
  if (!(report.accuracy >= 0.0 && report.accuracy <= 1.0))
    throw ProtocolError("participant " + std::to_string(report.participant_id) + " reported an accuracy outside [0, 1]");
  validate(report.matrix);
  auto [it, inserted] = received_.insert_or_assign(report.participant_id, report);
  if (!inserted)
    log::warn("duplicate report from participant " + std::to_string(report.participant_id) + " for round " +
              std::to_string(round_) + "; keeping the latest");
}

std::vector<int> Server::missing() const {
  std::vector<int> out;
  for (int id : expected_)
    if (!received_.contains(id)) out.push_back(id);
  return out;
}

void Server::record_received() {
  if (round_ == 0) {
    for (const auto &[id, r] : received_) log_.pre_accuracy[id] = r.accuracy;
    return;
  }
  auto &record = log_.rounds.back();
  for (const auto &[id, r] : received_) {
    record.accuracy[id] = r.accuracy;
    if (r.federated_accuracy) record.federated_accuracy[id] = *r.federated_accuracy;
  }
}

ServerDecision Server::step() {
  if (terminated_) throw ProtocolError("server already terminated");
  if (round_ >= max_rounds_) throw ProtocolError("server has no rounds left");
  if (!complete()) throw ProtocolError("server_step called before every participant reported");

  record_received();
  std::vector<ParticipantReport> reports;
  for (const auto &[id, r] : received_) reports.push_back(r);
  received_.clear();

  Matrix federated = server_aggregate(reports);
  ++round_;
  log_.rounds.push_back({round_, checksum(federated), {}, {}});
  log_.federated = federated;
  const auto kind = round_ == max_rounds_ ? ServerDecision::Kind::Terminate : ServerDecision::Kind::Broadcast;
  terminated_ = kind == ServerDecision::Kind::Terminate;
  return {kind, round_, std::move(federated)};
}

const FederationLog &Server::finish() {
  if (!complete()) throw ProtocolError("finish called before every participant reported");
  if (round_ != max_rounds_) throw ProtocolError("finish called before the last round");
  record_received();
  received_.clear();
  if (round_ > 0) log_.post_accuracy = log_.rounds.back().accuracy;
  terminated_ = true;
  return log_;
}

// ---------------------------------------------------------------------------

void write_log(std::ostream &out, const FederationLog &log) {
  using nlohmann::ordered_json;
  auto by_id = [](const std::map<int, double> &m) {
    ordered_json j = ordered_json::object();
    for (const auto &[id, v] : m) j[std::to_string(id)] = v;
    return j;
  };
  ordered_json j;
  j["pre_accuracy"] = by_id(log.pre_accuracy);
  j["rounds"] = ordered_json::array();
  for (const auto &r : log.rounds)
    j["rounds"].push_back({{"round", r.round},
                           {"federated_checksum", r.federated_checksum},
                           {"accuracy", by_id(r.accuracy)},
                           {"federated_accuracy", by_id(r.federated_accuracy)}});
  j["post_accuracy"] = by_id(log.post_accuracy);
  if (log.federated) {
    std::vector<double> values(log.federated->matrix.size());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), log.federated->matrix.rows(), log.federated->matrix.cols()) = log.federated->matrix;
    j["federated"] = {{"concepts", log.federated->concept_names}, {"values", values}};
  } else {
    j["federated"] = nullptr;
  }
  out << j.dump(2) << '\n';
}

FederationLog run_simulation(const FederationConfig &config, std::span<const data::DatasetPartition> partitions) {
  if (partitions.empty()) throw std::invalid_argument("run_simulation: no partitions");

  std::vector<Participant> participants;
  std::set<int> ids;
  for (const auto &p : partitions) {
    if (!ids.insert(p.participant_id).second)
      throw std::invalid_argument("run_simulation: duplicate participant id " + std::to_string(p.participant_id));
    participants.emplace_back(p, config);
  }
  Server server(ids, config.max_rounds);

  auto for_all = [&](auto &&fn) {
    std::vector<std::future<ParticipantReport>> pending;
    pending.reserve(participants.size());
    for (auto &p : participants) pending.push_back(std::async(std::launch::async, [&fn, &p] { return fn(p); }));
    for (auto &f : pending) server.submit(f.get());
  };

  for_all([](Participant &p) { return p.initial_train(); });
  while (server.round() < server.max_rounds()) {
    const auto decision = server.step();
    for_all([&](Participant &p) { return p.step(decision.federated, decision.round); });
  }
  return server.finish();
}

}  // namespace ffcm
