// ffcm: split WDBC into participant shards, train local FCM classifiers,
// run the federation (in-process or over TCP) and evaluate models.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 protocol error.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ffcm/federation.hpp"
#include "ffcm/files.hpp"
#include "ffcm/transport.hpp"

namespace fs = std::filesystem;
using namespace ffcm;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kProtocolError = 4 };

struct RunConfig {
  std::string dataset = "data/wdbc.data";
  int n_participants = 5;
  double train_fraction = 0.8;
  int rounds = 20;
  double tol = 1e-5;
  int dynamics_iterations = 100;
  double lambda = 1.0;
  std::string activation = "sigmoid";
  PsoConfig pso;
  std::string jaccard = "macro";
  bool retrain_per_round = false;
  double merge_alpha = 0.5;
  std::uint64_t seed = 1;
  std::string transport = "sim";
  std::string output_dir = "ffcm-out";
  std::string host = "127.0.0.1";
  std::string bind = "127.0.0.1";
  unsigned short port = 5555;
  double timeout_s = 300.0;
  std::string manifest_dir;
  bool dataset_given = false;  // --data set explicitly; otherwise manifests name the dataset
};

std::string dataset_override(const RunConfig &c) { return c.dataset_given ? c.dataset : std::string(); }

void add_run_options(CLI::App &app, RunConfig &c) {
  app.add_option("--data", c.dataset, "WDBC data file (id, diagnosis, 30 reals per row)")->capture_default_str();
  app.add_option("--participants", c.n_participants, "number of participants")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--train-fraction", c.train_fraction, "fraction of each shard used for training")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--rounds", c.rounds, "federated rounds")->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--tol", c.tol, "FCM steady-state tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--dynamics-iterations", c.dynamics_iterations, "cap on FCM iterations per classification")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--activation", c.activation, "activation function")
      ->check(CLI::IsMember({"sigmoid", "tanh"}))
      ->capture_default_str();
  app.add_option("--lambda", c.lambda, "activation steepness")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--swarm-size", c.pso.swarm_size, "PSO particles")->check(CLI::Range(2, 100000))->capture_default_str();
  app.add_option("--pso-iterations", c.pso.max_iterations, "PSO iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--phi1", c.pso.phi1, "cognitive coefficient")->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--phi2", c.pso.phi2, "social coefficient")->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--v-max", c.pso.v_max, "velocity clamp")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--inertia", c.pso.inertia, "velocity inertia")->capture_default_str();
  app.add_option("--jaccard", c.jaccard, "fitness averaging")
      ->check(CLI::IsMember({"macro", "positive"}))
      ->capture_default_str();
  app.add_flag("--retrain-per-round", c.retrain_per_round, "re-run PSO from the merged matrix every round");
  app.add_option("--merge-alpha", c.merge_alpha, "weight of the federated matrix in the local merge")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--seed", c.seed, "base seed for partitioning and PSO")->capture_default_str();
  app.add_option("--transport", c.transport, "federate over the in-process driver or TCP on localhost")
      ->check(CLI::IsMember({"sim", "tcp"}))
      ->capture_default_str();
  app.add_option("--out", c.output_dir, "output directory")->envname("FFCM_OUTPUT_DIR")->capture_default_str();
  app.add_option("--host", c.host, "server host for join")->capture_default_str();
  app.add_option("--bind", c.bind, "bind address for serve")->capture_default_str();
  app.add_option("--port", c.port, "TCP port (0 picks a free one when serving)")->capture_default_str();
  app.add_option("--timeout", c.timeout_s, "per-round straggler timeout in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

FederationConfig federation_config(const RunConfig &c) {
  FederationConfig f;
  f.max_rounds = c.rounds;
  f.merge_alpha = c.merge_alpha;
  f.retrain_per_round = c.retrain_per_round;
  f.seed = c.seed;
  f.pso = c.pso;
  f.spec = wdbc_classifier_spec();
  f.spec.activation = c.activation == "tanh" ? Activation::HyperbolicTangent : Activation::UnipolarSigmoid;
  f.spec.lambda = c.lambda;
  f.spec.budget = {c.tol, c.dynamics_iterations};
  f.spec.jaccard = c.jaccard == "positive" ? JaccardMode::PositiveClass : JaccardMode::Macro;
  return f;
}

std::chrono::milliseconds timeout_of(const RunConfig &c) {
  return std::chrono::milliseconds(static_cast<long long>(c.timeout_s * 1000.0));
}

std::string manifest_name(int id) { return "manifest_" + std::to_string(id) + ".json"; }

nlohmann::ordered_json config_json(const RunConfig &c) {
  return {{"dataset", c.dataset},
          {"n_participants", c.n_participants},
          {"train_fraction", c.train_fraction},
          {"rounds", c.rounds},
          {"tol", c.tol},
          {"dynamics_iterations", c.dynamics_iterations},
          {"activation", c.activation},
          {"lambda", c.lambda},
          {"swarm_size", c.pso.swarm_size},
          {"pso_iterations", c.pso.max_iterations},
          {"phi1", c.pso.phi1},
          {"phi2", c.pso.phi2},
          {"v_max", c.pso.v_max},
          {"inertia", c.pso.inertia},
          {"jaccard", c.jaccard},
          {"retrain_per_round", c.retrain_per_round},
          {"merge_alpha", c.merge_alpha},
          {"seed", c.seed},
          {"transport", c.transport}};
}

struct SplitResult {
  std::vector<data::DatasetPartition> partitions;
  std::vector<files::Manifest> manifests;
  std::string dataset_hash;
};

SplitResult split_dataset(const RunConfig &c) {
  const auto text = files::read_text(c.dataset);
  std::istringstream in(text);
  const auto samples = data::parse_wdbc(in);
  SplitResult r;
  r.dataset_hash = files::git_blob_sha1(text);
  r.partitions = data::partition(samples, c.n_participants, c.train_fraction, c.seed);
  for (const auto &p : r.partitions)
    r.manifests.push_back(
        files::make_manifest(p, c.n_participants, c.train_fraction, c.seed, c.dataset, r.dataset_hash));
  return r;
}

void write_manifests(const fs::path &dir, const std::vector<files::Manifest> &manifests) {
  fs::create_directories(dir);
  for (const auto &m : manifests)
    files::write_text((dir / manifest_name(m.participant_id)).string(), files::manifest_to_text(m));
}

std::vector<data::Sample> load_samples_for(const files::Manifest &m, const std::string &dataset) {
  const auto path = dataset.empty() ? m.dataset : dataset;
  const auto text = files::read_text(path);
  if (!m.dataset_hash.empty() && files::git_blob_sha1(text) != m.dataset_hash)
    throw files::SchemaError("dataset '" + path + "' does not match the manifest's content hash");
  std::istringstream in(text);
  return data::parse_wdbc(in);
}

void write_reports(const fs::path &dir, const FederationLog &log, const FederationConfig &fed,
                   nlohmann::ordered_json reproducibility) {
  fs::create_directories(dir);
  auto emit = [&](const char *name, auto &&writer) {
    std::ostringstream out;
    writer(out);
    files::write_text((dir / name).string(), out.str());
  };
  emit("rounds.csv", [&](std::ostream &o) { files::write_round_table(o, log); });
  emit("accuracy.csv", [&](std::ostream &o) { files::write_accuracy_table(o, log); });
  emit("summary.txt", [&](std::ostream &o) { files::write_summary(o, log); });
  emit("federation_log.json", [&](std::ostream &o) { write_log(o, log); });
  if (log.federated) {
    emit("federated_matrix.csv", [&](std::ostream &o) { files::write_matrix_csv(o, *log.federated); });
    files::write_model((dir / "federated_model.json").string(), files::model_from_matrix(*log.federated, fed.spec));
  }
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
  for (const auto &[id, acc] : log.pre_accuracy) seeds[std::to_string(id)] = participant_seed(fed.seed, id);
  reproducibility["participant_pso_seeds"] = seeds;
  files::write_text((dir / "reproducibility.json").string(), reproducibility.dump(2) + "\n");
}

// --- subcommands --------------------------------------------------------------

int cmd_split(const RunConfig &c) {
  const auto r = split_dataset(c);
  write_manifests(c.output_dir, r.manifests);
  std::size_t total = 0;
  for (const auto &m : r.manifests) {
    total += m.train_ids.size() + m.test_ids.size();
    std::cout << "participant " << m.participant_id << ": " << m.train_ids.size() << " train, " << m.test_ids.size()
              << " test -> " << (fs::path(c.output_dir) / manifest_name(m.participant_id)).string() << '\n';
  }
  std::cout << total << " samples in " << r.manifests.size() << " shards\n";
  return kOk;
}

int cmd_train(const RunConfig &c, const std::string &manifest_path) {
  const auto manifest = files::read_manifest(manifest_path);
  const auto samples = load_samples_for(manifest, dataset_override(c));
  const auto partition = files::load_partition(manifest, samples);
  const auto fed = federation_config(c);
  Participant participant(partition, fed);
  const auto report = participant.initial_train();

  fs::create_directories(c.output_dir);
  const auto path = fs::path(c.output_dir) / ("model_" + std::to_string(report.participant_id) + ".json");
  files::write_model(path.string(), files::model_from_matrix(report.matrix, fed.spec));
  std::cout << "participant " << report.participant_id << " test accuracy " << std::fixed << std::setprecision(4)
            << report.accuracy << " -> " << path.string() << '\n';
  return kOk;
}

int cmd_federate(const RunConfig &c, const std::vector<std::string> &argv) {
  const auto fed = federation_config(c);
  std::vector<data::DatasetPartition> partitions;
  nlohmann::ordered_json inputs;
  if (c.manifest_dir.empty()) {
    auto r = split_dataset(c);
    write_manifests(fs::path(c.output_dir) / "manifests", r.manifests);
    partitions = std::move(r.partitions);
    inputs = {{"dataset", c.dataset}, {"dataset_sha1", r.dataset_hash}, {"manifests", "auto-split"}};
  } else {
    std::vector<files::Manifest> manifests;
    for (int id = 1; id <= c.n_participants; ++id)
      manifests.push_back(files::read_manifest((fs::path(c.manifest_dir) / manifest_name(id)).string()));
    const auto samples = load_samples_for(manifests.front(), dataset_override(c));
    nlohmann::ordered_json hashes = nlohmann::ordered_json::object();
    for (const auto &m : manifests) {
      partitions.push_back(files::load_partition(m, samples));
      hashes[std::to_string(m.participant_id)] = files::git_blob_sha1(files::manifest_to_text(m));
    }
    inputs = {{"dataset", manifests.front().dataset},
              {"dataset_sha1", manifests.front().dataset_hash},
              {"manifest_dir", c.manifest_dir},
              {"manifest_sha1", hashes}};
  }

  FederationLog log;
  if (c.transport == "sim") {
    log = run_simulation(fed, partitions);
  } else {
    log = transport::run_tcp_local(fed, partitions, timeout_of(c));
  }

  std::string command;
  for (const auto &a : argv) command += (command.empty() ? "" : " ") + a;
  write_reports(c.output_dir, log, fed, {{"command", command}, {"config", config_json(c)}, {"inputs", inputs}});
  files::write_summary(std::cout, log);
  return kOk;
}

int cmd_serve(const RunConfig &c, const std::vector<std::string> &argv) {
  const auto fed = federation_config(c);
  std::set<int> ids;
  for (int id = 1; id <= c.n_participants; ++id) ids.insert(id);
  Server server(ids, fed.max_rounds);
  transport::TcpServerOptions options;
  options.bind_address = c.bind;
  options.port = c.port;
  options.session.round_timeout = timeout_of(c);
  options.on_listening = [&](unsigned short p) {
    std::cout << "listening on " << c.bind << ':' << p << " for " << ids.size() << " participants" << std::endl;
  };
  const auto log = transport::serve(options, server);

  std::string command;
  for (const auto &a : argv) command += (command.empty() ? "" : " ") + a;
  write_reports(c.output_dir, log, fed,
                {{"command", command}, {"config", config_json(c)}, {"inputs", {{"role", "server"}}}});
  files::write_summary(std::cout, log);
  return kOk;
}

int cmd_join(const RunConfig &c, const std::string &manifest_path) {
  const auto manifest = files::read_manifest(manifest_path);
  const auto samples = load_samples_for(manifest, dataset_override(c));
  const auto fed = federation_config(c);
  Participant participant(files::load_partition(manifest, samples), fed);
  transport::join({c.host, c.port, timeout_of(c), {}}, participant);

  fs::create_directories(c.output_dir);
  const auto path = fs::path(c.output_dir) / ("participant_" + std::to_string(participant.id()) + "_model.json");
  files::write_model(path.string(), files::model_from_matrix(participant.local_matrix(), fed.spec));
  std::cout << "participant " << participant.id() << " pre " << std::fixed << std::setprecision(4)
            << participant.pre_federation_accuracy() << " post " << participant.current_accuracy() << '\n';
  return kOk;
}

int cmd_evaluate(const RunConfig &c, const std::string &model_path, const std::string &manifest_path) {
  const auto model = files::read_model(model_path);
  const auto manifest = files::read_manifest(manifest_path);
  auto spec = wdbc_classifier_spec();
  files::check_classifier_schema(model, spec);
  const auto samples = load_samples_for(manifest, dataset_override(c));
  const auto partition = files::load_partition(manifest, samples);
  const auto test = data::to_labeled(partition.test);
  const double accuracy = evaluate_accuracy<double>(model, test, {c.tol, c.dynamics_iterations});
  std::cout << std::fixed << std::setprecision(4) << accuracy << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Federated fuzzy cognitive map classifiers"};
  app.set_config("--config", "", "key = value file overriding defaults (flags override the file)");
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig config;
  add_run_options(app, config);
  std::string manifest_path, model_path;

  auto *split = app.add_subcommand("split", "write per-participant partition manifests");
  auto *train = app.add_subcommand("train", "train one participant's local FCM from its manifest");
  train->add_option("--manifest", manifest_path, "partition manifest")->required();
  auto *federate = app.add_subcommand("federate", "run the full federation and write reports");
  federate->add_option("--manifest-dir", config.manifest_dir, "reuse manifests from a previous split");
  auto *serve = app.add_subcommand("serve", "run the federation server over TCP");
  auto *join = app.add_subcommand("join", "join a federation server as a participant");
  join->add_option("--manifest", manifest_path, "partition manifest")->required();
  auto *evaluate = app.add_subcommand("evaluate", "evaluate a model file on a manifest's test split");
  evaluate->add_option("--model", model_path, "model file")->required();
  evaluate->add_option("--manifest", manifest_path, "partition manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  config.dataset_given = app.count("--data") > 0;
  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (*split) return cmd_split(config);
    if (*train) return cmd_train(config, manifest_path);
    if (*federate) return cmd_federate(config, args);
    if (*serve) return cmd_serve(config, args);
    if (*join) return cmd_join(config, manifest_path);
    if (*evaluate) return cmd_evaluate(config, model_path, manifest_path);
  } catch (const data::DataError &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ProtocolError &e) {
    std::cerr << "protocol error: " << e.what() << '\n';
    return kProtocolError;
  } catch (const std::invalid_argument &e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kConfigError;
}
