// Drives the ffcm executable end to end and checks the on-disk formats.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "ffcm/files.hpp"

namespace fs = std::filesystem;
using namespace ffcm;

namespace {

const std::string kData = std::string(FFCM_SOURCE_DIR) + "/data/wdbc.data";
// Small swarm so that federating the full dataset stays quick.
const std::string kQuick = " --swarm-size 6 --pso-iterations 4";

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("ffcm_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string &args, const std::string &env = "") {
  static int counter = 0;
  const auto capture = fs::temp_directory_path() / ("ffcm_cli_out_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  const auto cmd = env + (env.empty() ? "" : " ") + std::string(FFCM_CLI) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = files::read_text(capture.string());
  fs::remove(capture);
  return r;
}

std::string slurp(const fs::path &p) { return files::read_text(p.string()); }

std::vector<std::string> lines_of(const std::string &text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Twenty rows in which the first feature marks malignant and the second benign.
void write_toy_dataset(const fs::path &path) {
  std::ofstream out(path);
  for (int i = 0; i < 20; ++i) {
    const bool malignant = i % 2 == 0;
    out << "toy" << i << ',' << (malignant ? 'M' : 'B') << ',' << (malignant ? 10 : 0) << ',' << (malignant ? 0 : 10);
    for (int k = 2; k < data::kFeatureCount; ++k) out << ",1.5";
    out << '\n';
  }
}

FcmModel<double> toy_model(const ClassifierSpec &spec) {
  AdjacencyMatrix<double> w = AdjacencyMatrix<double>::Zero(32, 32);
  w(0, 30) = 1.0;
  w(1, 31) = 1.0;
  return {spec.concepts(), w, spec.activation, spec.lambda};
}

}  // namespace

TEST_CASE("split writes manifests covering the dataset") {
  const auto dir = scratch("split");
  const auto r = run("split --data " + kData + " --out " + dir.string());
  REQUIRE(r.code == 0);
  std::set<std::string> ids;
  std::size_t total = 0;
  for (int id = 1; id <= 5; ++id) {
    const auto m = files::read_manifest((dir / ("manifest_" + std::to_string(id) + ".json")).string());
    CHECK(m.participant_id == id);
    CHECK(m.n_participants == 5);
    CHECK(m.dataset_hash == files::git_blob_sha1(slurp(kData)));
    for (const auto &s : m.train_ids) ids.insert(s);
    for (const auto &s : m.test_ids) ids.insert(s);
    total += m.train_ids.size() + m.test_ids.size();
  }
  CHECK(ids.size() == 569);
  CHECK(total == 569);
  CHECK_FALSE(fs::exists(dir / "manifest_6.json"));

  const auto again = scratch("split_again");
  REQUIRE(run("split --data " + kData + " --out " + again.string()).code == 0);
  for (int id = 1; id <= 5; ++id) {
    const auto name = "manifest_" + std::to_string(id) + ".json";
    CHECK(slurp(dir / name) == slurp(again / name));
  }

  const auto other = scratch("split_other");
  REQUIRE(run("split --seed 2 --data " + kData + " --out " + other.string()).code == 0);
  CHECK(slurp(dir / "manifest_1.json") != slurp(other / "manifest_1.json"));
}

TEST_CASE("argument and input errors map to exit codes") {
  const auto dir = scratch("errors");
  CHECK(run("split --participants 0 --data " + kData + " --out " + dir.string()).code == 2);
  CHECK(run("split --train-fraction 1.5 --data " + kData + " --out " + dir.string()).code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("split --data " + (dir / "missing.data").string() + " --out " + dir.string()).code == 3);

  std::ofstream(dir / "bad.data") << "a,M,1,2,3\n";
  const auto bad = run("split --data " + (dir / "bad.data").string() + " --out " + dir.string());
  CHECK(bad.code == 3);
  CHECK(bad.out.find("line 1") != std::string::npos);

  std::ofstream(dir / "bogus.json") << "{\"format\":\"something-else\"}";
  CHECK(run("train --manifest " + (dir / "bogus.json").string() + " --out " + dir.string()).code == 3);
}

TEST_CASE("configuration file and environment") {
  const auto dir = scratch("config");
  std::ofstream(dir / "run.ini") << "participants = 3\nseed = 7\ndata = " << kData << "\n";
  REQUIRE(run("--config " + (dir / "run.ini").string() + " split --out " + (dir / "a").string()).code == 0);
  CHECK(fs::exists(dir / "a" / "manifest_3.json"));
  CHECK_FALSE(fs::exists(dir / "a" / "manifest_4.json"));
  CHECK(files::read_manifest((dir / "a" / "manifest_1.json").string()).seed == 7);

  REQUIRE(run("--config " + (dir / "run.ini").string() + " split --participants 4 --out " + (dir / "b").string()).code == 0);
  CHECK(fs::exists(dir / "b" / "manifest_4.json"));

  REQUIRE(run("split --data " + kData, "FFCM_OUTPUT_DIR=" + (dir / "env").string()).code == 0);
  CHECK(fs::exists(dir / "env" / "manifest_5.json"));
}

TEST_CASE("federate writes the reports") {
  const auto dir = scratch("federate");
  const auto r = run("federate --rounds 2 --data " + kData + kQuick + " --out " + (dir / "sim").string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Accuracy post-federation") != std::string::npos);

  const auto table = lines_of(slurp(dir / "sim" / "accuracy.csv"));
  REQUIRE(table.size() == 7);
  CHECK(table.front() == "participant,pre_federated,post_federated");
  CHECK(table.back().rfind("mean,", 0) == 0);

  const auto rounds = lines_of(slurp(dir / "sim" / "rounds.csv"));
  CHECK(rounds.size() == 1 + 5 * 3);
  for (const char *name : {"summary.txt", "federation_log.json", "federated_matrix.csv", "federated_model.json",
                           "reproducibility.json", "manifests/manifest_5.json"})
    CHECK(fs::exists(dir / "sim" / name));

  const auto repro = nlohmann::json::parse(slurp(dir / "sim" / "reproducibility.json"));
  CHECK(repro["inputs"]["dataset_sha1"] == files::git_blob_sha1(slurp(kData)));
  CHECK(repro["config"]["rounds"] == 2);
  CHECK(repro["participant_pso_seeds"].size() == 5);

  // TCP on localhost gives the same log and report schema.
  const auto tcp = run("federate --transport tcp --rounds 2 --data " + kData + kQuick + " --out " + (dir / "tcp").string());
  REQUIRE(tcp.code == 0);
  CHECK(slurp(dir / "tcp" / "federation_log.json") == slurp(dir / "sim" / "federation_log.json"));
  CHECK(slurp(dir / "tcp" / "accuracy.csv") == slurp(dir / "sim" / "accuracy.csv"));

  // Reusing the manifests reproduces the run.
  const auto reuse = run("federate --rounds 2 --manifest-dir " + (dir / "sim" / "manifests").string() + kQuick +
                         " --out " + (dir / "reuse").string());
  REQUIRE(reuse.code == 0);
  CHECK(slurp(dir / "reuse" / "federation_log.json") == slurp(dir / "sim" / "federation_log.json"));

  const auto e = run("evaluate --model " + (dir / "sim" / "federated_model.json").string() + " --manifest " +
                     (dir / "sim" / "manifests" / "manifest_5.json").string());
  REQUIRE(e.code == 0);
  const auto line = lines_of(e.out).back();
  CHECK(line.size() == 6);
  const double acc = std::stod(line);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}

TEST_CASE("zero rounds reports the pre-federation column only") {
  const auto dir = scratch("zero");
  REQUIRE(run("federate --rounds 0 --data " + kData + kQuick + " --out " + dir.string()).code == 0);
  const auto table = lines_of(slurp(dir / "accuracy.csv"));
  REQUIRE(table.size() == 7);
  CHECK(table.front() == "participant,pre_federated");
  CHECK_FALSE(fs::exists(dir / "federated_model.json"));
}

TEST_CASE("train and evaluate a local model") {
  const auto dir = scratch("train");
  REQUIRE(run("split --data " + kData + " --out " + dir.string()).code == 0);
  const auto manifest = (dir / "manifest_2.json").string();
  const auto t = run("train --manifest " + manifest + kQuick + " --out " + dir.string());
  REQUIRE(t.code == 0);
  const auto model = files::read_model((dir / "model_2.json").string());
  CHECK_NOTHROW(files::check_classifier_schema(model, wdbc_classifier_spec()));

  const auto e = run("evaluate --model " + (dir / "model_2.json").string() + " --manifest " + manifest);
  REQUIRE(e.code == 0);
  CHECK(t.out.find("test accuracy " + lines_of(e.out).back()) != std::string::npos);

  // A dataset that does not match the manifest's hash is refused.
  std::ofstream(dir / "other.data") << slurp(kData) << "\n";
  CHECK(run("evaluate --model " + (dir / "model_2.json").string() + " --manifest " + manifest + " --data " +
            (dir / "other.data").string())
            .code == 3);
}

TEST_CASE("evaluate on a toy shard") {
  const auto dir = scratch("toy");
  write_toy_dataset(dir / "toy.data");
  REQUIRE(run("split --participants 1 --train-fraction 0.5 --data " + (dir / "toy.data").string() + " --out " +
              dir.string())
              .code == 0);
  const auto spec = wdbc_classifier_spec();
  files::write_model((dir / "perfect.json").string(), toy_model(spec));
  const auto e = run("evaluate --model " + (dir / "perfect.json").string() + " --manifest " +
                     (dir / "manifest_1.json").string());
  REQUIRE(e.code == 0);
  CHECK(lines_of(e.out).back() == "1.0000");

  auto renamed = spec;
  renamed.feature_names[0] = "radius";
  files::write_model((dir / "renamed.json").string(), toy_model(renamed));
  const auto bad = run("evaluate --model " + (dir / "renamed.json").string() + " --manifest " +
                       (dir / "manifest_1.json").string());
  CHECK(bad.code == 3);
  CHECK(bad.out.find("radius") != std::string::npos);
}

TEST_CASE("file formats round trip") {
  CHECK(files::git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(files::git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");

  const auto spec = wdbc_classifier_spec();
  auto model = toy_model(spec);
  const auto text = files::model_to_text(model);
  const auto back = files::model_from_text(text);
  CHECK(back.concepts() == model.concepts());
  CHECK(back.adjacency() == model.adjacency());
  CHECK(back.lambda() == model.lambda());
  CHECK(files::model_to_text(back) == text);
  CHECK_THROWS_AS(files::model_from_text("{}"), files::SchemaError);
  CHECK_THROWS_AS(files::model_from_text("not json"), files::SchemaError);

  const auto samples = data::load_wdbc(kData);
  const auto parts = data::partition(samples, 3, 0.8, 11);
  const auto m = files::make_manifest(parts[1], 3, 0.8, 11, kData, "abc");
  const auto m2 = files::manifest_from_text(files::manifest_to_text(m));
  CHECK(files::manifest_to_text(m2) == files::manifest_to_text(m));
  const auto p = files::load_partition(m2, samples);
  REQUIRE(p.test.size() == parts[1].test.size());
  for (std::size_t i = 0; i < p.test.size(); ++i) CHECK(p.test[i].features == parts[1].test[i].features);

  auto missing = m;
  missing.train_ids.push_back("nobody");
  CHECK_THROWS_AS(files::load_partition(missing, samples), files::SchemaError);
}
