#include "ffcm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "ffcm/pso.hpp"

namespace ffcm::data {

const std::vector<std::string> &feature_names() {
  static const std::vector<std::string> names = [] {
    const char *measures[] = {"radius",      "texture",   "perimeter",      "area",     "smoothness",
                              "compactness", "concavity", "concave_points", "symmetry", "fractal_dimension"};
    std::vector<std::string> out;
    for (const char *suffix : {"mean", "se", "worst"})
      for (const char *m : measures) out.push_back(std::string(m) + "_" + suffix);
    return out;
  }();
  return names;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_real(std::string_view field, std::size_t line, int column) {
  field = trim(field);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v))
    throw ParseError(line, "field " + std::to_string(column + 1) + " is not a real number: '" + std::string(field) + "'");
  return v;
}

}  // namespace

std::vector<Sample> parse_wdbc(std::istream &in) {
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;

    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != static_cast<std::size_t>(kFeatureCount + 2))
      throw ParseError(lineno, "expected " + std::to_string(kFeatureCount + 2) + " fields, found " +
                                   std::to_string(fields.size()));

    Sample s;
    s.id = std::string(trim(fields[0]));
    if (s.id.empty()) throw ParseError(lineno, "empty sample id");
    const auto diagnosis = trim(fields[1]);
    if (diagnosis == "M")
      s.label = Diagnosis::Malignant;
    else if (diagnosis == "B")
      s.label = Diagnosis::Benign;
    else
      throw ParseError(lineno, "diagnosis must be M or B, found '" + std::string(diagnosis) + "'");
    s.features.resize(kFeatureCount);
    for (int k = 0; k < kFeatureCount; ++k) s.features[k] = parse_real(fields[static_cast<std::size_t>(k + 2)], lineno, k + 2);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> load_wdbc(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return parse_wdbc(in);
}

std::vector<Sample> apply_scaler(const Scaler &scaler, std::span<const Sample> samples) {
  std::vector<Sample> out(samples.begin(), samples.end());
  const Eigen::VectorXd span = scaler.max - scaler.min;
  for (auto &s : out) {
    if (s.features.size() != scaler.min.size()) throw std::invalid_argument("apply_scaler: feature count mismatch");
    for (Eigen::Index k = 0; k < s.features.size(); ++k) {
      const double v = span[k] > 0.0 ? (s.features[k] - scaler.min[k]) / span[k] : 0.0;
      s.features[k] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

Normalized fit_normalize(std::span<const Sample> train) {
  if (train.empty()) throw std::invalid_argument("fit_normalize: empty sample list");
  Scaler scaler{train.front().features, train.front().features};
  for (const auto &s : train) {
    if (s.features.size() != scaler.min.size()) throw std::invalid_argument("fit_normalize: feature count mismatch");
    scaler.min = scaler.min.cwiseMin(s.features);
    scaler.max = scaler.max.cwiseMax(s.features);
  }
  auto samples = apply_scaler(scaler, train);
  return {std::move(scaler), std::move(samples)};
}

namespace {

// Fisher-Yates with an explicit index draw so the order is library independent.
void seeded_shuffle(std::vector<std::size_t> &v, std::uint64_t seed) {
  UniformSource uniform(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform() * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

DatasetPartition make_partition(int participant_id, std::vector<Sample> train, std::vector<Sample> test) {
  auto normalized = fit_normalize(train);
  DatasetPartition p;
  p.participant_id = participant_id;
  p.train = std::move(normalized.samples);
  p.test = apply_scaler(normalized.scaler, test);
  p.scaler = std::move(normalized.scaler);
  return p;
}

}  // namespace

std::vector<DatasetPartition> partition(std::span<const Sample> samples, int n_participants, double train_fraction,
                                        std::uint64_t seed) {
  if (n_participants < 1) throw std::invalid_argument("partition: need at least one participant");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("partition: train_fraction must be in (0, 1)");
  const auto n = static_cast<std::size_t>(n_participants);
  if (samples.size() < 4 * n) throw std::invalid_argument("partition: too few samples for the number of participants");

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, seed);

  std::vector<DatasetPartition> out;
  out.reserve(n);
  const std::size_t base = samples.size() / n, extra = samples.size() % n;
  std::size_t begin = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t size = base + (p < extra ? 1 : 0);
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = begin; i < begin + size; ++i)
      by_class[samples[order[i]].label == Diagnosis::Malignant ? 0 : 1].push_back(order[i]);
    begin += size;

    std::vector<Sample> train, test;
    for (const auto &members : by_class) {
      const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(members.size())));
      if (n_train == 0)
        throw std::invalid_argument("partition: participant " + std::to_string(p + 1) +
                                    " would train without one of the classes; use fewer, larger shards");
      for (std::size_t k = 0; k < members.size(); ++k)
        (k < n_train ? train : test).push_back(samples[members[k]]);
    }
    if (test.empty())
      throw std::invalid_argument("partition: participant " + std::to_string(p + 1) + " has an empty test split");
    out.push_back(make_partition(static_cast<int>(p + 1), std::move(train), std::move(test)));
  }
  return out;
}

DatasetPartition partition_from_ids(std::span<const Sample> samples, int participant_id,
                                    std::span<const std::string> train_ids, std::span<const std::string> test_ids) {
  std::unordered_map<std::string, const Sample *> by_id;
  for (const auto &s : samples) by_id.emplace(s.id, &s);
  auto collect = [&](std::span<const std::string> ids) {
    std::vector<Sample> out;
    for (const auto &id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw std::invalid_argument("sample id '" + id + "' not found in the dataset");
      out.push_back(*it->second);
    }
    return out;
  };
  auto train = collect(train_ids);
  auto test = collect(test_ids);
  if (train.empty()) throw std::invalid_argument("partition_from_ids: empty train split");
  return make_partition(participant_id, std::move(train), std::move(test));
}

std::vector<LabeledSample<double>> to_labeled(std::span<const Sample> samples) {
  std::vector<LabeledSample<double>> out;
  out.reserve(samples.size());
  for (const auto &s : samples) out.push_back({s.features, to_label(s.label)});
  return out;
}

}  // namespace ffcm::data
