#include <charconv>
#include <cmath>
#include <set>

#include "json.hpp"

#include "ffcm/transport.hpp"

namespace ffcm::transport {

using nlohmann::json;

std::string format_real(double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("format_real: non-finite value");
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  std::string s(buf, end);
  // keep reals recognisable as reals (and -0.0 distinct from 0)
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

namespace {

void append_string(std::string &out, const std::string &s) { out += json(s).dump(); }

void append_matrix(std::string &out, const Matrix &m) {
  out += "{\"concepts\":[";
  for (std::size_t i = 0; i < m.concept_names.size(); ++i) {
    if (i) out += ',';
    append_string(out, m.concept_names[i]);
  }
  out += "],\"values\":[";
  bool first = true;
  for (Eigen::Index i = 0; i < m.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.matrix.cols(); ++j) {
      if (!first) out += ',';
      first = false;
      out += format_real(m.matrix(i, j));
    }
  }
  out += "]}";
}

std::string header(const char *type) {
  return std::string("{\"protocol_version\":") + std::to_string(kProtocolVersion) + ",\"type\":\"" + type + "\"";
}

// --- decoding helpers -------------------------------------------------------

void require_keys(const json &j, std::initializer_list<const char *> required,
                  std::initializer_list<const char *> optional = {}) {
  std::set<std::string> allowed;
  for (const char *k : required) {
    if (!j.contains(k)) throw DecodeError("schema", std::string("missing field '") + k + "'");
    allowed.insert(k);
  }
  for (const char *k : optional) allowed.insert(k);
  for (const auto &[key, _] : j.items())
    if (!allowed.contains(key)) throw DecodeError("schema", "unexpected field '" + key + "'");
}

int get_int(const json &j, const char *key) {
  const auto &v = j.at(key);
  if (!v.is_number_integer()) throw DecodeError("schema", std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

double get_real(const json &v, const char *what) {
  if (!v.is_number()) throw DecodeError("schema", std::string(what) + " must be a number");
  return v.get<double>();
}

std::vector<std::string> get_names(const json &v) {
  if (!v.is_array()) throw DecodeError("schema", "concepts must be an array");
  std::vector<std::string> out;
  for (const auto &n : v) {
    if (!n.is_string()) throw DecodeError("schema", "concept names must be strings");
    out.push_back(n.get<std::string>());
  }
  return out;
}

Matrix get_matrix(const json &j) {
  if (!j.is_object()) throw DecodeError("schema", "matrix must be an object");
  require_keys(j, {"concepts", "values"});
  Matrix m;
  m.concept_names = get_names(j.at("concepts"));
  const auto &values = j.at("values");
  if (!values.is_array()) throw DecodeError("schema", "matrix values must be an array");
  const auto n = static_cast<Eigen::Index>(m.concept_names.size());
  if (static_cast<Eigen::Index>(values.size()) != n * n)
    throw DecodeError("dimension_mismatch", "matrix has " + std::to_string(values.size()) + " values for " +
                                                std::to_string(n) + " concepts");
  m.matrix.resize(n, n);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j2 = 0; j2 < n; ++j2) m.matrix(i, j2) = get_real(values[k++], "matrix entry");
  try {
    validate(m);
  } catch (const std::invalid_argument &e) {
    throw DecodeError("schema", e.what());
  }
  return m;
}

}  // namespace

std::string encode(const Message &message) {
  std::string out;
  std::visit(
      [&](const auto &m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) {
          out = header("hello") + ",\"participant_id\":" + std::to_string(m.participant_id) + ",\"concepts\":[";
          for (std::size_t i = 0; i < m.concept_names.size(); ++i) {
            if (i) out += ',';
            append_string(out, m.concept_names[i]);
          }
          out += "]";
        } else if constexpr (std::is_same_v<T, ModelPush>) {
          out = header("model_push") + ",\"round\":" + std::to_string(m.round) + ",\"matrix\":";
          append_matrix(out, m.matrix);
        } else if constexpr (std::is_same_v<T, TrainResult>) {
          const auto &r = m.report;
          out = header("train_result") + ",\"participant_id\":" + std::to_string(r.participant_id) +
                ",\"round\":" + std::to_string(r.round) + ",\"accuracy\":" + format_real(r.accuracy);
          if (r.federated_accuracy) out += ",\"federated_accuracy\":" + format_real(*r.federated_accuracy);
          out += ",\"matrix\":";
          append_matrix(out, r.matrix);
        } else if constexpr (std::is_same_v<T, Terminate>) {
          out = header("terminate") + ",\"matrix\":";
          append_matrix(out, m.matrix);
        } else {
          out = header("error") + ",\"code\":";
          append_string(out, m.code);
          out += ",\"text\":";
          append_string(out, m.text);
        }
      },
      message);
  out += "}\n";
  return out;
}

Message decode(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.find('\n') != std::string_view::npos) throw DecodeError("schema", "message spans several lines");

  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error &e) {
    throw DecodeError("bad_json", std::string("malformed message: ") + e.what());
  }
  if (!j.is_object()) throw DecodeError("schema", "message must be an object");
  if (!j.contains("protocol_version") || !j.at("protocol_version").is_number_integer() ||
      j.at("protocol_version").get<int>() != kProtocolVersion)
    throw DecodeError("version_mismatch", "unsupported protocol version (expected " +
                                              std::to_string(kProtocolVersion) + ")");
  if (!j.contains("type") || !j.at("type").is_string()) throw DecodeError("schema", "missing message type");

  const auto type = j.at("type").get<std::string>();
  try {
    if (type == "hello") {
      require_keys(j, {"protocol_version", "type", "participant_id", "concepts"});
      return Hello{get_int(j, "participant_id"), get_names(j.at("concepts"))};
    }
    if (type == "model_push") {
      require_keys(j, {"protocol_version", "type", "round", "matrix"});
      return ModelPush{get_int(j, "round"), get_matrix(j.at("matrix"))};
    }
    if (type == "train_result") {
      require_keys(j, {"protocol_version", "type", "participant_id", "round", "accuracy", "matrix"},
                   {"federated_accuracy"});
      ParticipantReport r;
      r.participant_id = get_int(j, "participant_id");
      r.round = get_int(j, "round");
      r.accuracy = get_real(j.at("accuracy"), "accuracy");
      if (j.contains("federated_accuracy")) r.federated_accuracy = get_real(j.at("federated_accuracy"), "accuracy");
      r.matrix = get_matrix(j.at("matrix"));
      return TrainResult{std::move(r)};
    }
    if (type == "terminate") {
      require_keys(j, {"protocol_version", "type", "matrix"});
      return Terminate{get_matrix(j.at("matrix"))};
    }
    if (type == "error") {
      require_keys(j, {"protocol_version", "type", "code", "text"});
      if (!j.at("code").is_string() || !j.at("text").is_string())
        throw DecodeError("schema", "error code and text must be strings");
      return Error{j.at("code").get<std::string>(), j.at("text").get<std::string>()};
    }
  } catch (const json::exception &e) {
    throw DecodeError("schema", e.what());
  }
  throw DecodeError("unknown_variant", "unknown message type '" + type + "'");
}

}  // namespace ffcm::transport
