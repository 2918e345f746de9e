#include "scenesynth/checkpoint.hpp"

#include "json.hpp"

namespace scenesynth::diffcore {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"values", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
  try {
    return Matrix(j.at("rows").get<std::size_t>(),
                  j.at("cols").get<std::size_t>(),
                  j.at("values").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrc::Malformed,
                          "matrix '" + name + "': " + e.what());
  } catch (const DiffError& e) {
    throw CheckpointError(CheckpointErrc::Malformed,
                          "matrix '" + name + "': " + e.what());
  }
}

json matrices_to_json(const std::map<std::string, Matrix>& ms) {
  json out = json::object();
  for (const auto& [name, m] : ms) out[name] = matrix_to_json(m);
  return out;
}

std::map<std::string, Matrix> matrices_from_json(const json& j) {
  if (!j.is_object()) {
    throw CheckpointError(CheckpointErrc::Malformed,
                          "expected an object of matrices");
  }
  std::map<std::string, Matrix> out;
  for (const auto& [name, value] : j.items()) {
    out.emplace(name, matrix_from_json(value, name));
  }
  return out;
}

}  // namespace

std::string to_json(const Checkpoint& checkpoint) {
  json doc;
  doc["version"] = kCheckpointVersion;
  doc["params"] = matrices_to_json(checkpoint.params);
  if (checkpoint.optimizer) {
    const AdamWState& s = *checkpoint.optimizer;
    doc["optimizer"] = {{"type", "adamw"},
                        {"step", s.step},
                        {"lr", s.config.lr},
                        {"beta1", s.config.beta1},
                        {"beta2", s.config.beta2},
                        {"eps", s.config.eps},
                        {"weight_decay", s.config.weight_decay},
                        {"first_moment", matrices_to_json(s.first_moment)},
                        {"second_moment", matrices_to_json(s.second_moment)}};
  } else {
    doc["optimizer"] = nullptr;
  }
  doc["metadata"] = json::parse(checkpoint.metadata_json);
  return doc.dump(1);
}

Checkpoint checkpoint_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(CheckpointErrc::Malformed, e.what());
  }
  if (!doc.is_object() || !doc.contains("version")) {
    throw CheckpointError(CheckpointErrc::Malformed, "missing version field");
  }
  if (doc["version"] != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrc::WrongVersion,
                          "unsupported checkpoint version " +
                              doc["version"].dump());
  }

  Checkpoint cp;
  cp.params = matrices_from_json(doc.value("params", json::object()));
  if (auto it = doc.find("optimizer"); it != doc.end() && !it->is_null()) {
    try {
      AdamWState s;
      s.step = it->at("step").get<std::uint64_t>();
      s.config.lr = it->at("lr").get<double>();
      s.config.beta1 = it->at("beta1").get<double>();
      s.config.beta2 = it->at("beta2").get<double>();
      s.config.eps = it->at("eps").get<double>();
      s.config.weight_decay = it->at("weight_decay").get<double>();
      s.first_moment = matrices_from_json(it->at("first_moment"));
      s.second_moment = matrices_from_json(it->at("second_moment"));
      cp.optimizer = std::move(s);
    } catch (const json::exception& e) {
      throw CheckpointError(CheckpointErrc::Malformed,
                            std::string("optimizer: ") + e.what());
    }
  }
  cp.metadata_json = doc.value("metadata", json::object()).dump();
  return cp;
}

}  // namespace scenesynth::diffcore
