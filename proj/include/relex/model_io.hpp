#pragma once

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "relex/common.hpp"
#include "relex/model.hpp"

namespace relex {

inline nlohmann::ordered_json spec_to_json(const ModelSpec& spec) {
  return nlohmann::ordered_json{
      {"input_dim", spec.input_dim},
      {"class_count", spec.class_count},
      {"hidden_layers", spec.hidden_layers},
      {"activation", spec.activation == Activation::ReLU ? "relu" : "tanh"},
      {"l2_penalty", spec.l2_penalty},
      {"include_bias", spec.include_bias},
  };
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  try {
    spec.input_dim = j.at("input_dim").get<int>();
    spec.class_count = j.at("class_count").get<int>();
    spec.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
    std::string act = j.at("activation").get<std::string>();
    if (act == "relu")
      spec.activation = Activation::ReLU;
    else if (act == "tanh")
      spec.activation = Activation::Tanh;
    else
      throw parse_error("unknown activation '" + act + "'");
    spec.l2_penalty = j.at("l2_penalty").get<double>();
    spec.include_bias = j.value("include_bias", true);
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("model spec: ") + e.what());
  }
  return spec;
}

// Self-describing single file: spec plus theta as decimal text. nlohmann
// emits shortest round-trip decimals, so reloading is bit-exact.
inline void save_model(const Model& m, const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = "relex-model";
  j["version"] = 1;
  j["spec"] = spec_to_json(m.spec());
  std::vector<double> theta(m.theta().data(), m.theta().data() + m.theta().size());
  j["theta"] = theta;
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write model file '" + path + "'");
  out << j.dump(2) << '\n';
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error("model file '" + path + "': " + e.what());
  }
  if (j.value("format", "") != "relex-model")
    throw parse_error("model file '" + path + "': unrecognized format");
  ModelSpec spec = spec_from_json(j.at("spec"));
  std::vector<double> theta;
  try {
    theta = j.at("theta").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw parse_error("model file '" + path + "': " + e.what());
  }
  Eigen::VectorXd t = Eigen::Map<Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  return Model(spec, std::move(t));
}

}  // namespace relex
