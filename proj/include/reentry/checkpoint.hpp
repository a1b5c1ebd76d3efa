// SPDX-License-Identifier: Apache-2.0
#pragma once

// Versioned JSON checkpoints. Matrices are stored row-major with explicit
// dimensions; doubles use shortest round-trip formatting so a save/load cycle
// is bit-exact.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "reentry/adam.hpp"
#include "reentry/features.hpp"
#include "reentry/seq2seq.hpp"

namespace reentry {

inline constexpr const char* kCheckpointSchema = "reentry.seq2seq/1";

struct Checkpoint {
  nn::Seq2SeqModel model;
  int tx = 5;                          // encoder steps the model was trained with
  std::vector<MinMax> norm_stats;      // per input feature; [0] also scales the targets
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::optional<nn::OptimizerState> optimizer;

  int ty() const { return static_cast<int>(kGridPoints) - tx; }
};

namespace detail {

inline nlohmann::json matrix_to_json(const nn::Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", flat}};
}

inline nn::Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("values").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw input_error("BadSchema", "matrix size");
  nn::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  return m;
}

inline nlohmann::json layer_to_json(const nn::GruLayerParams& p) {
  nlohmann::json j;
  j["in_update"] = matrix_to_json(p.in_update);
  j["in_reset"] = matrix_to_json(p.in_reset);
  j["in_cand"] = matrix_to_json(p.in_cand);
  j["rec_update"] = matrix_to_json(p.rec_update);
  j["rec_reset"] = matrix_to_json(p.rec_reset);
  j["rec_cand"] = matrix_to_json(p.rec_cand);
  j["bias_update"] = matrix_to_json(p.bias_update);
  j["bias_reset"] = matrix_to_json(p.bias_reset);
  j["bias_cand"] = matrix_to_json(p.bias_cand);
  return j;
}

inline void layer_from_json(const nlohmann::json& j, nn::GruLayerParams& p) {
  auto load = [&](const char* key, nn::Matrix& m) {
    nn::Matrix v = matrix_from_json(j.at(key));
    if (v.rows() != m.rows() || v.cols() != m.cols()) throw input_error("BadSchema", std::string("shape of ") + key);
    m = v;
  };
  auto load_vec = [&](const char* key, nn::Vector& b) {
    nn::Matrix v = matrix_from_json(j.at(key));
    if (v.rows() != b.size() || v.cols() != 1) throw input_error("BadSchema", std::string("shape of ") + key);
    b = v.col(0);
  };
  load("in_update", p.in_update);
  load("in_reset", p.in_reset);
  load("in_cand", p.in_cand);
  load("rec_update", p.rec_update);
  load("rec_reset", p.rec_reset);
  load("rec_cand", p.rec_cand);
  load_vec("bias_update", p.bias_update);
  load_vec("bias_reset", p.bias_reset);
  load_vec("bias_cand", p.bias_cand);
}

inline nlohmann::json model_to_json(const nn::Seq2SeqModel& m) {
  nlohmann::json j;
  j["shape"] = {{"input_size", m.shape.input_size},
                {"decoder_input_size", m.shape.decoder_input_size},
                {"hidden_size", m.shape.hidden_size},
                {"num_layers", m.shape.num_layers}};
  for (const auto& l : m.encoder) j["encoder"].push_back(layer_to_json(l));
  for (const auto& l : m.decoder) j["decoder"].push_back(layer_to_json(l));
  j["dense"] = {{"weight", matrix_to_json(m.dense_weight.transpose())}, {"bias", m.dense_bias}};
  return j;
}

inline nn::Seq2SeqModel model_from_json(const nlohmann::json& j) {
  nn::ModelShape s;
  const auto& js = j.at("shape");
  s.input_size = js.at("input_size").get<int>();
  s.decoder_input_size = js.at("decoder_input_size").get<int>();
  s.hidden_size = js.at("hidden_size").get<int>();
  s.num_layers = js.at("num_layers").get<int>();
  auto m = nn::Seq2SeqModel::zeros(s);
  if (j.at("encoder").size() != m.encoder.size() || j.at("decoder").size() != m.decoder.size())
    throw input_error("BadSchema", "layer count");
  for (std::size_t l = 0; l < m.encoder.size(); ++l) layer_from_json(j.at("encoder")[l], m.encoder[l]);
  for (std::size_t l = 0; l < m.decoder.size(); ++l) layer_from_json(j.at("decoder")[l], m.decoder[l]);
  const nn::Matrix w = matrix_from_json(j.at("dense").at("weight"));
  if (w.rows() != 1 || w.cols() != s.hidden_size) throw input_error("BadSchema", "dense weight shape");
  m.dense_weight = w.row(0).transpose();
  m.dense_bias = j.at("dense").at("bias").get<double>();
  return m;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["schema"] = kCheckpointSchema;
  j["tx"] = c.tx;
  j["ty"] = c.ty();
  j["hyperparameters"] = c.hyperparameters;
  nlohmann::json stats = nlohmann::json::array();
  for (const auto& s : c.norm_stats) stats.push_back({{"min", s.min}, {"max", s.max}});
  j["norm_stats"] = stats;
  j["model"] = detail::model_to_json(c.model);
  if (c.optimizer) {
    const auto& o = *c.optimizer;
    j["optimizer"] = {{"lr", o.lr},         {"beta1", o.beta1},     {"beta2", o.beta2},
                      {"epsilon", o.epsilon}, {"clipnorm", o.clipnorm}, {"step", o.step},
                      {"first_moment", detail::model_to_json(o.first_moment)},
                      {"second_moment", detail::model_to_json(o.second_moment)}};
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kCheckpointSchema) throw input_error("BadSchema", "not a " + std::string(kCheckpointSchema) + " checkpoint");
  Checkpoint c;
  c.tx = j.at("tx").get<int>();
  c.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
  for (const auto& s : j.at("norm_stats")) c.norm_stats.push_back({s.at("min").get<double>(), s.at("max").get<double>()});
  c.model = detail::model_from_json(j.at("model"));
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    nn::OptimizerState st;
    st.lr = o.at("lr").get<double>();
    st.beta1 = o.at("beta1").get<double>();
    st.beta2 = o.at("beta2").get<double>();
    st.epsilon = o.at("epsilon").get<double>();
    st.clipnorm = o.at("clipnorm").get<double>();
    st.step = o.at("step").get<long long>();
    st.first_moment = detail::model_from_json(o.at("first_moment"));
    st.second_moment = detail::model_from_json(o.at("second_moment"));
    c.optimizer = std::move(st);
  }
  return c;
}

/// Writes `content` to `path` through a temporary file and a rename.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("WriteFailed", tmp);
    out << content;
    if (!out) throw input_error("WriteFailed", tmp);
  }
  std::filesystem::rename(tmp, p);
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  write_file_atomic(path, checkpoint_to_json(c).dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("FileNotFound", path);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw input_error("MalformedJson", path);
  return checkpoint_from_json(j);
}

}  // namespace reentry
