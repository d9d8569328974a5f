#pragma once

// File formats.
//
// Model (JSON object):
//   {"format": "tt2rnn-model", "version": 1, "n": n, "d": d, "p": p,
//    "h0": [n numbers],
//    "A": [n*d*n numbers, entry A[i,k,j] at (i*d + k)*n + j],
//    "Omega": [p rows of n numbers]}
//
// Dataset (JSON lines, one example per line):
//   {"x": [[d numbers], ...], "y": [p numbers]}
//   with an optional "y_steps": [[p numbers], ...] holding the target after
//   every step; "y" then equals its last entry.

#include "tt2rnn/data_io.hpp"
#include "tt2rnn/dataset.hpp"
#include "tt2rnn/models.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tt2rnn {

using json = nlohmann::json;

namespace detail {

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector json_vector(const json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw std::invalid_argument(std::string(what) + ": expected numbers");
    }
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline std::size_t json_size(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) {
    throw std::invalid_argument(std::string("model JSON: missing or invalid '") + key + "'");
  }
  return j[key].get<std::size_t>();
}

}  // namespace detail

inline json model_to_json(const Linear2RNN& m) {
  m.validate();
  json j;
  j["format"] = "tt2rnn-model";
  j["version"] = 1;
  j["n"] = m.n();
  j["d"] = m.d();
  j["p"] = m.p();
  j["h0"] = detail::vector_json(m.h0);
  j["A"] = detail::vector_json(m.A.as_vector());
  json om = json::array();
  for (Eigen::Index r = 0; r < m.Omega.rows(); ++r) {
    om.push_back(detail::vector_json(m.Omega.row(r).transpose()));
  }
  j["Omega"] = std::move(om);
  return j;
}

inline Linear2RNN model_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("model JSON: expected an object");
  if (j.contains("format") && j["format"] != "tt2rnn-model") {
    throw std::invalid_argument("model JSON: unknown format");
  }
  const std::size_t n = detail::json_size(j, "n");
  const std::size_t d = detail::json_size(j, "d");
  const std::size_t p = detail::json_size(j, "p");
  if (!j.contains("h0") || !j.contains("A") || !j.contains("Omega")) {
    throw std::invalid_argument("model JSON: missing h0, A or Omega");
  }
  Vector h0 = detail::json_vector(j["h0"], "model JSON h0");
  const Vector a = detail::json_vector(j["A"], "model JSON A");
  if (static_cast<std::size_t>(h0.size()) != n ||
      static_cast<std::size_t>(a.size()) != n * d * n) {
    throw std::invalid_argument("model JSON: h0 or A has the wrong length");
  }
  const json& om = j["Omega"];
  if (!om.is_array() || om.size() != p) {
    throw std::invalid_argument("model JSON: Omega must have p rows");
  }
  Matrix omega(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < p; ++r) {
    const Vector row = detail::json_vector(om[r], "model JSON Omega");
    if (static_cast<std::size_t>(row.size()) != n) {
      throw std::invalid_argument("model JSON: Omega rows must have n entries");
    }
    omega.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  DenseTensor A({n, d, n}, std::vector<double>(a.data(), a.data() + a.size()));
  return {std::move(h0), std::move(A), std::move(omega)};
}

inline void save_model(const Linear2RNN& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write model file '" + path + "'");
  out << model_to_json(m).dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing model file '" + path + "'");
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline Linear2RNN load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

inline json example_to_json(const SequenceExample& ex) {
  json j;
  json xs = json::array();
  for (const auto& x : ex.x) xs.push_back(detail::vector_json(x));
  j["x"] = std::move(xs);
  j["y"] = detail::vector_json(ex.y);
  if (ex.has_step_targets()) {
    json ys = json::array();
    for (const auto& y : ex.y_steps) ys.push_back(detail::vector_json(y));
    j["y_steps"] = std::move(ys);
  }
  return j;
}

inline SequenceExample example_from_json(const json& j) {
  if (!j.is_object() || !j.contains("x") || !j.contains("y")) {
    throw std::invalid_argument("expected an object with \"x\" and \"y\"");
  }
  SequenceExample ex;
  if (!j["x"].is_array()) throw std::invalid_argument("\"x\" must be an array of vectors");
  for (const auto& x : j["x"]) ex.x.push_back(detail::json_vector(x, "\"x\""));
  ex.y = detail::json_vector(j["y"], "\"y\"");
  if (j.contains("y_steps")) {
    if (!j["y_steps"].is_array()) throw std::invalid_argument("\"y_steps\" must be an array");
    for (const auto& y : j["y_steps"]) ex.y_steps.push_back(detail::json_vector(y, "\"y_steps\""));
  }
  return ex;
}

inline void write_dataset_jsonl(const SequenceDataset& ds, std::ostream& out) {
  for (const auto& ex : ds.examples()) out << example_to_json(ex).dump() << '\n';
}

inline void save_dataset(const SequenceDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write dataset file '" + path + "'");
  write_dataset_jsonl(ds, out);
  if (!out) throw std::runtime_error("failed writing dataset file '" + path + "'");
}

inline SequenceDataset read_dataset_jsonl(std::istream& in) {
  SequenceDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ds.push_back(example_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ds;
}

inline SequenceDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset file '" + path + "'");
  return read_dataset_jsonl(in);
}

}  // namespace tt2rnn
