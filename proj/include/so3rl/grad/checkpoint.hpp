#pragma once

// Parameter checkpoints as JSON:
//   {"format": "so3rl.params", "version": 1,
//    "tensors": [{"name": ..., "shape": [rows, cols], "data": [row-major values]}]}
// Values are written as decimal text with enough digits to round-trip the
// stored scalar type.

#include <json.hpp>

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "so3rl/grad/tensor.hpp"

namespace so3rl::grad {

template <typename Scalar>
using NamedParameters = std::vector<std::pair<std::string, Tensor<Scalar>>>;

template <typename Scalar>
nlohmann::json params_to_json(const NamedParameters<Scalar>& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : params) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(t.value().size()));
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) data.push_back(static_cast<double>(t.value()(i, j)));
    tensors.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"data", std::move(data)}});
  }
  return {{"format", "so3rl.params"}, {"version", 1}, {"tensors", std::move(tensors)}};
}

/// Loads values into existing tensors by name; every tensor in `params` must
/// be present with the same shape.
template <typename Scalar>
void params_from_json(const nlohmann::json& doc, NamedParameters<Scalar>& params) {
  if (doc.value("format", "") != "so3rl.params" || doc.value("version", 0) != 1) {
    throw InvalidArgument("not an so3rl.params version 1 document");
  }
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& t : doc.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
  for (auto& [name, tensor] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InvalidArgument("checkpoint is missing tensor '" + name + "'");
    const auto& entry = *it->second;
    const auto shape = entry.at("shape").template get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != tensor.rows() || shape[1] != tensor.cols()) {
      throw InvalidArgument("checkpoint tensor '" + name + "' has the wrong shape");
    }
    const auto data = entry.at("data").template get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != tensor.rows() * tensor.cols()) {
      throw InvalidArgument("checkpoint tensor '" + name + "' has the wrong element count");
    }
    auto& v = tensor.mutable_value();
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = static_cast<Scalar>(data[i * v.cols() + j]);
  }
}

}  // namespace so3rl::grad
