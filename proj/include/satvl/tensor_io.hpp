#pragma once

// Named-tensor checkpoint helpers: {"shape": [rows, cols], "data": [...]}
// with row-major data.

#include <Eigen/Core>

#include <string>

#include "json.hpp"
#include "satvl/common.hpp"

namespace satvl {

inline constexpr int kCheckpointFormatVersion = 1;

template <typename Derived>
nlohmann::json tensor_to_json(const Eigen::MatrixBase<Derived>& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return nlohmann::json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

inline Eigen::MatrixXd tensor_from_json(const nlohmann::json& j, const std::string& name) {
  const auto& shape = j.at("shape");
  const auto rows = shape.at(0).get<Eigen::Index>();
  const auto cols = shape.at(1).get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ValidationError("tensor " + name + ": data does not match shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  }
  if (!m.allFinite()) throw ValidationError("tensor " + name + " has non-finite entries");
  return m;
}

}  // namespace satvl
