#pragma once

#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "avse/error.hpp"
#include "avse/matrix.hpp"

namespace avse {

// Row-major dense tensor used for named model parameters.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }

  // Rows are the leading dimensions folded together, columns the last one.
  Eigen::Index rows() const { return shape.empty() ? 1 : static_cast<Eigen::Index>(size() / shape.back()); }
  Eigen::Index cols() const { return shape.empty() ? 1 : static_cast<Eigen::Index>(shape.back()); }

  Eigen::Map<Matrix> matrix() { return {data.data(), rows(), cols()}; }
  Eigen::Map<const Matrix> matrix() const { return {data.data(), rows(), cols()}; }
  Eigen::Map<RowVector> row() { return {data.data(), static_cast<Eigen::Index>(size())}; }
  Eigen::Map<const RowVector> row() const { return {data.data(), static_cast<Eigen::Index>(size())}; }

  void validate() const {
    require(data.size() == element_count(shape), ErrorKind::ShapeMismatch, "tensor data length disagrees with shape");
  }
};

using TensorMap = std::map<std::string, Tensor>;

inline std::string shape_string(const std::vector<std::size_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + ")";
}

}  // namespace avse
