#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ghost {

// Dense row-major tensor of doubles. Plain value type: copyable, movable,
// no view semantics. All training-time math runs in 64-bit precision.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  // 2D convenience with row-major initializer data.
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  // 2D accessors (unchecked beyond debug builds).
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  std::size_t rows() const { return rank() >= 1 ? shape_[0] : 0; }
  std::size_t cols() const { return rank() >= 2 ? shape_[1] : 0; }

  // Scalar extraction; throws unless size() == 1.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  void fill(double v);
  Tensor reshaped(std::vector<std::size_t> new_shape) const;
  // Rows of a 2D tensor gathered into a new 2D tensor.
  Tensor gather_rows(std::span<const std::size_t> indices) const;

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

}  // namespace ghost
