#include "ghost/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ghost {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;  // zero extents give an empty tensor
  return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data size does not match shape");
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  return Tensor(std::move(shape));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> data) {
  return Tensor({rows, cols}, std::vector<double>(data));
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::logic_error("Tensor::item on tensor of size " +
                           std::to_string(size()));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (shape_numel(new_shape) != size()) {
    throw std::invalid_argument("reshape changes element count");
  }
  return Tensor(std::move(new_shape), data_);
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  if (rank() != 2) throw std::logic_error("gather_rows needs a 2D tensor");
  const std::size_t c = cols();
  Tensor out({indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows()) throw std::out_of_range("gather_rows index");
    const double* src = data() + indices[i] * c;
    std::copy(src, src + c, out.data() + i * c);
  }
  return out;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    os << (i ? "," : "") << shape_[i];
  }
  os << ")";
  return os.str();
}

}  // namespace ghost
