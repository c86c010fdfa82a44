#include "sspix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sspix {

std::int64_t numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<real>>(static_cast<std::size_t>(numel(shape_)), real(0))) {}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, real value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> values) {
  if (numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("Tensor::from: value count does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<real>>(std::move(values));
  return t;
}

Tensor Tensor::clone() const {
  if (!defined()) return Tensor();
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<real>>(*data_);
  return t;
}

void Tensor::copy_from(const Tensor& src) {
  if (!same_shape(src))
    throw std::invalid_argument("Tensor::copy_from: shape mismatch " + shape_str(src.shape()));
  *data_ = *src.data_;
}

void Tensor::set_shape(std::vector<int> shape) {
  if (numel(shape) != size())
    throw std::invalid_argument("Tensor::set_shape: element count mismatch " + shape_str(shape));
  shape_ = std::move(shape);
}

void Tensor::fill(real v) {
  for (auto& x : *data_) x = v;
}

bool Tensor::all_finite() const {
  if (!defined()) return true;
  for (real x : *data_)
    if (!std::isfinite(x)) return false;
  return true;
}

real Tensor::max_abs() const {
  real m = 0;
  if (!defined()) return m;
  for (real x : *data_) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace sspix
