#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace sspix {

using real = double;

std::int64_t numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

/// Dense row-major tensor with shared storage. Copies are shallow;
/// use clone() for an independent buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, real value);
  static Tensor from(std::vector<int> shape, std::vector<real> values);

  bool defined() const { return static_cast<bool>(data_); }
  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  real* data() { return data_->data(); }
  const real* data() const { return data_->data(); }
  real& operator[](std::int64_t i) { return (*data_)[static_cast<std::size_t>(i)]; }
  real operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }

  Tensor clone() const;
  // copies values into this tensor's existing storage (sharing preserved)
  void copy_from(const Tensor& src);
  void set_shape(std::vector<int> shape);
  void fill(real v);
  void zero_() { fill(0); }
  bool all_finite() const;
  real max_abs() const;

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<real>> data_;
};

}  // namespace sspix
