#pragma once

#include <cstddef>
#include <vector>

namespace mgm {

// Dense multi-dimensional array of 64-bit reals, row-major (last index
// fastest). Extents are positive; a rank-0 tensor holds one scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> dims) { return Tensor(std::move(dims)); }
  static Tensor full(std::vector<std::size_t> dims, double value);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t ndim() const { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  std::size_t numel() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Multi-index access, no bounds checking beyond debug asserts.
  double at(std::size_t i0) const { return data_[i0]; }
  double at(std::size_t i0, std::size_t i1) const { return data_[i0 * dims_[1] + i1]; }
  double at(std::size_t i0, std::size_t i1, std::size_t i2) const {
    return data_[(i0 * dims_[1] + i1) * dims_[2] + i2];
  }
  double at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) const {
    return data_[((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3];
  }
  double& at(std::size_t i0) { return data_[i0]; }
  double& at(std::size_t i0, std::size_t i1) { return data_[i0 * dims_[1] + i1]; }
  double& at(std::size_t i0, std::size_t i1, std::size_t i2) {
    return data_[(i0 * dims_[1] + i1) * dims_[2] + i2];
  }
  double& at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) {
    return data_[((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3];
  }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

std::size_t checked_product(const std::vector<std::size_t>& dims);

// Throws ValidationError unless clip has dims [T,3,H,W] with T even and >= 2,
// H and W multiples of 16, and all values in [0,1].
void validate_clip(const Tensor& clip);

}  // namespace mgm
