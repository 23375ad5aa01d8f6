#include "mgmask/tensor.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mgmask/errors.hpp"

namespace mgm {

std::size_t checked_product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ValidationError("tensor extents must be positive");
    if (d > std::numeric_limits<std::size_t>::max() / n)
      throw ValidationError("tensor extent product overflows");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::size_t> dims)
    : dims_(std::move(dims)), data_(checked_product(dims_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (checked_product(dims_) != data_.size())
    throw ValidationError("tensor data length does not match extents");
}

Tensor Tensor::full(std::vector<std::size_t> dims, double value) {
  Tensor t(std::move(dims));
  for (double& v : t.data_) v = value;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void validate_clip(const Tensor& clip) {
  if (clip.ndim() != 4 || clip.dim(1) != 3)
    throw ValidationError("clip must have dims [T,3,H,W]");
  const std::size_t t = clip.dim(0), h = clip.dim(2), w = clip.dim(3);
  if (t < 2 || t % 2 != 0)
    throw ValidationError("clip frame count must be even and >= 2, got " + std::to_string(t));
  if (h % 16 != 0 || w % 16 != 0)
    throw ValidationError("clip height and width must be multiples of 16");
  for (double v : clip.values())
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError("clip pixel values must lie in [0,1]");
}

}  // namespace mgm
