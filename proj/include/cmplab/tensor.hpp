#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cmplab/errors.hpp"

namespace cmplab {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything
// the engine needs; scalars are shape {1}.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), 0.0);
  }

  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_size(shape_))
      throw ShapeError("data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int size() const { return static_cast<int>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }

  int rows() const { return require_2d(), shape_[0]; }
  int cols() const { return require_2d(), shape_[1]; }

  double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int r, int c) { return require_2d(), data_[static_cast<size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return require_2d(), data_[static_cast<size_t>(r) * shape_[1] + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const { return shape_str(shape_); }

  static std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }

 private:
  static size_t checked_size(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  void require_2d() const {
    if (shape_.size() != 2) throw ShapeError("expected rank-2 tensor, got shape " + shape_str());
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace cmplab
