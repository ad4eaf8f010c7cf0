// core/include/slt/tensor.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SLT_TENSOR_HPP_
#define SLT_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace slt {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of 64-bit floats.  Rank is arbitrary but all
/// differentiable primitives operate on rank <= 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor Scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t i) const { return shape_.at(i); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors (rank must be 2).
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_[1]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  double scalar() const;

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

/// Uniform fan-in/fan-out initialization for a [rows x cols] weight matrix.
void xavier_fill(Tensor& t, std::mt19937_64& rng);

/// FNV-1a content hash, used for config/grammar fingerprints in artifacts.
std::uint64_t fnv1a(const std::string& s);

/// Named, shaped parameter arrays with matching gradient slots.
class ParamStore {
 public:
  Tensor& create(const std::string& name, std::vector<std::size_t> shape);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;

  Tensor& grad(const std::string& name);
  void zero_grads();

  std::vector<std::string> names() const;  // sorted, deterministic
  std::size_t count() const { return params_.size(); }

  // Checkpoint file: magic, version, config hash, then per parameter:
  // name (u32 length + UTF-8), rank (u32), extents (u64 each), row-major
  // 64-bit little-endian floats.
  void save(const std::string& path, std::uint64_t config_hash) const;
  // Returns the stored config hash.  Replaces the store's contents.
  std::uint64_t load(const std::string& path);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> grads_;
};

}  // namespace slt

#endif  // SLT_TENSOR_HPP_
