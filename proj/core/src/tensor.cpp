// core/src/tensor.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "slt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace slt {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void xavier_fill(Tensor& t, std::mt19937_64& rng) {
  if (t.rank() != 2) throw ShapeError("xavier_fill: need a rank-2 tensor");
  const double s =
      std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  std::uniform_real_distribution<double> dist(-s, s);
  for (double& v : t.vec()) v = dist(rng);
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (std::size_t e : shape_) {
    if (e == 0) throw ShapeError("Tensor extents must be positive");
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("Tensor data length does not match shape " + shape_str());
  }
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::scalar() const {
  if (data_.size() != 1) {
    throw ShapeError("scalar() on tensor of shape " + shape_str());
  }
  return data_[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

Tensor& ParamStore::create(const std::string& name,
                           std::vector<std::size_t> shape) {
  if (params_.count(name)) {
    throw std::runtime_error("parameter already exists: " + name);
  }
  params_[name] = Tensor(shape);
  grads_[name] = Tensor(shape);
  return params_[name];
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("no parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("no parameter: " + name);
  return it->second;
}

bool ParamStore::has(const std::string& name) const {
  return params_.count(name) > 0;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw std::runtime_error("no parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, g] : grads_) {
    std::fill(g.vec().begin(), g.vec().end(), 0.0);
  }
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(name);
  return out;  // std::map iteration is already sorted
}

namespace {

constexpr char kMagic[8] = {'S', 'L', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

void write_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_le<std::uint64_t>(os, bits);
}

double read_f64(std::istream& is) {
  std::uint64_t bits = read_le<std::uint64_t>(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void ParamStore::save(const std::string& path, std::uint64_t config_hash) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
  os.write(kMagic, 8);
  write_le<std::uint32_t>(os, 1);  // version
  write_le<std::uint64_t>(os, config_hash);
  write_le<std::uint64_t>(os, params_.size());
  for (const auto& [name, t] : params_) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) write_le<std::uint64_t>(os, e);
    for (double v : t.vec()) write_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

std::uint64_t ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint32_t version = read_le<std::uint32_t>(is);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  std::uint64_t config_hash = read_le<std::uint64_t>(is);
  std::uint64_t count = read_le<std::uint64_t>(is);
  params_.clear();
  grads_.clear();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t name_len = read_le<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t rank = read_le<std::uint32_t>(is);
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = read_le<std::uint64_t>(is);
    Tensor t(shape);
    for (double& v : t.vec()) v = read_f64(is);
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    grads_[name] = Tensor(shape);
    params_[name] = std::move(t);
  }
  return config_hash;
}

}  // namespace slt
