#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "padst/errors.hpp"

namespace padst {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major tensor. Every op in the library treats a tensor as a
// matrix of rows() x cols(), where cols() is the last dimension.
template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_dims();
  }

  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (shape_size(shape_) != data_.size()) {
      throw ShapeError("tensor of shape " + shape_string(shape_) + " cannot hold " +
                       std::to_string(data_.size()) + " values");
    }
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<Real> values) {
    return Tensor({rows, cols}, std::vector<Real>(values));
  }

  static Tensor vector(std::initializer_list<Real> values) {
    return Tensor({values.size()}, std::vector<Real>(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return shape_.empty() ? 1 : data_.size() / cols(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real* raw() { return data_.data(); }
  const Real* raw() const { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const Real& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (Real v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <class Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  void check_dims() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("zero-sized dimension in " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<Real> data_;
};

/// A learnable tensor together with its gradient accumulator.
template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;

  Parameter(std::string n, Tensor<Real> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(Real(0)); }
};

// Owns parameters with stable addresses, in registration order.
template <class Real>
class ParameterSet {
 public:
  Parameter<Real>& add(std::string name, Tensor<Real> value) {
    for (const auto& p : params_) {
      if (p->name == name) throw std::invalid_argument("duplicate parameter " + name);
    }
    params_.push_back(std::make_unique<Parameter<Real>>(std::move(name), std::move(value)));
    return *params_.back();
  }

  Parameter<Real>* find(std::string_view name) {
    for (auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }
  const Parameter<Real>* find(std::string_view name) const {
    for (const auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return *params_[i]; }

  std::vector<Parameter<Real>*> pointers() {
    std::vector<Parameter<Real>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
};

}  // namespace padst
