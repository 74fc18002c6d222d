#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tod::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<std::size_t>;

// Dense row-major parameter/value carrier. A 1-D tensor behaves as a single
// row. The gradient buffer exists iff requires_grad is set.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false)
      : shape_(std::move(shape)), values_(count(shape_), T(0)) {
    set_requires_grad(requires_grad);
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return shape_.size() < 2 ? 1 : shape_[0]; }
  std::size_t cols() const {
    if (shape_.empty()) return 1;
    return shape_.size() < 2 ? shape_[0] : size() / shape_[0];
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on) {
      grad_.assign(values_.size(), T(0));
    } else {
      grad_.clear();
      grad_.shrink_to_fit();
    }
  }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::span<T> grad() { return grad_; }
  std::span<const T> grad() const { return grad_; }

  Eigen::Map<Matrix<T>> matrix() {
    return {values_.data(), Eigen::Index(rows()), Eigen::Index(cols())};
  }
  Eigen::Map<const Matrix<T>> matrix() const {
    return {values_.data(), Eigen::Index(rows()), Eigen::Index(cols())};
  }
  Eigen::Map<Matrix<T>> grad_matrix() {
    return {grad_.data(), Eigen::Index(rows()), Eigen::Index(cols())};
  }

  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T(0)); }

  static std::size_t count(const Shape& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }

 private:
  Shape shape_;
  std::vector<T> values_;
  std::vector<T> grad_;
  bool requires_grad_ = false;
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

}  // namespace tod::nn
