#pragma once

#include "tod/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

namespace tod::nn {

struct Var {
  std::size_t id = 0;
};

// Reverse-mode recorder. Every op appends one node holding its forward value
// and a closure that pushes the node's gradient into its inputs. Parameter
// leaves are memoized per tensor so a tape copies each parameter once.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool needs_grad = false;
    Tensor<T>* param = nullptr;
    Backward backward;
  };

  explicit Tape(bool training = false, std::uint64_t seed = 0)
      : training_(training), rng_(seed) {}

  Var constant(Matrix<T> value);
  Var param(Tensor<T>& tensor);

  Var push(Matrix<T> value, bool needs_grad, Backward backward = {});

  const Matrix<T>& value(Var v) const { return nodes_[v.id].value; }
  Matrix<T>& grad(Var v) { return nodes_[v.id].grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  Node& node(Var v) { return nodes_[v.id]; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d(loss)/d(param) into every reachable parameter's gradient
  // buffer. Throws std::invalid_argument when loss is not 1x1.
  void backward(Var loss);

  bool training() const { return training_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> param_index_;
  bool training_;
  std::mt19937_64 rng_;
};

// What a fully masked attention row attends to.
enum class MaskFallback {
  kSelf,     // the query's own position (self-attention)
  kUniform,  // uniform over every key
};

namespace ops {

template <typename T>
Var add(Tape<T>& t, Var a, Var b);
template <typename T>
Var sub(Tape<T>& t, Var a, Var b);
template <typename T>
Var mul(Tape<T>& t, Var a, Var b);
template <typename T>
Var scale(Tape<T>& t, Var a, T factor);
template <typename T>
Var matmul(Tape<T>& t, Var a, Var b);
// x[n x in] * w[in x out] + b[1 x out]
template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var b);
template <typename T>
Var gelu(Tape<T>& t, Var x);
template <typename T>
Var relu(Tape<T>& t, Var x);
template <typename T>
Var tanh(Tape<T>& t, Var x);
// Row-wise normalization with affine gamma/beta of shape [1 x cols].
template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps = T(1e-5));
template <typename T>
Var dropout(Tape<T>& t, Var x, T rate);
// Rows of `table` selected by ids, gradient scattered straight into the
// table's gradient buffer.
template <typename T>
Var embedding(Tape<T>& t, Tensor<T>& table, const std::vector<int>& ids);
// Scaled dot-product attention. q[m x d], k/v[n x d]; d split into `heads`
// column blocks. key_valid[j]==0 masks key j out of every row.
template <typename T>
Var attention(Tape<T>& t, Var q, Var k, Var v,
              const std::vector<std::uint8_t>& key_valid, int heads, T scale,
              MaskFallback fallback);
template <typename T>
Var concat_cols(Tape<T>& t, Var a, Var b);
template <typename T>
Var concat_rows(Tape<T>& t, const std::vector<Var>& parts);
template <typename T>
Var slice_rows(Tape<T>& t, Var x, std::size_t begin, std::size_t count);
// [n x d] . [n x d] -> [n x 1]
template <typename T>
Var rowwise_dot(Tape<T>& t, Var a, Var b);
template <typename T>
Var sum(Tape<T>& t, Var x);
template <typename T>
Var mean(Tape<T>& t, Var x);
// Mean binary cross-entropy of sigmoid(logits) against a one-hot target.
template <typename T>
Var bce_with_logits(Tape<T>& t, Var logits, std::size_t positive);
// Categorical cross-entropy of softmax(logits) against the positive index.
template <typename T>
Var softmax_xent(Tape<T>& t, Var logits, std::size_t positive);

}  // namespace ops

// Numerically stable forward-only helpers shared with inference code.
template <typename T>
void softmax_inplace(std::span<T> row);

template <typename T>
T bce_with_logits_value(std::span<const T> logits, std::size_t positive);

}  // namespace tod::nn
