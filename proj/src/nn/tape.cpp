#include "tod/nn/tape.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace tod::nn {

template <typename T>
Var Tape<T>::constant(Matrix<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Tape<T>::param(Tensor<T>& tensor) {
  if (auto it = param_index_.find(&tensor); it != param_index_.end()) {
    return Var{it->second};
  }
  Var v = push(Matrix<T>(tensor.matrix()), tensor.requires_grad());
  nodes_[v.id].param = tensor.requires_grad() ? &tensor : nullptr;
  param_index_.emplace(&tensor, v.id);
  return v;
}

template <typename T>
Var Tape<T>::push(Matrix<T> value, bool needs_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw std::invalid_argument("backward: unknown node");
  const auto& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    auto& n = nodes_[i];
    if (n.needs_grad) n.grad = Matrix<T>::Zero(n.value.rows(), n.value.cols());
  }
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad(0, 0) = T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.needs_grad && n.backward) n.backward(*this);
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    auto& n = nodes_[i];
    if (n.param != nullptr) n.param->grad_matrix() += n.grad;
  }
}

template <typename T>
void softmax_inplace(std::span<T> row) {
  if (row.empty()) return;
  T mx = row[0];
  for (T x : row) mx = std::max(mx, x);
  T total = 0;
  for (T& x : row) {
    x = std::exp(x - mx);
    total += x;
  }
  for (T& x : row) x /= total;
}

template <typename T>
T bce_with_logits_value(std::span<const T> logits, std::size_t positive) {
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T x = logits[i];
    const T y = i == positive ? T(1) : T(0);
    total += std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  return logits.empty() ? T(0) : total / T(logits.size());
}

namespace ops {
namespace {

template <typename T>
bool any_grad(Tape<T>& t, std::initializer_list<Var> vs) {
  for (auto v : vs)
    if (t.needs_grad(v)) return true;
  return false;
}

template <typename T>
void check_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  return t.push(t.value(a) + t.value(b), any_grad(t, {a, b}), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    if (tp.needs_grad(a)) tp.grad(a) += g;
    if (tp.needs_grad(b)) tp.grad(b) += g;
  });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "sub");
  return t.push(t.value(a) - t.value(b), any_grad(t, {a, b}), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    if (tp.needs_grad(a)) tp.grad(a) += g;
    if (tp.needs_grad(b)) tp.grad(b) -= g;
  });
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "mul");
  Matrix<T> y = t.value(a).cwiseProduct(t.value(b));
  return t.push(std::move(y), any_grad(t, {a, b}), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    if (tp.needs_grad(a)) tp.grad(a) += g.cwiseProduct(tp.value(b));
    if (tp.needs_grad(b)) tp.grad(b) += g.cwiseProduct(tp.value(a));
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T factor) {
  return t.push(t.value(a) * factor, t.needs_grad(a), [=, out = t.size()](Tape<T>& tp) {
    tp.grad(a) += tp.grad(Var{out}) * factor;
  });
}

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  if (t.value(a).cols() != t.value(b).rows()) throw std::invalid_argument("matmul: shape mismatch");
  Matrix<T> y = t.value(a) * t.value(b);
  return t.push(std::move(y), any_grad(t, {a, b}), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    if (tp.needs_grad(a)) tp.grad(a).noalias() += g * tp.value(b).transpose();
    if (tp.needs_grad(b)) tp.grad(b).noalias() += tp.value(a).transpose() * g;
  });
}

template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var b) {
  const auto& xv = t.value(x);
  const auto& wv = t.value(w);
  const auto& bv = t.value(b);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  Matrix<T> y(xv.rows(), wv.cols());
  y.noalias() = xv * wv;
  y.rowwise() += bv.row(0);
  return t.push(std::move(y), any_grad(t, {x, w, b}), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    if (tp.needs_grad(x)) tp.grad(x).noalias() += g * tp.value(w).transpose();
    if (tp.needs_grad(w)) tp.grad(w).noalias() += tp.value(x).transpose() * g;
    if (tp.needs_grad(b)) tp.grad(b) += g.colwise().sum();
  });
}

template <typename T>
Var gelu(Tape<T>& t, Var x) {
  const auto& xv = t.value(x);
  Matrix<T> y(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    const T v = xv.data()[i];
    const T u = T(kGeluC) * (v + T(kGeluA) * v * v * v);
    y.data()[i] = T(0.5) * v * (T(1) + std::tanh(u));
  }
  return t.push(std::move(y), t.needs_grad(x), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    const auto& xv = tp.value(x);
    auto& gx = tp.grad(x);
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      const T v = xv.data()[i];
      const T u = T(kGeluC) * (v + T(kGeluA) * v * v * v);
      const T th = std::tanh(u);
      const T du = T(kGeluC) * (T(1) + T(3 * kGeluA) * v * v);
      const T d = T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * du;
      gx.data()[i] += g.data()[i] * d;
    }
  });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  Matrix<T> y = t.value(x).cwiseMax(T(0));
  return t.push(std::move(y), t.needs_grad(x), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    const auto& xv = tp.value(x);
    tp.grad(x) += (xv.array() > T(0)).select(g.array(), T(0)).matrix();
  });
}

template <typename T>
Var tanh(Tape<T>& t, Var x) {
  Matrix<T> y = t.value(x).array().tanh().matrix();
  return t.push(std::move(y), t.needs_grad(x), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    const auto& yv = tp.value(Var{out});
    tp.grad(x) += (g.array() * (T(1) - yv.array().square())).matrix();
  });
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps) {
  const auto& xv = t.value(x);
  const auto& gv = t.value(gamma);
  const auto& bv = t.value(beta);
  if (gv.rows() != 1 || gv.cols() != xv.cols() || bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw std::invalid_argument("layer_norm: shape mismatch");
  }
  const Eigen::Index n = xv.rows();
  const Eigen::Index d = xv.cols();
  auto xhat = std::make_shared<Matrix<T>>(n, d);
  auto rstd = std::make_shared<std::vector<T>>(n);
  Matrix<T> y(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mu = xv.row(r).mean();
    const T var = (xv.row(r).array() - mu).square().mean();
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    xhat->row(r) = (xv.row(r).array() - mu) * rs;
    y.row(r) = xhat->row(r).cwiseProduct(gv.row(0)) + bv.row(0);
  }
  return t.push(std::move(y), any_grad(t, {x, gamma, beta}),
                [=, out = t.size()](Tape<T>& tp) {
                  const auto& g = tp.grad(Var{out});
                  if (tp.needs_grad(gamma)) tp.grad(gamma) += g.cwiseProduct(*xhat).colwise().sum();
                  if (tp.needs_grad(beta)) tp.grad(beta) += g.colwise().sum();
                  if (!tp.needs_grad(x)) return;
                  const auto& gv = tp.value(gamma);
                  auto& gx = tp.grad(x);
                  for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    RowVector<T> dxhat = g.row(r).cwiseProduct(gv.row(0));
                    const T m1 = dxhat.mean();
                    const T m2 = dxhat.cwiseProduct(xhat->row(r)).mean();
                    gx.row(r).array() +=
                        (*rstd)[r] * (dxhat.array() - m1 - xhat->row(r).array() * m2);
                  }
                });
}

template <typename T>
Var dropout(Tape<T>& t, Var x, T rate) {
  if (!t.training() || rate <= T(0)) return x;
  const auto& xv = t.value(x);
  auto mask = std::make_shared<Matrix<T>>(xv.rows(), xv.cols());
  std::bernoulli_distribution keep(1.0 - double(rate));
  const T inv = T(1) / (T(1) - rate);
  for (Eigen::Index i = 0; i < mask->size(); ++i) mask->data()[i] = keep(t.rng()) ? inv : T(0);
  Matrix<T> y = xv.cwiseProduct(*mask);
  return t.push(std::move(y), t.needs_grad(x), [=, out = t.size()](Tape<T>& tp) {
    tp.grad(x) += tp.grad(Var{out}).cwiseProduct(*mask);
  });
}

template <typename T>
Var embedding(Tape<T>& t, Tensor<T>& table, const std::vector<int>& ids) {
  const auto tab = table.matrix();
  Matrix<T> y(Eigen::Index(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || std::size_t(ids[i]) >= table.rows()) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " out of range");
    }
    y.row(Eigen::Index(i)) = tab.row(ids[i]);
  }
  Tensor<T>* tp_table = &table;
  return t.push(std::move(y), table.requires_grad(), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    auto tg = tp_table->grad_matrix();
    for (std::size_t i = 0; i < ids.size(); ++i) tg.row(ids[i]) += g.row(Eigen::Index(i));
  });
}

template <typename T>
Var attention(Tape<T>& t, Var q, Var k, Var v, const std::vector<std::uint8_t>& key_valid,
              int heads, T scale, MaskFallback fallback) {
  const auto& qv = t.value(q);
  const auto& kv = t.value(k);
  const auto& vv = t.value(v);
  const Eigen::Index m = qv.rows();
  const Eigen::Index n = kv.rows();
  const Eigen::Index d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != n || Eigen::Index(key_valid.size()) != n ||
      heads <= 0 || d % heads != 0) {
    throw std::invalid_argument("attention: shape mismatch");
  }
  const Eigen::Index dh = d / heads;
  bool any_valid = false;
  for (auto b : key_valid) any_valid = any_valid || b != 0;

  // probs[h] is m x n; rows produced by the fallback are flagged constant.
  auto probs = std::make_shared<std::vector<Matrix<T>>>(heads);
  auto constant_row = std::make_shared<std::vector<std::uint8_t>>(m, any_valid ? 0 : 1);
  Matrix<T> y(m, d);
  for (int h = 0; h < heads; ++h) {
    auto qh = qv.middleCols(h * dh, dh);
    auto kh = kv.middleCols(h * dh, dh);
    auto vh = vv.middleCols(h * dh, dh);
    Matrix<T>& p = (*probs)[h];
    p.noalias() = (qh * kh.transpose()) * scale;
    for (Eigen::Index r = 0; r < m; ++r) {
      if (!any_valid) {
        p.row(r).setZero();
        if (fallback == MaskFallback::kSelf && r < n) {
          p(r, r) = T(1);
        } else {
          p.row(r).setConstant(T(1) / T(n));
        }
        continue;
      }
      T mx = -std::numeric_limits<T>::infinity();
      for (Eigen::Index c = 0; c < n; ++c)
        if (key_valid[c]) mx = std::max(mx, p(r, c));
      T total = 0;
      for (Eigen::Index c = 0; c < n; ++c) {
        const T e = key_valid[c] ? std::exp(p(r, c) - mx) : T(0);
        p(r, c) = e;
        total += e;
      }
      p.row(r) /= total;
    }
    y.middleCols(h * dh, dh).noalias() = p * vh;
  }
  return t.push(std::move(y), any_grad(t, {q, k, v}), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    const auto& qv = tp.value(q);
    const auto& kv = tp.value(k);
    const auto& vv = tp.value(v);
    for (int h = 0; h < heads; ++h) {
      const Matrix<T>& p = (*probs)[h];
      auto gh = g.middleCols(h * dh, dh);
      if (tp.needs_grad(v)) tp.grad(v).middleCols(h * dh, dh).noalias() += p.transpose() * gh;
      if (!tp.needs_grad(q) && !tp.needs_grad(k)) continue;
      Matrix<T> dp = gh * vv.middleCols(h * dh, dh).transpose();
      Matrix<T> ds(p.rows(), p.cols());
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        if ((*constant_row)[r]) {
          ds.row(r).setZero();
          continue;
        }
        const T dot = dp.row(r).dot(p.row(r));
        ds.row(r) = p.row(r).cwiseProduct((dp.row(r).array() - dot).matrix());
      }
      ds *= scale;
      if (tp.needs_grad(q))
        tp.grad(q).middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
      if (tp.needs_grad(k))
        tp.grad(k).middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
    }
  });
}

template <typename T>
Var concat_cols(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.rows() != bv.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix<T> y(av.rows(), av.cols() + bv.cols());
  y.leftCols(av.cols()) = av;
  y.rightCols(bv.cols()) = bv;
  const Eigen::Index ac = av.cols();
  const Eigen::Index bc = bv.cols();
  return t.push(std::move(y), any_grad(t, {a, b}), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    if (tp.needs_grad(a)) tp.grad(a) += g.leftCols(ac);
    if (tp.needs_grad(b)) tp.grad(b) += g.rightCols(bc);
  });
}

template <typename T>
Var concat_rows(Tape<T>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index cols = t.value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool grad = false;
  for (auto p : parts) {
    if (t.value(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += t.value(p).rows();
    grad = grad || t.needs_grad(p);
  }
  Matrix<T> y(rows, cols);
  Eigen::Index r = 0;
  for (auto p : parts) {
    y.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  return t.push(std::move(y), grad, [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    Eigen::Index r = 0;
    for (auto p : parts) {
      const Eigen::Index pr = tp.value(p).rows();
      if (tp.needs_grad(p)) tp.grad(p) += g.middleRows(r, pr);
      r += pr;
    }
  });
}

template <typename T>
Var slice_rows(Tape<T>& t, Var x, std::size_t begin, std::size_t count) {
  const auto& xv = t.value(x);
  if (begin + count > std::size_t(xv.rows())) throw std::out_of_range("slice_rows");
  Matrix<T> y = xv.middleRows(Eigen::Index(begin), Eigen::Index(count));
  return t.push(std::move(y), t.needs_grad(x), [=, out = t.size()](Tape<T>& tp) {
    tp.grad(x).middleRows(Eigen::Index(begin), Eigen::Index(count)) += tp.grad(Var{out});
  });
}

template <typename T>
Var rowwise_dot(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "rowwise_dot");
  Matrix<T> y = t.value(a).cwiseProduct(t.value(b)).rowwise().sum();
  return t.push(std::move(y), any_grad(t, {a, b}), [=, out = t.size()](Tape<T>& tp) {
    const auto& g = tp.grad(Var{out});
    if (tp.needs_grad(a)) tp.grad(a) += (tp.value(b).array().colwise() * g.col(0).array()).matrix();
    if (tp.needs_grad(b)) tp.grad(b) += (tp.value(a).array().colwise() * g.col(0).array()).matrix();
  });
}

template <typename T>
Var sum(Tape<T>& t, Var x) {
  Matrix<T> y(1, 1);
  y(0, 0) = t.value(x).sum();
  return t.push(std::move(y), t.needs_grad(x), [=, out = t.size()](Tape<T>& tp) {
    tp.grad(x).array() += tp.grad(Var{out})(0, 0);
  });
}

template <typename T>
Var mean(Tape<T>& t, Var x) {
  const T n = T(t.value(x).size());
  return scale(t, sum(t, x), T(1) / n);
}

template <typename T>
Var bce_with_logits(Tape<T>& t, Var logits, std::size_t positive) {
  const auto& lv = t.value(logits);
  if (lv.cols() != 1 || positive >= std::size_t(lv.rows())) {
    throw std::invalid_argument("bce_with_logits: expects [n x 1] logits and a valid positive");
  }
  Matrix<T> y(1, 1);
  y(0, 0) = bce_with_logits_value<T>({lv.data(), std::size_t(lv.size())}, positive);
  return t.push(std::move(y), t.needs_grad(logits), [=, out = t.size()](Tape<T>& tp) {
    const T g = tp.grad(Var{out})(0, 0);
    const auto& lv = tp.value(logits);
    const T n = T(lv.rows());
    auto& gl = tp.grad(logits);
    for (Eigen::Index i = 0; i < lv.rows(); ++i) {
      const T x = lv(i, 0);
      const T sig = x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
      const T label = std::size_t(i) == positive ? T(1) : T(0);
      gl(i, 0) += g * (sig - label) / n;
    }
  });
}

template <typename T>
Var softmax_xent(Tape<T>& t, Var logits, std::size_t positive) {
  const auto& lv = t.value(logits);
  if (lv.cols() != 1 || positive >= std::size_t(lv.rows())) {
    throw std::invalid_argument("softmax_xent: expects [n x 1] logits and a valid positive");
  }
  auto probs = std::make_shared<std::vector<T>>(lv.data(), lv.data() + lv.size());
  softmax_inplace<T>(*probs);
  Matrix<T> y(1, 1);
  y(0, 0) = -std::log(std::max((*probs)[positive], std::numeric_limits<T>::min()));
  return t.push(std::move(y), t.needs_grad(logits), [=, out = t.size()](Tape<T>& tp) {
    const T g = tp.grad(Var{out})(0, 0);
    auto& gl = tp.grad(logits);
    for (std::size_t i = 0; i < probs->size(); ++i) {
      gl(Eigen::Index(i), 0) += g * ((*probs)[i] - (i == positive ? T(1) : T(0)));
    }
  });
}

}  // namespace ops

#define TOD_INSTANTIATE_OPS(T)                                                               \
  template class Tape<T>;                                                                    \
  template void softmax_inplace<T>(std::span<T>);                                            \
  template T bce_with_logits_value<T>(std::span<const T>, std::size_t);                      \
  namespace ops {                                                                            \
  template Var add<T>(Tape<T>&, Var, Var);                                                   \
  template Var sub<T>(Tape<T>&, Var, Var);                                                   \
  template Var mul<T>(Tape<T>&, Var, Var);                                                   \
  template Var scale<T>(Tape<T>&, Var, T);                                                   \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                           \
  template Var gelu<T>(Tape<T>&, Var);                                                       \
  template Var relu<T>(Tape<T>&, Var);                                                       \
  template Var tanh<T>(Tape<T>&, Var);                                                       \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                    \
  template Var dropout<T>(Tape<T>&, Var, T);                                                 \
  template Var embedding<T>(Tape<T>&, Tensor<T>&, const std::vector<int>&);                  \
  template Var attention<T>(Tape<T>&, Var, Var, Var, const std::vector<std::uint8_t>&, int, \
                            T, MaskFallback);                                                \
  template Var concat_cols<T>(Tape<T>&, Var, Var);                                           \
  template Var concat_rows<T>(Tape<T>&, const std::vector<Var>&);                            \
  template Var slice_rows<T>(Tape<T>&, Var, std::size_t, std::size_t);                       \
  template Var rowwise_dot<T>(Tape<T>&, Var, Var);                                           \
  template Var sum<T>(Tape<T>&, Var);                                                        \
  template Var mean<T>(Tape<T>&, Var);                                                       \
  template Var bce_with_logits<T>(Tape<T>&, Var, std::size_t);                               \
  template Var softmax_xent<T>(Tape<T>&, Var, std::size_t);                                  \
  }

TOD_INSTANTIATE_OPS(float)
TOD_INSTANTIATE_OPS(double)

}  // namespace tod::nn
