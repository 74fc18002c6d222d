#include "tod/nn/encoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tod::nn {

void EncoderConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("encoder config: ") + name + " must be positive");
  };
  positive(layers, "layers");
  positive(heads, "heads");
  positive(model_dim, "model_dim");
  positive(ffn_dim, "ffn_dim");
  positive(max_len, "max_len");
  positive(vocab_size, "vocab_size");
  if (model_dim % heads != 0) {
    throw std::invalid_argument("encoder config: model_dim must be divisible by heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("encoder config: dropout must lie in [0, 1)");
  }
}

template <typename T>
void init_uniform(Tensor<T>& t, std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = T(dist(rng));
}

template <typename T>
void init_normal(Tensor<T>& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = T(dist(rng));
}

template <typename T>
LinearParams<T>::LinearParams(int in, int out, std::mt19937_64& rng)
    : weight({std::size_t(in), std::size_t(out)}, true), bias({1, std::size_t(out)}, true) {
  init_uniform(weight, rng, 1.0 / std::sqrt(double(in)));
}

template <typename T>
Var LinearParams<T>::apply(Tape<T>& tape, Var x) {
  return ops::linear(tape, x, tape.param(weight), tape.param(bias));
}

template <typename T>
void LinearParams<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

namespace {

template <typename T>
Tensor<T> ones_row(int n) {
  Tensor<T> t({1, std::size_t(n)}, true);
  for (auto& v : t.values()) v = T(1);
  return t;
}

}  // namespace

template <typename T>
TransformerEncoder<T>::TransformerEncoder(const EncoderConfig& config, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const int d = config_.model_dim;
  token_embedding_ = Tensor<T>({std::size_t(config_.vocab_size), std::size_t(d)}, true);
  position_embedding_ = Tensor<T>({std::size_t(config_.max_len), std::size_t(d)}, true);
  init_normal(token_embedding_, rng, 0.02);
  init_normal(position_embedding_, rng, 0.02);
  layers_.reserve(config_.layers);
  for (int l = 0; l < config_.layers; ++l) {
    EncoderLayerParams<T> p;
    p.query = LinearParams<T>(d, d, rng);
    p.key = LinearParams<T>(d, d, rng);
    p.value = LinearParams<T>(d, d, rng);
    p.output = LinearParams<T>(d, d, rng);
    p.norm1_gain = ones_row<T>(d);
    p.norm1_bias = Tensor<T>({1, std::size_t(d)}, true);
    p.ffn_in = LinearParams<T>(d, config_.ffn_dim, rng);
    p.ffn_out = LinearParams<T>(config_.ffn_dim, d, rng);
    p.norm2_gain = ones_row<T>(d);
    p.norm2_bias = Tensor<T>({1, std::size_t(d)}, true);
    layers_.push_back(std::move(p));
  }
}

template <typename T>
Var TransformerEncoder<T>::encode(Tape<T>& tape, const std::vector<int>& tokens,
                                  const std::vector<std::uint8_t>& valid) {
  if (tokens.size() != valid.size()) {
    throw std::invalid_argument("encode: mask length differs from sequence length");
  }
  if (tokens.empty()) throw std::invalid_argument("encode: empty sequence");
  if (tokens.size() > std::size_t(config_.max_len)) {
    throw std::length_error("encode: sequence of " + std::to_string(tokens.size()) +
                            " tokens exceeds max_len " + std::to_string(config_.max_len));
  }
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  const T rate = T(config_.dropout);
  const T scale = T(1) / std::sqrt(T(config_.model_dim / config_.heads));

  Var x = ops::add(tape, ops::embedding(tape, token_embedding_, tokens),
                   ops::embedding(tape, position_embedding_, positions));
  x = ops::dropout(tape, x, rate);
  for (auto& layer : layers_) {
    Var q = layer.query.apply(tape, x);
    Var k = layer.key.apply(tape, x);
    Var v = layer.value.apply(tape, x);
    Var att = ops::attention(tape, q, k, v, valid, config_.heads, scale, MaskFallback::kSelf);
    att = ops::dropout(tape, layer.output.apply(tape, att), rate);
    x = ops::layer_norm(tape, ops::add(tape, x, att), tape.param(layer.norm1_gain),
                        tape.param(layer.norm1_bias));
    Var h = ops::gelu(tape, layer.ffn_in.apply(tape, x));
    h = ops::dropout(tape, layer.ffn_out.apply(tape, h), rate);
    x = ops::layer_norm(tape, ops::add(tape, x, h), tape.param(layer.norm2_gain),
                        tape.param(layer.norm2_bias));
  }
  return x;
}

template <typename T>
void TransformerEncoder<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".token_embedding", &token_embedding_});
  out.push_back({prefix + ".position_embedding", &position_embedding_});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& p = layers_[l];
    const std::string base = prefix + ".layer" + std::to_string(l);
    p.query.collect(base + ".query", out);
    p.key.collect(base + ".key", out);
    p.value.collect(base + ".value", out);
    p.output.collect(base + ".output", out);
    out.push_back({base + ".norm1.gain", &p.norm1_gain});
    out.push_back({base + ".norm1.bias", &p.norm1_bias});
    p.ffn_in.collect(base + ".ffn_in", out);
    p.ffn_out.collect(base + ".ffn_out", out);
    out.push_back({base + ".norm2.gain", &p.norm2_gain});
    out.push_back({base + ".norm2.bias", &p.norm2_bias});
  }
}

template void init_uniform<float>(Tensor<float>&, std::mt19937_64&, double);
template void init_uniform<double>(Tensor<double>&, std::mt19937_64&, double);
template void init_normal<float>(Tensor<float>&, std::mt19937_64&, double);
template void init_normal<double>(Tensor<double>&, std::mt19937_64&, double);
template struct LinearParams<float>;
template struct LinearParams<double>;
template class TransformerEncoder<float>;
template class TransformerEncoder<double>;

}  // namespace tod::nn
