#pragma once

#include "tod/nn/tape.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tod::nn {

struct EncoderConfig {
  int layers = 2;
  int heads = 4;
  int model_dim = 64;
  int ffn_dim = 256;
  int max_len = 256;
  int vocab_size = 5000;
  double dropout = 0.1;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Scaled-uniform initialization for linear maps, N(0, 0.02) for embeddings.
template <typename T>
void init_uniform(Tensor<T>& t, std::mt19937_64& rng, double bound);
template <typename T>
void init_normal(Tensor<T>& t, std::mt19937_64& rng, double stddev);

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [1 x out]

  LinearParams() = default;
  LinearParams(int in, int out, std::mt19937_64& rng);
  Var apply(Tape<T>& tape, Var x);
  void collect(const std::string& prefix, ParamList<T>& out);
};

template <typename T>
struct EncoderLayerParams {
  LinearParams<T> query, key, value, output;
  Tensor<T> norm1_gain, norm1_bias;
  LinearParams<T> ffn_in, ffn_out;
  Tensor<T> norm2_gain, norm2_bias;
};

// Post-norm transformer encoder: token + learned position embeddings, then
// `layers` blocks of self-attention -> add&norm -> feed-forward -> add&norm.
template <typename T>
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(const EncoderConfig& config, std::mt19937_64& rng);

  // valid[i]==0 marks a padded position, which no query may attend to.
  // Returns a [tokens x model_dim] variable. Throws std::length_error when
  // the sequence exceeds max_len.
  Var encode(Tape<T>& tape, const std::vector<int>& tokens,
             const std::vector<std::uint8_t>& valid);

  const EncoderConfig& config() const { return config_; }
  void collect(const std::string& prefix, ParamList<T>& out);

 private:
  EncoderConfig config_;
  Tensor<T> token_embedding_;
  Tensor<T> position_embedding_;
  std::vector<EncoderLayerParams<T>> layers_;
};

}  // namespace tod::nn
