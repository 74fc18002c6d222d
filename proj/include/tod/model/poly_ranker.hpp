#pragma once

#include "tod/corpus/types.hpp"
#include "tod/nn/checkpoint.hpp"
#include "tod/nn/encoder.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tod::model {

struct RankerConfig {
  // Shared by all encoders; max_len is derived from the length limits.
  nn::EncoderConfig encoder;
  int history_len = 256;
  int feature_len = 64;
  int response_len = 32;
  int history_codes = 16;
  int feature_codes = 8;
  bool shared_encoder = false;

  void validate() const;
  std::string to_json() const;
  static RankerConfig from_json(const std::string& text);
};

enum class LossKind { kBinary, kCategorical };

// History and feature code vectors as plain matrices.
template <typename T>
struct ContextEncoding {
  nn::Matrix<T> z_h;  // history_codes x d
  nn::Matrix<T> z_f;  // feature_codes x d
};

// Sequence inputs after truncation: history keeps its most recent tokens,
// features and responses keep their first ones.
corpus::TokenIds clip_history(const corpus::TokenIds& history, int limit);
corpus::TokenIds clip_front(const corpus::TokenIds& tokens, int limit);

template <typename T>
class PolyRanker {
 public:
  PolyRanker() = default;
  PolyRanker(const RankerConfig& config, std::uint64_t seed);

  const RankerConfig& config() const { return config_; }
  int dim() const { return config_.encoder.model_dim; }

  nn::ParamList<T> params();

  // Graph construction. The returned code variables are history_codes x d
  // and feature_codes x d. Throws std::invalid_argument when both inputs
  // are empty.
  std::pair<nn::Var, nn::Var> encode_context(nn::Tape<T>& tape, const corpus::TokenIds& history,
                                             const corpus::TokenIds& features);
  // 1 x d vector taken at the prepended response-start position.
  nn::Var encode_response(nn::Tape<T>& tape, const corpus::TokenIds& response);
  // responses: N x d; returns N x 1 raw logits.
  nn::Var score(nn::Tape<T>& tape, nn::Var z_h, nn::Var z_f, nn::Var responses);
  nn::Var loss(nn::Tape<T>& tape, nn::Var logits, std::size_t positive, LossKind kind);

  // Inference helpers running an evaluation-mode tape.
  ContextEncoding<T> context(const corpus::TokenIds& history, const corpus::TokenIds& features);
  nn::RowVector<T> response_vector(const corpus::TokenIds& response);

  // Fusion weights as plain matrices, for tape-free scoring.
  struct FusionWeights {
    nn::Matrix<double> w1, b1, w2, b2;  // [2d x d], [1 x d], [d x d], [1 x d]
  };
  FusionWeights fusion_weights() const;

  nn::Checkpoint to_checkpoint(const corpus::Vocab* vocab = nullptr);
  void load_state(const std::vector<nn::ParamRecord>& records);
  // CRC-32 of the serialized parameters and config; identifies the model.
  std::uint32_t fingerprint();

  template <typename U>
  PolyRanker<U> cast();

 private:
  RankerConfig config_;
  nn::TransformerEncoder<T> history_encoder_;  // the only encoder in shared mode
  nn::TransformerEncoder<T> feature_encoder_;
  nn::TransformerEncoder<T> response_encoder_;
  nn::Tensor<T> history_queries_;
  nn::Tensor<T> feature_queries_;
  nn::LinearParams<T> fusion_in_;
  nn::LinearParams<T> fusion_out_;

  nn::TransformerEncoder<T>& feature_encoder() {
    return config_.shared_encoder ? history_encoder_ : feature_encoder_;
  }
  nn::TransformerEncoder<T>& response_encoder() {
    return config_.shared_encoder ? history_encoder_ : response_encoder_;
  }
};

struct LoadedModel {
  PolyRanker<float> model;
  corpus::Vocab vocab;
  std::uint32_t fingerprint = 0;
};

void save_model(PolyRanker<float>& model, const corpus::Vocab& vocab, const std::filesystem::path& path);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace tod::model
