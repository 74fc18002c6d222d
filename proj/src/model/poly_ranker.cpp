#include "tod/model/poly_ranker.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace tod::model {

using nlohmann::json;

void RankerConfig::validate() const {
  encoder.validate();
  if (history_len <= 0 || feature_len <= 0 || response_len <= 0) {
    throw std::invalid_argument("ranker config: sequence limits must be positive");
  }
  if (history_codes <= 0 || feature_codes <= 0) {
    throw std::invalid_argument("ranker config: code counts must be positive");
  }
}

std::string RankerConfig::to_json() const {
  json j;
  j["layers"] = encoder.layers;
  j["heads"] = encoder.heads;
  j["model_dim"] = encoder.model_dim;
  j["ffn_dim"] = encoder.ffn_dim;
  j["vocab_size"] = encoder.vocab_size;
  j["dropout"] = encoder.dropout;
  j["history_len"] = history_len;
  j["feature_len"] = feature_len;
  j["response_len"] = response_len;
  j["history_codes"] = history_codes;
  j["feature_codes"] = feature_codes;
  j["shared_encoder"] = shared_encoder;
  return j.dump();
}

RankerConfig RankerConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  RankerConfig c;
  c.encoder.layers = j.at("layers").get<int>();
  c.encoder.heads = j.at("heads").get<int>();
  c.encoder.model_dim = j.at("model_dim").get<int>();
  c.encoder.ffn_dim = j.at("ffn_dim").get<int>();
  c.encoder.vocab_size = j.at("vocab_size").get<int>();
  c.encoder.dropout = j.at("dropout").get<double>();
  c.history_len = j.at("history_len").get<int>();
  c.feature_len = j.at("feature_len").get<int>();
  c.response_len = j.at("response_len").get<int>();
  c.history_codes = j.at("history_codes").get<int>();
  c.feature_codes = j.at("feature_codes").get<int>();
  c.shared_encoder = j.at("shared_encoder").get<bool>();
  c.validate();
  return c;
}

corpus::TokenIds clip_history(const corpus::TokenIds& history, int limit) {
  if (history.size() <= std::size_t(limit)) return history;
  return corpus::TokenIds(history.end() - limit, history.end());
}

corpus::TokenIds clip_front(const corpus::TokenIds& tokens, int limit) {
  if (tokens.size() <= std::size_t(limit)) return tokens;
  return corpus::TokenIds(tokens.begin(), tokens.begin() + limit);
}

template <typename T>
PolyRanker<T>::PolyRanker(const RankerConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int d = config_.encoder.model_dim;
  nn::EncoderConfig ec = config_.encoder;
  if (config_.shared_encoder) {
    ec.max_len = std::max(config_.history_len + config_.feature_len, config_.response_len + 1);
    history_encoder_ = nn::TransformerEncoder<T>(ec, rng);
  } else {
    ec.max_len = config_.history_len;
    history_encoder_ = nn::TransformerEncoder<T>(ec, rng);
    ec.max_len = config_.feature_len;
    feature_encoder_ = nn::TransformerEncoder<T>(ec, rng);
    ec.max_len = config_.response_len + 1;
    response_encoder_ = nn::TransformerEncoder<T>(ec, rng);
  }
  history_queries_ = nn::Tensor<T>({std::size_t(config_.history_codes), std::size_t(d)}, true);
  feature_queries_ = nn::Tensor<T>({std::size_t(config_.feature_codes), std::size_t(d)}, true);
  nn::init_normal(history_queries_, rng, 0.02);
  nn::init_normal(feature_queries_, rng, 0.02);
  fusion_in_ = nn::LinearParams<T>(2 * d, d, rng);
  fusion_out_ = nn::LinearParams<T>(d, d, rng);
}

template <typename T>
nn::ParamList<T> PolyRanker<T>::params() {
  nn::ParamList<T> out;
  if (config_.shared_encoder) {
    history_encoder_.collect("shared_encoder", out);
  } else {
    history_encoder_.collect("history_encoder", out);
    feature_encoder_.collect("feature_encoder", out);
    response_encoder_.collect("response_encoder", out);
  }
  out.push_back({"history_codes", &history_queries_});
  out.push_back({"feature_codes", &feature_queries_});
  fusion_in_.collect("fusion.in", out);
  fusion_out_.collect("fusion.out", out);
  return out;
}

namespace {

// A lone masked pad stands in for an empty input so every encoder call has
// at least one position.
void pad_if_empty(corpus::TokenIds& tokens, std::vector<std::uint8_t>& valid) {
  if (tokens.empty()) {
    tokens.push_back(corpus::Vocab::kPad);
    valid.push_back(0);
  }
}

}  // namespace

template <typename T>
std::pair<nn::Var, nn::Var> PolyRanker<T>::encode_context(nn::Tape<T>& tape, const corpus::TokenIds& history,
                                                          const corpus::TokenIds& features) {
  if (history.empty() && features.empty()) {
    throw std::invalid_argument("encode_context: history and features are both empty");
  }
  const T scale = T(1) / std::sqrt(T(dim()));
  corpus::TokenIds h = clip_history(history, config_.history_len);
  corpus::TokenIds f = clip_front(features, config_.feature_len);
  nn::Var hq = tape.param(history_queries_);
  nn::Var fq = tape.param(feature_queries_);

  if (config_.shared_encoder) {
    corpus::TokenIds joint = h;
    joint.insert(joint.end(), f.begin(), f.end());
    std::vector<std::uint8_t> valid(joint.size(), 1);
    std::vector<std::uint8_t> h_keys(joint.size(), 0);
    std::vector<std::uint8_t> f_keys(joint.size(), 0);
    for (std::size_t i = 0; i < h.size(); ++i) h_keys[i] = 1;
    for (std::size_t i = h.size(); i < joint.size(); ++i) f_keys[i] = 1;
    nn::Var v = history_encoder_.encode(tape, joint, valid);
    nn::Var z_h = nn::ops::attention(tape, hq, v, v, h_keys, 1, scale, nn::MaskFallback::kUniform);
    nn::Var z_f = nn::ops::attention(tape, fq, v, v, f_keys, 1, scale, nn::MaskFallback::kUniform);
    return {z_h, z_f};
  }

  std::vector<std::uint8_t> h_valid(h.size(), 1);
  std::vector<std::uint8_t> f_valid(f.size(), 1);
  pad_if_empty(h, h_valid);
  pad_if_empty(f, f_valid);
  nn::Var v_h = history_encoder_.encode(tape, h, h_valid);
  nn::Var v_f = feature_encoder().encode(tape, f, f_valid);
  nn::Var z_h = nn::ops::attention(tape, hq, v_h, v_h, h_valid, 1, scale, nn::MaskFallback::kUniform);
  nn::Var z_f = nn::ops::attention(tape, fq, v_f, v_f, f_valid, 1, scale, nn::MaskFallback::kUniform);
  return {z_h, z_f};
}

template <typename T>
nn::Var PolyRanker<T>::encode_response(nn::Tape<T>& tape, const corpus::TokenIds& response) {
  if (response.empty()) throw std::invalid_argument("encode_response: empty response");
  corpus::TokenIds tokens{corpus::Vocab::kRespStart};
  const auto body = clip_front(response, config_.response_len);
  tokens.insert(tokens.end(), body.begin(), body.end());
  std::vector<std::uint8_t> valid(tokens.size(), 1);
  nn::Var v = response_encoder().encode(tape, tokens, valid);
  return nn::ops::slice_rows(tape, v, 0, 1);
}

template <typename T>
nn::Var PolyRanker<T>::score(nn::Tape<T>& tape, nn::Var z_h, nn::Var z_f, nn::Var responses) {
  const T scale = T(1) / std::sqrt(T(dim()));
  std::vector<std::uint8_t> h_keys(tape.value(z_h).rows(), 1);
  std::vector<std::uint8_t> f_keys(tape.value(z_f).rows(), 1);
  nn::Var a_h = nn::ops::attention(tape, responses, z_h, z_h, h_keys, 1, scale, nn::MaskFallback::kUniform);
  nn::Var a_f = nn::ops::attention(tape, responses, z_f, z_f, f_keys, 1, scale, nn::MaskFallback::kUniform);
  nn::Var hidden = nn::ops::gelu(tape, fusion_in_.apply(tape, nn::ops::concat_cols(tape, a_h, a_f)));
  nn::Var a_hf = fusion_out_.apply(tape, hidden);
  return nn::ops::rowwise_dot(tape, a_hf, responses);
}

template <typename T>
nn::Var PolyRanker<T>::loss(nn::Tape<T>& tape, nn::Var logits, std::size_t positive, LossKind kind) {
  return kind == LossKind::kBinary ? nn::ops::bce_with_logits(tape, logits, positive)
                                   : nn::ops::softmax_xent(tape, logits, positive);
}

template <typename T>
ContextEncoding<T> PolyRanker<T>::context(const corpus::TokenIds& history, const corpus::TokenIds& features) {
  nn::Tape<T> tape(false);
  auto [z_h, z_f] = encode_context(tape, history, features);
  return {tape.value(z_h), tape.value(z_f)};
}

template <typename T>
nn::RowVector<T> PolyRanker<T>::response_vector(const corpus::TokenIds& response) {
  nn::Tape<T> tape(false);
  return tape.value(encode_response(tape, response)).row(0);
}

template <typename T>
typename PolyRanker<T>::FusionWeights PolyRanker<T>::fusion_weights() const {
  FusionWeights w;
  w.w1 = fusion_in_.weight.matrix().template cast<double>();
  w.b1 = fusion_in_.bias.matrix().template cast<double>();
  w.w2 = fusion_out_.weight.matrix().template cast<double>();
  w.b2 = fusion_out_.bias.matrix().template cast<double>();
  return w;
}

template <typename T>
nn::Checkpoint PolyRanker<T>::to_checkpoint(const corpus::Vocab* vocab) {
  nn::Checkpoint ckpt;
  json j;
  j["ranker"] = json::parse(config_.to_json());
  if (vocab != nullptr) j["vocab"] = vocab->tokens();
  ckpt.config_json = j.dump();
  ckpt.params = nn::snapshot_params(params());
  return ckpt;
}

template <typename T>
void PolyRanker<T>::load_state(const std::vector<nn::ParamRecord>& records) {
  nn::restore_params(records, params());
}

template <typename T>
std::uint32_t PolyRanker<T>::fingerprint() {
  nn::Checkpoint ckpt = to_checkpoint();
  nn::encode_checkpoint(ckpt);
  return ckpt.checksum;
}

template <typename T>
template <typename U>
PolyRanker<U> PolyRanker<T>::cast() {
  PolyRanker<U> out(config_, 0);
  out.load_state(nn::snapshot_params(params()));
  return out;
}

void save_model(PolyRanker<float>& model, const corpus::Vocab& vocab, const std::filesystem::path& path) {
  nn::Checkpoint ckpt = model.to_checkpoint(&vocab);
  nn::save_checkpoint(ckpt, path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  json j;
  try {
    j = json::parse(ckpt.config_json);
  } catch (const json::parse_error& e) {
    throw nn::CheckpointError(std::string("checkpoint config is not JSON: ") + e.what());
  }
  if (!j.contains("ranker") || !j.contains("vocab")) {
    throw nn::CheckpointError("checkpoint lacks ranker config or vocabulary");
  }
  const RankerConfig config = RankerConfig::from_json(j["ranker"].dump());
  auto tokens = j["vocab"].get<std::vector<std::string>>();
  if (tokens.size() < std::size_t(corpus::Vocab::kReserved)) throw nn::CheckpointError("checkpoint vocabulary too small");
  tokens.erase(tokens.begin(), tokens.begin() + corpus::Vocab::kReserved);
  LoadedModel out{PolyRanker<float>(config, 0), corpus::Vocab(tokens), 0};
  out.model.load_state(ckpt.params);
  out.fingerprint = out.model.fingerprint();
  return out;
}

template class PolyRanker<float>;
template class PolyRanker<double>;
template PolyRanker<double> PolyRanker<float>::cast<double>();
template PolyRanker<float> PolyRanker<double>::cast<float>();
template PolyRanker<float> PolyRanker<float>::cast<float>();
template PolyRanker<double> PolyRanker<double>::cast<double>();

}  // namespace tod::model
