#include "tod/nn/checkpoint.hpp"
#include "tod/nn/encoder.hpp"
#include "tod/nn/grad_check.hpp"
#include "tod/nn/optim.hpp"
#include "tod/nn/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace tod::nn;

namespace {

Tensor<double> filled(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape), true);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("linear and square gradients") {
  Tensor<double> w({1}, true);
  w.values()[0] = 2.0;
  {
    Tape<double> tape;
    Matrix<double> x(1, 1);
    x << 3.0;
    Var loss = ops::mul(tape, tape.param(w), tape.constant(x));
    tape.backward(loss);
    CHECK(w.grad()[0] == doctest::Approx(3.0));
  }
  w.zero_grad();
  w.values()[0] = 3.0;
  {
    Tape<double> tape;
    Var p = tape.param(w);
    tape.backward(ops::mul(tape, p, p));
    CHECK(w.grad()[0] == doctest::Approx(6.0));
  }
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<double> tape;
  Var v = tape.constant(Matrix<double>::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
}

TEST_CASE("losses at known points") {
  const std::vector<double> zeros(5, 0.0);
  CHECK(bce_with_logits_value<double>(zeros, 2) == doctest::Approx(std::log(2.0)));
  std::vector<double> saturated(5, -30.0);
  saturated[1] = 30.0;
  CHECK(bce_with_logits_value<double>(saturated, 1) < 1e-12);
  Tape<double> tape;
  Var logits = tape.constant(Matrix<double>::Zero(4, 1));
  CHECK(tape.value(ops::softmax_xent(tape, logits, 0))(0, 0) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("each op passes a finite-difference check") {
  std::mt19937_64 rng(5);
  auto a = filled({3, 4}, rng);
  auto b = filled({3, 4}, rng);
  auto w = filled({4, 2}, rng);
  auto bias = filled({1, 2}, rng);
  auto gain = filled({1, 4}, rng);
  auto beta = filled({1, 4}, rng);
  ParamList<double> params{{"a", &a}, {"b", &b}, {"w", &w}, {"bias", &bias}, {"gain", &gain}, {"beta", &beta}};

  SUBCASE("arithmetic and activations") {
    auto loss = [&](Tape<double>& t) {
      Var x = ops::add(t, t.param(a), ops::mul(t, t.param(b), t.param(a)));
      Var y = ops::sub(t, ops::gelu(t, x), ops::scale(t, ops::tanh(t, t.param(b)), 0.3));
      return ops::sum(t, ops::linear(t, y, t.param(w), t.param(bias)));
    };
    CHECK(grad_check(loss, params, 1e-6).passed);
  }
  SUBCASE("layer norm and attention with a masked key") {
    auto loss = [&](Tape<double>& t) {
      Var x = ops::layer_norm(t, t.param(a), t.param(gain), t.param(beta));
      Var att = ops::attention(t, x, t.param(b), t.param(b), {1, 0, 1}, 2, 0.5, MaskFallback::kSelf);
      return ops::mean(t, ops::rowwise_dot(t, att, t.param(a)));
    };
    CHECK(grad_check(loss, params, 1e-6).passed);
  }
  SUBCASE("concatenation, slicing and cross-entropy") {
    auto loss = [&](Tape<double>& t) {
      Var rows = ops::concat_rows(t, {t.param(a), t.param(b)});
      Var cols = ops::concat_cols(t, ops::slice_rows(t, rows, 1, 4), ops::slice_rows(t, rows, 2, 4));
      Var logits = ops::matmul(t, cols, ops::concat_rows(t, {t.param(w), t.param(w)}));
      Var flat = ops::slice_rows(t, ops::rowwise_dot(t, logits, logits), 0, 4);
      return ops::add(t, ops::bce_with_logits(t, flat, 1), ops::softmax_xent(t, flat, 2));
    };
    CHECK(grad_check(loss, params, 1e-6).passed);
  }
}

TEST_CASE("grad check catches an injected fault") {
  std::mt19937_64 rng(1);
  auto a = filled({2, 3}, rng);
  ParamList<double> params{{"a", &a}};
  auto loss = [&](Tape<double>& t) { return ops::sum(t, ops::gelu(t, t.param(a))); };
  GradCheckOptions opt;
  opt.grad_hook = [](GradientMap& g) { g["a"][4] += 1e-3; };
  const auto report = grad_check(loss, params, 1e-6, opt);
  CHECK_FALSE(report.passed);
  REQUIRE(report.find("a") != nullptr);
  CHECK_FALSE(report.find("a")->passed);
}

TEST_CASE("encoder ignores the content of padded positions") {
  std::mt19937_64 rng(2);
  EncoderConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.model_dim = 8;
  cfg.ffn_dim = 16;
  cfg.max_len = 8;
  cfg.vocab_size = 20;
  TransformerEncoder<double> enc(cfg, rng);
  const std::vector<std::uint8_t> valid{1, 1, 1, 0, 0};
  Tape<double> t1, t2;
  const Matrix<double> a = t1.value(enc.encode(t1, {5, 6, 7, 8, 9}, valid));
  const Matrix<double> b = t2.value(enc.encode(t2, {5, 6, 7, 13, 2}, valid));
  CHECK((a.topRows(3) - b.topRows(3)).cwiseAbs().maxCoeff() < 1e-12);
  Tape<double> t3;
  CHECK_THROWS_AS(enc.encode(t3, std::vector<int>(9, 5), std::vector<std::uint8_t>(9, 1)), std::length_error);
}

TEST_CASE("adam matches the bias-corrected update by hand") {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.5, -0.25};
  AdamMoments state;
  AdamConfig cfg;
  cfg.lr = 0.1;
  REQUIRE(adam_step<double>(p, g, state, cfg));
  // First step: mhat = g, vhat = g^2, so the update is lr * sign(g) up to eps.
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)));
  const std::vector<double> bad{std::nan(""), 0.0};
  CHECK_FALSE(adam_step<double>(p, bad, state, cfg));
  CHECK(state.step == 1);
}

TEST_CASE("adam clips by global norm and skips non-finite steps") {
  Tensor<float> t({2}, true);
  t.values()[0] = 0.0f;
  t.grad()[0] = 3.0f;
  t.grad()[1] = 4.0f;
  Adam<float> opt({{"t", &t}}, {});
  const auto report = opt.step();
  CHECK(report.applied);
  CHECK(report.grad_norm == doctest::Approx(5.0));
  t.grad()[0] = std::numeric_limits<float>::infinity();
  const float before = t.values()[0];
  CHECK_FALSE(opt.step().applied);
  CHECK(t.values()[0] == before);
}

TEST_CASE("checkpoint round trip and corruption detection") {
  Checkpoint c;
  c.config_json = R"({"k":1})";
  c.params.push_back({"w", {2, 2}, {1.f, 2.f, 3.f, 4.f}});
  c.params.push_back({"b", {3}, {0.5f, -1.f, 2.f}});
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.config_json == c.config_json);
  REQUIRE(back.params.size() == 2);
  CHECK(back.params[1].values == c.params[1].values);
  CHECK(back.checksum == c.checksum);

  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(decode_checkpoint(flipped), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 12)), CheckpointError);
  CHECK(crc32_of("123456789") == 0xCBF43926u);
}

TEST_CASE("restore_params validates names and shapes") {
  Tensor<float> w({2, 2}, true);
  ParamList<float> params{{"w", &w}};
  CHECK_THROWS_AS(restore_params<float>({{"v", {2, 2}, {0, 0, 0, 0}}}, params), CheckpointError);
  CHECK_THROWS_AS(restore_params<float>({{"w", {4}, {0, 0, 0, 0}}}, params), CheckpointError);
  restore_params<float>({{"w", {2, 2}, {1, 2, 3, 4}}}, params);
  CHECK(w.values()[3] == 4.f);
}

}
