#include "tod/model/inference.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tod::model {
namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void gelu_inplace(DMatrix& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    x.data()[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
}

void softmax_rows(DMatrix& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    nn::softmax_inplace<double>({logits.row(r).data(), std::size_t(logits.cols())});
  }
}

DMatrix attend_all(const DMatrix& queries, const DMatrix& codes) {
  DMatrix w = (queries * codes.transpose()) / std::sqrt(double(codes.cols()));
  softmax_rows(w);
  return w * codes;
}

}  // namespace

DVector cross_attend(const DMatrix& codes, const DVector& z_r) {
  DMatrix q = z_r;
  return attend_all(q, codes).row(0);
}

double fuse_and_score(const DVector& a_h, const DVector& a_f, const DVector& z_r,
                      const PolyRanker<float>::FusionWeights& fusion) {
  DMatrix joint(1, a_h.size() + a_f.size());
  joint << a_h, a_f;
  DMatrix hidden = joint * fusion.w1 + fusion.b1;
  gelu_inplace(hidden);
  const DMatrix a_hf = hidden * fusion.w2 + fusion.b2;
  return a_hf.row(0).dot(z_r);
}

std::vector<double> score_batch(const DMatrix& z_h, const DMatrix& z_f, const DMatrix& responses,
                                const PolyRanker<float>::FusionWeights& fusion) {
  const Eigen::Index n = responses.rows();
  const Eigen::Index d = responses.cols();
  DMatrix joint(n, 2 * d);
  joint.leftCols(d) = attend_all(responses, z_h);
  joint.rightCols(d) = attend_all(responses, z_f);
  DMatrix hidden = joint * fusion.w1;
  hidden.rowwise() += fusion.b1.row(0);
  gelu_inplace(hidden);
  DMatrix a_hf = hidden * fusion.w2;
  a_hf.rowwise() += fusion.b2.row(0);
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) scores[std::size_t(i)] = a_hf.row(i).dot(responses.row(i));
  return scores;
}

void sort_ranked(std::vector<Ranked>& ranked) {
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.template_id < b.template_id;
  });
}

std::vector<Ranked> rank_rows(const PolyRanker<float>::FusionWeights& fusion, const ContextEncoding<float>& context,
                              const PoolCache& cache, std::span<const std::size_t> rows, std::size_t k) {
  if (rows.empty()) return {};
  if (k > rows.size()) {
    spdlog::warn("requested top-{} from {} candidates; clamping", k, rows.size());
    k = rows.size();
  }
  DMatrix responses(Eigen::Index(rows.size()), cache.responses.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    responses.row(Eigen::Index(i)) = cache.responses.row(Eigen::Index(rows[i])).cast<double>();
  }
  const auto scores = score_batch(context.z_h.cast<double>(), context.z_f.cast<double>(), responses, fusion);
  std::vector<Ranked> ranked(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) ranked[i] = {cache.template_ids[rows[i]], rows[i], scores[i]};
  if (k < ranked.size()) {
    std::partial_sort(ranked.begin(), ranked.begin() + std::ptrdiff_t(k), ranked.end(),
                      [](const Ranked& a, const Ranked& b) {
                        if (a.score != b.score) return a.score > b.score;
                        return a.template_id < b.template_id;
                      });
    ranked.resize(k);
  } else {
    sort_ranked(ranked);
  }
  return ranked;
}

std::vector<Ranked> rank(const PolyRanker<float>::FusionWeights& fusion, const ContextEncoding<float>& context,
                         const PoolCache& cache, std::size_t k, std::uint32_t model_fingerprint) {
  if (cache.fingerprint != model_fingerprint) {
    throw FingerprintMismatch("pool cache was encoded by a different model");
  }
  std::vector<std::size_t> rows(cache.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rank_rows(fusion, context, cache, rows, k);
}

}  // namespace tod::model
