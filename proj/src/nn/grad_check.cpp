#include "tod/nn/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace tod::nn {

const GroupCheck* GradCheckReport::find(const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return &g;
  return nullptr;
}

namespace {

double evaluate(const LossClosure& loss) {
  Tape<double> tape(false);
  Var v = loss(tape);
  const auto& value = tape.value(v);
  if (value.size() != 1) throw std::invalid_argument("grad_check: loss must be a scalar");
  return value(0, 0);
}

}  // namespace

GradientMap analytic_gradients(const LossClosure& loss, const ParamList<double>& params) {
  for (auto& p : params) p.tensor->zero_grad();
  Tape<double> tape(false);
  tape.backward(loss(tape));
  GradientMap out;
  for (auto& p : params) {
    auto g = p.tensor->grad();
    out[p.name].assign(g.begin(), g.end());
  }
  return out;
}

GradientMap numeric_gradients(const LossClosure& loss, const ParamList<double>& params,
                              double step) {
  GradientMap out;
  for (auto& p : params) {
    auto values = p.tensor->values();
    auto& dst = out[p.name];
    dst.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate(loss);
      values[i] = saved - step;
      const double down = evaluate(loss);
      values[i] = saved;
      dst[i] = (up - down) / (2.0 * step);
    }
  }
  return out;
}

GradCheckReport compare_gradients(const GradientMap& analytic, const GradientMap& numeric,
                                  double tolerance) {
  GradCheckReport report;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  std::vector<double> group_diff2;
  for (const auto& [name, a] : analytic) {
    auto it = numeric.find(name);
    if (it == numeric.end() || it->second.size() != a.size()) {
      throw std::invalid_argument("compare_gradients: group mismatch for " + name);
    }
    const auto& n = it->second;
    GroupCheck g;
    g.name = name;
    g.entries = a.size();
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - n[i];
      d2 += d * d;
      a2 += a[i] * a[i];
      n2 += n[i] * n[i];
      g.max_abs_error = std::max(g.max_abs_error, std::abs(d));
    }
    diff2 += d2;
    group_diff2.push_back(d2);
    report.groups.push_back(std::move(g));
  }
  const double scale = std::sqrt(std::max(a2, n2));
  auto ratio = [&](double d2) {
    const double r = scale > 0.0 ? std::sqrt(d2) / scale : (d2 > 0.0 ? INFINITY : 0.0);
    return std::isfinite(r) ? r : INFINITY;
  };
  report.relative_error = ratio(diff2);
  report.passed = report.relative_error < tolerance;
  for (std::size_t i = 0; i < report.groups.size(); ++i) {
    auto& g = report.groups[i];
    g.rel_error = ratio(group_diff2[i]);
    g.passed = g.rel_error < tolerance;
  }
  return report;
}

GradCheckReport grad_check(const LossClosure& loss, const ParamList<double>& params,
                           double tolerance, const GradCheckOptions& options) {
  GradientMap analytic = analytic_gradients(loss, params);
  if (options.grad_hook) options.grad_hook(analytic);
  GradientMap numeric = numeric_gradients(loss, params, options.step);
  return compare_gradients(analytic, numeric, tolerance);
}

}  // namespace tod::nn
