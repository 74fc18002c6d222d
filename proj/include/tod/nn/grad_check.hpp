#pragma once

#include "tod/nn/tape.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace tod::nn {

// Builds a scalar loss on the given tape from the parameters under test.
using LossClosure = std::function<Var(Tape<double>&)>;

using GradientMap = std::map<std::string, std::vector<double>>;

struct GroupCheck {
  std::string name;
  std::size_t entries = 0;
  double max_abs_error = 0.0;
  // ||analytic - numeric|| over the group divided by the norm of the whole
  // gradient, so groups whose true gradient is zero do not divide noise by
  // noise.
  double rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GroupCheck> groups;
  bool passed = true;
  // ||analytic - numeric|| / max(||analytic||, ||numeric||) over every
  // parameter.
  double relative_error = 0.0;

  const GroupCheck* find(const std::string& name) const;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Applied to the analytic gradients before comparison; used for fault
  // injection in tests.
  std::function<void(GradientMap&)> grad_hook;
};

GradientMap analytic_gradients(const LossClosure& loss, const ParamList<double>& params);

// Central differences (f(x+h) - f(x-h)) / 2h, one parameter entry at a time.
GradientMap numeric_gradients(const LossClosure& loss, const ParamList<double>& params,
                              double step);

GradCheckReport compare_gradients(const GradientMap& analytic, const GradientMap& numeric,
                                  double tolerance);

GradCheckReport grad_check(const LossClosure& loss, const ParamList<double>& params,
                           double tolerance, const GradCheckOptions& options = {});

}  // namespace tod::nn
