#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "padst/graph.hpp"

namespace gradcheck {

struct Result {
  double max_rel_error = 0;
  std::string worst;  // "param[index]: analytic vs numeric"
  std::size_t checked = 0;
};

using Build = std::function<padst::Var(padst::Graph<double>&)>;

// Compares backward() against central differences for every element of
// every parameter. Relative error is |a - n| / max(|a|, |n|); pairs where
// both are exactly zero count as agreeing. A positive floor bounds the
// denominator from below.
inline Result check(const std::vector<padst::Parameter<double>*>& params, const Build& build,
                    double h = 1e-6, double floor = 0) {
  for (auto* p : params) p->zero_grad();
  padst::Graph<double> g;
  g.backward(build(g));
  std::vector<std::vector<double>> analytic;
  for (auto* p : params) analytic.emplace_back(p->grad.data().begin(), p->grad.data().end());

  auto loss = [&] {
    padst::Graph<double> probe(false);
    return probe.value(build(probe))[0];
  };

  Result r;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi]->value.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double numeric = oracle::central_difference(loss, data[i], h);
      const double a = analytic[pi][i];
      const double scale = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = scale == 0 ? 0.0 : std::abs(a - numeric) / scale;
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = params[pi]->name + "[" + std::to_string(i) + "]: " + std::to_string(a) +
                  " vs " + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace gradcheck
