#pragma once

#include <functional>
#include <span>
#include <string>

#include "contextshot/autodiff.hpp"

namespace cshot {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

// Compares each parameter's stored gradient against a central difference of
// `loss`. Relative error per entry is |analytic - numeric| / (|analytic| + 1e-8).
// Parameter values are restored exactly after each probe. The loss may be
// evaluated in extended precision; the difference is taken before rounding.
GradCheckResult grad_check(const std::function<long double()>& loss,
                           std::span<Parameter* const> params, double h = 1e-5);

}  // namespace cshot
