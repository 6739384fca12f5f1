#include "contextshot/gradcheck.hpp"

#include <cmath>

#include "contextshot/error.hpp"

namespace cshot {

GradCheckResult grad_check(const std::function<long double()>& loss,
                           std::span<Parameter* const> params, double h) {
  if (!(h > 0.0)) throw DomainError("grad_check step must be positive");
  GradCheckResult r;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      const double hi = saved + h;
      const double lo = saved - h;
      p->value[i] = hi;
      const long double up = loss();
      p->value[i] = lo;
      const long double down = loss();
      p->value[i] = saved;
      // Divide by the step actually taken after rounding saved +- h.
      const double numeric =
          static_cast<double>((up - down) / (static_cast<long double>(hi) - static_cast<long double>(lo)));
      const double analytic = p->grad[i];
      const double rel = std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
      ++r.entries_checked;
      if (rel > r.max_rel_error || std::isnan(rel)) {
        r.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        r.worst_param = p->name;
        r.worst_index = i;
        r.analytic = analytic;
        r.numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace cshot
