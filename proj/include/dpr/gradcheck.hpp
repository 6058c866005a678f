#pragma once

#include <cmath>
#include <functional>

#include "dpr/errors.hpp"
#include "dpr/tape.hpp"
#include "dpr/vec.hpp"

namespace dpr::ad {

/// A differentiable scalar map built on a fresh tape from one input leaf.
using ScalarMap = std::function<Var(Tape&, Var)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// `value_fn` re-evaluates the function at perturbed points.
inline double max_rel_error(const Vec& analytic, const std::function<double(const Vec&)>& value_fn,
                            const Vec& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("max_rel_error: step must be positive");
  double worst = 0.0;
  Vec x = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    x[i] = point[i] + step;
    double fp = value_fn(x);
    x[i] = point[i] - step;
    double fm = value_fn(x);
    x[i] = point[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw CheckFailedError("grad_check: non-finite function value");
    double fd = (fp - fm) / (2.0 * step);
    double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Compares the tape gradient of `f` at `point` against central differences.
inline double grad_check(const ScalarMap& f, const Vec& point, double step) {
  Tape tape;
  Var x = tape.leaf(point);
  Var y = f(tape, x);
  if (tape.val(y).size() != 1)
    throw std::invalid_argument("grad_check: function must return a scalar");
  if (!std::isfinite(tape.val(y)[0]))
    throw CheckFailedError("grad_check: non-finite function value");
  tape.backward(y);
  Vec analytic = tape.grad(x);
  auto value_fn = [&f](const Vec& p) {
    Tape t;
    Var xv = t.leaf(p);
    return t.val(f(t, xv))[0];
  };
  return max_rel_error(analytic, value_fn, point, step);
}

}  // namespace dpr::ad
