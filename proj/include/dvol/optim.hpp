#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dvol/linalg.hpp"
#include "dvol/util.hpp"

namespace dvol {

struct OptimReport {
  std::size_t iterations = 0;
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
};

inline double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

// Newton ascent with step halving for a concave objective with analytic
// gradient and Hessian. fn fills grad (k) and hess (k x k, row-major) and
// returns the objective; non-finite objective means "outside the domain".
using NewtonFn =
    std::function<double(const std::vector<double>&, std::vector<double>&,
                         std::vector<double>&)>;

inline OptimReport newton_maximize(const NewtonFn& fn, std::vector<double>& x,
                                   double grad_tol, std::size_t max_iter) {
  const std::size_t k = x.size();
  std::vector<double> grad(k), hess(k * k);
  double value = fn(x, grad, hess);
  if (!std::isfinite(value))
    throw ConvergenceError("objective is not finite at the starting point");

  OptimReport report;
  for (report.iterations = 0; report.iterations < max_iter; ++report.iterations) {
    report.grad_norm = inf_norm(grad);
    if (report.grad_norm < grad_tol) {
      report.converged = true;
      return report;
    }
    // solve (-H) d = g; -H is PD for a strictly concave objective, but
    // near-collinear columns can defeat the factorization in doubles, so
    // escalate a ridge until it goes through
    std::vector<double> neg_h(k * k);
    double diag_scale = 1e-12;
    for (std::size_t i = 0; i < k * k; ++i) neg_h[i] = -hess[i];
    for (std::size_t i = 0; i < k; ++i)
      diag_scale = std::max(diag_scale, std::fabs(neg_h[i * k + i]));
    std::optional<std::vector<double>> step = solve_cholesky(neg_h, grad, k);
    for (double ridge = 1e-10; !step && ridge <= 1.0; ridge *= 100.0) {
      std::vector<double> damped = neg_h;
      for (std::size_t i = 0; i < k; ++i) damped[i * k + i] += ridge * diag_scale;
      step = solve_cholesky(std::move(damped), grad, k);
    }
    if (!step) throw ConvergenceError("Hessian is not negative definite");

    double scale = 1.0;
    std::vector<double> trial(k), tgrad(k), thess(k * k);
    for (int halvings = 0;; ++halvings) {
      if (halvings > 60)
        throw ConvergenceError("line search failed (Newton step rejected)");
      for (std::size_t i = 0; i < k; ++i) trial[i] = x[i] + scale * (*step)[i];
      const double tv = fn(trial, tgrad, thess);
      if (std::isfinite(tv) && tv >= value - 1e-14 * std::fabs(value)) {
        x = trial;
        value = tv;
        grad = tgrad;
        hess = thess;
        break;
      }
      scale *= 0.5;
    }
  }
  report.grad_norm = inf_norm(grad);
  throw ConvergenceError("Newton did not converge in " + format_int(max_iter) +
                         " iterations (grad norm " + format_double(report.grad_norm) +
                         ")");
}

// BFGS descent with a backtracking Armijo line search. fn fills the gradient
// and returns the objective (minimized); non-finite values shrink the step.
using GradFn =
    std::function<double(const std::vector<double>&, std::vector<double>&)>;

inline OptimReport bfgs_minimize(const GradFn& fn, std::vector<double>& x,
                                 double grad_tol, std::size_t max_iter) {
  const std::size_t k = x.size();
  std::vector<double> grad(k);
  double value = fn(x, grad);
  if (!std::isfinite(value))
    throw ConvergenceError("objective is not finite at the starting point");

  // inverse Hessian approximation; rescaled to s.y/y.y after the first
  // accepted step (Nocedal & Wright), which keeps unit steps acceptable on
  // badly scaled likelihoods
  std::vector<double> h(k * k, 0.0);
  double h_scale = 1.0;
  auto reset_h = [&]() {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i) h[i * k + i] = h_scale;
  };
  reset_h();
  bool scaled_yet = false;

  OptimReport report;
  std::vector<double> dir(k), trial(k), tgrad(k), s(k), ygrad(k);
  int stagnant = 0;
  for (report.iterations = 0; report.iterations < max_iter; ++report.iterations) {
    report.grad_norm = inf_norm(grad);
    if (report.grad_norm < grad_tol) {
      report.converged = true;
      return report;
    }
    // the objective is computed to ~1e-16 relative, so near the optimum the
    // attainable gradient norm floors out at a data-dependent level; once
    // improvement hits that floor, accept a gradient within 1e3 of the target
    if (stagnant >= 5 && report.grad_norm < grad_tol * 1e3) {
      report.converged = true;
      return report;
    }
    double descent = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < k; ++j) d += h[i * k + j] * grad[j];
      dir[i] = -d;
      descent += dir[i] * grad[i];
    }
    if (!(descent < 0.0)) {  // corrupted approximation
      reset_h();
      descent = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        dir[i] = -h_scale * grad[i];
        descent += dir[i] * grad[i];
      }
    }

    double step = 1.0;
    double tv = std::numeric_limits<double>::quiet_NaN();
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      for (int tries = 0; tries < 40; ++tries) {
        for (std::size_t i = 0; i < k; ++i) trial[i] = x[i] + step * dir[i];
        tv = fn(trial, tgrad);
        if (std::isfinite(tv) && tv <= value + 1e-4 * step * descent) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (accepted) break;
      // retry once along the plain (scaled) gradient
      reset_h();
      descent = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        dir[i] = -h_scale * grad[i];
        descent += dir[i] * grad[i];
      }
      step = 1.0;
    }
    if (!accepted)
      throw ConvergenceError("line search failed (descent direction rejected)");

    double sy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      s[i] = trial[i] - x[i];
      ygrad[i] = tgrad[i] - grad[i];
      sy += s[i] * ygrad[i];
    }
    stagnant = value - tv <= 1e-12 * (std::fabs(value) + 1.0) ? stagnant + 1 : 0;
    x = trial;
    value = tv;
    grad = tgrad;

    // curvature guard: skip the update when s.y is not safely positive
    double ss = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      ss += s[i] * s[i];
      yy += ygrad[i] * ygrad[i];
    }
    if (!(sy > 1e-12 * std::sqrt(ss * yy))) continue;

    if (!scaled_yet) {
      h_scale = sy / yy;
      reset_h();
      scaled_yet = true;
    }

    const double rho = 1.0 / sy;
    // H <- (I - rho s y') H (I - rho y s') + rho s s'
    std::vector<double> hy(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) hy[i] += h[i * k + j] * ygrad[j];
    double yhy = 0.0;
    for (std::size_t i = 0; i < k; ++i) yhy += ygrad[i] * hy[i];
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        h[i * k + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) +
                        rho * (1.0 + rho * yhy) * s[i] * s[j];
      }
    }
  }
  report.grad_norm = inf_norm(grad);
  throw ConvergenceError("BFGS did not converge in " + format_int(max_iter) +
                         " iterations (grad norm " + format_double(report.grad_norm) +
                         ")");
}

// Central-difference Hessian of an analytic gradient; symmetrized.
inline std::vector<double> numerical_hessian(
    const std::function<void(const std::vector<double>&, std::vector<double>&)>& grad_fn,
    const std::vector<double>& x, double h = 1e-5) {
  const std::size_t k = x.size();
  std::vector<double> hess(k * k);
  std::vector<double> gp(k), gm(k);
  std::vector<double> xs = x;
  for (std::size_t i = 0; i < k; ++i) {
    const double hi = h * std::max(1.0, std::fabs(x[i]));
    xs[i] = x[i] + hi;
    grad_fn(xs, gp);
    xs[i] = x[i] - hi;
    grad_fn(xs, gm);
    xs[i] = x[i];
    for (std::size_t j = 0; j < k; ++j)
      hess[i * k + j] = (gp[j] - gm[j]) / (2.0 * hi);
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double avg = 0.5 * (hess[i * k + j] + hess[j * k + i]);
      hess[i * k + j] = hess[j * k + i] = avg;
    }
  return hess;
}

}  // namespace dvol
