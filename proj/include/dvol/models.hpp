#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvol/design.hpp"
#include "dvol/halton.hpp"
#include "dvol/optim.hpp"
#include "dvol/util.hpp"

namespace dvol {

enum class Family { kPoisson, kNegBin, kRandomPoisson };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::kPoisson: return "poisson";
    case Family::kNegBin: return "negbin";
    case Family::kRandomPoisson: return "random_poisson";
  }
  return "unknown";
}

struct ModelSpec {
  Family family = Family::kPoisson;
  std::vector<std::string> covariates;         // documentation of the matrix
  std::vector<std::string> random_covariates;  // declaration order = prime order
  std::size_t n_draws = 200;
  std::size_t halton_skip = 10;
  double newton_grad_tol = 1e-8;
  double quasi_grad_tol = 1e-6;
  std::size_t max_iter = 500;

  void validate(const DesignMatrix& data) const {
    if (!covariates.empty() && covariates != data.names)
      throw ConfigError("model covariates do not match the design matrix");
    for (std::size_t j = 0; j < data.k; ++j)
      if (data.names[j] == "intercept") data.validate_intercept(j);
    for (const auto& r : random_covariates)
      data.col_index(r);  // throws on unknown
    if (family == Family::kRandomPoisson) {
      if (random_covariates.empty())
        throw ConfigError("random_poisson needs at least one random covariate");
      if (n_draws < 50)
        throw ConfigError("random_poisson needs n_draws >= 50");
    }
  }
};

struct FitResult {
  Family family = Family::kPoisson;
  std::vector<std::string> coef_names;
  std::vector<double> beta, se, z;
  std::vector<std::size_t> random_indices;  // columns with random coefficients
  std::vector<double> sigma, sigma_se, sigma_z;
  bool has_alpha = false;
  double alpha = 0.0, alpha_se = 0.0, alpha_z = 0.0;
  double ll_zero = 0.0, ll_converged = 0.0, aic = 0.0, mcfadden = 0.0;
  std::size_t k_params = 0;
  std::size_t n_draws = 0, halton_skip = 10;
  std::vector<std::optional<double>> marginal;  // per coefficient
  OptimReport report;
};

// aic = 2k - 2 LL(beta); McFadden rho^2 = 1 - LL(beta)/LL(0).
inline std::pair<double, double> fit_metrics(double ll_zero, double ll_converged,
                                             std::size_t k) {
  if (ll_zero == 0.0) throw DataError("fit_metrics: LL(0) must be nonzero");
  const double aic = 2.0 * static_cast<double>(k) - 2.0 * ll_converged;
  const double mcfadden = 1.0 - ll_converged / ll_zero;
  return {aic, mcfadden};
}

namespace detail {

inline double dot(std::span<const double> row, const std::vector<double>& beta) {
  double s = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * beta[j];
  return s;
}

inline double digamma(double x) {
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return r + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
}

struct PoissonWork {
  const DesignMatrix& d;
  std::vector<double> lgam;

  explicit PoissonWork(const DesignMatrix& data) : d(data) {
    lgam.resize(d.n);
    for (std::size_t i = 0; i < d.n; ++i) lgam[i] = std::lgamma(d.y[i] + 1.0);
  }

  double loglik(const std::vector<double>& beta) const {
    double ll = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const double eta = dot(d.row(i), beta);
      if (eta > 700.0) return -std::numeric_limits<double>::infinity();
      ll += d.y[i] * eta - std::exp(eta) - lgam[i];
    }
    return ll;
  }

  double loglik_grad_hess(const std::vector<double>& beta, std::vector<double>& grad,
                          std::vector<double>& hess) const {
    const std::size_t k = d.k;
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(hess.begin(), hess.end(), 0.0);
    double ll = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const auto row = d.row(i);
      const double eta = dot(row, beta);
      if (eta > 700.0) return -std::numeric_limits<double>::infinity();
      const double lambda = std::exp(eta);
      ll += d.y[i] * eta - lambda - lgam[i];
      const double resid = d.y[i] - lambda;
      for (std::size_t a = 0; a < k; ++a) {
        grad[a] += resid * row[a];
        for (std::size_t b = 0; b <= a; ++b) hess[a * k + b] -= lambda * row[a] * row[b];
      }
    }
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) hess[a * k + b] = hess[b * k + a];
    return ll;
  }
};

inline std::optional<std::size_t> intercept_column(const DesignMatrix& d) {
  for (std::size_t j = 0; j < d.k; ++j)
    if (d.names[j] == "intercept") return j;
  for (std::size_t j = 0; j < d.k; ++j) {
    bool ones = true;
    for (std::size_t i = 0; i < d.n && ones; ++i) ones = d.at(i, j) == 1.0;
    if (ones) return j;
  }
  return std::nullopt;
}

inline std::vector<double> poisson_start(const DesignMatrix& d) {
  std::vector<double> beta(d.k, 0.0);
  if (const auto j = intercept_column(d)) {
    const double ybar = std::max(mean_of(d.y), 1e-4);
    beta[*j] = std::log(ybar);
  }
  return beta;
}

// Intercept-only Poisson LL, the shared LL(0) for every family.
inline double loglik_zero(const DesignMatrix& d, const ModelSpec& spec) {
  DesignMatrix ones;
  ones.names = {"intercept"};
  ones.n = d.n;
  ones.k = 1;
  ones.x.assign(d.n, 1.0);
  ones.y = d.y;
  PoissonWork work(ones);
  std::vector<double> beta = poisson_start(ones);
  newton_maximize(
      [&](const std::vector<double>& b, std::vector<double>& g, std::vector<double>& h) {
        return work.loglik_grad_hess(b, g, h);
      },
      beta, spec.newton_grad_tol, 100);
  return work.loglik(beta);
}

inline void standard_errors_from_hessian(const std::vector<double>& hess,
                                         std::size_t k, std::vector<double>& se) {
  std::vector<double> neg(k * k);
  for (std::size_t i = 0; i < k * k; ++i) neg[i] = -hess[i];
  const auto inv = invert(neg, k);
  se.assign(k, std::numeric_limits<double>::quiet_NaN());
  if (!inv) return;
  for (std::size_t j = 0; j < k; ++j) {
    const double v = (*inv)[j * k + j];
    se[j] = v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

// Standard-normal draws from per-observation Halton slices: observation i,
// draw r of dimension m uses sequence index skip + i*R + r + 1 in the m-th
// prime base. Fully deterministic.
struct HaltonDraws {
  std::size_t n = 0, n_draws = 0, dims = 0, skip = 10;
  std::vector<double> z;  // dims x n x R

  static HaltonDraws make(std::size_t n, std::size_t n_draws, std::size_t dims,
                          std::size_t skip) {
    HaltonDraws d;
    d.n = n;
    d.n_draws = n_draws;
    d.dims = dims;
    d.skip = skip;
    const auto bases = halton_bases(dims);
    d.z.resize(dims * n * n_draws);
    for (std::size_t m = 0; m < dims; ++m)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < n_draws; ++r)
          d.z[(m * n + i) * n_draws + r] =
              inv_normal_cdf(halton(skip + i * n_draws + r + 1, bases[m]));
    return d;
  }

  double at(std::size_t m, std::size_t i, std::size_t r) const {
    return z[(m * n + i) * n_draws + r];
  }
};

namespace detail {

struct MixedPoissonWork {
  const DesignMatrix& d;
  std::vector<std::size_t> random_idx;
  HaltonDraws draws;
  std::vector<double> zx;  // z * x for each (dim, obs, draw)
  std::vector<double> lgam;

  MixedPoissonWork(const DesignMatrix& data, std::vector<std::size_t> random_columns,
                   std::size_t n_draws, std::size_t skip)
      : d(data),
        random_idx(std::move(random_columns)),
        draws(HaltonDraws::make(data.n, n_draws, random_idx.size(), skip)) {
    const std::size_t dims = random_idx.size();
    const std::size_t R = draws.n_draws;
    zx.resize(dims * d.n * R);
    for (std::size_t m = 0; m < dims; ++m)
      for (std::size_t i = 0; i < d.n; ++i)
        for (std::size_t r = 0; r < R; ++r)
          zx[(m * d.n + i) * R + r] = draws.at(m, i, r) * d.at(i, random_idx[m]);
    lgam.resize(d.n);
    for (std::size_t i = 0; i < d.n; ++i) lgam[i] = std::lgamma(d.y[i] + 1.0);
  }

  // theta = [beta (k), sigma (dims)]
  double loglik(const std::vector<double>& theta) const {
    std::vector<double> dummy;
    return eval(theta, nullptr, dummy);
  }

  double loglik_grad(const std::vector<double>& theta, std::vector<double>& grad) const {
    return eval(theta, &grad, grad);
  }

 private:
  double eval(const std::vector<double>& theta, std::vector<double>* want_grad,
              std::vector<double>& grad) const {
    const std::size_t k = d.k;
    const std::size_t dims = random_idx.size();
    const std::size_t R = draws.n_draws;
    if (want_grad) {
      grad.assign(k + dims, 0.0);
    }
    std::vector<double> beta(theta.begin(), theta.begin() + static_cast<long>(k));
    std::vector<double> l(R), lam(R), ew(R);
    double ll = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const auto row = d.row(i);
      const double base = dot(row, beta);
      double lmax = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < R; ++r) {
        double eta = base;
        for (std::size_t m = 0; m < dims; ++m)
          eta += theta[k + m] * zx[(m * d.n + i) * R + r];
        if (eta > 700.0) {
          l[r] = -std::numeric_limits<double>::infinity();
          lam[r] = std::numeric_limits<double>::infinity();
          continue;
        }
        lam[r] = std::exp(eta);
        l[r] = d.y[i] * eta - lam[r] - lgam[i];
        lmax = std::max(lmax, l[r]);
      }
      if (!std::isfinite(lmax)) return -std::numeric_limits<double>::infinity();
      double s = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        ew[r] = std::exp(l[r] - lmax);
        s += ew[r];
      }
      ll += lmax + std::log(s / static_cast<double>(R));
      if (!want_grad) continue;

      for (std::size_t r = 0; r < R; ++r) {
        const double w = ew[r] / s;
        if (w == 0.0) continue;
        const double resid = w * (d.y[i] - lam[r]);
        for (std::size_t j = 0; j < k; ++j) grad[j] += resid * row[j];
        for (std::size_t m = 0; m < dims; ++m)
          grad[k + m] += resid * zx[(m * d.n + i) * R + r];
      }
    }
    return ll;
  }
};

}  // namespace detail

// Simulated log-likelihood at an arbitrary point; with all sigmas zero this
// equals the fixed-parameter Poisson log-likelihood bit for bit.
inline double simulated_loglik(const DesignMatrix& data,
                               const std::vector<double>& beta,
                               const std::vector<double>& sigma,
                               const std::vector<std::size_t>& random_columns,
                               std::size_t n_draws, std::size_t skip = 10) {
  detail::MixedPoissonWork work(data, random_columns, n_draws, skip);
  std::vector<double> theta = beta;
  theta.insert(theta.end(), sigma.begin(), sigma.end());
  return work.loglik(theta);
}

inline double poisson_loglik(const DesignMatrix& data, const std::vector<double>& beta) {
  return detail::PoissonWork(data).loglik(beta);
}

inline void poisson_score(const DesignMatrix& data, const std::vector<double>& beta,
                          std::vector<double>& grad) {
  detail::PoissonWork work(data);
  std::vector<double> hess(data.k * data.k);
  grad.resize(data.k);
  work.loglik_grad_hess(beta, grad, hess);
}

// Negative binomial (NB2) log-likelihood; alpha = 0 is exactly Poisson, and
// tiny alpha uses the first-order expansion LL_P + (alpha/2) sum[(y-l)^2 - y]
// so the boundary region stays smooth and cancellation-free.
inline double negbin_loglik(const DesignMatrix& data, const std::vector<double>& beta,
                            double alpha) {
  detail::PoissonWork work(data);
  if (alpha < 1e-8) {
    const double base = work.loglik(beta);
    if (alpha == 0.0 || !std::isfinite(base)) return base;
    double corr = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
      const double lambda = std::exp(detail::dot(data.row(i), beta));
      const double r = data.y[i] - lambda;
      corr += r * r - data.y[i];
    }
    return base + 0.5 * alpha * corr;
  }
  const double a = 1.0 / alpha;
  double ll = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const double eta = detail::dot(data.row(i), beta);
    if (eta > 700.0) return -std::numeric_limits<double>::infinity();
    const double lambda = std::exp(eta);
    ll += std::lgamma(data.y[i] + a) - std::lgamma(a) - std::lgamma(data.y[i] + 1.0) +
          a * std::log(a / (a + lambda)) + data.y[i] * (eta - std::log(a + lambda));
  }
  return ll;
}

namespace detail {

// Gradient of the NB2 LL in (beta, s) coordinates with alpha = s^2. The
// square makes alpha = 0 a regular stationary point, so equidispersed data
// converges cleanly to the Poisson boundary instead of chasing log(alpha)
// toward -infinity.
inline double negbin_loglik_grad(const DesignMatrix& d, const std::vector<double>& theta,
                                 std::vector<double>& grad) {
  const std::size_t k = d.k;
  const double s = theta[k];
  const double alpha = s * s;
  std::vector<double> beta(theta.begin(), theta.begin() + static_cast<long>(k));
  grad.assign(k + 1, 0.0);

  if (alpha < 1e-8) {
    PoissonWork work(d);
    double ll = 0.0;
    double corr = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const auto row = d.row(i);
      const double eta = dot(row, beta);
      if (eta > 700.0) return -std::numeric_limits<double>::infinity();
      const double lambda = std::exp(eta);
      ll += d.y[i] * eta - lambda - work.lgam[i];
      const double r = d.y[i] - lambda;
      corr += r * r - d.y[i];
      for (std::size_t j = 0; j < k; ++j) grad[j] += r * row[j];
    }
    grad[k] = s * corr;  // d/ds of (s^2/2) corr
    return ll + 0.5 * alpha * corr;
  }

  const double a = 1.0 / alpha;
  double ll = 0.0;
  double dll_da = 0.0;
  for (std::size_t i = 0; i < d.n; ++i) {
    const auto row = d.row(i);
    const double eta = dot(row, beta);
    if (eta > 700.0) return -std::numeric_limits<double>::infinity();
    const double lambda = std::exp(eta);
    const double y = d.y[i];
    ll += std::lgamma(y + a) - std::lgamma(a) - std::lgamma(y + 1.0) +
          a * std::log(a / (a + lambda)) + y * (eta - std::log(a + lambda));
    const double deta = y - lambda * (a + y) / (a + lambda);
    for (std::size_t j = 0; j < k; ++j) grad[j] += deta * row[j];
    dll_da += digamma(y + a) - digamma(a) + std::log(a / (a + lambda)) + 1.0 -
              (a + y) / (a + lambda);
  }
  grad[k] = -2.0 * s * a * a * dll_da;  // d(alpha)/ds = 2s, da/d(alpha) = -a^2
  return ll;
}

}  // namespace detail

inline std::vector<double> predict_lambda(const FitResult& fit, const DesignMatrix& data) {
  std::vector<double> lambda(data.n);
  const bool all_zero_sigma =
      std::all_of(fit.sigma.begin(), fit.sigma.end(), [](double s) { return s == 0.0; });
  if (fit.family != Family::kRandomPoisson || fit.random_indices.empty() ||
      all_zero_sigma) {
    for (std::size_t i = 0; i < data.n; ++i)
      lambda[i] = std::exp(detail::dot(data.row(i), fit.beta));
    return lambda;
  }
  const auto draws = HaltonDraws::make(data.n, fit.n_draws, fit.random_indices.size(),
                                       fit.halton_skip);
  for (std::size_t i = 0; i < data.n; ++i) {
    const double base = detail::dot(data.row(i), fit.beta);
    double acc = 0.0;
    for (std::size_t r = 0; r < fit.n_draws; ++r) {
      double eta = base;
      for (std::size_t m = 0; m < fit.random_indices.size(); ++m)
        eta += fit.sigma[m] * draws.at(m, i, r) * data.at(i, fit.random_indices[m]);
      acc += std::exp(eta);
    }
    lambda[i] = acc / static_cast<double>(fit.n_draws);
  }
  return lambda;
}

// Average marginal effects: continuous covariates use beta_j * mean(lambda);
// binary {0,1} covariates use the mean difference of predictions at 1 vs 0.
// The intercept gets no effect.
inline std::vector<std::optional<double>> marginal_effects(const FitResult& fit,
                                                           const DesignMatrix& data) {
  const auto intercept = detail::intercept_column(data);
  const auto lambda = predict_lambda(fit, data);
  std::vector<std::optional<double>> effects(data.k);
  for (std::size_t j = 0; j < data.k; ++j) {
    if (intercept && *intercept == j) continue;
    if (data.is_binary(j)) {
      DesignMatrix on = data, off = data;
      for (std::size_t i = 0; i < data.n; ++i) {
        on.x[i * data.k + j] = 1.0;
        off.x[i * data.k + j] = 0.0;
      }
      const auto lam1 = predict_lambda(fit, on);
      const auto lam0 = predict_lambda(fit, off);
      double s = 0.0;
      for (std::size_t i = 0; i < data.n; ++i) s += lam1[i] - lam0[i];
      effects[j] = s / static_cast<double>(data.n);
    } else {
      effects[j] = fit.beta[j] * mean_of(lambda);
    }
  }
  return effects;
}

// Fixed-parameter Poisson via Newton on the exact gradient and Hessian.
inline FitResult fit_poisson(const DesignMatrix& data, const ModelSpec& spec = {}) {
  spec.validate(data);
  detail::PoissonWork work(data);

  FitResult fit;
  fit.family = Family::kPoisson;
  fit.coef_names = data.names;
  fit.beta = detail::poisson_start(data);
  std::vector<double> grad(data.k), hess(data.k * data.k);
  fit.report = newton_maximize(
      [&](const std::vector<double>& b, std::vector<double>& g, std::vector<double>& h) {
        return work.loglik_grad_hess(b, g, h);
      },
      fit.beta, spec.newton_grad_tol, 100);

  fit.ll_converged = work.loglik_grad_hess(fit.beta, grad, hess);
  detail::standard_errors_from_hessian(hess, data.k, fit.se);
  fit.z.resize(data.k);
  for (std::size_t j = 0; j < data.k; ++j) fit.z[j] = fit.beta[j] / fit.se[j];

  fit.ll_zero = detail::loglik_zero(data, spec);
  fit.k_params = data.k;
  std::tie(fit.aic, fit.mcfadden) = fit_metrics(fit.ll_zero, fit.ll_converged, fit.k_params);
  fit.marginal = marginal_effects(fit, data);
  return fit;
}

// NB2 over (beta, s) with alpha = s^2, started from the Poisson solution.
// The alpha = 0 boundary is resolved first: when the alpha-score at the
// Poisson optimum is non-positive and no trial alpha improves the
// likelihood, the MLE is the Poisson boundary and is reported as such
// (alpha = 0, z = 0). Near-boundary interior problems that stall the
// optimizer collapse to the same answer.
inline FitResult fit_negbin(const DesignMatrix& data, ModelSpec spec = {}) {
  spec.family = Family::kNegBin;
  spec.validate(data);
  const FitResult poisson = fit_poisson(data, [&] {
    ModelSpec s = spec;
    s.family = Family::kPoisson;
    s.random_covariates.clear();
    return s;
  }());

  FitResult fit;
  fit.family = Family::kNegBin;
  fit.coef_names = data.names;
  fit.has_alpha = true;
  fit.ll_zero = poisson.ll_zero;
  fit.k_params = data.k + 1;

  auto finish_boundary = [&]() {
    fit.beta = poisson.beta;
    fit.se = poisson.se;
    fit.z = poisson.z;
    fit.alpha = 0.0;
    fit.alpha_se = 0.0;
    fit.alpha_z = 0.0;
    fit.ll_converged = poisson.ll_converged;
    fit.report = poisson.report;
    std::tie(fit.aic, fit.mcfadden) =
        fit_metrics(fit.ll_zero, fit.ll_converged, fit.k_params);
    fit.marginal = marginal_effects(fit, data);
    return fit;
  };

  // score in alpha at the boundary and a moment starting value
  double score = 0.0, den = 0.0;
  {
    const auto lambda = predict_lambda(poisson, data);
    for (std::size_t i = 0; i < data.n; ++i) {
      const double r = data.y[i] - lambda[i];
      score += 0.5 * (r * r - data.y[i]);
      den += lambda[i] * lambda[i];
    }
  }
  double alpha0 = std::clamp(den > 0.0 ? 2.0 * score / den : 0.1, 1e-3, 10.0);
  double best_grid_ll = poisson.ll_converged;
  for (const double a : {0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0}) {
    const double ll = negbin_loglik(data, poisson.beta, a);
    if (ll > best_grid_ll + 1e-9) {
      best_grid_ll = ll;
      alpha0 = a;
    }
  }
  if (score <= 0.0 && best_grid_ll <= poisson.ll_converged + 1e-9)
    return finish_boundary();

  std::vector<double> theta = poisson.beta;
  theta.push_back(std::sqrt(alpha0));
  std::vector<double> grad(theta.size());
  try {
    fit.report = bfgs_minimize(
        [&](const std::vector<double>& t, std::vector<double>& g) {
          const double ll = detail::negbin_loglik_grad(data, t, g);
          for (auto& v : g) v = -v;
          return -ll;
        },
        theta, spec.quasi_grad_tol, spec.max_iter);
  } catch (const ConvergenceError&) {
    // theta holds the last iterate; only the boundary region stalls
    if (theta.back() * theta.back() < 1e-6) return finish_boundary();
    throw;
  }

  fit.beta.assign(theta.begin(), theta.end() - 1);
  const double s_hat = std::fabs(theta.back());
  fit.alpha = s_hat * s_hat;
  if (fit.alpha < 1e-10) return finish_boundary();
  fit.ll_converged = detail::negbin_loglik_grad(data, theta, grad);

  const auto hess = numerical_hessian(
      [&](const std::vector<double>& t, std::vector<double>& g) {
        detail::negbin_loglik_grad(data, t, g);
      },
      theta);
  std::vector<double> se;
  detail::standard_errors_from_hessian(hess, theta.size(), se);
  fit.se.assign(se.begin(), se.end() - 1);
  fit.z.resize(data.k);
  for (std::size_t j = 0; j < data.k; ++j) fit.z[j] = fit.beta[j] / fit.se[j];
  // delta method from s: Var(alpha) = (2s)^2 Var(s)
  fit.alpha_se = 2.0 * s_hat * se.back();
  fit.alpha_z = fit.alpha_se > 0.0 ? fit.alpha / fit.alpha_se : 0.0;

  std::tie(fit.aic, fit.mcfadden) = fit_metrics(fit.ll_zero, fit.ll_converged, fit.k_params);
  fit.marginal = marginal_effects(fit, data);
  return fit;
}

// Lagrange multiplier test for overdispersion in a fitted Poisson model:
// LM = [sum((y - lambda)^2 - y)]^2 / (2 sum lambda^2), chi-square(1).
struct LmTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline LmTestResult lm_overdispersion_test(const FitResult& poisson_fit,
                                           const DesignMatrix& data) {
  if (poisson_fit.family != Family::kPoisson)
    throw ConfigError("the LM overdispersion test takes a fixed Poisson fit");
  const auto lambda = predict_lambda(poisson_fit, data);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const double r = data.y[i] - lambda[i];
    num += r * r - data.y[i];
    den += lambda[i] * lambda[i];
  }
  LmTestResult out;
  out.statistic = num * num / (2.0 * den);
  out.p_value = std::erfc(std::sqrt(out.statistic / 2.0));
  return out;
}

// Random-parameter Poisson by simulated maximum likelihood over Halton
// draws; sigma is reported as its absolute value (the sign is unidentified).
inline FitResult fit_random_poisson(const DesignMatrix& data, ModelSpec spec) {
  spec.family = Family::kRandomPoisson;
  spec.validate(data);

  std::vector<std::size_t> random_idx;
  for (const auto& name : spec.random_covariates)
    random_idx.push_back(data.col_index(name));
  const std::size_t dims = random_idx.size();

  const FitResult poisson = fit_poisson(data, [&] {
    ModelSpec s = spec;
    s.family = Family::kPoisson;
    s.random_covariates.clear();
    return s;
  }());

  detail::MixedPoissonWork work(data, random_idx, spec.n_draws, spec.halton_skip);
  std::vector<double> theta = poisson.beta;
  for (std::size_t m = 0; m < dims; ++m) theta.push_back(0.1);

  FitResult fit;
  fit.family = Family::kRandomPoisson;
  fit.coef_names = data.names;
  fit.random_indices = random_idx;
  fit.n_draws = spec.n_draws;
  fit.halton_skip = spec.halton_skip;
  fit.report = bfgs_minimize(
      [&](const std::vector<double>& t, std::vector<double>& g) {
        const double ll = work.loglik_grad(t, g);
        for (auto& v : g) v = -v;
        return -ll;
      },
      theta, spec.quasi_grad_tol, spec.max_iter);

  fit.beta.assign(theta.begin(), theta.begin() + static_cast<long>(data.k));
  fit.sigma.assign(theta.begin() + static_cast<long>(data.k), theta.end());
  for (auto& s : fit.sigma) s = std::fabs(s);
  for (std::size_t m = 0; m < dims; ++m) theta[data.k + m] = fit.sigma[m];
  std::vector<double> grad(theta.size());
  fit.ll_converged = work.loglik_grad(theta, grad);

  const auto hess = numerical_hessian(
      [&](const std::vector<double>& t, std::vector<double>& g) {
        work.loglik_grad(t, g);
      },
      theta);
  std::vector<double> se;
  detail::standard_errors_from_hessian(hess, theta.size(), se);
  fit.se.assign(se.begin(), se.begin() + static_cast<long>(data.k));
  fit.z.resize(data.k);
  for (std::size_t j = 0; j < data.k; ++j) fit.z[j] = fit.beta[j] / fit.se[j];
  fit.sigma_se.assign(se.begin() + static_cast<long>(data.k), se.end());
  fit.sigma_z.resize(dims);
  for (std::size_t m = 0; m < dims; ++m) fit.sigma_z[m] = fit.sigma[m] / fit.sigma_se[m];

  fit.ll_zero = poisson.ll_zero;
  fit.k_params = data.k + dims;
  std::tie(fit.aic, fit.mcfadden) = fit_metrics(fit.ll_zero, fit.ll_converged, fit.k_params);
  fit.marginal = marginal_effects(fit, data);
  return fit;
}

inline FitResult fit_model(const DesignMatrix& data, const ModelSpec& spec) {
  switch (spec.family) {
    case Family::kPoisson: return fit_poisson(data, spec);
    case Family::kNegBin: return fit_negbin(data, spec);
    case Family::kRandomPoisson: return fit_random_poisson(data, spec);
  }
  throw ConfigError("unknown model family");
}

inline const char* significance_stars(double z) {
  const double abs_z = std::fabs(z);
  if (abs_z > 3.8906) return "***";  // 0.01%
  if (abs_z > 2.5758) return "**";   // 1%
  if (abs_z > 1.9600) return "*";    // 5%
  if (abs_z > 1.6449) return ".";    // 10%
  return "";
}

inline nlohmann::json fit_result_to_json(const FitResult& fit) {
  nlohmann::json j;
  j["family"] = to_string(fit.family);
  nlohmann::json coefs = nlohmann::json::array();
  for (std::size_t i = 0; i < fit.coef_names.size(); ++i) {
    nlohmann::json c;
    c["name"] = fit.coef_names[i];
    c["estimate"] = fit.beta[i];
    c["se"] = fit.se[i];
    c["z"] = fit.z[i];
    if (fit.marginal.size() > i && fit.marginal[i])
      c["marginal_effect"] = *fit.marginal[i];
    coefs.push_back(std::move(c));
  }
  j["coefficients"] = std::move(coefs);
  nlohmann::json rand = nlohmann::json::array();
  for (std::size_t m = 0; m < fit.random_indices.size(); ++m) {
    nlohmann::json c;
    c["name"] = fit.coef_names[fit.random_indices[m]];
    c["std_dev"] = fit.sigma[m];
    c["se"] = fit.sigma_se[m];
    c["z"] = fit.sigma_z[m];
    rand.push_back(std::move(c));
  }
  j["random_parameters"] = std::move(rand);
  if (fit.has_alpha)
    j["alpha"] = {{"estimate", fit.alpha}, {"se", fit.alpha_se}, {"z", fit.alpha_z}};
  j["ll_zero"] = fit.ll_zero;
  j["ll_converged"] = fit.ll_converged;
  j["aic"] = fit.aic;
  j["mcfadden_rho2"] = fit.mcfadden;
  j["k_params"] = fit.k_params;
  if (fit.family == Family::kRandomPoisson) {
    j["n_draws"] = fit.n_draws;
    j["halton_skip"] = fit.halton_skip;
  }
  j["convergence"] = {{"iterations", fit.report.iterations},
                      {"grad_norm", fit.report.grad_norm},
                      {"converged", fit.report.converged}};
  return j;
}

// Plain-text summary table: estimate, z, marginal effect per row,
// "Std. dev." rows under random coefficients, summary block at the bottom.
inline std::string fit_result_table(const FitResult& fit, std::size_t n_obs) {
  std::string out;
  char buf[160];
  auto row = [&](const std::string& label, double est, double z,
                 const std::optional<double>& me) {
    char me_buf[32] = "--";
    if (me) std::snprintf(me_buf, sizeof(me_buf), "%.2f", *me);
    std::snprintf(buf, sizeof(buf), "%-34s %10.3f%-3s %8.2f %12s\n", label.c_str(),
                  est, significance_stars(z), z, me_buf);
    out += buf;
  };
  std::snprintf(buf, sizeof(buf), "%-34s %13s %8s %12s\n", "Variables", "Estimate",
                "z value", "Marg. effect");
  out += buf;
  for (std::size_t j = 0; j < fit.coef_names.size(); ++j) {
    const std::string label =
        fit.coef_names[j] == "intercept" ? "Constant" : fit.coef_names[j];
    row(label, fit.beta[j], fit.z[j],
        fit.marginal.size() > j ? fit.marginal[j] : std::nullopt);
    for (std::size_t m = 0; m < fit.random_indices.size(); ++m)
      if (fit.random_indices[m] == j)
        row("  Std. dev.", fit.sigma[m], fit.sigma_z[m], std::nullopt);
  }
  if (fit.has_alpha) row("Dispersion (alpha)", fit.alpha, fit.alpha_z, std::nullopt);
  out += "Summary Statistics\n";
  std::snprintf(buf, sizeof(buf), "%-34s %13.2f\n", "AIC", fit.aic);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-34s %13.2f\n", "Log-likelihood at Zero L(0)",
                fit.ll_zero);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-34s %13.2f\n",
                "Log-likelihood at Convergence L(b)", fit.ll_converged);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-34s %13.3f\n", "McFadden rho^2", fit.mcfadden);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-34s %13zu\n", "Sample Size (N)", n_obs);
  out += buf;
  return out;
}

}  // namespace dvol
