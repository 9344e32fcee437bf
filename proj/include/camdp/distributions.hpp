#pragma once

// Generalized normal (GND) and non-central t (NCT) families: densities,
// samplers and maximum-likelihood fits.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <boost/math/distributions/non_central_t.hpp>

#include "camdp/errors.hpp"
#include "camdp/optim.hpp"
#include "camdp/rng.hpp"

namespace camdp {

struct GndParams {
  double mu = 0.0;
  double alpha = 1.0;  // scale
  double beta = 2.0;   // shape

  bool valid() const { return std::isfinite(mu) && alpha > 0.0 && beta > 0.0; }
  double variance() const {
    return alpha * alpha * std::exp(std::lgamma(3.0 / beta) - std::lgamma(1.0 / beta));
  }
  friend bool operator==(const GndParams&, const GndParams&) = default;
};

/// Non-central t with an optional location/scale wrapper:
/// X = loc + scale * (Z + delta) / sqrt(chi2_nu / nu).
struct NctParams {
  double nu = 1.0;
  double delta = 0.0;
  double loc = 0.0;
  double scale = 1.0;

  bool valid() const {
    return nu > 0.0 && std::isfinite(delta) && std::isfinite(loc) && scale > 0.0;
  }
  friend bool operator==(const NctParams&, const NctParams&) = default;
};

inline double gnd_logpdf(double x, const GndParams& p) {
  return std::log(p.beta) - std::numbers::ln2 - std::log(p.alpha) - std::lgamma(1.0 / p.beta) -
         std::pow(std::abs(x - p.mu) / p.alpha, p.beta);
}

inline double gnd_pdf(double x, const GndParams& p) { return std::exp(gnd_logpdf(x, p)); }

inline double sample_gnd(double mu, double alpha, double beta, Rng& rng) {
  std::gamma_distribution<double> gamma(1.0 / beta, 1.0);
  const double magnitude = alpha * std::pow(gamma(rng), 1.0 / beta);
  return uniform01(rng) < 0.5 ? mu - magnitude : mu + magnitude;
}

inline double sample_gnd(const GndParams& p, Rng& rng) {
  return sample_gnd(p.mu, p.alpha, p.beta, rng);
}

inline double sample_nct(double nu, double delta, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi2(nu);
  const double z = normal(rng);
  const double v = chi2(rng);
  return (z + delta) / std::sqrt(v / nu);
}

inline double sample_nct(const NctParams& p, Rng& rng) {
  return p.loc + p.scale * sample_nct(p.nu, p.delta, rng);
}

namespace detail {

/// Standard NCT log-density (loc 0, scale 1). Sums the power series in
/// y = sqrt(2) delta t / sqrt(nu + t^2) with Gamma-ratio recurrences; falls
/// back to Boost when alternating terms would cancel catastrophically.
class NctStandardLogPdf {
 public:
  NctStandardLogPdf(double nu, double delta) : nu_(nu), delta_(delta) {
    const double lg_half = std::lgamma(0.5 * (nu + 1.0));
    ratio_odd_ = std::exp(std::lgamma(0.5 * (nu + 2.0)) - lg_half);
    constant_ = 0.5 * nu * std::log(nu) - 0.5 * delta * delta - 0.5 * std::log(std::numbers::pi) -
                std::lgamma(0.5 * nu) + lg_half;
  }

  double operator()(double t) const {
    const double w = nu_ + t * t;
    const double y = std::numbers::sqrt2 * delta_ * t / std::sqrt(w);
    const double y2 = y * y;
    // Even and odd subsequences share the recurrence
    // a_{j+2} = a_j * y^2 * ((nu + j + 1) / 2) / ((j + 1)(j + 2)).
    double even = 1.0;
    double odd = ratio_odd_ * y;
    double sum = even + odd;
    double abs_sum = std::abs(even) + std::abs(odd);
    for (int j = 0; j < 2000; j += 2) {
      even *= y2 * 0.5 * (nu_ + j + 1.0) / ((j + 1.0) * (j + 2.0));
      odd *= y2 * 0.5 * (nu_ + j + 2.0) / ((j + 2.0) * (j + 3.0));
      sum += even + odd;
      abs_sum += std::abs(even) + std::abs(odd);
      if (j > y2 && std::abs(even) + std::abs(odd) < 1e-17 * abs_sum) break;
    }
    if (!(sum > 1e-8 * abs_sum)) return boost_logpdf(t);
    return constant_ - 0.5 * (nu_ + 1.0) * std::log(w) + std::log(sum);
  }

  double boost_logpdf(double t) const {
    boost::math::non_central_t dist(nu_, delta_);
    return std::log(boost::math::pdf(dist, t));
  }

 private:
  double nu_;
  double delta_;
  double ratio_odd_ = 0.0;
  double constant_ = 0.0;
};

}  // namespace detail

inline double nct_logpdf(double x, const NctParams& p) {
  detail::NctStandardLogPdf standard(p.nu, p.delta);
  return standard((x - p.loc) / p.scale) - std::log(p.scale);
}

inline double nct_pdf(double x, const NctParams& p) { return std::exp(nct_logpdf(x, p)); }

// ---------------------------------------------------------------------------
// Maximum-likelihood fits

namespace detail {

inline double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline double quantile(std::vector<double> v, double q) {
  const auto idx = static_cast<std::ptrdiff_t>(q * static_cast<double>(v.size() - 1));
  std::nth_element(v.begin(), v.begin() + idx, v.end());
  return v[static_cast<std::size_t>(idx)];
}

inline double gnd_kurtosis(double beta) {
  return std::exp(std::lgamma(5.0 / beta) + std::lgamma(1.0 / beta) -
                  2.0 * std::lgamma(3.0 / beta));
}

}  // namespace detail

/// Moment-based GND start: beta from the sample kurtosis, alpha from the variance.
inline GndParams gnd_moment_estimate(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    const double d = x - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  GndParams p;
  p.mu = detail::median(std::vector<double>(xs.begin(), xs.end()));
  const double kurt = m2 > 0.0 ? m4 / (m2 * m2) : 3.0;
  // Kurtosis is decreasing in beta; bisect on log(beta) in [0.1, 20].
  double lo = std::log(0.1), hi = std::log(20.0);
  if (kurt >= detail::gnd_kurtosis(0.1)) {
    p.beta = 0.1;
  } else if (kurt <= detail::gnd_kurtosis(20.0)) {
    p.beta = 20.0;
  } else {
    for (int i = 0; i < 100; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (detail::gnd_kurtosis(std::exp(mid)) > kurt) lo = mid; else hi = mid;
    }
    p.beta = std::exp(0.5 * (lo + hi));
  }
  const double var = std::max(m2, 1e-300);
  p.alpha = std::sqrt(var * std::exp(std::lgamma(1.0 / p.beta) - std::lgamma(3.0 / p.beta)));
  if (!(p.alpha > 0.0)) p.alpha = 1e-6;
  return p;
}

struct FitResult {
  double negative_log_likelihood = 0.0;
  int evaluations = 0;
  bool converged = false;
};

inline GndParams fit_gnd(std::span<const double> xs, FitResult* info = nullptr) {
  if (xs.size() < 2) fail(ErrorKind::InsufficientData, "GND fit needs at least two samples");
  const GndParams start = gnd_moment_estimate(xs);
  auto nll = [&](const std::vector<double>& v) {
    const GndParams p{v[0], std::exp(v[1]), std::exp(v[2])};
    if (!p.valid() || p.beta > 50.0 || p.beta < 0.02) return std::numeric_limits<double>::infinity();
    const double c = std::log(p.beta) - std::numbers::ln2 - std::log(p.alpha) - std::lgamma(1.0 / p.beta);
    double s = 0.0;
    for (double x : xs) s += std::pow(std::abs(x - p.mu) / p.alpha, p.beta);
    return -(c * static_cast<double>(xs.size()) - s);
  };
  const double mu_step = std::max(0.1 * start.alpha, 1e-8);
  NelderMeadOptions opts;
  opts.max_evaluations = 4000;
  auto res = nelder_mead(nll, {start.mu, std::log(start.alpha), std::log(start.beta)},
                         {mu_step, 0.3, 0.3}, opts);
  const GndParams fitted{res.x[0], std::exp(res.x[1]), std::exp(res.x[2])};
  if (!std::isfinite(res.value) || !fitted.valid()) {
    fail(ErrorKind::FitDiverged, "GND likelihood did not converge");
  }
  if (info) *info = {res.value, res.evaluations, res.converged};
  return fitted;
}

/// NCT fit. With `location_scale` false only (nu, delta) are free and the
/// wrapper stays at loc 0, scale 1.
inline NctParams fit_nct(std::span<const double> xs, bool location_scale,
                         FitResult* info = nullptr) {
  if (xs.size() < 2) fail(ErrorKind::InsufficientData, "NCT fit needs at least two samples");
  std::vector<double> sorted(xs.begin(), xs.end());
  const double med = detail::median(sorted);
  const double iqr = detail::quantile(sorted, 0.75) - detail::quantile(sorted, 0.25);

  NctParams start;
  start.nu = 3.0;
  if (location_scale) {
    start.loc = med;
    start.scale = iqr > 0.0 ? iqr / 1.5 : 1e-3;
    start.delta = 0.0;
  } else {
    start.delta = med;
  }

  auto unpack = [&](const std::vector<double>& v) {
    NctParams p;
    p.nu = std::exp(v[0]);
    p.delta = v[1];
    if (location_scale) {
      p.loc = v[2];
      p.scale = std::exp(v[3]);
    }
    return p;
  };
  auto nll = [&](const std::vector<double>& v) {
    const NctParams p = unpack(v);
    if (!p.valid() || p.nu < 0.05 || p.nu > 1e3 || std::abs(p.delta) > 30.0) {
      return std::numeric_limits<double>::infinity();
    }
    detail::NctStandardLogPdf logpdf(p.nu, p.delta);
    const double inv_scale = 1.0 / p.scale;
    double s = 0.0;
    for (double x : xs) s += logpdf((x - p.loc) * inv_scale);
    s -= static_cast<double>(xs.size()) * std::log(p.scale);
    return std::isfinite(s) ? -s : std::numeric_limits<double>::infinity();
  };

  std::vector<double> x0{std::log(start.nu), start.delta};
  std::vector<double> step{0.5, 0.5};
  if (location_scale) {
    x0.push_back(start.loc);
    x0.push_back(std::log(start.scale));
    step.push_back(0.5 * start.scale);
    step.push_back(0.5);
  }
  NelderMeadOptions opts;
  opts.max_evaluations = location_scale ? 6000 : 3000;
  auto res = nelder_mead(nll, x0, step, opts);
  const NctParams fitted = unpack(res.x);
  if (!std::isfinite(res.value) || !fitted.valid()) {
    fail(ErrorKind::FitDiverged, "NCT likelihood did not converge");
  }
  if (info) *info = {res.value, res.evaluations, res.converged};
  return fitted;
}

}  // namespace camdp
