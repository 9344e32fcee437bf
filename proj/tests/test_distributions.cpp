#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/non_central_t.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "camdp/distributions.hpp"
#include "camdp/optim.hpp"

using namespace camdp;

namespace {

double gnd_cdf(double x, const GndParams& p) {
  const double z = std::abs(x - p.mu) / p.alpha;
  const double half = 0.5 * boost::math::gamma_p(1.0 / p.beta, std::pow(z, p.beta));
  return x < p.mu ? 0.5 - half : 0.5 + half;
}

struct Moments {
  double mean = 0.0, var = 0.0, m4 = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) {
    const double d = (x - m.mean) * (x - m.mean);
    m.var += d;
    m.m4 += d * d;
  }
  m.var /= static_cast<double>(xs.size());
  m.m4 /= static_cast<double>(xs.size());
  return m;
}

}  // namespace

TEST(Gnd, PdfIntegratesToOne) {
  const GndParams p{0.1, 0.02, 0.59};
  // Substitute x = mu +- alpha t^(1/beta) so the cusp at mu is harmless.
  double total = 0.0;
  const int n = 200000;
  const double tmax = 60.0;
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) * tmax / n;
    const double x = p.alpha * std::pow(t, 1.0 / p.beta);
    const double dx = p.alpha / p.beta * std::pow(t, 1.0 / p.beta - 1.0) * tmax / n;
    total += 2.0 * gnd_pdf(p.mu + x, p) * dx;
  }
  EXPECT_NEAR(total, 1.0, 1e-3);
}

TEST(Gnd, KolmogorovSmirnovAgainstCdf) {
  const GndParams p{0.0, 0.02, 0.59};
  Rng rng(17);
  const int n = 1'000'000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = sample_gnd(p, rng);
  std::sort(xs.begin(), xs.end());
  double dmax = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = gnd_cdf(xs[static_cast<std::size_t>(i)], p);
    dmax = std::max({dmax, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  EXPECT_LT(dmax, 1.628 / std::sqrt(static_cast<double>(n)));  // alpha = 0.01
}

TEST(Gnd, BetaTwoIsNormal) {
  const GndParams p{0.3, 0.5, 2.0};
  Rng rng(1);
  const int n = 1'000'000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = sample_gnd(p, rng);
  const auto m = moments(xs);
  const double var = p.alpha * p.alpha / 2.0;
  EXPECT_NEAR(m.mean, p.mu, 3.0 * std::sqrt(var / n));
  EXPECT_NEAR(m.var, var, 3.0 * std::sqrt(2.0 * var * var / n));
  EXPECT_NEAR(p.variance(), var, 1e-15);
  EXPECT_NEAR(gnd_pdf(0.3, p), 1.0 / std::sqrt(2.0 * std::numbers::pi * var), 1e-12);
}

TEST(Gnd, SampleVarianceMatchesAnalytic) {
  for (double beta : {0.8, 1.0, 1.5, 4.0}) {
    const GndParams p{0.0, 1.0, beta};
    Rng rng(static_cast<std::uint64_t>(beta * 100));
    const int n = 400000;
    std::vector<double> xs(n);
    for (auto& x : xs) x = sample_gnd(p, rng);
    const auto m = moments(xs);
    EXPECT_NEAR(m.var, p.variance(), 3.0 * std::sqrt((m.m4 - m.var * m.var) / n)) << beta;
  }
}

TEST(Nct, LogPdfMatchesBoost) {
  for (double nu : {0.7, 1.05, 3.0, 12.0, 80.0}) {
    for (double delta : {-3.0, -0.89, 0.0, 0.5, 2.5}) {
      boost::math::non_central_t_distribution<double> ref(nu, delta);
      for (double x : {-40.0, -5.0, -1.0, -0.1, 0.0, 0.2, 1.0, 4.0, 30.0}) {
        const double expected = std::log(boost::math::pdf(ref, x));
        if (!std::isfinite(expected)) {
          // boost underflows to zero this far out
          EXPECT_LT(nct_logpdf(x, {nu, delta}), -700.0);
          continue;
        }
        EXPECT_NEAR(nct_logpdf(x, {nu, delta}), expected, 1e-8 * std::max(1.0, std::abs(expected)))
            << nu << " " << delta << " " << x;
      }
    }
  }
}

TEST(Nct, LocationScaleWrapper) {
  const NctParams p{1.05, -0.89, 0.1, 0.02};
  const double x = 0.13;
  EXPECT_NEAR(nct_logpdf(x, p), nct_logpdf((x - 0.1) / 0.02, {1.05, -0.89}) - std::log(0.02), 1e-12);
}

TEST(Nct, CentralCaseIsSymmetric) {
  Rng rng(8);
  const int n = 1'000'000;
  int positive = 0;
  for (int i = 0; i < n; ++i) positive += sample_nct(3.0, 0.0, rng) > 0.0;
  EXPECT_NEAR(positive, n / 2, 3.0 * std::sqrt(n * 0.25));
}

TEST(Nct, SamplerMatchesCdf) {
  const double nu = 4.0, delta = -0.89;
  boost::math::non_central_t_distribution<double> ref(nu, delta);
  Rng rng(23);
  const int n = 100000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = sample_nct(nu, delta, rng);
  std::sort(xs.begin(), xs.end());
  double dmax = 0.0;
  for (int i = 0; i < n; i += 7) {
    const double f = boost::math::cdf(ref, xs[static_cast<std::size_t>(i)]);
    dmax = std::max({dmax, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  EXPECT_LT(dmax, 1.628 / std::sqrt(static_cast<double>(n)));
}

TEST(Fit, GndRecoversParameters) {
  const GndParams truth{0.0, 0.02, 0.6};
  Rng rng(31);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = sample_gnd(truth, rng);
  FitResult info;
  const auto fit = fit_gnd(xs, &info);
  EXPECT_NEAR(fit.alpha, truth.alpha, 0.1 * truth.alpha);
  EXPECT_NEAR(fit.beta, truth.beta, 0.1 * truth.beta);
  EXPECT_NEAR(fit.mu, truth.mu, 0.1 * truth.alpha);
  EXPECT_TRUE(fit.valid());
}

TEST(Fit, NctRecoversParameters) {
  const NctParams truth{1.05, -0.89};
  Rng rng(37);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = sample_nct(truth, rng);
  const auto fit = fit_nct(xs, false);
  EXPECT_NEAR(fit.nu, truth.nu, 0.1 * truth.nu);
  EXPECT_NEAR(fit.delta, truth.delta, 0.1 * std::abs(truth.delta));
  EXPECT_EQ(fit.loc, 0.0);
  EXPECT_EQ(fit.scale, 1.0);
}

TEST(Fit, TooFewSamples) {
  std::vector<double> one{1.0};
  try {
    fit_gnd(one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

TEST(NelderMead, Rosenbrock) {
  auto f = [](const std::vector<double>& v) {
    return 100.0 * std::pow(v[1] - v[0] * v[0], 2) + std::pow(1.0 - v[0], 2);
  };
  NelderMeadOptions opts;
  opts.max_evaluations = 20000;
  const auto r = nelder_mead(f, {-1.2, 1.0}, {0.5, 0.5}, opts);
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  EXPECT_NEAR(r.x[1], 1.0, 1e-4);
}
