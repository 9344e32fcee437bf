#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace camdp {

struct NelderMeadOptions {
  int max_evaluations = 2000;
  double f_tolerance = 1e-10;  // relative spread of simplex values
  double x_tolerance = 1e-9;   // absolute simplex diameter
  int restarts = 2;            // restart from the best vertex after convergence
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free minimizer (standard reflection/expansion/contraction/shrink).
template <typename F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, const std::vector<double>& step,
                             const NelderMeadOptions& opts = {}) {
  const std::size_t n = x0.size();
  NelderMeadResult out;
  out.x = x0;

  auto eval = [&](const std::vector<double>& x) {
    ++out.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  for (int round = 0; round <= opts.restarts; ++round) {
    std::vector<std::vector<double>> simplex(n + 1, out.x);
    std::vector<double> values(n + 1);
    for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += step[i];
    for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

    std::vector<std::size_t> order(n + 1);
    bool converged = false;
    while (out.evaluations < opts.max_evaluations) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
      const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

      double diameter = 0.0;
      for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          diameter = std::max(diameter, std::abs(simplex[i][k] - simplex[best][k]));
        }
      }
      const double spread = std::abs(values[worst] - values[best]);
      if (std::isfinite(values[best]) &&
          spread <= opts.f_tolerance * (std::abs(values[best]) + 1e-30) &&
          diameter <= opts.x_tolerance * (1.0 + diameter)) {
        converged = true;
        break;
      }
      if (std::isfinite(values[best]) && spread == 0.0 && diameter < 1e-14) {
        converged = true;
        break;
      }

      std::vector<double> centroid(n, 0.0);
      for (std::size_t i = 0; i <= n; ++i) {
        if (i == worst) continue;
        for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / static_cast<double>(n);
      }
      auto along = [&](double t) {
        std::vector<double> p(n);
        for (std::size_t k = 0; k < n; ++k) p[k] = centroid[k] + t * (simplex[worst][k] - centroid[k]);
        return p;
      };

      auto reflected = along(-1.0);
      const double fr = eval(reflected);
      if (fr < values[best]) {
        auto expanded = along(-2.0);
        const double fe = eval(expanded);
        if (fe < fr) {
          simplex[worst] = std::move(expanded);
          values[worst] = fe;
        } else {
          simplex[worst] = std::move(reflected);
          values[worst] = fr;
        }
      } else if (fr < values[second]) {
        simplex[worst] = std::move(reflected);
        values[worst] = fr;
      } else {
        const bool outside = fr < values[worst];
        auto contracted = along(outside ? -0.5 : 0.5);
        const double fc = eval(contracted);
        if (fc < (outside ? fr : values[worst])) {
          simplex[worst] = std::move(contracted);
          values[worst] = fc;
        } else {
          for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t k = 0; k < n; ++k) {
              simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
            }
            values[i] = eval(simplex[i]);
          }
        }
      }
    }

    const auto best_it = std::min_element(values.begin(), values.end());
    const auto best_idx = static_cast<std::size_t>(best_it - values.begin());
    const bool improved = *best_it < out.value - 1e-12 * std::abs(out.value);
    if (*best_it <= out.value) {
      out.value = *best_it;
      out.x = simplex[best_idx];
    }
    out.converged = converged;
    if (!converged || (round > 0 && !improved)) break;
  }
  return out;
}

}  // namespace camdp
