#pragma once

// Conjunction geometry: B-plane projection and probability of collision.
//
// All lengths are km, covariances km^2. The B-plane x-axis is aligned with the
// relative position, the y-axis with rho x v, so the projected relative
// position is always [d_m, 0].

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "camdp/errors.hpp"

namespace camdp {

struct RtnVector {
  double r = 0.0;  // radial
  double t = 0.0;  // tangential (along-track)
  double n = 0.0;  // normal

  Eigen::Vector3d vec() const { return {r, t, n}; }
  double norm() const { return vec().norm(); }
  bool finite() const { return std::isfinite(r) && std::isfinite(t) && std::isfinite(n); }

  friend bool operator==(const RtnVector&, const RtnVector&) = default;
};

/// Symmetric positive semi-definite 3x3 position covariance.
class Covariance3 {
 public:
  Covariance3() : m_(Eigen::Matrix3d::Zero()) {}

  /// Symmetrizes as (A + A^T) / 2, then rejects matrices with an eigenvalue
  /// below -1e-12 * trace.
  static Covariance3 from_matrix(const Eigen::Matrix3d& a) {
    if (!a.allFinite()) fail(ErrorKind::NonPsdCovariance, "covariance has non-finite entries");
    Eigen::Matrix3d sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(sym, Eigen::EigenvaluesOnly);
    const double tol = 1e-12 * std::max(std::abs(sym.trace()), 0.0);
    if (eig.eigenvalues().minCoeff() < -tol) {
      fail(ErrorKind::NonPsdCovariance,
           "minimum eigenvalue " + std::to_string(eig.eigenvalues().minCoeff()));
    }
    Covariance3 c;
    c.m_ = sym;
    return c;
  }

  static Covariance3 diagonal(double var_r, double var_t, double var_n) {
    return from_matrix(Eigen::Vector3d(var_r, var_t, var_n).asDiagonal());
  }

  /// Builds from standard deviations and the three correlation coefficients
  /// (T-R, N-R, N-T), the layout used by the Kelvins CDM tables.
  static Covariance3 from_sigmas(double sr, double st, double sn, double corr_tr, double corr_nr,
                                 double corr_nt) {
    Eigen::Matrix3d a;
    a << sr * sr, corr_tr * sr * st, corr_nr * sr * sn,
         corr_tr * sr * st, st * st, corr_nt * st * sn,
         corr_nr * sr * sn, corr_nt * st * sn, sn * sn;
    return from_matrix(a);
  }

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  friend Covariance3 operator+(const Covariance3& a, const Covariance3& b) {
    Covariance3 c;
    c.m_ = a.m_ + b.m_;
    return c;
  }

  friend bool operator==(const Covariance3& a, const Covariance3& b) { return a.m_ == b.m_; }

 private:
  Eigen::Matrix3d m_;
};

struct ConjunctionGeometry {
  Eigen::Matrix2d sigma_b = Eigen::Matrix2d::Identity();  // [[sx^2, sxy], [sxy, sy^2]]
  Eigen::Vector2d rho_b = Eigen::Vector2d::Zero();        // [d_m, 0]
  double hbr = 0.0;
  Eigen::Matrix<double, 2, 3> projection = Eigen::Matrix<double, 2, 3>::Zero();

  double miss_distance() const { return rho_b.x(); }
  double det() const { return sigma_b.determinant(); }
  double sigma_x2() const { return sigma_b(0, 0); }
  double sigma_y2() const { return sigma_b(1, 1); }
  double sigma_xy() const { return sigma_b(0, 1); }

  /// Geometry given directly in the B-plane (no RTN projection available).
  static ConjunctionGeometry in_plane(double sigma_x2, double sigma_y2, double sigma_xy,
                                      double miss_distance, double hbr) {
    ConjunctionGeometry g;
    g.sigma_b << sigma_x2, sigma_xy, sigma_xy, sigma_y2;
    g.rho_b = {miss_distance, 0.0};
    g.hbr = hbr;
    g.projection << 1, 0, 0, 0, 1, 0;
    return g;
  }
};

inline ConjunctionGeometry build_bplane(const RtnVector& rho_r, const RtnVector& v_r,
                                        const Covariance3& sigma_combined, double r_t,
                                        double r_c) {
  if (!rho_r.finite() || !v_r.finite()) {
    fail(ErrorKind::DegenerateGeometry, "non-finite relative state");
  }
  if (!(r_t > 0.0) || !(r_c > 0.0)) {
    fail(ErrorKind::InvalidArgument, "object radii must be positive");
  }
  const Eigen::Vector3d rho = rho_r.vec();
  const Eigen::Vector3d v = v_r.vec();
  const double rho_norm = rho.norm();
  const double v_norm = v.norm();
  if (rho_norm == 0.0 || v_norm == 0.0) {
    fail(ErrorKind::DegenerateGeometry, "zero relative position or velocity");
  }
  const Eigen::Vector3d h = rho.cross(v);
  const double h_norm = h.norm();
  if (!(h_norm > 1e-12 * rho_norm * v_norm)) {
    fail(ErrorKind::DegenerateGeometry, "relative position parallel to relative velocity");
  }
  // Re-validate: callers may hand us a matrix assembled by hand.
  const Covariance3 sigma = Covariance3::from_matrix(sigma_combined.matrix());

  ConjunctionGeometry g;
  g.projection.row(0) = (rho / rho_norm).transpose();
  g.projection.row(1) = (h / h_norm).transpose();
  g.sigma_b = g.projection * sigma.matrix() * g.projection.transpose();
  g.sigma_b(1, 0) = g.sigma_b(0, 1);
  g.rho_b = {rho_norm, 0.0};
  g.hbr = r_t + r_c;
  return g;
}

namespace detail {

inline void require_positive_det(const ConjunctionGeometry& g) {
  const double det = g.det();
  if (!(det > 0.0) || !(g.sigma_x2() > 0.0)) {
    fail(ErrorKind::SingularCovariance, "B-plane covariance determinant " + std::to_string(det));
  }
}

// 8-point Gauss-Legendre rule on [-1, 1].
inline constexpr std::array<double, 8> kGl8Nodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGl8Weights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

// Composite 8-point rule on [lo, hi] with `panels` equal panels.
template <typename F>
double composite_gauss_legendre(F&& f, double lo, double hi, int panels) {
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = lo + (p + 0.5) * width;
    double panel = 0.0;
    for (std::size_t i = 0; i < kGl8Nodes.size(); ++i) {
      panel += kGl8Weights[i] * f(mid + 0.5 * width * kGl8Nodes[i]);
    }
    total += 0.5 * width * panel;
  }
  return total;
}

}  // namespace detail

/// Constant-density approximation over the collision disk, clamped to [0, 1].
inline double poc_approx(const ConjunctionGeometry& g) {
  detail::require_positive_det(g);
  const double det = g.det();
  const double d = g.miss_distance();
  const double quad = g.sigma_y2() * d * d / det;
  const double p = g.hbr * g.hbr / (2.0 * std::sqrt(det)) * std::exp(-0.5 * quad);
  return std::clamp(p, 0.0, 1.0);
}

/// Bivariate Gaussian integrated over the disk of radius hbr centred at
/// [d_m, 0]. `steps` is the number of quadrature nodes per axis, arranged as
/// composite 8-point Gauss-Legendre panels. The x-strip is parametrized as
/// x = d_m + R sin(phi) so the y-limits +-R cos(phi) stay smooth at the rim.
inline double poc_foster(const ConjunctionGeometry& g, int steps) {
  if (steps < 16) fail(ErrorKind::InvalidArgument, "poc_foster needs steps >= 16");
  detail::require_positive_det(g);
  if (!(g.hbr > 0.0)) return 0.0;

  const Eigen::Matrix2d inv = g.sigma_b.inverse();
  const double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(g.det()));
  const double r = g.hbr;
  const double cx = g.miss_distance();
  const int panels = (steps + 7) / 8;

  auto density = [&](double x, double y) {
    const double q = inv(0, 0) * x * x + 2.0 * inv(0, 1) * x * y + inv(1, 1) * y * y;
    return std::exp(-0.5 * q);
  };
  auto strip = [&](double phi) {
    const double c = std::cos(phi);
    const double x = cx + r * std::sin(phi);
    const double half = r * c;
    auto inner = [&](double s) { return density(x, half * s); };
    return r * c * half * detail::composite_gauss_legendre(inner, -1.0, 1.0, panels);
  };
  const double p = norm * detail::composite_gauss_legendre(strip, -0.5 * std::numbers::pi,
                                                            0.5 * std::numbers::pi, panels);
  return std::clamp(p, 0.0, 1.0);
}

/// Miss distance that brings the approximate PoC down to current_poc / lambda.
/// Throws InfeasibleReduction when the target is already met at any distance.
inline double safe_miss_distance(const ConjunctionGeometry& g, double current_poc,
                                 double lambda) {
  detail::require_positive_det(g);
  if (!(current_poc > 0.0 && current_poc <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "current PoC must lie in (0, 1]");
  }
  if (!(lambda >= 1.0)) fail(ErrorKind::InvalidArgument, "lambda must be >= 1");
  if (!(g.hbr > 0.0)) fail(ErrorKind::InvalidArgument, "hbr must be positive");
  const double det = g.det();
  const double arg = 2.0 * std::sqrt(det) * current_poc / (g.hbr * g.hbr * lambda);
  if (!(arg < 1.0)) {
    fail(ErrorKind::InfeasibleReduction,
         "target PoC is met at zero miss distance (log argument " + std::to_string(arg) + ")");
  }
  return std::sqrt(-(2.0 * det / g.sigma_y2()) * std::log(arg));
}

}  // namespace camdp
