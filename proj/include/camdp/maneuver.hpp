#pragma once

// Impulsive two-burn phasing maneuvers on circular orbits.
//
// Units: km, s, km/s, kg. Only time_remaining in optimal_revolutions is in
// hours, matching the CDM grid.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "camdp/errors.hpp"
#include "camdp/geom.hpp"

namespace camdp {

inline constexpr double kMu = 0.3986e6;           // km^3/s^2
inline constexpr double kEarthRadius = 6371.0;    // km
inline constexpr double kG0 = 9.80665e-3;         // km/s^2 (standard gravity)
inline constexpr double kMinServiceAltitude = 160.0;
inline constexpr double kMaxServiceAltitude = 2000.0;

inline double circular_period(double radius) {
  return 2.0 * std::numbers::pi * std::sqrt(radius * radius * radius / kMu);
}
inline double circular_speed(double radius) { return std::sqrt(kMu / radius); }
inline double radius_for_period(double period) {
  return std::cbrt(kMu * period * period / (4.0 * std::numbers::pi * std::numbers::pi));
}

struct OrbitSpec {
  double altitude_km = 400.0;

  double radius() const { return altitude_km + kEarthRadius; }
  double period() const { return circular_period(radius()); }
  double speed() const { return circular_speed(radius()); }

  /// Service orbits are restricted to [160, 2000] km altitude.
  static OrbitSpec service(double altitude_km) {
    if (!(altitude_km >= kMinServiceAltitude && altitude_km <= kMaxServiceAltitude)) {
      fail(ErrorKind::InvalidArgument,
           "service altitude " + std::to_string(altitude_km) + " km outside [160, 2000]");
    }
    return OrbitSpec{altitude_km};
  }

  static OrbitSpec from_radius(double radius_km) { return OrbitSpec{radius_km - kEarthRadius}; }
};

struct ManeuverPlan {
  double delta_theta = 0.0;     // rad
  std::int64_t n_rev = 1;
  double transit_period = 0.0;  // s
  double transit_radius = 0.0;  // km
  double transit_speed = 0.0;   // km/s
  double delta_v = 0.0;         // km/s, both burns
  double propellant_kg = 0.0;
};

/// Phase shift that moves the miss distance from d_m to d_m_prime by an
/// along-track displacement R_s * dtheta (positive root of the quadratic).
inline double phase_shift_for_miss(const RtnVector& rho0, double d_m, double d_m_prime,
                                   double r_s) {
  if (!(d_m >= 0.0) || !(d_m_prime >= d_m)) {
    fail(ErrorKind::InvalidArgument, "need d_m_prime >= d_m >= 0");
  }
  if (!(r_s > 0.0)) fail(ErrorKind::InvalidArgument, "service radius must be positive");
  if (!(rho0.t > 0.0)) {
    fail(ErrorKind::InvalidGeometry, "tangential relative position must be positive");
  }
  const double norm = rho0.norm();
  if (std::abs(norm - d_m) > 1e-6 * std::max(d_m, norm)) {
    fail(ErrorKind::InvalidGeometry, "|rho0| = " + std::to_string(norm) +
                                         " does not match d_m = " + std::to_string(d_m));
  }
  // (-b + sqrt(b^2 + c)) rewritten as c / (b + sqrt(b^2 + c)) to avoid cancellation.
  const double c = d_m_prime * d_m_prime - d_m * d_m;
  const double b = rho0.t;
  return c / (r_s * (b + std::sqrt(b * b + c)));
}

/// Minimal transit period that accumulates delta_theta in n_rev revolutions.
inline double transit_period_for_phase(double delta_theta, std::int64_t n_rev,
                                       const OrbitSpec& service) {
  if (!(delta_theta >= 0.0)) fail(ErrorKind::InvalidArgument, "delta_theta must be >= 0");
  if (n_rev < 1) fail(ErrorKind::InvalidArgument, "n_rev must be >= 1");
  return service.period() +
         service.radius() * delta_theta / (static_cast<double>(n_rev) * service.speed());
}

inline double propellant_mass(double delta_v, double m_o, double isp) {
  return -m_o * std::expm1(-delta_v / (isp * kG0));
}

inline ManeuverPlan plan_maneuver(double delta_theta, std::int64_t n_rev, const OrbitSpec& service,
                                  double m_o, double isp, double delta_r_cap) {
  if (!(m_o > 0.0)) fail(ErrorKind::InvalidArgument, "m_o must be positive");
  if (!(isp > 0.0)) fail(ErrorKind::InvalidArgument, "isp must be positive");
  ManeuverPlan plan;
  plan.delta_theta = delta_theta;
  plan.n_rev = n_rev;
  plan.transit_period = transit_period_for_phase(delta_theta, n_rev, service);
  plan.transit_radius = radius_for_period(plan.transit_period);
  plan.transit_speed = circular_speed(plan.transit_radius);
  const double raise = plan.transit_radius - service.radius();
  if (raise > delta_r_cap) {
    fail(ErrorKind::TransitAltitudeExceeded,
         "transit raise " + std::to_string(raise) + " km exceeds cap " +
             std::to_string(delta_r_cap) + " km");
  }
  // At delta_theta == 0 the round trip through radius_for_period leaves ~1e-15 residue.
  plan.delta_v = delta_theta == 0.0 ? 0.0 : 2.0 * (service.speed() - plan.transit_speed);
  plan.propellant_kg = propellant_mass(plan.delta_v, m_o, isp);
  return plan;
}

/// Largest revolution count whose plan fits in time_remaining (hours) while the
/// transit orbit stays below min(service + delta_r_cap, 2000 km altitude).
inline std::int64_t optimal_revolutions(double delta_theta, double time_remaining_hr,
                                        const OrbitSpec& service, double delta_r_cap) {
  if (!(time_remaining_hr > 0.0)) fail(ErrorKind::InvalidArgument, "time_remaining must be > 0");
  if (!(delta_theta > 0.0)) fail(ErrorKind::InvalidArgument, "delta_theta must be > 0");

  const double ts = service.period();
  const double drift = service.radius() * delta_theta / service.speed();  // s, total
  const double window = time_remaining_hr * 3600.0;

  // n * T_t(n) = n * T_s + drift must fit in the window.
  const double n_time = std::floor((window - drift) / ts * (1.0 + 1e-12));
  const double max_altitude =
      std::min(service.altitude_km + delta_r_cap, kMaxServiceAltitude);
  const double t_max = circular_period(max_altitude + kEarthRadius);
  if (!(t_max > ts)) {
    fail(ErrorKind::NoFeasiblePlan, "no altitude headroom above the service orbit");
  }
  // T_t(n) <= t_max  <=>  n >= drift / (t_max - T_s).
  const double n_alt = std::ceil(drift / (t_max - ts) * (1.0 - 1e-12));
  const double n_min = std::max(1.0, n_alt);
  if (n_time < n_min) {
    fail(ErrorKind::NoFeasiblePlan,
         "no revolution count satisfies both the time window and the altitude cap");
  }
  return static_cast<std::int64_t>(n_time);
}

}  // namespace camdp
