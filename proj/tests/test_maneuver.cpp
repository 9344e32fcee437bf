#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "camdp/maneuver.hpp"
#include "camdp/rng.hpp"

using namespace camdp;

TEST(OrbitSpec, ConsistentPeriodAndSpeed) {
  for (double alt : {160.0, 400.0, 1000.0, 2000.0}) {
    const auto o = OrbitSpec::service(alt);
    EXPECT_NEAR(o.period() * o.speed(), 2.0 * std::numbers::pi * o.radius(), 1e-10 * o.period() * o.speed());
    EXPECT_NEAR(radius_for_period(o.period()), o.radius(), 1e-10 * o.radius());
  }
  EXPECT_THROW(OrbitSpec::service(150.0), Error);
  EXPECT_THROW(OrbitSpec::service(2001.0), Error);
}

TEST(PhaseShift, HandExample) {
  EXPECT_NEAR(phase_shift_for_miss({0, 1, 0}, 1.0, 2.0, 6771.0), 1.0 / 6771.0, 1e-15);
  EXPECT_NEAR(phase_shift_for_miss({0, 1, 0}, 1.0, 2.0, 6771.0), 1.477e-4, 1e-7);
  EXPECT_EQ(phase_shift_for_miss({0.3, 0.4, 0}, 0.5, 0.5, 6771.0), 0.0);
}

TEST(PhaseShift, ForwardCheck) {
  Rng rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    RtnVector rho{2.0 * u(rng) - 1.0, 1e-3 + u(rng), 2.0 * u(rng) - 1.0};
    const double scale = std::pow(10.0, 4.0 * u(rng) - 2.0);
    rho = {rho.r * scale, rho.t * scale, rho.n * scale};
    const double d = rho.norm();
    const double d2 = d * (1.0 + 20.0 * u(rng));
    const double rs = 6371.0 + 160.0 + 1840.0 * u(rng);
    const double dtheta = phase_shift_for_miss(rho, d, d2, rs);
    EXPECT_GE(dtheta, 0.0);
    const RtnVector moved{rho.r, rho.t + rs * dtheta, rho.n};
    EXPECT_NEAR(moved.norm(), d2, 1e-9 * d2);
  }
}

TEST(PhaseShift, Errors) {
  auto kind = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  EXPECT_EQ(kind([] { phase_shift_for_miss({1, 0, 0}, 1, 2, 6771); }), ErrorKind::InvalidGeometry);
  EXPECT_EQ(kind([] { phase_shift_for_miss({0, 1, 0}, 2, 3, 6771); }), ErrorKind::InvalidGeometry);
}

TEST(TransitPeriod, Formula) {
  const auto s = OrbitSpec::from_radius(6771.0);
  EXPECT_DOUBLE_EQ(transit_period_for_phase(0.0, 3, s), s.period());
  const double d1 = transit_period_for_phase(0.01, 10, s) - s.period();
  EXPECT_NEAR(d1, 6771.0 * 0.01 / (10.0 * std::sqrt(kMu / 6771.0)), 1e-9);
  const double d2 = transit_period_for_phase(0.01, 20, s) - s.period();
  EXPECT_NEAR(d2, 0.5 * d1, 1e-12);
}

TEST(TransitPeriod, DriftSimulationAccumulatesPhase) {
  // Step through n revolutions of the transit orbit and count the lag of the
  // service-orbit reference point.
  const auto s = OrbitSpec::from_radius(6771.0);
  const double dtheta = 0.01;
  const int n = 10;
  const double tt = transit_period_for_phase(dtheta, n, s);
  double accumulated = 0.0;
  for (int rev = 0; rev < n; ++rev) accumulated += (tt - s.period()) * s.speed() / s.radius();
  EXPECT_NEAR(accumulated, dtheta, 1e-12);
}

TEST(PlanManeuver, ZeroPhaseIsFree) {
  const auto p = plan_maneuver(0.0, 5, OrbitSpec::service(500.0), 300, 300, 70);
  EXPECT_EQ(p.delta_v, 0.0);
  EXPECT_EQ(p.propellant_kg, 0.0);
}

TEST(PlanManeuver, KeplerConsistencyAndSymmetry) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const auto s = OrbitSpec::service(160.0 + 1840.0 * u(rng));
    const double dtheta = 1e-5 + 1e-2 * u(rng);
    const auto n = static_cast<std::int64_t>(1 + 20 * u(rng));
    const auto p = plan_maneuver(dtheta, n, s, 300, 300, 1e9);
    EXPECT_NEAR(p.transit_period, circular_period(p.transit_radius), 1e-10 * p.transit_period);
    EXPECT_GE(p.transit_period, s.period());
    EXPECT_NEAR(p.delta_v, 2.0 * (s.speed() - p.transit_speed), 1e-15);
    EXPECT_GT(p.delta_v, 0.0);
    EXPECT_GE(p.propellant_kg, 0.0);
    EXPECT_LT(p.propellant_kg, 300.0);
  }
}

TEST(PlanManeuver, TsiolkovskyUnits) {
  // 10 m/s with Isp 300 s on 300 kg: 300 (1 - exp(-10 / (300 * 9.80665))).
  EXPECT_NEAR(propellant_mass(0.010, 300, 300), 300.0 * (1.0 - std::exp(-10.0 / 2941.995)), 1e-12);
}

TEST(PlanManeuver, RespectsRaiseCap) {
  try {
    plan_maneuver(0.5, 1, OrbitSpec::service(400.0), 300, 300, 70);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TransitAltitudeExceeded);
  }
}

TEST(PlanManeuver, FuelMonotoneInRevolutionsAndPhase) {
  for (double alt : {160.0, 700.0, 2000.0}) {
    for (double dtheta : {1e-4, 1e-3, 1e-2}) {
      const auto s = OrbitSpec::service(alt);
      double prev = std::numeric_limits<double>::infinity();
      for (int n = 1; n <= 100; ++n) {
        const double m = plan_maneuver(dtheta, n, s, 300, 300, 1e9).propellant_kg;
        EXPECT_LT(m, prev) << alt << " " << dtheta << " " << n;
        prev = m;
      }
      const double a = plan_maneuver(dtheta, 7, s, 300, 300, 1e9).propellant_kg;
      const double b = plan_maneuver(2.0 * dtheta, 7, s, 300, 300, 1e9).propellant_kg;
      EXPECT_LT(a, b);
    }
  }
}

TEST(OptimalRevolutions, FitsWindowAndCap) {
  const auto s = OrbitSpec::service(500.0);
  const double dtheta = 1e-3;
  for (double hours : {168.0, 96.0, 24.0, 8.0}) {
    const auto n = optimal_revolutions(dtheta, hours, s, 70);
    ASSERT_GE(n, 1);
    const double tt = transit_period_for_phase(dtheta, n, s);
    EXPECT_LE(static_cast<double>(n) * tt, hours * 3600.0 * (1 + 1e-12));
    EXPECT_GT(static_cast<double>(n + 1) * transit_period_for_phase(dtheta, n + 1, s),
              hours * 3600.0);
    EXPECT_LE(radius_for_period(tt) - s.radius(), 70.0);
  }
  // Earlier decisions never cost more.
  double prev = 0.0;
  for (double hours = 8.0; hours <= 168.0; hours += 8.0) {
    const auto n = optimal_revolutions(dtheta, hours, s, 70);
    const double m = plan_maneuver(dtheta, n, s, 300, 300, 70).propellant_kg;
    if (prev > 0.0) EXPECT_LE(m, prev);
    prev = m;
  }
}

TEST(OptimalRevolutions, OneRevolutionWhenWindowIsTight) {
  const auto s = OrbitSpec::service(500.0);
  const double dtheta = 1e-4;
  const double hours = 1.5 * transit_period_for_phase(dtheta, 1, s) / 3600.0;
  EXPECT_EQ(optimal_revolutions(dtheta, hours, s, 70), 1);
  try {
    optimal_revolutions(dtheta, 0.5 * s.period() / 3600.0, s, 70);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoFeasiblePlan);
  }
}
