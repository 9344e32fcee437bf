#pragma once

#include <algorithm>

#include "camdp/geom.hpp"

namespace camdp {

inline constexpr double kDefaultPocThreshold = 1e-4;
inline constexpr double kDefaultSigmaFloor = 0.1;  // km

/// The MDP state only carries (d_m, sigma_T). Its B-plane covariance is
/// diag(floor^2, max(sigma_T, floor)^2) with the miss distance on the x-axis.
inline ConjunctionGeometry state_geometry(double miss_distance, double sigma_t, double hbr,
                                          double sigma_floor = kDefaultSigmaFloor) {
  const double sy = std::max(sigma_t, sigma_floor);
  return ConjunctionGeometry::in_plane(sigma_floor * sigma_floor, sy * sy, 0.0, miss_distance, hbr);
}

inline double state_poc(double miss_distance, double sigma_t, double hbr,
                        double sigma_floor = kDefaultSigmaFloor) {
  return poc_approx(state_geometry(miss_distance, sigma_t, hbr, sigma_floor));
}

}  // namespace camdp
