/// @file stats.hpp
/// @brief Summary statistics over angle samples.
#pragma once

#include <cmath>
#include <span>

#include "deepangle/common.hpp"

namespace deepangle {

struct AngleStats {
  double mean = 0;
  double std = 0;  ///< population standard deviation
  double cv = 0;   ///< std / mean
};

inline AngleStats angle_stats(std::span<const double> angles) {
  if (angles.empty()) fail(ErrorKind::data, "angle statistics need at least one value");
  double mean = 0;
  for (double a : angles) mean += a;
  mean /= double(angles.size());
  double ss = 0;
  for (double a : angles) ss += (a - mean) * (a - mean);
  double sd = std::sqrt(ss / double(angles.size()));
  return {mean, sd, sd / mean};
}

/// Coefficient of determination 1 - SSres/SStot.
inline double r_squared(std::span<const double> predicted, std::span<const double> truth) {
  require(predicted.size() == truth.size() && truth.size() >= 2, "r_squared needs two equal-length series");
  double mean = 0;
  for (double t : truth) mean += t;
  mean /= double(truth.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot <= 0) fail(ErrorKind::data, "r_squared undefined: truth has zero variance");
  return 1.0 - ss_res / ss_tot;
}

}  // namespace deepangle
