#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cif/gaussians.hpp"
#include "cif/rng.hpp"

namespace cif {

inline constexpr double kResponseFloor = 1e-4;

/// Weak/strong sampling distributions for one instance.
struct SamplingPlan {
  int instance = 1;
  Eigen::VectorXd weak;    // proportional to 1 / clamp(gamma, eps, 1)
  Eigen::VectorXd strong;  // proportional to clamp(gamma, eps, 1)
  std::size_t budget = 0;  // ceil(rate * N)
};

/// gamma_i^k = pi_i p_i^k with the calibrated identity; `instance` is 1-based.
double instance_response(const GaussianSet& set, std::size_t i, int instance);

SamplingPlan build_plan(const GaussianSet& set, int instance, double epsilon, double rate);
SamplingPlan build_plan(const Eigen::VectorXd& responses, int instance, double epsilon, double rate);

/// 1 - (1 - value)^(1 / (replicas + 1)): the per-copy opacity that makes
/// replicas + 1 coincident copies composite to `value`.
double volume_conserving(double value, int replicas);

struct ResamplePair {
  std::size_t weak = 0;
  std::size_t strong = 0;
  int instance = 1;

  bool operator==(const ResamplePair&) const = default;
};

struct RoundReport {
  std::vector<ResamplePair> pairs;
  std::size_t skipped = 0;

  /// One `round <r> weak <w> strong <s> instance <k>` line per pair.
  std::string to_log(std::size_t round) const;

  bool operator==(const RoundReport&) const = default;
};

/// Overwrites weak primitives with noisy replicas of strong ones, round-robin
/// over instances until ceil(rate * N) draws are spent, then applies the
/// volume-conserving opacity and occupancy adjustment to every source and its
/// replicas. A primitive is never overwritten twice in a round, a source is
/// never overwritten, and replicas are never used as sources.
RoundReport resample_round(GaussianSet& set, double epsilon, double rate, Rng& rng);

}  // namespace cif
