#include "cif/resample.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Geometry>

#include "cif/error.hpp"

namespace cif {

double instance_response(const GaussianSet& set, std::size_t i, int instance) {
  const Eigen::VectorXd p = effective_identity(set, i);
  return set.occupancy(i) * p[instance - 1];
}

SamplingPlan build_plan(const Eigen::VectorXd& responses, int instance, double epsilon, double rate) {
  if (responses.size() == 0) fail(ErrorCode::Usage, "cannot build a sampling plan for an empty set");
  if (!(epsilon > 0.0 && epsilon < 1.0)) fail(ErrorCode::Usage, "epsilon must lie in (0, 1)");
  if (!(rate > 0.0 && rate <= 1.0)) fail(ErrorCode::Usage, "resample rate must lie in (0, 1]");
  SamplingPlan plan;
  plan.instance = instance;
  const Eigen::ArrayXd clamped = responses.array().max(epsilon).min(1.0);
  plan.strong = clamped / clamped.sum();
  const Eigen::ArrayXd inverse = clamped.inverse();
  plan.weak = inverse / inverse.sum();
  plan.budget = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(responses.size())));
  return plan;
}

SamplingPlan build_plan(const GaussianSet& set, int instance, double epsilon, double rate) {
  Eigen::VectorXd gamma(static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) gamma[static_cast<Eigen::Index>(i)] = instance_response(set, i, instance);
  return build_plan(gamma, instance, epsilon, rate);
}

double volume_conserving(double value, int replicas) {
  if (replicas == 0) return value;
  return 1.0 - std::pow(1.0 - value, 1.0 / static_cast<double>(replicas + 1));
}

std::string RoundReport::to_log(std::size_t round) const {
  std::ostringstream out;
  for (const auto& p : pairs) {
    out << "round " << round << " weak " << p.weak << " strong " << p.strong << " instance " << p.instance << "\n";
  }
  if (skipped > 0) out << "round " << round << " skipped " << skipped << "\n";
  return out.str();
}

namespace {

std::discrete_distribution<std::size_t> distribution(const Eigen::VectorXd& weights) {
  return std::discrete_distribution<std::size_t>(weights.data(), weights.data() + weights.size());
}

}  // namespace

RoundReport resample_round(GaussianSet& set, double epsilon, double rate, Rng& rng) {
  const std::size_t n = set.size();
  const int k = static_cast<int>(set.instances());
  if (n < 2) fail(ErrorCode::Usage, "resampling needs at least two primitives");
  if (k < 1) fail(ErrorCode::Usage, "resampling needs at least one instance");

  std::vector<SamplingPlan> plans;
  std::vector<std::discrete_distribution<std::size_t>> weak, strong;
  for (int inst = 1; inst <= k; ++inst) {
    plans.push_back(build_plan(set, inst, epsilon, rate));
    weak.push_back(distribution(plans.back().weak));
    strong.push_back(distribution(plans.back().strong));
  }
  const std::size_t budget = plans.front().budget;

  enum class Role { None, Source, Replica };
  std::vector<Role> role(n, Role::None);
  std::vector<std::size_t> source_of(n, 0);
  std::fill(set.replicas.begin(), set.replicas.end(), 0);

  RoundReport report;
  for (std::size_t draw = 0; draw < budget; ++draw) {
    const std::size_t slot = draw % static_cast<std::size_t>(k);
    bool placed = false;
    for (int attempt = 0; attempt <= 16 && !placed; ++attempt) {
      const std::size_t w = weak[slot](rng);
      const std::size_t s = strong[slot](rng);
      if (w == s || role[w] != Role::None || role[s] == Role::Replica) continue;

      set.copy_primitive(s, w);
      const auto si = static_cast<Eigen::Index>(s);
      const auto wi = static_cast<Eigen::Index>(w);
      const Eigen::Quaterniond q(set.rotation(si, 0), set.rotation(si, 1), set.rotation(si, 2), set.rotation(si, 3));
      Eigen::Vector3d local;
      for (int a = 0; a < 3; ++a) local[a] = 0.5 * std::exp(set.log_scale(si, a)) * rng.normal();
      set.position.row(wi) += (q.normalized().toRotationMatrix() * local).transpose();

      role[s] = Role::Source;
      role[w] = Role::Replica;
      source_of[w] = s;
      ++set.replicas[s];
      report.pairs.push_back({w, s, static_cast<int>(slot) + 1});
      placed = true;
    }
    if (!placed) ++report.skipped;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = role[i] == Role::Replica ? source_of[i] : i;
    const int count = set.replicas[src];
    if (count == 0 || role[i] == Role::None) continue;
    // Replicas still hold the source's unadjusted values.
    const auto ii = static_cast<Eigen::Index>(i);
    set.opacity_logit[ii] = logit(volume_conserving(sigmoid(set.opacity_logit[ii]), count));
    set.occupancy_logit[ii] = logit(volume_conserving(sigmoid(set.occupancy_logit[ii]), count));
  }
  std::fill(set.replicas.begin(), set.replicas.end(), 0);
  return report;
}

}  // namespace cif
