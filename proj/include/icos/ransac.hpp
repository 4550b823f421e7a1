#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "icos/core.hpp"
#include "icos/geometry.hpp"
#include "icos/invariants.hpp"
#include "icos/random.hpp"
#include "icos/sampling.hpp"

namespace icos {

// Classic hypothesize-and-test baseline. Two stock variants: an
// iteration-capped run (time_budget unset) and a time-capped run (iteration
// cap effectively unbounded); only one of the two limits should bind.
struct RansacParams {
  double confidence = 0.995;
  long max_iterations = 1000;
  std::optional<double> time_budget;  // seconds; unset = iteration-capped
  double inlier_threshold = 0.052;    // residual cutoff, input units
  std::uint64_t seed = 0;

  static RansacParams iteration_capped(long iterations, double sigma) {
    RansacParams p;
    p.max_iterations = iterations;
    p.inlier_threshold = expansion_threshold(sigma);
    return p;
  }

  static RansacParams time_capped(double seconds, double sigma) {
    RansacParams p;
    p.max_iterations = std::numeric_limits<long>::max();
    p.time_budget = seconds;
    p.inlier_threshold = expansion_threshold(sigma);
    return p;
  }
};

namespace detail {

inline void validate_ransac(const RansacParams& params, int n,
                            int sample_size) {
  if (!(params.confidence > 0.0 && params.confidence < 1.0))
    throw InvalidParameter("ransac: confidence must lie in (0,1)");
  if (params.max_iterations < 1)
    throw InvalidParameter("ransac: max_iterations must be >= 1");
  if (params.time_budget && !(*params.time_budget > 0.0))
    throw InvalidParameter("ransac: time_budget must be > 0");
  if (!(params.inlier_threshold > 0.0))
    throw InvalidParameter("ransac: inlier_threshold must be > 0");
  if (n < sample_size)
    throw InvalidParameter("ransac: fewer correspondences than a minimal sample");
}

// Generic consensus loop. Hypothesize maps a minimal index sample to an
// optional model (nullopt on degenerate samples, which still consume an
// iteration), ResidualOf scores one correspondence, Refit solves on a
// consensus set. The adaptive cap re-tightens whenever the best consensus
// grows; hitting it means the confidence target is met and the run converged,
// while stopping on the iteration or time limit first reports exhaustion.
template <class Estimate, class Draw, class Hypothesize, class ResidualOf,
          class Refit>
SolveReport<Estimate> run_ransac(const CorrespondenceSet& set,
                                 const RansacParams& params, int sample_size,
                                 Draw&& draw, Hypothesize&& hypothesize,
                                 ResidualOf&& residual_of, Refit&& refit,
                                 Estimate identity) {
  const int n = set.size();
  Rng rng(params.seed);
  const Stopwatch clock;

  SolveReport<Estimate> report;
  report.estimate = identity;

  Estimate best_model = identity;
  std::vector<int> best, best_sample, consensus;
  long adaptive_cap = std::numeric_limits<long>::max();
  long drawn = 0;

  while (drawn < params.max_iterations && drawn < adaptive_cap) {
    if (params.time_budget && clock.seconds() >= *params.time_budget) break;
    ++drawn;
    const std::vector<int> sample = draw(rng);
    const std::optional<Estimate> model = hypothesize(sample);
    if (!model) continue;
    consensus.clear();
    for (int i = 0; i < n; ++i)
      if (residual_of(*model, set[i]) <= params.inlier_threshold)
        consensus.push_back(i);
    if (consensus.size() > best.size()) {
      best_model = *model;
      best = consensus;
      best_sample = sample;
      const double outlier_fraction = 1.0 - double(best.size()) / n;
      adaptive_cap = outlier_fraction == 0.0
                         ? drawn
                         : max_iterations(1, params.confidence,
                                          outlier_fraction, sample_size);
    }
  }

  report.estimate = best_model;
  if (int(best.size()) >= sample_size) {
    try {
      report.estimate = refit(best);
    } catch (const DegenerateConfiguration&) {
      // Keep the minimal-sample model when the consensus set cannot be
      // re-solved (e.g. collapses to a line).
    }
  }
  report.inliers = best;
  report.collected = best_sample;
  report.iterations.seed_draws = drawn;
  report.restarts = 0;
  report.elapsed_seconds = clock.seconds();
  report.status = (!best.empty() && drawn >= adaptive_cap)
                      ? SolveStatus::Converged
                      : SolveStatus::BudgetExhausted;
  return report;
}

}  // namespace detail

inline RotationReport ransac_rotation(const CorrespondenceSet& set,
                                      const RansacParams& params) {
  if (set.kind() != PairKind::VectorPairs)
    throw InvalidParameter("ransac_rotation: expects vector pairs");
  detail::validate_ransac(params, set.size(), 2);
  const auto draw = [&](Rng& rng) {
    const auto [i, j] = rng.distinct_pair(set.size());
    return std::vector<int>{i, j};
  };
  const auto hypothesize =
      [&](const std::vector<int>& s) -> std::optional<Eigen::Matrix3d> {
    try {
      return horn_pair_rotation(set[s[0]].src, set[s[0]].dst, set[s[1]].src,
                                set[s[1]].dst);
    } catch (const DegenerateConfiguration&) {
      return std::nullopt;
    }
  };
  const auto score = [](const Eigen::Matrix3d& r, const Correspondence& c) {
    return residual(r, c);
  };
  const auto refit = [&](const std::vector<int>& idx) {
    return solve_rotation_nonminimal(set, idx);
  };
  return detail::run_ransac<Eigen::Matrix3d>(
      set, params, 2, draw, hypothesize, score, refit,
      Eigen::Matrix3d::Identity());
}

inline TransformReport ransac_registration(const CorrespondenceSet& set,
                                           const RansacParams& params,
                                           bool known_scale) {
  if (set.kind() != PairKind::PointPairs)
    throw InvalidParameter("ransac_registration: expects point pairs");
  detail::validate_ransac(params, set.size(), 3);
  const std::optional<double> fixed_scale =
      known_scale ? std::optional<double>(1.0) : std::nullopt;
  const auto draw = [&](Rng& rng) {
    const auto [i, j, k] = rng.distinct_triple(set.size());
    return std::vector<int>{i, j, k};
  };
  const auto hypothesize =
      [&](const std::vector<int>& s) -> std::optional<SimilarityTransform> {
    try {
      return solve_transform_nonminimal(set, s, fixed_scale);
    } catch (const DegenerateConfiguration&) {
      return std::nullopt;
    }
  };
  const auto score = [](const SimilarityTransform& t, const Correspondence& c) {
    return residual(t, c);
  };
  const auto refit = [&](const std::vector<int>& idx) {
    return solve_transform_nonminimal(set, idx, fixed_scale);
  };
  return detail::run_ransac<SimilarityTransform>(set, params, 3, draw,
                                                 hypothesize, score, refit,
                                                 SimilarityTransform{});
}

}  // namespace icos
