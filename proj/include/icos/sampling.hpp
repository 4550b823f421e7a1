#pragma once

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "icos/core.hpp"
#include "icos/geometry.hpp"
#include "icos/invariants.hpp"
#include "icos/random.hpp"

// The three invariant-guided consensus solvers (rotation search, known-scale
// registration, unknown-scale registration), plus iteration budgeting, the
// early-abort rule for the collection stage, and final inlier expansion.
//
// All three solvers share one loop structure: an outer restart loop; a seed
// stage that draws minimal subsets until one passes its invariant checks; a
// collection stage that draws single candidates against the seeded structure
// until x of them pass; and a finish stage that solves on the collected set,
// expands by the residual rule over all correspondences, and re-solves. A
// failed collection resumes seed sampling within the same restart's budget;
// a restart is consumed only when the seed budget is exhausted (or the finish
// stage degenerates).

namespace icos {

struct IcosParams {
  NoiseBounds bounds = NoiseBounds::from_sigma(0.01);
  int x = 4;                // collected-candidate count required to finish
  int max_itr1 = 40000;     // seed-subset draws per restart
  int max_itr2 = 400;       // completion draws (decoupled known-scale stage)
  int max_itr3 = 1600;      // collection draws per seeded structure
  int max_itr4 = 400;       // early-abort window of the collection stage
  double confidence = 0.99;             // budget-formula input
  double assumed_outlier_ratio = 0.0;   // budget-formula input
  std::uint64_t seed = 0;
  int max_restarts = 50;

  // Stock settings; x steps with problem size at the documented sizes
  // (nearest documented value, no interpolation).
  static IcosParams rotation_search(int n, double sigma) {
    IcosParams p;
    p.bounds = NoiseBounds::from_sigma(sigma);
    p.x = n < 300 ? 2 : (n < 750 ? 4 : 5);
    p.max_itr3 = 2000;
    return p;
  }

  static IcosParams registration(double sigma) {
    IcosParams p;
    p.bounds = NoiseBounds::from_sigma(sigma);
    p.x = 4;
    p.max_itr3 = 1600;
    return p;
  }
};

enum class SolveStatus { Converged, BudgetExhausted };

struct StageCounters {
  long seed_draws = 0;        // minimal-subset draws across all restarts
  long completion_draws = 0;  // decoupled third-point draws (known scale)
  long collection_draws = 0;  // candidate draws against seeded structures
  int excursions = 0;         // collection stages entered
};

template <class Estimate>
struct SolveReport {
  Estimate estimate;
  std::vector<int> inliers;    // post-expansion consensus (or best partial)
  std::vector<int> collected;  // pre-expansion structure behind the estimate
  StageCounters iterations;
  int restarts = 0;
  double elapsed_seconds = 0.0;
  SolveStatus status = SolveStatus::BudgetExhausted;
};

using RotationReport = SolveReport<Eigen::Matrix3d>;
using TransformReport = SolveReport<SimilarityTransform>;

// Draw budget that yields x all-inlier subsets of size n with the given
// confidence when the data contains the given outlier fraction. A certain
// inlier (ratio 0) needs exactly x draws; the formula's value never drops
// below that, which also keeps the budget monotone near ratio 0.
inline long max_iterations(int x, double confidence, double outlier_ratio,
                           int n) {
  if (x < 1) throw InvalidParameter("max_iterations: x must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw InvalidParameter("max_iterations: confidence must be in (0,1)");
  if (!(outlier_ratio >= 0.0 && outlier_ratio < 1.0))
    throw InvalidParameter("max_iterations: outlier_ratio must be in [0,1)");
  if (n < 1) throw InvalidParameter("max_iterations: n must be >= 1");
  if (outlier_ratio == 0.0) return x;
  const double inlier_subset = std::pow(1.0 - outlier_ratio, n);
  const double denom = std::log1p(-inlier_subset);
  if (denom == 0.0) return x;  // subset success certain at this precision
  const double raw = x * std::log1p(-confidence) / denom;
  if (!(raw < 9.0e18)) return std::numeric_limits<long>::max();
  return std::max<long>(x, static_cast<long>(std::ceil(raw)));
}

enum class SamplingVerdict { Continue, Abort };

// Early abort for the collection stage: by each multiple of the window the
// collected count must have kept pace, otherwise the seeded structure is
// judged outlier-contaminated and abandoned.
inline SamplingVerdict check_sampling(long itr3, int count, int max_itr4) {
  if ((itr3 >= max_itr4 && count < 1) || (itr3 >= 2L * max_itr4 && count < 2) ||
      (itr3 >= 3L * max_itr4 && count < 3))
    return SamplingVerdict::Abort;
  return SamplingVerdict::Continue;
}

template <class Estimate>
struct Refinement {
  Estimate estimate;
  std::vector<int> inliers;
};

inline double expansion_threshold(double sigma) {
  return 5.2 * effective_sigma(sigma);
}

// Single-pass expansion: classify every correspondence by its residual under
// the provisional estimate, then re-solve on the classified set. The inlier
// list reflects the provisional estimate, not the refined one.
inline Refinement<Eigen::Matrix3d> expand_and_refine(
    const CorrespondenceSet& set, const Eigen::Matrix3d& provisional,
    double sigma) {
  const double threshold = expansion_threshold(sigma);
  Refinement<Eigen::Matrix3d> out;
  for (const Correspondence& c : set.items())
    if (residual(provisional, c) <= threshold) out.inliers.push_back(c.index);
  if (out.inliers.size() < 2)
    throw DegenerateConfiguration(
        "expansion kept fewer than 2 correspondences");
  out.estimate = solve_rotation_nonminimal(set, out.inliers);
  return out;
}

inline Refinement<SimilarityTransform> expand_and_refine(
    const CorrespondenceSet& set, const SimilarityTransform& provisional,
    double sigma, std::optional<double> known_scale = std::nullopt) {
  const double threshold = expansion_threshold(sigma);
  Refinement<SimilarityTransform> out;
  for (const Correspondence& c : set.items())
    if (residual(provisional, c) <= threshold) out.inliers.push_back(c.index);
  if (out.inliers.size() < 3)
    throw DegenerateConfiguration(
        "expansion kept fewer than 3 correspondences");
  out.estimate = solve_transform_nonminimal(set, out.inliers, known_scale);
  return out;
}

namespace detail {

inline void validate_params(const IcosParams& p) {
  if (p.x < 1) throw InvalidParameter("params: x must be >= 1");
  if (p.max_itr1 < 1 || p.max_itr2 < 1 || p.max_itr3 < 1 || p.max_itr4 < 1)
    throw InvalidParameter("params: iteration caps must be >= 1");
  if (!(p.confidence > 0.0 && p.confidence < 1.0))
    throw InvalidParameter("params: confidence must be in (0,1)");
  if (!(p.assumed_outlier_ratio >= 0.0 && p.assumed_outlier_ratio < 1.0))
    throw InvalidParameter("params: assumed_outlier_ratio must be in [0,1)");
  if (p.max_restarts < 1)
    throw InvalidParameter("params: max_restarts must be >= 1");
}

// Collection stage shared by all three solvers: draw candidates outside the
// current structure until x pass, the draw budget runs out, or the pace rule
// aborts. Admitted indices are appended to members.
template <class EligibleFn>
bool collect_candidates(Rng& rng, int n, const IcosParams& params,
                        std::vector<int>& members, StageCounters& counters,
                        EligibleFn&& eligible) {
  int count = 0;
  for (long itr3 = 1; itr3 <= params.max_itr3 && count < params.x; ++itr3) {
    if (check_sampling(itr3, count, params.max_itr4) == SamplingVerdict::Abort)
      return false;
    ++counters.collection_draws;
    const int k = rng.index_excluding(n, members);
    if (eligible(k)) {
      members.push_back(k);
      ++count;
    }
  }
  return count >= params.x;
}

// Largest pre-expansion structure seen across failed excursions; reported as
// the best-effort result when every restart is spent.
struct PartialTracker {
  std::vector<int> best;
  void offer(const std::vector<int>& members) {
    if (members.size() > best.size()) best = members;
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ =
      std::chrono::steady_clock::now();
};

}  // namespace detail

// Rotation-only consensus over vector correspondences. Seeds with compatible
// pairs, collects direction candidates against the pair's rotation, then
// solves, expands by the residual rule, and re-solves.
inline RotationReport icos_rotation_search(const CorrespondenceSet& set,
                                           const IcosParams& params) {
  detail::validate_params(params);
  if (set.kind() != PairKind::VectorPairs)
    throw InvalidParameter("rotation search requires vector pairs");
  const int n = set.size();
  if (n < params.x + 2)
    throw InvalidParameter("rotation search needs at least x + 2 pairs");

  const detail::Stopwatch clock;
  RotationReport report;
  report.estimate = Eigen::Matrix3d::Identity();
  const CorrespondenceSet unit = set.unit_normalized();
  const NoiseBounds& bounds = params.bounds;
  Rng rng(params.seed);
  detail::PartialTracker partial;

  for (int restart = 0; restart < params.max_restarts; ++restart) {
    report.restarts = restart;
    bool finish_failed = false;
    for (long itr1 = 1; itr1 <= params.max_itr1 && !finish_failed; ++itr1) {
      ++report.iterations.seed_draws;
      const auto [i, j] = rng.distinct_pair(n);
      if (!check_two_cos(unit[i], unit[j], bounds)) continue;
      TwoCosState two_cos;
      two_cos.indices = {i, j};
      try {
        two_cos.raw_rotation =
            horn_pair_rotation(set[i].src, set[i].dst, set[j].src, set[j].dst);
      } catch (const DegenerateConfiguration&) {
        continue;
      }

      ++report.iterations.excursions;
      std::vector<int> members = {i, j};
      const bool collected = detail::collect_candidates(
          rng, n, params, members, report.iterations, [&](int k) {
            return check_three_cos_rotation(two_cos, unit[k], unit, bounds);
          });
      if (!collected) {
        partial.offer(members);
        continue;
      }

      try {
        const Eigen::Matrix3d provisional =
            solve_rotation_nonminimal(set, members);
        Refinement<Eigen::Matrix3d> refined =
            expand_and_refine(set, provisional, bounds.sigma);
        if (static_cast<int>(refined.inliers.size()) < params.x + 2)
          throw DegenerateConfiguration("expanded consensus below structure");
        report.estimate = refined.estimate;
        report.inliers = std::move(refined.inliers);
        report.collected = std::move(members);
        report.status = SolveStatus::Converged;
        report.elapsed_seconds = clock.seconds();
        return report;
      } catch (const DegenerateConfiguration&) {
        partial.offer(members);
        finish_failed = true;  // consume the restart
      }
    }
    report.restarts = restart + 1;
  }

  report.status = SolveStatus::BudgetExhausted;
  report.collected = partial.best;
  if (partial.best.size() >= 2) {
    try {
      report.estimate = solve_rotation_nonminimal(set, partial.best);
      report.inliers = partial.best;
    } catch (const DegenerateConfiguration&) {
      report.estimate = Eigen::Matrix3d::Identity();
      report.inliers.clear();
    }
  }
  report.elapsed_seconds = clock.seconds();
  return report;
}

namespace detail {

// Shared finish for both registration solvers: solve on the collected
// members, expand, re-solve, and fill the report. Returns false when the
// expansion degenerates (caller keeps members and consumes the restart).
inline bool finish_registration(const CorrespondenceSet& set,
                                const IcosParams& params,
                                std::optional<double> known_scale,
                                std::vector<int>& members,
                                const detail::Stopwatch& clock,
                                TransformReport& report) {
  try {
    const SimilarityTransform provisional =
        solve_transform_nonminimal(set, members, known_scale);
    Refinement<SimilarityTransform> refined =
        expand_and_refine(set, provisional, params.bounds.sigma, known_scale);
    if (static_cast<int>(refined.inliers.size()) < params.x + 3)
      throw DegenerateConfiguration("expanded consensus below structure");
    report.estimate = refined.estimate;
    report.inliers = std::move(refined.inliers);
    report.collected = std::move(members);
    report.status = SolveStatus::Converged;
    report.elapsed_seconds = clock.seconds();
    return true;
  } catch (const DegenerateConfiguration&) {
    return false;
  }
}

inline TransformReport exhausted_registration(
    const CorrespondenceSet& set, std::optional<double> known_scale,
    const PartialTracker& partial, const Stopwatch& clock,
    TransformReport&& report) {
  report.status = SolveStatus::BudgetExhausted;
  report.collected = partial.best;
  if (partial.best.size() >= 3) {
    try {
      report.estimate = solve_transform_nonminimal(set, partial.best,
                                                   known_scale);
      report.inliers = partial.best;
    } catch (const DegenerateConfiguration&) {
      report.estimate = SimilarityTransform{};
      report.inliers.clear();
    }
  }
  report.elapsed_seconds = clock.seconds();
  return std::move(report);
}

}  // namespace detail

// Known-scale registration. The seed stage is decoupled: pairs are vetted by
// the unit-ratio check alone, then completed to a triple by the same check
// before the full triple examination, which is much cheaper than drawing
// whole triples against the full check.
inline TransformReport icos_registration_known_scale(
    const CorrespondenceSet& set, const IcosParams& params) {
  detail::validate_params(params);
  if (set.kind() != PairKind::PointPairs)
    throw InvalidParameter("registration requires point pairs");
  const int n = set.size();
  if (n < params.x + 3)
    throw InvalidParameter("registration needs at least x + 3 pairs");

  const detail::Stopwatch clock;
  TransformReport report;
  const NoiseBounds& bounds = params.bounds;
  Rng rng(params.seed);
  detail::PartialTracker partial;
  const std::optional<double> unit_scale(1.0);

  for (int restart = 0; restart < params.max_restarts; ++restart) {
    report.restarts = restart;
    bool finish_failed = false;
    for (long itr1 = 1; itr1 <= params.max_itr1 && !finish_failed; ++itr1) {
      ++report.iterations.seed_draws;
      const auto [i, j] = rng.distinct_pair(n);
      if (!check_known_scale_pair(set[i], set[j], bounds)) continue;

      int third = -1;
      const std::vector<int> pair_members = {i, j};
      for (long itr2 = 1; itr2 <= params.max_itr2; ++itr2) {
        ++report.iterations.completion_draws;
        const int k = rng.index_excluding(n, pair_members);
        if (check_known_scale_pair(set[i], set[k], bounds) &&
            check_known_scale_pair(set[j], set[k], bounds)) {
          third = k;
          break;
        }
      }
      if (third < 0) continue;

      if (!check_scale_triplet(set[i], set[j], set[third], bounds, true))
        continue;
      const ThreeCosBuild build =
          build_three_cos(set[i], set[j], set[third], bounds, true);
      if (!build.ok()) continue;

      ++report.iterations.excursions;
      std::vector<int> members = {i, j, third};
      const bool collected = detail::collect_candidates(
          rng, n, params, members, report.iterations, [&](int k) {
            return check_four_cos(*build.state, set[k], set, bounds);
          });
      if (!collected) {
        partial.offer(members);
        continue;
      }
      if (detail::finish_registration(set, params, unit_scale, members, clock,
                                      report))
        return report;
      partial.offer(members);
      finish_failed = true;
    }
    report.restarts = restart + 1;
  }
  return detail::exhausted_registration(set, unit_scale, partial, clock,
                                        std::move(report));
}

// Unknown-scale registration: seeds are whole triples vetted by the mutual
// ratio checks, the raw structure carries its own scale estimate, and the
// final solves estimate scale from the consensus.
inline TransformReport icos_registration_unknown_scale(
    const CorrespondenceSet& set, const IcosParams& params) {
  detail::validate_params(params);
  if (set.kind() != PairKind::PointPairs)
    throw InvalidParameter("registration requires point pairs");
  const int n = set.size();
  if (n < params.x + 3)
    throw InvalidParameter("registration needs at least x + 3 pairs");

  const detail::Stopwatch clock;
  TransformReport report;
  const NoiseBounds& bounds = params.bounds;
  Rng rng(params.seed);
  detail::PartialTracker partial;

  for (int restart = 0; restart < params.max_restarts; ++restart) {
    report.restarts = restart;
    bool finish_failed = false;
    for (long itr1 = 1; itr1 <= params.max_itr1 && !finish_failed; ++itr1) {
      ++report.iterations.seed_draws;
      const auto [i, j, k] = rng.distinct_triple(n);
      if (!check_scale_triplet(set[i], set[j], set[k], bounds, false))
        continue;
      const ThreeCosBuild build =
          build_three_cos(set[i], set[j], set[k], bounds, false);
      if (!build.ok()) continue;

      ++report.iterations.excursions;
      std::vector<int> members = {i, j, k};
      const bool collected = detail::collect_candidates(
          rng, n, params, members, report.iterations, [&](int c) {
            return check_four_cos(*build.state, set[c], set, bounds);
          });
      if (!collected) {
        partial.offer(members);
        continue;
      }
      if (detail::finish_registration(set, params, std::nullopt, members,
                                      clock, report))
        return report;
      partial.offer(members);
      finish_failed = true;
    }
    report.restarts = restart + 1;
  }
  return detail::exhausted_registration(set, std::nullopt, partial, clock,
                                        std::move(report));
}

}  // namespace icos
