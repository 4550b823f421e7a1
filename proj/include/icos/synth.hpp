#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "icos/core.hpp"
#include "icos/geometry.hpp"
#include "icos/random.hpp"
#include "icos/sampling.hpp"

namespace icos {

// Generator bookkeeping: the transform that produced an instance, which
// correspondences were left untouched by outlier replacement, and the noise
// level used. Rotation-search instances store the rotation with unit scale
// and zero translation.
struct GroundTruth {
  SimilarityTransform transform;
  std::vector<bool> inlier_mask;
  double sigma = 0.0;

  int inlier_count() const {
    int count = 0;
    for (bool b : inlier_mask) count += b;
    return count;
  }
};

struct Instance {
  CorrespondenceSet set;
  GroundTruth truth;
  std::uint64_t seed = 0;
};

// Scale drawn per instance: a degenerate interval pins it (fixed 1 is the
// known-scale protocol), otherwise uniform in [lo, hi).
struct ScaleRange {
  double lo = 1.0;
  double hi = 1.0;

  static ScaleRange fixed(double s = 1.0) { return {s, s}; }
  static ScaleRange uniform(double lo, double hi) { return {lo, hi}; }
};

namespace detail {

inline void validate_generation(int n, double sigma, double outlier_ratio) {
  if (n < 3) throw InvalidParameter("generation: need n >= 3");
  if (!(sigma >= 0.0)) throw InvalidParameter("generation: sigma must be >= 0");
  if (!(outlier_ratio >= 0.0 && outlier_ratio < 1.0))
    throw InvalidParameter("generation: outlier_ratio must be in [0,1)");
}

// Noise draw capped at 6 sigma in norm, so every untouched correspondence is
// guaranteed to satisfy its generative equation within the mask contract.
inline Eigen::Vector3d bounded_noise(Rng& rng, double sigma) {
  if (sigma == 0.0) return Eigen::Vector3d::Zero();
  Eigen::Vector3d noise = sigma * rng.gaussian_vector();
  while (noise.norm() > 6.0 * sigma) noise = sigma * rng.gaussian_vector();
  return noise;
}

inline void self_check_mask(const CorrespondenceSet& set,
                            const GroundTruth& truth) {
  for (int i = 0; i < set.size(); ++i) {
    if (!truth.inlier_mask[i]) continue;
    const Eigen::Vector3d predicted =
        set.kind() == PairKind::VectorPairs
            ? (truth.transform.rotation * set[i].src).eval()
            : truth.transform.apply(set[i].src);
    if ((set[i].dst - predicted).norm() > 6.0 * truth.sigma + 1e-12)
      throw std::logic_error("generated inlier violates its noise bound");
  }
}

}  // namespace detail

inline Instance gen_rotation_instance(int n, double sigma,
                                      double outlier_ratio,
                                      std::uint64_t seed) {
  detail::validate_generation(n, sigma, outlier_ratio);
  Rng rng(seed);
  Instance inst;
  inst.seed = seed;
  inst.truth.sigma = sigma;
  inst.truth.transform.rotation = rng.rotation();
  std::vector<Eigen::Vector3d> src, dst;
  src.reserve(n);
  dst.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d u = rng.unit_vector();
    src.push_back(u);
    dst.push_back(inst.truth.transform.rotation * u +
                  detail::bounded_noise(rng, sigma));
  }
  inst.truth.inlier_mask.assign(n, true);
  const int outliers = static_cast<int>(std::floor(outlier_ratio * n));
  for (int k : rng.sample_without_replacement(n, outliers)) {
    dst[k] = rng.unit_vector();
    inst.truth.inlier_mask[k] = false;
  }
  inst.set = CorrespondenceSet::from_pairs(src, dst, PairKind::VectorPairs);
  detail::self_check_mask(inst.set, inst.truth);
  return inst;
}

// Registration protocol over caller-supplied source points (already sized and
// placed; see downsample_and_rescale for loaded clouds). Destinations are the
// transformed sources plus bounded noise; outliers are redrawn uniformly in
// the ball of radius s*sqrt(3)/2 around the transformed centroid, keeping
// them overlapped with the target cloud.
inline Instance gen_registration_instance(std::vector<Eigen::Vector3d> source,
                                          double sigma, double outlier_ratio,
                                          ScaleRange scale,
                                          std::uint64_t seed) {
  const int n = static_cast<int>(source.size());
  detail::validate_generation(n, sigma, outlier_ratio);
  if (!(scale.lo > 0.0 && scale.hi >= scale.lo))
    throw InvalidParameter("generation: scale range must satisfy 0 < lo <= hi");
  Rng rng(seed);
  Instance inst;
  inst.seed = seed;
  inst.truth.sigma = sigma;
  inst.truth.transform.scale =
      scale.lo == scale.hi ? scale.lo : rng.uniform(scale.lo, scale.hi);
  inst.truth.transform.rotation = rng.rotation();
  inst.truth.transform.translation = rng.unit_vector() * rng.uniform(0.0, 3.0);
  std::vector<Eigen::Vector3d> dst;
  dst.reserve(n);
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d mapped = inst.truth.transform.apply(source[i]);
    centroid += mapped;
    dst.push_back(mapped + detail::bounded_noise(rng, sigma));
  }
  centroid /= n;
  inst.truth.inlier_mask.assign(n, true);
  const int outliers = static_cast<int>(std::floor(outlier_ratio * n));
  const double ball_radius = inst.truth.transform.scale * std::sqrt(3.0) / 2.0;
  for (int k : rng.sample_without_replacement(n, outliers)) {
    dst[k] = centroid + rng.in_ball(ball_radius);
    inst.truth.inlier_mask[k] = false;
  }
  inst.set =
      CorrespondenceSet::from_pairs(std::move(source), dst, PairKind::PointPairs);
  detail::self_check_mask(inst.set, inst.truth);
  return inst;
}

inline Instance gen_registration_instance(int n, double sigma,
                                          double outlier_ratio,
                                          ScaleRange scale,
                                          std::uint64_t seed) {
  detail::validate_generation(n, sigma, outlier_ratio);
  // Source positions come from a derived stream so they stay independent of
  // the transform/noise draws made by the shared overload on the same seed.
  constexpr std::uint64_t kSourceStream = 0x736f75726365;  // "source"
  Rng rng(derive_seed(seed, kSourceStream, 0));
  std::vector<Eigen::Vector3d> source;
  source.reserve(n);
  for (int i = 0; i < n; ++i) source.push_back(rng.in_cube(0.5));
  return gen_registration_instance(std::move(source), sigma, outlier_ratio,
                                   scale, seed);
}

// Uniform random subset of target_n points, then a uniform scale plus
// translation that fits the subset's bounding box into [-0.5, 0.5]^3 with the
// largest extent spanning exactly 1.
inline std::vector<Eigen::Vector3d> downsample_and_rescale(
    const std::vector<Eigen::Vector3d>& points, int target_n,
    std::uint64_t seed) {
  const int n = static_cast<int>(points.size());
  if (target_n < 1 || target_n > n)
    throw InvalidParameter("downsample: target_n must be in [1, count]");
  Rng rng(seed);
  std::vector<Eigen::Vector3d> subset;
  subset.reserve(target_n);
  for (int k : rng.sample_without_replacement(n, target_n))
    subset.push_back(points[k]);
  Eigen::Vector3d lo = subset[0], hi = subset[0];
  for (const Eigen::Vector3d& p : subset) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  if (extent == 0.0)
    throw DegenerateConfiguration("downsample: zero-extent point set");
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  for (Eigen::Vector3d& p : subset) p = (p - center) / extent;
  return subset;
}

// Reduces a known-scale problem to the unit-scale form the solver expects:
// Q = s R P + t = R (s P) + t, so pre-scaling the sources leaves rotation,
// translation, and the inlier classification unchanged.
inline CorrespondenceSet apply_known_scale(const CorrespondenceSet& set,
                                           double scale) {
  if (set.kind() != PairKind::PointPairs)
    throw InvalidParameter("apply_known_scale: expects point pairs");
  if (!(scale > 0.0))
    throw InvalidParameter("apply_known_scale: scale must be > 0");
  std::vector<Eigen::Vector3d> src, dst;
  src.reserve(set.size());
  dst.reserve(set.size());
  for (int i = 0; i < set.size(); ++i) {
    src.push_back(scale * set[i].src);
    dst.push_back(set[i].dst);
  }
  return CorrespondenceSet::from_pairs(src, dst, PairKind::PointPairs);
}

// Error and consensus-quality summary of one solve against the generator.
struct Metrics {
  double rotation_error_deg = 0.0;
  double translation_error = 0.0;
  double scale_error = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

namespace detail {

inline void fill_consensus_quality(const std::vector<int>& found,
                                   const GroundTruth& truth, Metrics& out) {
  int hits = 0;
  for (int i : found)
    if (truth.inlier_mask[i]) ++hits;
  const int truth_count = truth.inlier_count();
  out.recall = truth_count == 0 ? 1.0 : double(hits) / truth_count;
  out.precision = found.empty() ? 0.0 : double(hits) / found.size();
}

}  // namespace detail

inline Metrics metrics(const RotationReport& report,
                       const GroundTruth& truth) {
  Metrics out;
  out.rotation_error_deg =
      geodesic_distance(report.estimate, truth.transform.rotation) * 180.0 /
      M_PI;
  detail::fill_consensus_quality(report.inliers, truth, out);
  return out;
}

inline Metrics metrics(const TransformReport& report,
                       const GroundTruth& truth) {
  Metrics out;
  out.rotation_error_deg =
      geodesic_distance(report.estimate.rotation, truth.transform.rotation) *
      180.0 / M_PI;
  out.translation_error =
      (report.estimate.translation - truth.transform.translation).norm();
  out.scale_error = std::abs(report.estimate.scale - truth.transform.scale);
  detail::fill_consensus_quality(report.inliers, truth, out);
  return out;
}

}  // namespace icos
