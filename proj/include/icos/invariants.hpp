#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <limits>
#include <optional>

#include "icos/core.hpp"
#include "icos/geometry.hpp"

// Pairwise invariants of candidate correspondence structures and the Boolean
// compatibility checks built on them. All functions here are pure; the
// samplers call them millions of times, so the expensive rotation-consistency
// checks come last and everything short-circuits.

namespace icos {

// Below this noise level the bounds behave as if sigma had this value.
// A hard floor keeps every bound strictly positive for noise-free input,
// where floating-point rounding still produces invariants around 1e-13
// (triple rotations go through an SVD) that must not be rejected.
inline constexpr double kSigmaFloor = 1e-9;

inline double effective_sigma(double sigma) {
  return std::max(sigma, kSigmaFloor);
}

// Tolerances for all compatibility checks, derived from one noise scale.
// The stock multipliers below are deliberately loose (several noise standard
// deviations) so that true inlier structures pass with high probability;
// outlier structures overshoot them by orders of magnitude.
struct NoiseBounds {
  double sigma = kSigmaFloor;
  double length = 0;            // unit-vector chord-length difference
  double direction_residual = 0;  // ||R12 u_k - v_k|| over unit vectors
  double pair_angle = 0;        // geodesic gap between pair rotations, radians
  double scale = 0;             // scale-ratio difference multiplier
  double translation = 0;       // translation-invariant difference
  double point_residual = 0;    // ||s R P + t - Q|| for a candidate 4th point
  double triple_angle = 0;      // geodesic gap between triple rotations, radians
  // Multiply point_residual by the candidate structure's scale estimate.
  // Off by stock convention; the residual bound is applied as printed.
  bool scale_point_residual_with_estimate = false;

  static constexpr double kLengthMult = 2.5;
  static constexpr double kDirectionResidualMult = 4.0;
  static constexpr double kPairAngleMult = 10.5;
  static constexpr double kScaleMult = 4.5;
  static constexpr double kTranslationMult = 5.0;
  static constexpr double kPointResidualMult = 6.0;
  static constexpr double kTripleAngleMult = 10.5;

  static NoiseBounds from_sigma(double sigma) {
    NoiseBounds b;
    b.sigma = effective_sigma(sigma);
    b.length = kLengthMult * b.sigma;
    b.direction_residual = kDirectionResidualMult * b.sigma;
    b.pair_angle = kPairAngleMult * b.sigma;
    b.scale = kScaleMult * b.sigma;
    b.translation = kTranslationMult * b.sigma;
    b.point_residual = kPointResidualMult * b.sigma;
    b.triple_angle = kTripleAngleMult * b.sigma;
    return b;
  }
};

struct TwoCosState {
  std::array<int, 2> indices = {-1, -1};
  Eigen::Matrix3d raw_rotation = Eigen::Matrix3d::Identity();
};

struct ThreeCosState {
  std::array<int, 3> indices = {-1, -1, -1};
  double raw_scale = 1.0;
  Eigen::Matrix3d raw_rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d raw_translation = Eigen::Vector3d::Zero();
  bool known_scale = false;
};

// Rotation search: rotations preserve chord lengths between unit directions,
// so inlier pairs agree on them up to noise.
inline double length_invariant(const Correspondence& ci,
                               const Correspondence& cj) {
  const double src_chord =
      (ci.src.normalized() - cj.src.normalized()).norm();
  const double dst_chord =
      (ci.dst.normalized() - cj.dst.normalized()).norm();
  return std::abs(src_chord - dst_chord);
}

inline bool check_two_cos(const Correspondence& ci, const Correspondence& cj,
                          const NoiseBounds& bounds) {
  return length_invariant(ci, cj) <= bounds.length;
}

// Full eligibility test for adding ck to a rotation-search 2-COS:
//   (a) length invariants against both members,
//   (b) direction residual under the 2-COS rotation,
//   (c) mutual geodesic consistency of all three pair rotations.
// Any degenerate pair rotation counts as a failed check.
inline bool check_three_cos_rotation(const TwoCosState& two_cos,
                                     const Correspondence& ck,
                                     const CorrespondenceSet& set,
                                     const NoiseBounds& bounds) {
  const Correspondence& ci = set[two_cos.indices[0]];
  const Correspondence& cj = set[two_cos.indices[1]];

  if (length_invariant(ci, ck) > bounds.length) return false;
  if (length_invariant(cj, ck) > bounds.length) return false;

  const Eigen::Vector3d uk = ck.src.normalized();
  const Eigen::Vector3d vk = ck.dst.normalized();
  if ((two_cos.raw_rotation * uk - vk).norm() > bounds.direction_residual)
    return false;

  try {
    const Eigen::Matrix3d r_ik =
        horn_pair_rotation(ci.src, ci.dst, ck.src, ck.dst);
    if (geodesic_distance(two_cos.raw_rotation, r_ik) > bounds.pair_angle)
      return false;
    const Eigen::Matrix3d r_jk =
        horn_pair_rotation(cj.src, cj.dst, ck.src, ck.dst);
    if (geodesic_distance(two_cos.raw_rotation, r_jk) > bounds.pair_angle)
      return false;
    if (geodesic_distance(r_ik, r_jk) > bounds.pair_angle) return false;
  } catch (const DegenerateConfiguration&) {
    return false;
  }
  return true;
}

// Registration: the ratio of pairwise distances is invariant to (s, R, t) and
// equals s for inlier pairs.
inline double scale_invariant(const Correspondence& ci,
                              const Correspondence& cj) {
  const double src_dist = (ci.src - cj.src).norm();
  if (src_dist == 0.0)
    throw DivisionByZero("scale_invariant: coincident source points");
  return (ci.dst - cj.dst).norm() / src_dist;
}

namespace detail {

inline constexpr double kCoincidentDist = 1e-9;

// Distance-normalized tolerance: a fixed displacement of the target points
// perturbs the distance ratio in proportion to 1/source-distance.
inline bool scale_pair_within(double inv_a, double dist_a, double inv_b,
                              double dist_b, const NoiseBounds& bounds) {
  return std::abs(inv_a - inv_b) <=
         bounds.scale * (1.0 / dist_a + 1.0 / dist_b);
}

}  // namespace detail

// Known-scale form: the ratio itself must be compatible with 1.
inline bool check_known_scale_pair(const Correspondence& ci,
                                   const Correspondence& cj,
                                   const NoiseBounds& bounds) {
  const double dist = (ci.src - cj.src).norm();
  if (dist < detail::kCoincidentDist) return false;
  const double inv = (ci.dst - cj.dst).norm() / dist;
  return std::abs(inv - 1.0) <= bounds.scale / dist;
}

// Scale compatibility of a candidate triple. Unknown scale: the three ratios
// must agree pairwise. Known scale: every ratio must additionally (and
// primarily) be compatible with 1. Collinear or coincident source triples
// fail outright; the caller treats that like any other incompatibility.
inline bool check_scale_triplet(const Correspondence& c1,
                                const Correspondence& c2,
                                const Correspondence& c3,
                                const NoiseBounds& bounds, bool known_scale) {
  const Eigen::Vector3d d12 = c2.src - c1.src;
  const Eigen::Vector3d d13 = c3.src - c1.src;
  const double l12 = d12.norm();
  const double l13 = d13.norm();
  const double l23 = (c3.src - c2.src).norm();
  if (l12 < detail::kCoincidentDist || l13 < detail::kCoincidentDist ||
      l23 < detail::kCoincidentDist)
    return false;
  if (d12.cross(d13).norm() < kDegenerateSine * l12 * l13) return false;

  const double i12 = (c2.dst - c1.dst).norm() / l12;
  const double i23 = (c3.dst - c2.dst).norm() / l23;
  const double i31 = (c1.dst - c3.dst).norm() / l13;

  if (known_scale) {
    if (std::abs(i12 - 1.0) > bounds.scale / l12) return false;
    if (std::abs(i23 - 1.0) > bounds.scale / l23) return false;
    if (std::abs(i31 - 1.0) > bounds.scale / l13) return false;
  }
  return detail::scale_pair_within(i12, l12, i23, l23, bounds) &&
         detail::scale_pair_within(i23, l23, i31, l13, bounds) &&
         detail::scale_pair_within(i31, l13, i12, l12, bounds);
}

enum class RejectedCheck { None, Rotation, Translation };

struct ThreeCosBuild {
  std::optional<ThreeCosState> state;
  RejectedCheck rejected = RejectedCheck::None;
  bool ok() const { return state.has_value(); }
};

// Promote a scale-compatible triple to a full candidate structure: raw scale
// (distance-weighted ratio mean, or exactly 1 when the scale is known), raw
// rotation from the minimal three-point solver, then the translation
// invariants t_i = Q_i - s R P_i, which must agree pairwise within the
// translation bound. Their mean becomes the raw translation.
inline ThreeCosBuild build_three_cos(const Correspondence& c1,
                                     const Correspondence& c2,
                                     const Correspondence& c3,
                                     const NoiseBounds& bounds,
                                     bool known_scale) {
  ThreeCosBuild out;
  double s123 = 1.0;
  if (!known_scale) {
    const std::array<std::pair<const Correspondence*, const Correspondence*>,
                     3>
        pairs = {{{&c1, &c2}, {&c2, &c3}, {&c3, &c1}}};
    double num = 0.0, den = 0.0;
    for (const auto& [a, b] : pairs) {
      const double d = (a->src - b->src).norm();
      num += d * (a->dst - b->dst).norm();
      den += d * d;
    }
    s123 = num / den;
  }

  Eigen::Matrix3d r123;
  try {
    r123 = horn_triple_rotation({c1.src, c2.src, c3.src},
                                {c1.dst, c2.dst, c3.dst});
  } catch (const DegenerateConfiguration&) {
    out.rejected = RejectedCheck::Rotation;
    return out;
  }

  const std::array<Eigen::Vector3d, 3> ti = {
      c1.dst - s123 * (r123 * c1.src), c2.dst - s123 * (r123 * c2.src),
      c3.dst - s123 * (r123 * c3.src)};
  if ((ti[0] - ti[1]).norm() > bounds.translation ||
      (ti[1] - ti[2]).norm() > bounds.translation ||
      (ti[0] - ti[2]).norm() > bounds.translation) {
    out.rejected = RejectedCheck::Translation;
    return out;
  }

  ThreeCosState state;
  state.indices = {c1.index, c2.index, c3.index};
  state.raw_scale = s123;
  state.raw_rotation = r123;
  state.raw_translation = (ti[0] + ti[1] + ti[2]) / 3.0;
  state.known_scale = known_scale;
  out.state = state;
  return out;
}

// Full eligibility test for adding ck to a registration 3-COS:
//   (a) scale invariants against the three members agree (with 1 when the
//       scale is known, pairwise among themselves otherwise),
//   (b) point residual under the raw structure estimate,
//   (c) mutual geodesic consistency of all four triple rotations.
inline bool check_four_cos(const ThreeCosState& three_cos,
                           const Correspondence& ck,
                           const CorrespondenceSet& set,
                           const NoiseBounds& bounds) {
  const Correspondence& c1 = set[three_cos.indices[0]];
  const Correspondence& c2 = set[three_cos.indices[1]];
  const Correspondence& c3 = set[three_cos.indices[2]];

  const double d1 = (c1.src - ck.src).norm();
  const double d2 = (c2.src - ck.src).norm();
  const double d3 = (c3.src - ck.src).norm();
  if (d1 < detail::kCoincidentDist || d2 < detail::kCoincidentDist ||
      d3 < detail::kCoincidentDist)
    return false;

  const double i1 = (c1.dst - ck.dst).norm() / d1;
  const double i2 = (c2.dst - ck.dst).norm() / d2;
  const double i3 = (c3.dst - ck.dst).norm() / d3;
  if (three_cos.known_scale) {
    if (std::abs(i1 - 1.0) > bounds.scale / d1) return false;
    if (std::abs(i2 - 1.0) > bounds.scale / d2) return false;
    if (std::abs(i3 - 1.0) > bounds.scale / d3) return false;
  } else {
    if (!detail::scale_pair_within(i1, d1, i2, d2, bounds) ||
        !detail::scale_pair_within(i1, d1, i3, d3, bounds) ||
        !detail::scale_pair_within(i2, d2, i3, d3, bounds))
      return false;
  }

  double residual_bound = bounds.point_residual;
  if (bounds.scale_point_residual_with_estimate)
    residual_bound *= three_cos.raw_scale;
  const Eigen::Vector3d predicted =
      three_cos.raw_scale * (three_cos.raw_rotation * ck.src) +
      three_cos.raw_translation;
  if ((predicted - ck.dst).norm() > residual_bound) return false;

  try {
    const Eigen::Matrix3d r124 = horn_triple_rotation(
        {c1.src, c2.src, ck.src}, {c1.dst, c2.dst, ck.dst});
    if (geodesic_distance(three_cos.raw_rotation, r124) > bounds.triple_angle)
      return false;
    const Eigen::Matrix3d r134 = horn_triple_rotation(
        {c1.src, c3.src, ck.src}, {c1.dst, c3.dst, ck.dst});
    if (geodesic_distance(three_cos.raw_rotation, r134) >
            bounds.triple_angle ||
        geodesic_distance(r124, r134) > bounds.triple_angle)
      return false;
    const Eigen::Matrix3d r234 = horn_triple_rotation(
        {c2.src, c3.src, ck.src}, {c2.dst, c3.dst, ck.dst});
    if (geodesic_distance(three_cos.raw_rotation, r234) >
            bounds.triple_angle ||
        geodesic_distance(r124, r234) > bounds.triple_angle ||
        geodesic_distance(r134, r234) > bounds.triple_angle)
      return false;
  } catch (const DegenerateConfiguration&) {
    return false;
  }
  return true;
}

// Alignment error of one correspondence under a hypothesis. Rotation search
// compares raw vectors (the noise model perturbs them directly).
inline double residual(const Eigen::Matrix3d& rotation,
                       const Correspondence& c) {
  return (rotation * c.src - c.dst).norm();
}

inline double residual(const SimilarityTransform& transform,
                       const Correspondence& c) {
  return (transform.apply(c.src) - c.dst).norm();
}

}  // namespace icos
