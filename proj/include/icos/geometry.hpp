#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "icos/core.hpp"

// Closed-form building blocks: rotation distance, minimal 2-vector and
// 3-point rotation solvers, and the non-minimal least-squares solvers the
// robust loops refine with.

namespace icos {

// Minimal sine of the angle between the two directions that define a minimal
// configuration; below this the solve is numerically meaningless.
inline constexpr double kDegenerateSine = 1e-6;

// Angle of the relative rotation a^T b, in radians: the geodesic metric on
// SO(3). Evaluated as atan2(sin, cos) of the relative angle, with the sine
// taken from the skew-symmetric part; equal to acos((trace-1)/2) in exact
// arithmetic but, unlike acos, it stays accurate for angles near 0 and pi,
// which matters when asserting sub-1e-9 recovery errors.
inline double geodesic_distance(const Eigen::Matrix3d& a,
                                const Eigen::Matrix3d& b) {
  const Eigen::Matrix3d r = a.transpose() * b;
  const Eigen::Vector3d skew(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0),
                             r(1, 0) - r(0, 1));
  const double s = 0.5 * skew.norm();
  const double c = (r.trace() - 1.0) * 0.5;
  return std::abs(std::atan2(s, c));
}

struct Demeaned {
  std::vector<Eigen::Vector3d> centered;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
};

inline Demeaned demean(std::span<const Eigen::Vector3d> points) {
  if (points.empty()) throw EmptyInput("demean: no points");
  Demeaned out;
  for (const auto& p : points) out.centroid += p;
  out.centroid /= static_cast<double>(points.size());
  out.centered.reserve(points.size());
  for (const auto& p : points) out.centered.push_back(p - out.centroid);
  return out;
}

// Least-squares rotation aligning src[i] to dst[i] via SVD of the correlation
// matrix H = sum src_i dst_i^T. When det(V U^T) is negative the smallest
// singular direction is flipped so the result stays a proper rotation.
inline Eigen::Matrix3d kabsch_rotation(std::span<const Eigen::Vector3d> src,
                                       std::span<const Eigen::Vector3d> dst) {
  if (src.size() != dst.size())
    throw InvalidParameter("kabsch_rotation: size mismatch");
  if (src.empty()) throw EmptyInput("kabsch_rotation: no pairs");

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < src.size(); ++i) h += src[i] * dst[i].transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  // Rank below 2 leaves a whole pencil of optimal rotations.
  if (sv(0) <= 0.0 || sv(1) <= 1e-9 * sv(0))
    throw DegenerateConfiguration("kabsch_rotation: correlation rank < 2");

  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, 1.0);
  if ((v * u.transpose()).determinant() < 0.0) d(2) = -1.0;
  return v * d.asDiagonal() * u.transpose();
}

namespace detail {

// Right-handed orthonormal triad anchored at a: columns are a, the normal of
// the (a, b) plane, and their cross product.
inline Eigen::Matrix3d pair_triad(const Eigen::Vector3d& a,
                                  const Eigen::Vector3d& b) {
  Eigen::Matrix3d o;
  const Eigen::Vector3d n = a.cross(b).normalized();
  o.col(0) = a;
  o.col(1) = n;
  o.col(2) = a.cross(n);
  return o;
}

}  // namespace detail

// Minimal rotation solver for two bearing-vector correspondences
// (u1 -> v1, u2 -> v2). Both frames get the same anchored triad construction,
// and the rotation is the change of basis between them; it reproduces u1 -> v1
// exactly and is exact for noiseless input.
inline Eigen::Matrix3d horn_pair_rotation(const Eigen::Vector3d& u1,
                                          const Eigen::Vector3d& v1,
                                          const Eigen::Vector3d& u2,
                                          const Eigen::Vector3d& v2) {
  const Eigen::Vector3d a1 = u1.normalized();
  const Eigen::Vector3d a2 = u2.normalized();
  const Eigen::Vector3d b1 = v1.normalized();
  const Eigen::Vector3d b2 = v2.normalized();
  if (a1.cross(a2).norm() < kDegenerateSine ||
      b1.cross(b2).norm() < kDegenerateSine)
    throw DegenerateConfiguration("horn_pair_rotation: parallel pair");
  return detail::pair_triad(b1, b2) * detail::pair_triad(a1, a2).transpose();
}

// Minimal rotation solver for three point correspondences: demean both
// triples and run the SVD alignment on the centered points. Uniform scaling
// of either side does not change the answer.
inline Eigen::Matrix3d horn_triple_rotation(
    const std::array<Eigen::Vector3d, 3>& p,
    const std::array<Eigen::Vector3d, 3>& q) {
  const Eigen::Vector3d d1 = p[1] - p[0];
  const Eigen::Vector3d d2 = p[2] - p[0];
  const double l1 = d1.norm(), l2 = d2.norm();
  if (l1 < 1e-9 || l2 < 1e-9 ||
      d1.cross(d2).norm() < kDegenerateSine * l1 * l2)
    throw DegenerateConfiguration("horn_triple_rotation: collinear sources");

  const auto pc = demean(std::span<const Eigen::Vector3d>(p));
  const auto qc = demean(std::span<const Eigen::Vector3d>(q));
  return kabsch_rotation(pc.centered, qc.centered);
}

// Scale between two demeaned point sets as a weighted mean of per-pair norm
// ratios. Weights are the squared source norms, which makes long lever arms
// (whose ratios are least noise-sensitive) count the most.
inline double weighted_scale(std::span<const Eigen::Vector3d> src_centered,
                             std::span<const Eigen::Vector3d> dst_centered) {
  if (src_centered.size() != dst_centered.size())
    throw InvalidParameter("weighted_scale: size mismatch");
  if (src_centered.empty()) throw EmptyInput("weighted_scale: no pairs");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < src_centered.size(); ++i) {
    const double m = src_centered[i].norm();
    if (m == 0.0)
      throw DivisionByZero("weighted_scale: zero-norm source entry");
    const double w = m * m;
    num += w * (dst_centered[i].norm() / m);
    den += w;
  }
  return num / den;
}

inline Eigen::Vector3d recover_translation(double scale,
                                           const Eigen::Matrix3d& rotation,
                                           const Eigen::Vector3d& src_centroid,
                                           const Eigen::Vector3d& dst_centroid) {
  return dst_centroid - scale * (rotation * src_centroid);
}

// Least-squares rotation over a chosen subset of vector correspondences,
// applied to the raw (unnormalized) vectors.
inline Eigen::Matrix3d solve_rotation_nonminimal(const CorrespondenceSet& set,
                                                 std::span<const int> subset) {
  if (subset.size() < 2)
    throw DegenerateConfiguration("solve_rotation_nonminimal: need >= 2");
  std::vector<Eigen::Vector3d> src, dst;
  src.reserve(subset.size());
  dst.reserve(subset.size());
  for (int i : subset) {
    src.push_back(set[i].src);
    dst.push_back(set[i].dst);
  }
  return kabsch_rotation(src, dst);
}

// Full similarity (or rigid, when known_scale is set) solve over a subset of
// point correspondences: demean, scale from weighted norm ratios, rotation
// from the centered points, translation from the centroids.
inline SimilarityTransform solve_transform_nonminimal(
    const CorrespondenceSet& set, std::span<const int> subset,
    std::optional<double> known_scale) {
  if (subset.size() < 3)
    throw DegenerateConfiguration("solve_transform_nonminimal: need >= 3");
  std::vector<Eigen::Vector3d> src, dst;
  src.reserve(subset.size());
  dst.reserve(subset.size());
  for (int i : subset) {
    src.push_back(set[i].src);
    dst.push_back(set[i].dst);
  }
  const auto sc = demean(src);
  const auto dc = demean(dst);
  SimilarityTransform t;
  t.scale = known_scale ? *known_scale : weighted_scale(sc.centered, dc.centered);
  if (t.scale <= 0.0)
    throw InvalidParameter("solve_transform_nonminimal: scale must be > 0");
  t.rotation = kabsch_rotation(sc.centered, dc.centered);
  t.translation =
      recover_translation(t.scale, t.rotation, sc.centroid, dc.centroid);
  return t;
}

}  // namespace icos
