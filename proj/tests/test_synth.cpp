#include "icos/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "icos/core.hpp"
#include "icos/geometry.hpp"
#include "icos/random.hpp"

namespace icos {
namespace {

constexpr double kPi = 3.14159265358979323846;

double degrees(double radians) { return radians * 180.0 / kPi; }

int mask_outliers(const GroundTruth& truth) {
  int count = 0;
  for (bool b : truth.inlier_mask) count += !b;
  return count;
}

TEST(GenRotation, ProducesExactOutlierCounts) {
  EXPECT_EQ(mask_outliers(gen_rotation_instance(1000, 0.01, 0.99, 1).truth),
            990);
  EXPECT_EQ(mask_outliers(gen_rotation_instance(10, 0.01, 0.35, 2).truth), 3);
  EXPECT_EQ(mask_outliers(gen_rotation_instance(3, 0.01, 0.0, 3).truth), 0);
  EXPECT_EQ(mask_outliers(gen_rotation_instance(500, 0.01, 0.98, 4).truth),
            490);
}

TEST(GenRotation, ZeroSigmaInliersSatisfyTheRotationExactly) {
  const Instance inst = gen_rotation_instance(200, 0.0, 0.3, 7);
  for (int i = 0; i < inst.set.size(); ++i) {
    if (!inst.truth.inlier_mask[i]) continue;
    const Eigen::Vector3d mapped =
        inst.truth.transform.rotation * inst.set[i].src;
    EXPECT_EQ((inst.set[i].dst - mapped).norm(), 0.0);
  }
}

TEST(GenRotation, InlierResidualsFallUnderTheExpansionThreshold) {
  //||noise|| is a chi_3 variable scaled by sigma; P(chi_3 > 5.2) ~ 5.7e-6,
  // so at least 99.9% of untouched entries must sit inside 5.2 sigma.
  const Instance inst = gen_rotation_instance(10000, 0.01, 0.0, 11);
  int within = 0;
  for (int i = 0; i < inst.set.size(); ++i) {
    const double r =
        (inst.set[i].dst - inst.truth.transform.rotation * inst.set[i].src)
            .norm();
    within += r <= 5.2 * 0.01;
  }
  EXPECT_GE(within, 9990);
}

TEST(GenRotation, MaskedInliersRespectTheSixSigmaContract) {
  for (double sigma : {0.01, 0.1}) {
    const Instance inst = gen_rotation_instance(2000, sigma, 0.5, 13);
    for (int i = 0; i < inst.set.size(); ++i) {
      if (!inst.truth.inlier_mask[i]) continue;
      const double r =
          (inst.set[i].dst - inst.truth.transform.rotation * inst.set[i].src)
              .norm();
      EXPECT_LE(r, 6.0 * sigma);
    }
  }
}

TEST(GenRotation, DeterministicGivenSeed) {
  const Instance a = gen_rotation_instance(300, 0.01, 0.9, 42);
  const Instance b = gen_rotation_instance(300, 0.01, 0.9, 42);
  ASSERT_EQ(a.set.size(), b.set.size());
  for (int i = 0; i < a.set.size(); ++i) {
    EXPECT_TRUE(a.set[i].src == b.set[i].src);
    EXPECT_TRUE(a.set[i].dst == b.set[i].dst);
  }
  EXPECT_EQ(a.truth.inlier_mask, b.truth.inlier_mask);
  EXPECT_TRUE(a.truth.transform.rotation == b.truth.transform.rotation);

  const Instance c = gen_rotation_instance(300, 0.01, 0.9, 43);
  EXPECT_FALSE(a.set[0].src == c.set[0].src);
}

TEST(GenRotation, ValidatesArguments) {
  EXPECT_THROW(gen_rotation_instance(2, 0.01, 0.0, 1), InvalidParameter);
  EXPECT_THROW(gen_rotation_instance(10, 0.01, 1.0, 1), InvalidParameter);
  EXPECT_THROW(gen_rotation_instance(10, 0.01, -0.1, 1), InvalidParameter);
  EXPECT_THROW(gen_rotation_instance(10, -1.0, 0.0, 1), InvalidParameter);
}

TEST(GenRegistration, CleanUnitScaleInstanceRoundTripsThroughTheSolver) {
  const Instance inst =
      gen_registration_instance(500, 0.01, 0.0, ScaleRange::fixed(), 17);
  EXPECT_DOUBLE_EQ(inst.truth.transform.scale, 1.0);
  std::vector<int> all(inst.set.size());
  for (int i = 0; i < inst.set.size(); ++i) all[i] = i;
  const SimilarityTransform fit =
      solve_transform_nonminimal(inst.set, all, std::nullopt);
  EXPECT_LT(degrees(geodesic_distance(fit.rotation,
                                      inst.truth.transform.rotation)),
            0.3);
  EXPECT_LT((fit.translation - inst.truth.transform.translation).norm(), 0.01);
  EXPECT_NEAR(fit.scale, 1.0, 0.005);
}

TEST(GenRegistration, ScaleRangeDrawsStayInsideTheInterval) {
  double lowest = 10.0, highest = 0.0;
  for (int run = 0; run < 50; ++run) {
    const Instance inst = gen_registration_instance(
        10, 0.0, 0.0, ScaleRange::uniform(1.0, 5.0), 100 + run);
    const double s = inst.truth.transform.scale;
    EXPECT_GE(s, 1.0);
    EXPECT_LT(s, 5.0);
    lowest = std::min(lowest, s);
    highest = std::max(highest, s);
  }
  EXPECT_LT(lowest, 2.0);
  EXPECT_GT(highest, 4.0);
}

TEST(GenRegistration, OutliersLiveInTheScaledBallAroundTheMappedCentroid) {
  const Instance inst = gen_registration_instance(
      1000, 0.01, 0.98, ScaleRange::uniform(1.0, 5.0), 19);
  EXPECT_EQ(mask_outliers(inst.truth), 980);
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i = 0; i < inst.set.size(); ++i)
    centroid += inst.truth.transform.apply(inst.set[i].src);
  centroid /= inst.set.size();
  const double radius = inst.truth.transform.scale * std::sqrt(3.0) / 2.0;
  for (int i = 0; i < inst.set.size(); ++i) {
    if (inst.truth.inlier_mask[i]) continue;
    EXPECT_LE((inst.set[i].dst - centroid).norm(), radius + 1e-9);
  }
}

TEST(GenRegistration, CubeSourcesStayInsideTheHalfUnitCube) {
  const Instance inst =
      gen_registration_instance(500, 0.0, 0.0, ScaleRange::fixed(), 23);
  for (int i = 0; i < inst.set.size(); ++i)
    EXPECT_LE(inst.set[i].src.cwiseAbs().maxCoeff(), 0.5);
}

TEST(GenRegistration, LoadedCloudOverloadKeepsTheGivenSources) {
  std::vector<Eigen::Vector3d> cloud;
  Rng rng(31);
  for (int i = 0; i < 40; ++i) cloud.push_back(rng.in_cube(0.5));
  const Instance inst =
      gen_registration_instance(cloud, 0.01, 0.5, ScaleRange::fixed(), 29);
  ASSERT_EQ(inst.set.size(), 40);
  for (int i = 0; i < 40; ++i) EXPECT_TRUE(inst.set[i].src == cloud[i]);
}

TEST(GenRegistration, DeterministicGivenSeed) {
  const Instance a = gen_registration_instance(
      200, 0.01, 0.9, ScaleRange::uniform(1.0, 5.0), 77);
  const Instance b = gen_registration_instance(
      200, 0.01, 0.9, ScaleRange::uniform(1.0, 5.0), 77);
  EXPECT_EQ(a.truth.transform.scale, b.truth.transform.scale);
  for (int i = 0; i < a.set.size(); ++i) {
    EXPECT_TRUE(a.set[i].src == b.set[i].src);
    EXPECT_TRUE(a.set[i].dst == b.set[i].dst);
  }
  EXPECT_EQ(a.truth.inlier_mask, b.truth.inlier_mask);
}

TEST(GenRegistration, ValidatesScaleRange) {
  EXPECT_THROW(
      gen_registration_instance(10, 0.01, 0.0, ScaleRange::uniform(0.0, 5.0),
                                1),
      InvalidParameter);
  EXPECT_THROW(
      gen_registration_instance(10, 0.01, 0.0, ScaleRange::uniform(5.0, 1.0),
                                1),
      InvalidParameter);
}

TEST(DownsampleAndRescale, FitsTheBoundingBoxExactlyIntoTheUnitCube) {
  Rng rng(41);
  std::vector<Eigen::Vector3d> cloud;
  for (int i = 0; i < 500; ++i)
    cloud.push_back(40.0 * rng.in_cube(0.5) + Eigen::Vector3d(7, -3, 11));
  const std::vector<Eigen::Vector3d> out =
      downsample_and_rescale(cloud, 120, 5);
  ASSERT_EQ(out.size(), 120u);
  Eigen::Vector3d lo = out[0], hi = out[0];
  for (const Eigen::Vector3d& p : out) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  EXPECT_NEAR((hi - lo).maxCoeff(), 1.0, 1e-9);
  EXPECT_LE(hi.maxCoeff(), 0.5 + 1e-9);
  EXPECT_GE(lo.minCoeff(), -0.5 - 1e-9);
}

TEST(DownsampleAndRescale, FullTargetIsAPermutationOfTheRescaledInput) {
  Rng rng(43);
  std::vector<Eigen::Vector3d> cloud;
  for (int i = 0; i < 50; ++i)
    cloud.push_back(3.0 * rng.in_cube(0.5) + Eigen::Vector3d(1, 2, 3));
  const std::vector<Eigen::Vector3d> out = downsample_and_rescale(cloud, 50, 9);
  ASSERT_EQ(out.size(), cloud.size());

  Eigen::Vector3d lo = cloud[0], hi = cloud[0];
  for (const Eigen::Vector3d& p : cloud) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  std::vector<Eigen::Vector3d> expected;
  for (const Eigen::Vector3d& p : cloud) expected.push_back((p - center) / extent);

  const auto lexicographic = [](const Eigen::Vector3d& a,
                                const Eigen::Vector3d& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(),
                                        b.data() + 3);
  };
  std::vector<Eigen::Vector3d> got = out;
  std::sort(got.begin(), got.end(), lexicographic);
  std::sort(expected.begin(), expected.end(), lexicographic);
  for (size_t i = 0; i < got.size(); ++i)
    EXPECT_LT((got[i] - expected[i]).norm(), 1e-12);
}

TEST(DownsampleAndRescale, PreservesUnitExtentInputs) {
  std::vector<Eigen::Vector3d> cloud = {
      {-0.5, -0.1, 0.0}, {0.5, 0.1, 0.2}, {0.0, 0.0, -0.2}};
  const std::vector<Eigen::Vector3d> out = downsample_and_rescale(cloud, 3, 1);
  Eigen::Vector3d lo = out[0], hi = out[0];
  for (const Eigen::Vector3d& p : out) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  EXPECT_NEAR((hi - lo).maxCoeff(), 1.0, 1e-12);
}

TEST(DownsampleAndRescale, RejectsBadTargetsAndDegenerateClouds) {
  std::vector<Eigen::Vector3d> cloud = {{1, 1, 1}, {2, 2, 2}};
  EXPECT_THROW(downsample_and_rescale(cloud, 0, 1), InvalidParameter);
  EXPECT_THROW(downsample_and_rescale(cloud, 3, 1), InvalidParameter);
  std::vector<Eigen::Vector3d> point = {{1, 1, 1}, {1, 1, 1}};
  EXPECT_THROW(downsample_and_rescale(point, 2, 1), DegenerateConfiguration);
}

TEST(ApplyKnownScale, ReducesAScaledProblemToUnitScale) {
  const Instance inst = gen_registration_instance(
      100, 0.0, 0.0, ScaleRange::uniform(2.0, 4.0), 53);
  const double s = inst.truth.transform.scale;
  const CorrespondenceSet reduced = apply_known_scale(inst.set, s);
  for (int i = 0; i < inst.set.size(); ++i) {
    EXPECT_TRUE(reduced[i].src == (s * inst.set[i].src).eval());
    EXPECT_TRUE(reduced[i].dst == inst.set[i].dst);
  }
  std::vector<int> all(reduced.size());
  for (int i = 0; i < reduced.size(); ++i) all[i] = i;
  const SimilarityTransform fit = solve_transform_nonminimal(reduced, all, 1.0);
  EXPECT_LT(geodesic_distance(fit.rotation, inst.truth.transform.rotation),
            1e-9);
  EXPECT_LT((fit.translation - inst.truth.transform.translation).norm(), 1e-9);
}

TEST(ApplyKnownScale, ValidatesItsArguments) {
  const Instance points =
      gen_registration_instance(10, 0.0, 0.0, ScaleRange::fixed(), 3);
  EXPECT_THROW(apply_known_scale(points.set, 0.0), InvalidParameter);
  const Instance vectors = gen_rotation_instance(10, 0.0, 0.0, 3);
  EXPECT_THROW(apply_known_scale(vectors.set, 2.0), InvalidParameter);
}

TEST(Metrics, ExactEstimateScoresPerfectly) {
  const Instance inst = gen_registration_instance(
      50, 0.01, 0.4, ScaleRange::uniform(1.0, 5.0), 61);
  TransformReport report;
  report.estimate = inst.truth.transform;
  for (int i = 0; i < inst.set.size(); ++i)
    if (inst.truth.inlier_mask[i]) report.inliers.push_back(i);
  const Metrics m = metrics(report, inst.truth);
  EXPECT_DOUBLE_EQ(m.rotation_error_deg, 0.0);
  EXPECT_DOUBLE_EQ(m.translation_error, 0.0);
  EXPECT_DOUBLE_EQ(m.scale_error, 0.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
}

TEST(Metrics, OneDegreeOffsetMeasuresExactlyOneDegree) {
  const Instance inst = gen_rotation_instance(20, 0.01, 0.0, 67);
  RotationReport report;
  report.estimate =
      inst.truth.transform.rotation *
      Eigen::AngleAxisd(kPi / 180.0, Eigen::Vector3d::UnitZ())
          .toRotationMatrix();
  const Metrics m = metrics(report, inst.truth);
  EXPECT_NEAR(m.rotation_error_deg, 1.0, 1e-9);
}

TEST(Metrics, ConsensusArithmeticMatchesSetCounts) {
  const Instance inst = gen_rotation_instance(100, 0.01, 0.9, 71);
  std::vector<int> true_inliers, outliers;
  for (int i = 0; i < inst.set.size(); ++i)
    (inst.truth.inlier_mask[i] ? true_inliers : outliers).push_back(i);
  ASSERT_EQ(true_inliers.size(), 10u);

  RotationReport report;
  report.estimate = inst.truth.transform.rotation;
  report.inliers = true_inliers;
  report.inliers.push_back(outliers[0]);
  Metrics m = metrics(report, inst.truth);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.precision, 10.0 / 11.0);

  report.inliers.assign(true_inliers.begin(), true_inliers.begin() + 5);
  m = metrics(report, inst.truth);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);

  report.inliers.clear();
  m = metrics(report, inst.truth);
  EXPECT_DOUBLE_EQ(m.recall, 0.0);
  EXPECT_DOUBLE_EQ(m.precision, 0.0);
}

TEST(Metrics, RotationErrorStaysInsideItsRange) {
  const Instance inst = gen_rotation_instance(10, 0.01, 0.0, 73);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    RotationReport report;
    report.estimate = rng.rotation();
    const Metrics m = metrics(report, inst.truth);
    EXPECT_GE(m.rotation_error_deg, 0.0);
    EXPECT_LE(m.rotation_error_deg, 180.0);
  }
}

}  // namespace
}  // namespace icos
