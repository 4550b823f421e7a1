#include "icos/sampling.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "icos/core.hpp"
#include "icos/geometry.hpp"
#include "icos/random.hpp"

namespace icos {
namespace {

constexpr double kPi = 3.14159265358979323846;

double degrees(double radians) { return radians * 180.0 / kPi; }

struct RotationInstance {
  CorrespondenceSet set;
  Eigen::Matrix3d rotation;
  std::vector<bool> inlier;
  int inlier_count = 0;
};

RotationInstance make_rotation_instance(std::uint64_t seed, int n,
                                        double sigma, double outlier_ratio) {
  Rng rng(seed);
  RotationInstance inst;
  inst.rotation = rng.rotation();
  std::vector<Eigen::Vector3d> src, dst;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d u = rng.unit_vector();
    src.push_back(u);
    dst.push_back(inst.rotation * u + sigma * rng.gaussian_vector());
  }
  inst.inlier.assign(n, true);
  const int outliers = static_cast<int>(std::floor(outlier_ratio * n));
  for (int k : rng.sample_without_replacement(n, outliers)) {
    dst[k] = rng.unit_vector();
    inst.inlier[k] = false;
  }
  inst.inlier_count = n - outliers;
  inst.set = CorrespondenceSet::from_pairs(src, dst, PairKind::VectorPairs);
  return inst;
}

struct RegistrationInstance {
  CorrespondenceSet set;
  SimilarityTransform truth;
  std::vector<bool> inlier;
  int inlier_count = 0;
};

RegistrationInstance make_registration_instance(std::uint64_t seed, int n,
                                                double sigma,
                                                double outlier_ratio,
                                                bool known_scale) {
  Rng rng(seed);
  RegistrationInstance inst;
  inst.truth.scale = known_scale ? 1.0 : rng.uniform(1.0, 5.0);
  inst.truth.rotation = rng.rotation();
  inst.truth.translation = rng.unit_vector() * rng.uniform(0.0, 3.0);
  std::vector<Eigen::Vector3d> src, dst;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p = rng.in_cube(0.5);
    centroid += p;
    src.push_back(p);
    dst.push_back(inst.truth.apply(p) + sigma * rng.gaussian_vector());
  }
  centroid /= n;
  const Eigen::Vector3d ball_center = inst.truth.apply(centroid);
  inst.inlier.assign(n, true);
  const int outliers = static_cast<int>(std::floor(outlier_ratio * n));
  for (int k : rng.sample_without_replacement(n, outliers)) {
    dst[k] = ball_center + rng.in_ball(inst.truth.scale * std::sqrt(3.0) / 2);
    inst.inlier[k] = false;
  }
  inst.inlier_count = n - outliers;
  inst.set = CorrespondenceSet::from_pairs(src, dst, PairKind::PointPairs);
  return inst;
}

double recall_of(const std::vector<bool>& truth_mask,
                 const std::vector<int>& found, int truth_count) {
  int hit = 0;
  for (int i : found)
    if (truth_mask[i]) ++hit;
  return truth_count == 0 ? 1.0 : static_cast<double>(hit) / truth_count;
}

bool all_true_inliers(const std::vector<bool>& truth_mask,
                      const std::vector<int>& found) {
  return std::all_of(found.begin(), found.end(),
                     [&](int i) { return truth_mask[i]; });
}

bool duplicate_free(const std::vector<int>& v) {
  return std::set<int>(v.begin(), v.end()).size() == v.size();
}

TEST(MaxIterations, FrozenOracleValues) {
  // ceil(log(0.01)/log(0.9)) = ceil(43.71).
  EXPECT_EQ(max_iterations(1, 0.99, 0.9, 1), 44);
  // Zero outliers: every draw is an inlier subset.
  EXPECT_EQ(max_iterations(1, 0.99, 0.0, 1), 1);
  EXPECT_EQ(max_iterations(3, 0.99, 0.0, 2), 3);
  // ceil(log(0.01)/log(1 - 1e-4)) = ceil(46049.4).
  EXPECT_EQ(max_iterations(1, 0.99, 0.99, 2), 46050);
}

TEST(MaxIterations, MonotoneInEveryArgument) {
  const std::vector<int> xs = {1, 2, 5};
  const std::vector<double> ps = {0.9, 0.99, 0.999};
  const std::vector<double> ratios = {0.0, 0.01, 0.5, 0.9, 0.95, 0.99};
  const std::vector<int> ns = {1, 2, 3};
  for (int x : xs)
    for (double p : ps)
      for (double r : ratios)
        for (int n : ns) {
          const long base = max_iterations(x, p, r, n);
          EXPECT_GE(max_iterations(x + 1, p, r, n), base);
          EXPECT_GE(max_iterations(x, 0.5 + p / 2, r, n), base);
          EXPECT_GE(max_iterations(x, p, 0.5 + r / 2, n), base);
          EXPECT_GE(max_iterations(x, p, r, n + 1), base);
        }
}

TEST(MaxIterations, RejectsOutOfRangeArguments) {
  EXPECT_THROW(max_iterations(0, 0.99, 0.5, 1), InvalidParameter);
  EXPECT_THROW(max_iterations(1, 0.0, 0.5, 1), InvalidParameter);
  EXPECT_THROW(max_iterations(1, 1.0, 0.5, 1), InvalidParameter);
  EXPECT_THROW(max_iterations(1, 0.99, 1.0, 1), InvalidParameter);
  EXPECT_THROW(max_iterations(1, 0.99, -0.1, 1), InvalidParameter);
  EXPECT_THROW(max_iterations(1, 0.99, 0.5, 0), InvalidParameter);
}

TEST(CheckSampling, PaceRuleTruthTable) {
  EXPECT_EQ(check_sampling(399, 0, 400), SamplingVerdict::Continue);
  EXPECT_EQ(check_sampling(400, 0, 400), SamplingVerdict::Abort);
  EXPECT_EQ(check_sampling(400, 1, 400), SamplingVerdict::Continue);
  EXPECT_EQ(check_sampling(799, 1, 400), SamplingVerdict::Continue);
  EXPECT_EQ(check_sampling(800, 1, 400), SamplingVerdict::Abort);
  EXPECT_EQ(check_sampling(800, 2, 400), SamplingVerdict::Continue);
  EXPECT_EQ(check_sampling(1199, 2, 400), SamplingVerdict::Continue);
  EXPECT_EQ(check_sampling(1200, 2, 400), SamplingVerdict::Abort);
  EXPECT_EQ(check_sampling(1200, 3, 400), SamplingVerdict::Continue);
  EXPECT_EQ(check_sampling(1000000, 3, 400), SamplingVerdict::Continue);
  EXPECT_EQ(check_sampling(1, 0, 400), SamplingVerdict::Continue);
}

TEST(RotationSearch, NoiselessZeroOutlierRecoveryIsExact) {
  const auto inst = make_rotation_instance(101, 100, 0.0, 0.0);
  IcosParams params = IcosParams::rotation_search(100, 0.0);
  params.seed = 7;
  const RotationReport report = icos_rotation_search(inst.set, params);
  EXPECT_EQ(report.status, SolveStatus::Converged);
  EXPECT_LE(geodesic_distance(report.estimate, inst.rotation), 1e-9);
  EXPECT_EQ(static_cast<int>(report.inliers.size()), 100);
  EXPECT_EQ(report.restarts, 0);
  EXPECT_TRUE(duplicate_free(report.inliers));
  EXPECT_TRUE(duplicate_free(report.collected));
  EXPECT_EQ(static_cast<int>(report.collected.size()), params.x + 2);
}

TEST(RotationSearch, RecoversUnderModerateOutliers) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = make_rotation_instance(200 + seed, 200, 0.01, 0.6);
    IcosParams params = IcosParams::rotation_search(200, 0.01);
    params.seed = seed;
    const RotationReport report = icos_rotation_search(inst.set, params);
    ASSERT_EQ(report.status, SolveStatus::Converged);
    EXPECT_LT(degrees(geodesic_distance(report.estimate, inst.rotation)), 1.0);
    EXPECT_GE(recall_of(inst.inlier, report.inliers, inst.inlier_count), 0.95);
    EXPECT_GE(static_cast<int>(report.inliers.size()), params.x + 2);
    EXPECT_TRUE(duplicate_free(report.inliers));
  }
}

TEST(RotationSearch, DeterministicGivenSeed) {
  const auto inst = make_rotation_instance(303, 300, 0.01, 0.8);
  IcosParams params = IcosParams::rotation_search(300, 0.01);
  params.seed = 42;
  const RotationReport a = icos_rotation_search(inst.set, params);
  const RotationReport b = icos_rotation_search(inst.set, params);
  EXPECT_TRUE((a.estimate.array() == b.estimate.array()).all());
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.collected, b.collected);
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.restarts, b.restarts);
  EXPECT_EQ(a.iterations.seed_draws, b.iterations.seed_draws);
  EXPECT_EQ(a.iterations.collection_draws, b.iterations.collection_draws);
  EXPECT_EQ(a.iterations.excursions, b.iterations.excursions);
}

// The structure behind a converged estimate should be uncontaminated almost
// always at desk scale; impure structures are what the mutual-consistency
// checks exist to prevent.
TEST(RotationSearch, CollectedStructurePurityAtHighOutlierRatio) {
  int pure = 0, converged = 0;
  const int runs = 20;
  for (int run = 0; run < runs; ++run) {
    const auto inst = make_rotation_instance(400 + run, 500, 0.01, 0.9);
    IcosParams params = IcosParams::rotation_search(500, 0.01);
    params.seed = 900 + run;
    const RotationReport report = icos_rotation_search(inst.set, params);
    if (report.status != SolveStatus::Converged) continue;
    ++converged;
    if (all_true_inliers(inst.inlier, report.collected)) ++pure;
  }
  EXPECT_EQ(converged, runs);
  EXPECT_GE(pure, 18);
}

TEST(RotationSearch, PureOutlierInputExhaustsBudget) {
  const auto inst = make_rotation_instance(505, 100, 0.01, 1.0);
  IcosParams params = IcosParams::rotation_search(100, 0.01);
  params.seed = 5;
  params.max_itr1 = 2000;
  params.max_restarts = 3;
  const RotationReport report = icos_rotation_search(inst.set, params);
  EXPECT_EQ(report.status, SolveStatus::BudgetExhausted);
  EXPECT_EQ(report.restarts, 3);
  // Best-effort partial: whatever was reported is the recorded structure.
  EXPECT_EQ(report.inliers, report.collected);
  if (report.collected.empty()) {
    EXPECT_TRUE((report.estimate.array() ==
                 Eigen::Matrix3d::Identity().array()).all());
  } else {
    EXPECT_TRUE(is_rotation(report.estimate, 1e-9));
  }
}

TEST(RotationSearch, ValidatesInputsAndParams) {
  const auto inst = make_rotation_instance(606, 50, 0.01, 0.0);
  IcosParams params = IcosParams::rotation_search(50, 0.01);

  IcosParams bad = params;
  bad.x = 0;
  EXPECT_THROW(icos_rotation_search(inst.set, bad), InvalidParameter);
  bad = params;
  bad.confidence = 1.0;
  EXPECT_THROW(icos_rotation_search(inst.set, bad), InvalidParameter);
  bad = params;
  bad.max_restarts = 0;
  EXPECT_THROW(icos_rotation_search(inst.set, bad), InvalidParameter);
  bad = params;
  bad.max_itr3 = 0;
  EXPECT_THROW(icos_rotation_search(inst.set, bad), InvalidParameter);

  const auto points = make_registration_instance(607, 50, 0.01, 0.0, true);
  EXPECT_THROW(icos_rotation_search(points.set, params), InvalidParameter);
  EXPECT_THROW(icos_registration_known_scale(inst.set, params),
               InvalidParameter);
  EXPECT_THROW(icos_registration_unknown_scale(inst.set, params),
               InvalidParameter);

  // Too few correspondences for the required structure size.
  const auto tiny = make_rotation_instance(608, 3, 0.01, 0.0);
  IcosParams big = IcosParams::rotation_search(3, 0.01);
  big.x = 4;
  EXPECT_THROW(icos_rotation_search(tiny.set, big), InvalidParameter);
  const auto tiny_pts = make_registration_instance(609, 5, 0.01, 0.0, true);
  IcosParams reg = IcosParams::registration(0.01);
  EXPECT_THROW(icos_registration_known_scale(tiny_pts.set, reg),
               InvalidParameter);
  EXPECT_THROW(icos_registration_unknown_scale(tiny_pts.set, reg),
               InvalidParameter);
}

TEST(KnownScaleRegistration, NoiselessIdentityCloudsRecoverIdentity) {
  Rng rng(70);
  std::vector<Eigen::Vector3d> src;
  for (int i = 0; i < 50; ++i) src.push_back(rng.in_cube(0.5));
  const auto set = CorrespondenceSet::from_pairs(src, src,
                                                 PairKind::PointPairs);
  IcosParams params = IcosParams::registration(0.0);
  params.seed = 3;
  const TransformReport report = icos_registration_known_scale(set, params);
  ASSERT_EQ(report.status, SolveStatus::Converged);
  EXPECT_DOUBLE_EQ(report.estimate.scale, 1.0);
  EXPECT_LE(geodesic_distance(report.estimate.rotation,
                              Eigen::Matrix3d::Identity()),
            1e-9);
  EXPECT_LE(report.estimate.translation.norm(), 1e-9);
  EXPECT_EQ(static_cast<int>(report.inliers.size()), 50);
  EXPECT_EQ(static_cast<int>(report.collected.size()), params.x + 3);
}

TEST(KnownScaleRegistration, RecoversUnderModerateOutliers) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst =
        make_registration_instance(700 + seed, 200, 0.01, 0.7, true);
    IcosParams params = IcosParams::registration(0.01);
    params.seed = seed;
    const TransformReport report =
        icos_registration_known_scale(inst.set, params);
    ASSERT_EQ(report.status, SolveStatus::Converged);
    EXPECT_DOUBLE_EQ(report.estimate.scale, 1.0);
    EXPECT_LT(degrees(geodesic_distance(report.estimate.rotation,
                                        inst.truth.rotation)),
              1.0);
    EXPECT_LT(
        (report.estimate.translation - inst.truth.translation).norm(), 0.05);
    EXPECT_GE(recall_of(inst.inlier, report.inliers, inst.inlier_count), 0.95);
  }
}

TEST(UnknownScaleRegistration, NoiselessScaledCloudsRecoverExactly) {
  Rng rng(80);
  SimilarityTransform truth;
  truth.scale = 3.0;
  truth.rotation = rng.rotation();
  truth.translation = Eigen::Vector3d(0.4, -1.1, 2.0);
  std::vector<Eigen::Vector3d> src, dst;
  for (int i = 0; i < 60; ++i) {
    src.push_back(rng.in_cube(0.5));
    dst.push_back(truth.apply(src.back()));
  }
  const auto set =
      CorrespondenceSet::from_pairs(src, dst, PairKind::PointPairs);
  IcosParams params = IcosParams::registration(0.0);
  params.seed = 11;
  const TransformReport report = icos_registration_unknown_scale(set, params);
  ASSERT_EQ(report.status, SolveStatus::Converged);
  EXPECT_NEAR(report.estimate.scale, 3.0, 1e-9);
  EXPECT_LE(geodesic_distance(report.estimate.rotation, truth.rotation), 1e-9);
  EXPECT_LE((report.estimate.translation - truth.translation).norm(), 1e-8);
  EXPECT_EQ(static_cast<int>(report.inliers.size()), 60);
}

TEST(UnknownScaleRegistration, RecoversUnderModerateOutliers) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst =
        make_registration_instance(800 + seed, 200, 0.01, 0.7, false);
    IcosParams params = IcosParams::registration(0.01);
    params.seed = seed;
    const TransformReport report =
        icos_registration_unknown_scale(inst.set, params);
    ASSERT_EQ(report.status, SolveStatus::Converged);
    EXPECT_LT(std::abs(report.estimate.scale - inst.truth.scale), 0.02);
    EXPECT_LT(degrees(geodesic_distance(report.estimate.rotation,
                                        inst.truth.rotation)),
              1.0);
    EXPECT_LT(
        (report.estimate.translation - inst.truth.translation).norm(), 0.1);
    EXPECT_GE(recall_of(inst.inlier, report.inliers, inst.inlier_count), 0.95);
  }
}

TEST(UnknownScaleRegistration, DeterministicGivenSeed) {
  const auto inst = make_registration_instance(888, 150, 0.01, 0.5, false);
  IcosParams params = IcosParams::registration(0.01);
  params.seed = 99;
  const TransformReport a = icos_registration_unknown_scale(inst.set, params);
  const TransformReport b = icos_registration_unknown_scale(inst.set, params);
  EXPECT_EQ(a.estimate.scale, b.estimate.scale);
  EXPECT_TRUE(
      (a.estimate.rotation.array() == b.estimate.rotation.array()).all());
  EXPECT_TRUE((a.estimate.translation.array() ==
               b.estimate.translation.array()).all());
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.collected, b.collected);
  EXPECT_EQ(a.iterations.seed_draws, b.iterations.seed_draws);
  EXPECT_EQ(a.iterations.completion_draws, b.iterations.completion_draws);
  EXPECT_EQ(a.iterations.collection_draws, b.iterations.collection_draws);
}

TEST(ExpandAndRefine, GroundTruthProvisionalRecallAndPrecision) {
  const auto inst = make_rotation_instance(900, 2000, 0.01, 0.5);
  const Refinement<Eigen::Matrix3d> refined =
      expand_and_refine(inst.set, inst.rotation, 0.01);
  EXPECT_GE(recall_of(inst.inlier, refined.inliers, inst.inlier_count), 0.999);
  int true_pos = 0;
  for (int i : refined.inliers)
    if (inst.inlier[i]) ++true_pos;
  const double precision =
      refined.inliers.empty()
          ? 1.0
          : static_cast<double>(true_pos) / refined.inliers.size();
  EXPECT_GE(precision, 0.99);
  EXPECT_TRUE(is_rotation(refined.estimate, 1e-9));
}

TEST(ExpandAndRefine, ZeroNoiseClassifiesExactly) {
  const auto inst = make_rotation_instance(901, 500, 0.0, 0.5);
  const Refinement<Eigen::Matrix3d> refined =
      expand_and_refine(inst.set, inst.rotation, 0.0);
  std::vector<int> expected;
  for (int i = 0; i < 500; ++i)
    if (inst.inlier[i]) expected.push_back(i);
  EXPECT_EQ(refined.inliers, expected);
  EXPECT_LE(geodesic_distance(refined.estimate, inst.rotation), 1e-9);
}

TEST(ExpandAndRefine, ThrowsWhenNothingSurvives) {
  Rng rng(91);
  std::vector<Eigen::Vector3d> src, dst;
  for (int i = 0; i < 50; ++i) {
    src.push_back(rng.unit_vector());
    dst.push_back(src.back() + Eigen::Vector3d(10, 0, 0));
  }
  const auto vec_set =
      CorrespondenceSet::from_pairs(src, dst, PairKind::VectorPairs);
  EXPECT_THROW(expand_and_refine(vec_set, Eigen::Matrix3d::Identity(), 0.01),
               DegenerateConfiguration);

  const auto pt_set =
      CorrespondenceSet::from_pairs(src, dst, PairKind::PointPairs);
  EXPECT_THROW(
      expand_and_refine(pt_set, SimilarityTransform{}, 0.01, std::nullopt),
      DegenerateConfiguration);
}

TEST(ExpandAndRefine, KnownScaleRefinementKeepsUnitScale) {
  const auto inst = make_registration_instance(92, 300, 0.01, 0.3, true);
  const Refinement<SimilarityTransform> refined =
      expand_and_refine(inst.set, inst.truth, 0.01, 1.0);
  EXPECT_DOUBLE_EQ(refined.estimate.scale, 1.0);
  EXPECT_GE(recall_of(inst.inlier, refined.inliers, inst.inlier_count), 0.999);
}

// Re-running the expansion from its own refined output should almost always
// reproduce the same inlier set (near-fixed-point, not an exact one).
TEST(ExpandAndRefine, NearIdempotentAtDeskScale) {
  int changed = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const auto inst =
        make_rotation_instance(1000 + t, 200, 0.01, 0.3);
    const Refinement<Eigen::Matrix3d> first =
        expand_and_refine(inst.set, inst.rotation, 0.01);
    const Refinement<Eigen::Matrix3d> second =
        expand_and_refine(inst.set, first.estimate, 0.01);
    if (second.inliers != first.inliers) ++changed;
  }
  EXPECT_LE(changed, 4);
}

}  // namespace
}  // namespace icos
