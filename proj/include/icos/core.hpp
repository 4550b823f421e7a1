#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace icos {

// Error taxonomy shared by the whole library. Solvers catch
// DegenerateConfiguration internally when a candidate structure turns out to
// be unusable; everything else propagates to the caller.
struct DegenerateConfiguration : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DivisionByZero : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidParameter : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnsupportedFormat : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Whether paired entries are bearing vectors (rotation search, compared after
// unit normalization) or 3D points (registration, compared as-is).
enum class PairKind { VectorPairs, PointPairs };

struct Correspondence {
  int index = -1;
  Eigen::Vector3d src = Eigen::Vector3d::Zero();
  Eigen::Vector3d dst = Eigen::Vector3d::Zero();
};

inline double frobenius_orthonormality_error(const Eigen::Matrix3d& m) {
  return (m.transpose() * m - Eigen::Matrix3d::Identity()).norm();
}

inline bool is_rotation(const Eigen::Matrix3d& m, double tol = 1e-9) {
  return frobenius_orthonormality_error(m) < tol &&
         std::abs(m.determinant() - 1.0) < tol;
}

struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
  bool valid(double tol = 1e-9) const {
    return scale > 0.0 && is_rotation(rotation, tol);
  }
};

// An indexed list of putative correspondences. Indices are assigned
// contiguously from 0 at construction and never change afterwards, so solver
// reports can refer back into the original input.
class CorrespondenceSet {
 public:
  CorrespondenceSet() = default;

  static CorrespondenceSet from_pairs(const std::vector<Eigen::Vector3d>& src,
                                      const std::vector<Eigen::Vector3d>& dst,
                                      PairKind kind) {
    if (src.size() != dst.size())
      throw InvalidParameter("correspondence lists differ in length");
    CorrespondenceSet set;
    set.kind_ = kind;
    set.items_.reserve(src.size());
    for (size_t i = 0; i < src.size(); ++i) {
      if (src[i].norm() == 0.0 || dst[i].norm() == 0.0)
        throw InvalidParameter("zero-norm correspondence at index " +
                               std::to_string(i));
      set.items_.push_back({static_cast<int>(i), src[i], dst[i]});
    }
    return set;
  }

  PairKind kind() const { return kind_; }
  int size() const { return static_cast<int>(items_.size()); }
  bool empty() const { return items_.empty(); }
  const Correspondence& operator[](int i) const { return items_[i]; }
  const std::vector<Correspondence>& items() const { return items_; }

  // Copy with src/dst replaced by their unit directions. Used by the rotation
  // search checks so repeated normalization does not pile up inside the
  // sampling loops.
  CorrespondenceSet unit_normalized() const {
    CorrespondenceSet out = *this;
    for (auto& c : out.items_) {
      c.src.normalize();
      c.dst.normalize();
    }
    return out;
  }

 private:
  PairKind kind_ = PairKind::PointPairs;
  std::vector<Correspondence> items_;
};

}  // namespace icos
