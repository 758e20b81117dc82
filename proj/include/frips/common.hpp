#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace frips {

// Points and tangent carriers are plain matrices: d x 1 columns for
// Euclidean/sphere points, n x p orthonormal frames for Grassmann planes.
// Inner products and norms are Frobenius throughout, which matches the
// metric on every manifold we support.
using Mat = Eigen::MatrixXd;

inline double fdot(const Mat& a, const Mat& b) {
  return (a.array() * b.array()).sum();
}

struct FripsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or orthonormality violations in inputs.
struct StructureError : FripsError {
  using FripsError::FripsError;
};

// Geodesic endpoint on (or numerically at) the cut locus of the base point.
struct CutLocusError : FripsError {
  using FripsError::FripsError;
};

// Input outside the mathematical domain of the operation.
struct DomainError : FripsError {
  using FripsError::FripsError;
};

// Operation not available for the requested manifold or target.
struct CapabilityError : FripsError {
  using FripsError::FripsError;
};

// Every importance weight vanished.
struct DegenerateEnsembleError : FripsError {
  using FripsError::FripsError;
};

// No mixture component assigns positive density to a sample.
struct ClassificationError : FripsError {
  using FripsError::FripsError;
};

// Configuration file problems; message carries a line reference when known.
struct ConfigError : FripsError {
  using FripsError::FripsError;
};

}  // namespace frips
