#pragma once

#include <string>
#include <vector>

#include "mrt/autodiff.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

/// Joint hierarchy with per-joint parent offsets in the reference pose.
/// Offsets of the non-root joints are the graph's edge features.
struct Skeleton {
  std::vector<std::string> joint_names;
  std::vector<int> parent;  // root has -1; parent[i] < i
  Tensor offsets;           // (N,3) meters, root row is zero
  double height = 0.0;      // rest-pose bounding-box height, meters

  int joint_count() const { return static_cast<int>(parent.size()); }
  int root() const;
  int index_of(const std::string& name) const;  // throws UnknownJoint

  /// Validates the tree structure, offset finiteness and height.
  void validate() const;

  /// Global joint positions in the reference pose (identity rotations,
  /// zero root translation): cumulative ancestor offsets.
  Tensor rest_positions() const;
};

/// Per-frame joint rotations (6D representation) plus root translation.
struct Motion {
  Tensor rot6d;    // (T,N,6)
  Tensor root_pos; // (T,3)
  double fps = 30.0;

  int frames() const { return rot6d.empty() ? 0 : rot6d.dim(0); }
  int joint_count() const { return rot6d.empty() ? 0 : rot6d.dim(1); }
  void validate() const;

  /// Window [start, start+len) of the clip.
  Motion window(int start, int len) const;
};

/// Global joint positions, (T,N,3) meters.
struct JointPositions {
  Tensor P;
  int frames() const { return P.dim(0); }
  int joint_count() const { return P.dim(1); }
};

/// Pairwise joint distance matrix for one frame.
struct DistanceMatrix {
  Tensor D;  // (N,N)
  bool normalized = false;
};

// --- 6D rotation representation -------------------------------------------

/// Gram-Schmidt the two 3-vector halves into an orthonormal rotation matrix
/// (columns b1, b2, b1 x b2). Throws DegenerateRotation when either
/// orthogonalized column norm is <= 1e-8.
Tensor rot6d_to_matrix(const double r6[6]);
Tensor rot6d_to_matrix(const Tensor& r6);

/// First two columns of R, flattened (R must be orthonormal with det +1
/// within 1e-5; throws NotARotation otherwise).
Tensor matrix_to_rot6d(const Tensor& R);

// --- Forward kinematics ----------------------------------------------------

/// Global joint positions from local rotations and the offset hierarchy.
JointPositions forward_kinematics(const Skeleton& skel, const Motion& motion);

/// FK over the tape. Output packs per frame/joint the global rotation
/// (row-major 9) followed by the global position (3): shape (T,N,12).
/// Gradients flow to rot6d (T,N,6) and root_pos (T,3).
ad::Var fk_transforms(const Skeleton& skel, const ad::Var& rot6d, const ad::Var& root_pos);

/// Positions slice of an fk_transforms pack: (T,N,12) -> (T,N,3).
ad::Var fk_positions(const ad::Var& pack);

// --- Joint distance matrix ---------------------------------------------

/// Pairwise Euclidean distances for one frame of positions (N,3).
/// Diagonal is exactly zero; off-diagonal entries carry a sqrt(x + 1e-12)
/// guard so the gradient stays finite at coincident joints.
DistanceMatrix joint_distance_matrix(const Tensor& positions);

/// Row-wise L1 normalization with an 1e-8 epsilon; all-zero rows stay zero.
DistanceMatrix normalize_jdm(const DistanceMatrix& d);

/// Normalized JDM over the tape: positions (T,N,3) -> (T,N,N).
ad::Var jdm_normalized(const ad::Var& positions);

}  // namespace mrt
