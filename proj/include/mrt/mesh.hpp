#pragma once

#include <array>
#include <utility>
#include <vector>

#include "mrt/autodiff.hpp"
#include "mrt/skeleton.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

/// Skinned character geometry. Weights are stored sparsely per vertex as
/// (joint, weight) pairs; each row is nonnegative and sums to 1.
struct SkinnedMesh {
  Tensor vertices_bind;                                   // (V,3)
  std::vector<std::array<int, 3>> faces;                  // (F,3)
  std::vector<std::vector<std::pair<int, double>>> weights;  // per vertex
  Tensor bind_inverse;                                    // (N,4,4)

  int vertex_count() const { return vertices_bind.empty() ? 0 : vertices_bind.dim(0); }
  int face_count() const { return static_cast<int>(faces.size()); }
  void validate(int joint_count) const;
};

/// Limb/body split: limb vertices are penalized against the body surface.
struct BodyPartition {
  std::vector<int> limb_vertex_ids;
  std::vector<int> body_face_ids;
};

/// Dense signed-distance grid (values on nodes, negative inside the body).
struct SignedDistanceGrid {
  std::array<double, 3> origin{};
  double spacing = 0.0;
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> values;  // x-major: ((i*ny)+j)*nz+k

  double at(int i, int j, int k) const {
    return values[(static_cast<size_t>(i) * ny + j) * nz + k];
  }
  double& at(int i, int j, int k) { return values[(static_cast<size_t>(i) * ny + j) * nz + k]; }
};

// --- Linear blend skinning ------------------------------------------------

/// One frame: joint_transforms (N,4,4) rigid -> deformed vertices (V,3).
Tensor linear_blend_skinning(const SkinnedMesh& mesh, const Tensor& joint_transforms);

/// Batched LBS over the tape from an fk_transforms pack (T,N,12) -> (T,V,3).
ad::Var lbs_vertices(const SkinnedMesh& mesh, const ad::Var& fk_pack);

// --- Signed distance field --------------------------------------------

/// Exact narrow-band distances plus closest-point propagation; sign by
/// x-ray parity. `spacing` <= 0 picks bbox-diagonal / 64; `padding` <= 0
/// pads by 3 spacings. Throws NonWatertightBody when parity is inconsistent
/// on more than 0.5% of grid nodes.
SignedDistanceGrid build_sdf(const Tensor& vertices, const std::vector<std::array<int, 3>>& faces,
                             double spacing = 0.0, double padding = 0.0);

/// Trilinear values and analytic gradients at `points` (K,3). Out-of-grid
/// points clamp to the boundary (zero gradient along clamped axes).
void query_sdf(const SignedDistanceGrid& grid, const Tensor& points, Tensor& values,
               Tensor* gradients = nullptr);

/// SDF values of selected vertices, queried in the torso joint's local frame
/// so the grid built at rest tracks the rigid torso. vertices: (T,V,3),
/// fk_pack: (T,N,12); result (T, |vertex_ids|).
ad::Var sdf_query_local(const SignedDistanceGrid& grid, const ad::Var& vertices,
                        const ad::Var& fk_pack, const std::vector<int>& vertex_ids,
                        int torso_joint, const Tensor& torso_rest_position);

// --- Partitioning -----------------------------------------------------

/// Classifies a vertex as a limb vertex iff its maximum-weight joint lies on
/// one of the named chains; body faces are faces with no limb vertex.
BodyPartition partition_limbs(const SkinnedMesh& mesh, const Skeleton& skel,
                              const std::vector<std::vector<std::string>>& limb_chain_names);

// --- Geometry builders -------------------------------------------------

/// Icosphere with `subdivisions` refinement levels (level 4 -> 2562 verts).
void make_icosphere(double radius, int subdivisions, Tensor& vertices,
                    std::vector<std::array<int, 3>>& faces);

/// Capsule from p0 to p1; `segments` around the axis, `rings` per hemicap.
void make_capsule(const std::array<double, 3>& p0, const std::array<double, 3>& p1, double radius,
                  int segments, int rings, Tensor& vertices,
                  std::vector<std::array<int, 3>>& faces);

}  // namespace mrt
