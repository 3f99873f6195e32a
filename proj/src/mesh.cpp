#include "mrt/mesh.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace mrt {

using Eigen::Matrix3d;
using Eigen::Vector3d;

void SkinnedMesh::validate(int joint_count) const {
  const int V = vertex_count();
  if (static_cast<int>(weights.size()) != V) throw SchemaViolation("mesh: weights rows != V");
  if (bind_inverse.rank() != 3 || bind_inverse.dim(0) != joint_count || bind_inverse.dim(1) != 4 ||
      bind_inverse.dim(2) != 4)
    throw SchemaViolation("mesh: bind_inverse must be (N,4,4)");
  for (int v = 0; v < V; ++v) {
    double s = 0;
    for (auto& [j, w] : weights[static_cast<size_t>(v)]) {
      if (j < 0 || j >= joint_count) throw SchemaViolation("mesh: weight joint out of range");
      if (w < 0) throw SchemaViolation("mesh: negative weight at vertex " + std::to_string(v));
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-5)
      throw SchemaViolation("mesh: weights of vertex " + std::to_string(v) + " sum to " +
                            std::to_string(s));
  }
  int degenerate = 0;
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k)
      if (f[static_cast<size_t>(k)] < 0 || f[static_cast<size_t>(k)] >= V)
        throw SchemaViolation("mesh: face index out of range");
    Vector3d a(vertices_bind.at(f[0], 0), vertices_bind.at(f[0], 1), vertices_bind.at(f[0], 2));
    Vector3d b(vertices_bind.at(f[1], 0), vertices_bind.at(f[1], 1), vertices_bind.at(f[1], 2));
    Vector3d c(vertices_bind.at(f[2], 0), vertices_bind.at(f[2], 1), vertices_bind.at(f[2], 2));
    if (0.5 * (b - a).cross(c - a).norm() < 1e-10) ++degenerate;
  }
  if (!faces.empty() && degenerate > static_cast<int>(faces.size()) / 100)
    throw SchemaViolation("mesh: more than 1% degenerate faces");
}

namespace {

struct SkinRef {
  int joint;
  double w;
  Vector3d rest;  // bind_inverse * bind vertex
};

std::vector<std::vector<SkinRef>> skin_refs(const SkinnedMesh& mesh) {
  const int V = mesh.vertex_count();
  std::vector<std::vector<SkinRef>> refs(static_cast<size_t>(V));
  for (int v = 0; v < V; ++v) {
    Vector3d x(mesh.vertices_bind.at(v, 0), mesh.vertices_bind.at(v, 1),
               mesh.vertices_bind.at(v, 2));
    for (auto& [j, w] : mesh.weights[static_cast<size_t>(v)]) {
      Vector3d r;
      for (int a = 0; a < 3; ++a)
        r[a] = mesh.bind_inverse.at(j, a, 0) * x[0] + mesh.bind_inverse.at(j, a, 1) * x[1] +
               mesh.bind_inverse.at(j, a, 2) * x[2] + mesh.bind_inverse.at(j, a, 3);
      refs[static_cast<size_t>(v)].push_back({j, w, r});
    }
  }
  return refs;
}

}  // namespace

Tensor linear_blend_skinning(const SkinnedMesh& mesh, const Tensor& joint_transforms) {
  const int N = mesh.bind_inverse.dim(0);
  if (joint_transforms.rank() != 3 || joint_transforms.dim(0) != N ||
      joint_transforms.dim(1) != 4 || joint_transforms.dim(2) != 4)
    throw ShapeMismatch("linear_blend_skinning: transforms must be (N,4,4)");
  const auto refs = skin_refs(mesh);
  const int V = mesh.vertex_count();
  Tensor out({V, 3});
  for (int v = 0; v < V; ++v) {
    Vector3d acc = Vector3d::Zero();
    for (const auto& s : refs[static_cast<size_t>(v)]) {
      for (int a = 0; a < 3; ++a)
        acc[a] += s.w * (joint_transforms.at(s.joint, a, 0) * s.rest[0] +
                         joint_transforms.at(s.joint, a, 1) * s.rest[1] +
                         joint_transforms.at(s.joint, a, 2) * s.rest[2] +
                         joint_transforms.at(s.joint, a, 3));
    }
    for (int a = 0; a < 3; ++a) out.at(v, a) = acc[a];
  }
  return out;
}

ad::Var lbs_vertices(const SkinnedMesh& mesh, const ad::Var& fk_pack) {
  const Tensor& pk = fk_pack.value();
  if (pk.rank() != 3 || pk.dim(2) != 12) throw ShapeMismatch("lbs_vertices: need (T,N,12) pack");
  const int T = pk.dim(0), N = pk.dim(1), V = mesh.vertex_count();
  if (N != mesh.bind_inverse.dim(0)) throw ShapeMismatch("lbs_vertices: joint count mismatch");
  auto refs = std::make_shared<std::vector<std::vector<SkinRef>>>(skin_refs(mesh));

  Tensor out({T, V, 3});
  for (int t = 0; t < T; ++t)
    for (int v = 0; v < V; ++v) {
      double acc[3] = {0, 0, 0};
      for (const auto& s : (*refs)[static_cast<size_t>(v)]) {
        for (int a = 0; a < 3; ++a)
          acc[a] += s.w * (pk.at(t, s.joint, a * 3 + 0) * s.rest[0] +
                           pk.at(t, s.joint, a * 3 + 1) * s.rest[1] +
                           pk.at(t, s.joint, a * 3 + 2) * s.rest[2] + pk.at(t, s.joint, 9 + a));
      }
      for (int a = 0; a < 3; ++a) out.at(t, v, a) = acc[a];
    }

  return ad::make_op("lbs", std::move(out), {fk_pack}, [T, V, refs](ad::Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int t = 0; t < T; ++t)
      for (int v = 0; v < V; ++v) {
        const double gv[3] = {n.grad.at(t, v, 0), n.grad.at(t, v, 1), n.grad.at(t, v, 2)};
        for (const auto& s : (*refs)[static_cast<size_t>(v)]) {
          for (int a = 0; a < 3; ++a) {
            const double gwa = s.w * gv[a];
            g.at(t, s.joint, a * 3 + 0) += gwa * s.rest[0];
            g.at(t, s.joint, a * 3 + 1) += gwa * s.rest[1];
            g.at(t, s.joint, a * 3 + 2) += gwa * s.rest[2];
            g.at(t, s.joint, 9 + a) += gwa;
          }
        }
      }
  });
}

// --- SDF ---------------------------------------------------------------

namespace {

Vector3d closest_point_on_triangle(const Vector3d& p, const Vector3d& a, const Vector3d& b,
                                   const Vector3d& c) {
  // Ericson, Real-Time Collision Detection 5.1.5.
  const Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

struct ClosestField {
  std::vector<double> dist;
  std::vector<Vector3d> point;
};

}  // namespace

SignedDistanceGrid build_sdf(const Tensor& vertices, const std::vector<std::array<int, 3>>& faces,
                             double spacing, double padding) {
  if (vertices.rank() != 2 || vertices.dim(1) != 3) throw ShapeMismatch("build_sdf: verts (V,3)");
  if (faces.empty()) throw Error("build_sdf: no faces");
  Vector3d lo(1e300, 1e300, 1e300), hi(-1e300, -1e300, -1e300);
  for (int v = 0; v < vertices.dim(0); ++v)
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], vertices.at(v, k));
      hi[k] = std::max(hi[k], vertices.at(v, k));
    }
  if (spacing <= 0) spacing = (hi - lo).norm() / 64.0;
  if (padding <= 0) padding = 3.0 * spacing;
  lo.array() -= padding;
  hi.array() += padding;

  SignedDistanceGrid grid;
  grid.spacing = spacing;
  grid.origin = {lo[0], lo[1], lo[2]};
  grid.nx = static_cast<int>(std::ceil((hi[0] - lo[0]) / spacing)) + 1;
  grid.ny = static_cast<int>(std::ceil((hi[1] - lo[1]) / spacing)) + 1;
  grid.nz = static_cast<int>(std::ceil((hi[2] - lo[2]) / spacing)) + 1;
  const size_t total = static_cast<size_t>(grid.nx) * grid.ny * grid.nz;

  ClosestField cf;
  cf.dist.assign(total, std::numeric_limits<double>::infinity());
  cf.point.assign(total, Vector3d::Zero());
  auto node_index = [&](int i, int j, int k) {
    return (static_cast<size_t>(i) * grid.ny + j) * grid.nz + k;
  };
  auto node_pos = [&](int i, int j, int k) {
    return Vector3d(lo[0] + i * spacing, lo[1] + j * spacing, lo[2] + k * spacing);
  };

  // Exact distances in a band around each face.
  std::vector<Vector3d> tri(3);
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k)
      tri[static_cast<size_t>(k)] = Vector3d(vertices.at(f[static_cast<size_t>(k)], 0),
                                             vertices.at(f[static_cast<size_t>(k)], 1),
                                             vertices.at(f[static_cast<size_t>(k)], 2));
    Vector3d flo = tri[0].cwiseMin(tri[1]).cwiseMin(tri[2]);
    Vector3d fhi = tri[0].cwiseMax(tri[1]).cwiseMax(tri[2]);
    int i0[3], i1[3];
    for (int k = 0; k < 3; ++k) {
      i0[k] = std::max(0, static_cast<int>(std::floor((flo[k] - lo[k]) / spacing)) - 2);
      int n = (k == 0 ? grid.nx : k == 1 ? grid.ny : grid.nz);
      i1[k] = std::min(n - 1, static_cast<int>(std::ceil((fhi[k] - lo[k]) / spacing)) + 2);
    }
    for (int i = i0[0]; i <= i1[0]; ++i)
      for (int j = i0[1]; j <= i1[1]; ++j)
        for (int k = i0[2]; k <= i1[2]; ++k) {
          const Vector3d p = node_pos(i, j, k);
          const Vector3d q = closest_point_on_triangle(p, tri[0], tri[1], tri[2]);
          const double d = (p - q).norm();
          const size_t idx = node_index(i, j, k);
          if (d < cf.dist[idx]) {
            cf.dist[idx] = d;
            cf.point[idx] = q;
          }
        }
  }

  // Closest-point propagation: adopt any neighbor's surface point that is
  // nearer. Forward/backward sweeps with a full 26-neighborhood converge in
  // a few passes.
  auto relax = [&](int i, int j, int k) {
    const size_t idx = node_index(i, j, k);
    const Vector3d p = node_pos(i, j, k);
    bool changed = false;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        for (int dk = -1; dk <= 1; ++dk) {
          if (!di && !dj && !dk) continue;
          const int ni = i + di, nj = j + dj, nk = k + dk;
          if (ni < 0 || nj < 0 || nk < 0 || ni >= grid.nx || nj >= grid.ny || nk >= grid.nz)
            continue;
          const size_t nidx = node_index(ni, nj, nk);
          if (!std::isfinite(cf.dist[nidx])) continue;
          const double d = (p - cf.point[nidx]).norm();
          if (d < cf.dist[idx]) {
            cf.dist[idx] = d;
            cf.point[idx] = cf.point[nidx];
            changed = true;
          }
        }
    return changed;
  };
  for (int pass = 0; pass < 3; ++pass) {
    bool changed = false;
    for (int i = 0; i < grid.nx; ++i)
      for (int j = 0; j < grid.ny; ++j)
        for (int k = 0; k < grid.nz; ++k) changed |= relax(i, j, k);
    for (int i = grid.nx - 1; i >= 0; --i)
      for (int j = grid.ny - 1; j >= 0; --j)
        for (int k = grid.nz - 1; k >= 0; --k) changed |= relax(i, j, k);
    if (!changed) break;
  }

  // Sign by x-ray parity per (j,k) row. The ray origin gets a deterministic
  // sub-grid jitter so shared triangle edges are not hit exactly.
  const double jy = 1e-6 * spacing * 0.71, jz = 1e-6 * spacing * 0.37;
  std::vector<char> inside(total, 0);
  size_t inconsistent = 0;
  std::vector<double> crossings;
  for (int j = 0; j < grid.ny; ++j)
    for (int k = 0; k < grid.nz; ++k) {
      const double y = lo[1] + j * spacing + jy;
      const double z = lo[2] + k * spacing + jz;
      crossings.clear();
      for (const auto& f : faces) {
        const double ay = vertices.at(f[0], 1), az = vertices.at(f[0], 2);
        const double by = vertices.at(f[1], 1), bz = vertices.at(f[1], 2);
        const double cy = vertices.at(f[2], 1), cz = vertices.at(f[2], 2);
        const double denom = (by - ay) * (cz - az) - (bz - az) * (cy - ay);
        if (std::abs(denom) < 1e-14) continue;  // edge-on in the yz plane
        const double u = ((y - ay) * (cz - az) - (z - az) * (cy - ay)) / denom;
        const double v = ((by - ay) * (z - az) - (bz - az) * (y - ay)) / denom;
        if (u < 0 || v < 0 || u + v > 1) continue;
        crossings.push_back((1 - u - v) * vertices.at(f[0], 0) + u * vertices.at(f[1], 0) +
                            v * vertices.at(f[2], 0));
      }
      std::sort(crossings.begin(), crossings.end());
      if (crossings.size() % 2 != 0) {
        inconsistent += static_cast<size_t>(grid.nx);
        continue;
      }
      size_t c = 0;
      for (int i = 0; i < grid.nx; ++i) {
        const double x = lo[0] + i * spacing;
        while (c < crossings.size() && crossings[c] < x) ++c;
        inside[node_index(i, j, k)] = static_cast<char>(c % 2);
      }
    }
  if (inconsistent > total / 200)
    throw NonWatertightBody("build_sdf: ray parity inconsistent on " +
                            std::to_string(inconsistent) + " of " + std::to_string(total) +
                            " nodes");

  grid.values.resize(total);
  for (size_t idx = 0; idx < total; ++idx)
    grid.values[idx] = inside[idx] ? -cf.dist[idx] : cf.dist[idx];
  return grid;
}

namespace {

/// Trilinear interpolation core shared by value and gradient queries.
struct TriLin {
  int i0[3];
  double f[3];
  bool clamped[3];

  void locate(const SignedDistanceGrid& g, const double p[3]) {
    const int n[3] = {g.nx, g.ny, g.nz};
    for (int k = 0; k < 3; ++k) {
      double u = (p[k] - g.origin[static_cast<size_t>(k)]) / g.spacing;
      clamped[k] = false;
      if (u <= 0) {
        u = 0;
        clamped[k] = true;
      }
      if (u >= n[k] - 1) {
        u = n[k] - 1;
        clamped[k] = true;
      }
      i0[k] = std::min(static_cast<int>(u), n[k] - 2);
      f[k] = u - i0[k];
    }
  }

  double value(const SignedDistanceGrid& g) const {
    double acc = 0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) {
          const double w = (a ? f[0] : 1 - f[0]) * (b ? f[1] : 1 - f[1]) * (c ? f[2] : 1 - f[2]);
          acc += w * g.at(i0[0] + a, i0[1] + b, i0[2] + c);
        }
    return acc;
  }

  void gradient(const SignedDistanceGrid& g, double out[3]) const {
    for (int k = 0; k < 3; ++k) out[k] = 0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) {
          const double v = g.at(i0[0] + a, i0[1] + b, i0[2] + c);
          const double wx = a ? 1.0 : -1.0, wy = b ? 1.0 : -1.0, wz = c ? 1.0 : -1.0;
          out[0] += wx * (b ? f[1] : 1 - f[1]) * (c ? f[2] : 1 - f[2]) * v;
          out[1] += (a ? f[0] : 1 - f[0]) * wy * (c ? f[2] : 1 - f[2]) * v;
          out[2] += (a ? f[0] : 1 - f[0]) * (b ? f[1] : 1 - f[1]) * wz * v;
        }
    for (int k = 0; k < 3; ++k) out[k] = clamped[k] ? 0.0 : out[k] / g.spacing;
  }
};

}  // namespace

void query_sdf(const SignedDistanceGrid& grid, const Tensor& points, Tensor& values,
               Tensor* gradients) {
  if (points.rank() != 2 || points.dim(1) != 3) throw ShapeMismatch("query_sdf: points (K,3)");
  const int K = points.dim(0);
  values = Tensor({K});
  if (gradients) *gradients = Tensor({K, 3});
  TriLin tl;
  for (int q = 0; q < K; ++q) {
    const double p[3] = {points.at(q, 0), points.at(q, 1), points.at(q, 2)};
    tl.locate(grid, p);
    values[q] = tl.value(grid);
    if (gradients) {
      double gr[3];
      tl.gradient(grid, gr);
      for (int k = 0; k < 3; ++k) gradients->at(q, k) = gr[k];
    }
  }
}

ad::Var sdf_query_local(const SignedDistanceGrid& grid, const ad::Var& vertices,
                        const ad::Var& fk_pack, const std::vector<int>& vertex_ids,
                        int torso_joint, const Tensor& torso_rest_position) {
  const Tensor& vt = vertices.value();
  const Tensor& pk = fk_pack.value();
  if (vt.rank() != 3 || vt.dim(2) != 3) throw ShapeMismatch("sdf_query_local: vertices (T,V,3)");
  if (pk.rank() != 3 || pk.dim(2) != 12 || pk.dim(0) != vt.dim(0))
    throw ShapeMismatch("sdf_query_local: fk pack (T,N,12)");
  const int T = vt.dim(0), L = static_cast<int>(vertex_ids.size());
  const int tj = torso_joint;
  Vector3d rest(torso_rest_position[0], torso_rest_position[1], torso_rest_position[2]);
  auto ids = std::make_shared<std::vector<int>>(vertex_ids);
  auto gridp = std::make_shared<SignedDistanceGrid>(grid);

  Tensor out({T, L});
  TriLin tl;
  for (int t = 0; t < T; ++t) {
    Matrix3d R;
    Vector3d p;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) R(a, b) = pk.at(t, tj, a * 3 + b);
      p[a] = pk.at(t, tj, 9 + a);
    }
    for (int q = 0; q < L; ++q) {
      const int v = (*ids)[static_cast<size_t>(q)];
      const Vector3d x(vt.at(t, v, 0), vt.at(t, v, 1), vt.at(t, v, 2));
      const Vector3d xl = R.transpose() * (x - p) + rest;
      const double pl[3] = {xl[0], xl[1], xl[2]};
      tl.locate(grid, pl);
      out.at(t, q) = tl.value(grid);
    }
  }

  return ad::make_op(
      "sdf_query_local", std::move(out), {vertices, fk_pack},
      [T, L, tj, rest, ids, gridp](ad::Node& n) {
        const Tensor& vt = n.parents[0]->value;
        const Tensor& pk = n.parents[1]->value;
        const bool want_v = n.parents[0]->requires_grad;
        const bool want_fk = n.parents[1]->requires_grad;
        TriLin tl;
        for (int t = 0; t < T; ++t) {
          Matrix3d R;
          Vector3d p;
          for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) R(a, b) = pk.at(t, tj, a * 3 + b);
            p[a] = pk.at(t, tj, 9 + a);
          }
          for (int q = 0; q < L; ++q) {
            const double go = n.grad.at(t, q);
            if (go == 0.0) continue;
            const int v = (*ids)[static_cast<size_t>(q)];
            const Vector3d x(vt.at(t, v, 0), vt.at(t, v, 1), vt.at(t, v, 2));
            const Vector3d xl = R.transpose() * (x - p) + rest;
            const double pl[3] = {xl[0], xl[1], xl[2]};
            tl.locate(*gridp, pl);
            double gr[3];
            tl.gradient(*gridp, gr);
            const Vector3d gq(go * gr[0], go * gr[1], go * gr[2]);
            if (want_v) {
              Tensor& gvert = n.parents[0]->ensure_grad();
              const Vector3d gx = R * gq;
              for (int k = 0; k < 3; ++k) gvert.at(t, v, k) += gx[k];
            }
            if (want_fk) {
              Tensor& gp = n.parents[1]->ensure_grad();
              const Vector3d gx = R * gq;
              const Vector3d d = x - p;
              for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) gp.at(t, tj, a * 3 + b) += d[a] * gq[b];
                gp.at(t, tj, 9 + a) -= gx[a];
              }
            }
          }
        }
      });
}

BodyPartition partition_limbs(const SkinnedMesh& mesh, const Skeleton& skel,
                              const std::vector<std::vector<std::string>>& limb_chain_names) {
  std::vector<char> is_limb_joint(static_cast<size_t>(skel.joint_count()), 0);
  for (const auto& chain : limb_chain_names)
    for (const auto& name : chain) is_limb_joint[static_cast<size_t>(skel.index_of(name))] = 1;

  BodyPartition part;
  const int V = mesh.vertex_count();
  std::vector<char> is_limb_vertex(static_cast<size_t>(V), 0);
  for (int v = 0; v < V; ++v) {
    int best = -1;
    double bw = -1;
    for (auto& [j, w] : mesh.weights[static_cast<size_t>(v)])
      if (w > bw || (w == bw && j < best)) {
        bw = w;
        best = j;
      }
    if (best >= 0 && is_limb_joint[static_cast<size_t>(best)]) {
      is_limb_vertex[static_cast<size_t>(v)] = 1;
      part.limb_vertex_ids.push_back(v);
    }
  }
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& face = mesh.faces[static_cast<size_t>(f)];
    if (!is_limb_vertex[static_cast<size_t>(face[0])] &&
        !is_limb_vertex[static_cast<size_t>(face[1])] &&
        !is_limb_vertex[static_cast<size_t>(face[2])])
      part.body_face_ids.push_back(f);
  }
  return part;
}

// --- Geometry builders ---------------------------------------------------

void make_icosphere(double radius, int subdivisions, Tensor& vertices,
                    std::vector<std::array<int, 3>>& faces) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vector3d> verts = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                                 {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                                 {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const std::pair<int, int> key(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vector3d m = (verts[static_cast<size_t>(a)] + verts[static_cast<size_t>(b)]).normalized();
      verts.push_back(m);
      int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> nf;
    nf.reserve(f.size() * 4);
    for (const auto& tri : f) {
      int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      nf.push_back({tri[0], a, c});
      nf.push_back({tri[1], b, a});
      nf.push_back({tri[2], c, b});
      nf.push_back({a, b, c});
    }
    f = std::move(nf);
  }
  vertices = Tensor({static_cast<int>(verts.size()), 3});
  for (size_t i = 0; i < verts.size(); ++i)
    for (int k = 0; k < 3; ++k) vertices.at(static_cast<int>(i), k) = radius * verts[i][k];
  faces = std::move(f);
}

void make_capsule(const std::array<double, 3>& p0, const std::array<double, 3>& p1, double radius,
                  int segments, int rings, Tensor& vertices,
                  std::vector<std::array<int, 3>>& faces) {
  const Vector3d a(p0[0], p0[1], p0[2]), b(p1[0], p1[1], p1[2]);
  Vector3d axis = b - a;
  const double len = axis.norm();
  axis = len > 1e-12 ? Vector3d(axis / len) : Vector3d(0, 1, 0);
  Vector3d e1 = std::abs(axis[0]) < 0.9 ? Vector3d(1, 0, 0) : Vector3d(0, 0, 1);
  e1 = (e1 - e1.dot(axis) * axis).normalized();
  const Vector3d e2 = axis.cross(e1);

  // Profile from bottom pole over both hemispheres to top pole; ring latitude
  // phi in [-pi/2, pi/2], split across the two caps.
  std::vector<Vector3d> verts;
  std::vector<std::array<int, 3>> f;
  verts.push_back(a - radius * axis);  // bottom pole
  std::vector<int> ringstart;
  auto add_ring = [&](const Vector3d& center, double r, double h) {
    ringstart.push_back(static_cast<int>(verts.size()));
    for (int s = 0; s < segments; ++s) {
      const double ang = 2.0 * M_PI * s / segments;
      verts.push_back(center + h * axis + r * (std::cos(ang) * e1 + std::sin(ang) * e2));
    }
  };
  for (int r = 1; r <= rings; ++r) {  // bottom hemisphere, equator last
    const double phi = -M_PI / 2 + (M_PI / 2) * r / rings;
    add_ring(a, radius * std::cos(phi), radius * std::sin(phi));
  }
  for (int r = 0; r < rings; ++r) {  // top hemisphere, equator first
    const double phi = (M_PI / 2) * r / rings;
    add_ring(b, radius * std::cos(phi), radius * std::sin(phi));
  }
  verts.push_back(b + radius * axis);  // top pole
  const int top_pole = static_cast<int>(verts.size()) - 1;

  auto ring = [&](int r, int s) { return ringstart[static_cast<size_t>(r)] + (s % segments); };
  const int R = static_cast<int>(ringstart.size());
  for (int s = 0; s < segments; ++s) f.push_back({0, ring(0, s + 1), ring(0, s)});
  for (int r = 0; r + 1 < R; ++r)
    for (int s = 0; s < segments; ++s) {
      f.push_back({ring(r, s), ring(r, s + 1), ring(r + 1, s)});
      f.push_back({ring(r, s + 1), ring(r + 1, s + 1), ring(r + 1, s)});
    }
  for (int s = 0; s < segments; ++s) f.push_back({ring(R - 1, s), ring(R - 1, s + 1), top_pole});

  vertices = Tensor({static_cast<int>(verts.size()), 3});
  for (size_t i = 0; i < verts.size(); ++i)
    for (int k = 0; k < 3; ++k) vertices.at(static_cast<int>(i), k) = verts[i][k];
  faces = std::move(f);
}

}  // namespace mrt
