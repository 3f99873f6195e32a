#include "mrt/skeleton.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace mrt {

using Eigen::Matrix3d;
using Eigen::Vector3d;

int Skeleton::root() const {
  for (int i = 0; i < joint_count(); ++i)
    if (parent[static_cast<size_t>(i)] < 0) return i;
  throw SchemaViolation("skeleton has no root");
}

int Skeleton::index_of(const std::string& name) const {
  for (int i = 0; i < joint_count(); ++i)
    if (joint_names[static_cast<size_t>(i)] == name) return i;
  throw UnknownJoint("unknown joint: " + name);
}

void Skeleton::validate() const {
  const int n = joint_count();
  if (n < 1) throw SchemaViolation("skeleton: empty");
  if (static_cast<int>(joint_names.size()) != n || offsets.rank() != 2 || offsets.dim(0) != n ||
      offsets.dim(1) != 3)
    throw SchemaViolation("skeleton: inconsistent field sizes");
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    int p = parent[static_cast<size_t>(i)];
    if (p < 0) {
      ++roots;
      for (int k = 0; k < 3; ++k)
        if (offsets.at(i, k) != 0.0) throw SchemaViolation("skeleton: root offset must be zero");
    } else if (p >= i) {
      throw SchemaViolation("skeleton: parent index must precede joint " + std::to_string(i));
    }
  }
  if (roots != 1) throw SchemaViolation("skeleton: exactly one root required");
  if (!offsets.all_finite()) throw SchemaViolation("skeleton: non-finite offsets");
  if (!(height > 0.0)) throw SchemaViolation("skeleton: height must be positive");
}

Tensor Skeleton::rest_positions() const {
  const int n = joint_count();
  Tensor pos({n, 3});
  for (int j = 0; j < n; ++j) {
    int p = parent[static_cast<size_t>(j)];
    for (int k = 0; k < 3; ++k) pos.at(j, k) = (p < 0 ? 0.0 : pos.at(p, k)) + offsets.at(j, k);
  }
  return pos;
}

void Motion::validate() const {
  if (rot6d.rank() != 3 || rot6d.dim(2) != 6) throw SchemaViolation("motion: rot6d must be (T,N,6)");
  if (root_pos.rank() != 2 || root_pos.dim(1) != 3 || root_pos.dim(0) != rot6d.dim(0))
    throw SchemaViolation("motion: root_pos must be (T,3)");
  if (frames() < 1) throw SchemaViolation("motion: at least one frame required");
  if (!(fps > 0.0)) throw SchemaViolation("motion: fps must be positive");
  if (!rot6d.all_finite() || !root_pos.all_finite())
    throw SchemaViolation("motion: non-finite values");
}

Motion Motion::window(int start, int len) const {
  const int T = frames(), N = joint_count();
  if (start < 0 || len < 1 || start + len > T) throw ShapeMismatch("motion window out of range");
  Motion w;
  w.fps = fps;
  w.rot6d = Tensor({len, N, 6});
  w.root_pos = Tensor({len, 3});
  std::copy_n(rot6d.data() + static_cast<std::int64_t>(start) * N * 6,
              static_cast<std::int64_t>(len) * N * 6, w.rot6d.data());
  std::copy_n(root_pos.data() + static_cast<std::int64_t>(start) * 3,
              static_cast<std::int64_t>(len) * 3, w.root_pos.data());
  return w;
}

namespace {

/// Gram-Schmidt of the 6D representation with saved intermediates for the
/// backward pass. Columns of R are (b1, b2, b1 x b2).
struct GramSchmidt {
  Vector3d a1, a2, b1, b2, b3;
  double n1 = 0, n2 = 0, c = 0;

  void forward(const double* r6) {
    a1 = Vector3d(r6[0], r6[1], r6[2]);
    a2 = Vector3d(r6[3], r6[4], r6[5]);
    n1 = a1.norm();
    if (n1 <= 1e-8) throw DegenerateRotation("rot6d: first column norm <= 1e-8");
    b1 = a1 / n1;
    c = b1.dot(a2);
    Vector3d u = a2 - c * b1;
    n2 = u.norm();
    if (n2 <= 1e-8) throw DegenerateRotation("rot6d: second column norm <= 1e-8");
    b2 = u / n2;
    b3 = b1.cross(b2);
  }

  Matrix3d matrix() const {
    Matrix3d R;
    R.col(0) = b1;
    R.col(1) = b2;
    R.col(2) = b3;
    return R;
  }

  /// Accumulates d(loss)/d(r6) given the gradient w.r.t. R's columns.
  void backward(const Matrix3d& gR, double* gr6) const {
    Vector3d gb1 = gR.col(0), gb2 = gR.col(1);
    const Vector3d gb3 = gR.col(2);
    // b3 = b1 x b2
    gb1 += b2.cross(gb3);
    gb2 += gb3.cross(b1);
    // b2 = u / |u|
    const Vector3d gu = (gb2 - gb2.dot(b2) * b2) / n2;
    // u = a2 - c b1
    Vector3d ga2 = gu;
    const double gc = -gu.dot(b1);
    gb1 -= c * gu;
    // c = b1 . a2
    gb1 += gc * a2;
    ga2 += gc * b1;
    // b1 = a1 / |a1|
    const Vector3d ga1 = (gb1 - gb1.dot(b1) * b1) / n1;
    for (int k = 0; k < 3; ++k) {
      gr6[k] += ga1[k];
      gr6[3 + k] += ga2[k];
    }
  }
};

}  // namespace

Tensor rot6d_to_matrix(const double r6[6]) {
  GramSchmidt gs;
  gs.forward(r6);
  const Matrix3d M = gs.matrix();
  Tensor R({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R.at(i, j) = M(i, j);
  return R;
}

Tensor rot6d_to_matrix(const Tensor& r6) {
  if (r6.size() != 6) throw ShapeMismatch("rot6d_to_matrix: need 6 values");
  return rot6d_to_matrix(r6.data());
}

Tensor matrix_to_rot6d(const Tensor& R) {
  if (R.rank() != 2 || R.dim(0) != 3 || R.dim(1) != 3)
    throw ShapeMismatch("matrix_to_rot6d: need 3x3");
  Matrix3d M;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) M(i, j) = R.at(i, j);
  if ((M.transpose() * M - Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-5 ||
      std::abs(M.determinant() - 1.0) > 1e-5)
    throw NotARotation("matrix_to_rot6d: input is not a rotation");
  return Tensor({6}, {M(0, 0), M(1, 0), M(2, 0), M(0, 1), M(1, 1), M(2, 1)});
}

JointPositions forward_kinematics(const Skeleton& skel, const Motion& motion) {
  if (motion.joint_count() != skel.joint_count())
    throw ShapeMismatch("forward_kinematics: joint count mismatch");
  ad::Var pack = fk_transforms(skel, ad::Var::leaf(motion.rot6d), ad::Var::leaf(motion.root_pos));
  const int T = motion.frames(), N = skel.joint_count();
  JointPositions out;
  out.P = Tensor({T, N, 3});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < 3; ++k) out.P.at(t, j, k) = pack.value().at(t, j, 9 + k);
  return out;
}

ad::Var fk_transforms(const Skeleton& skel, const ad::Var& rot6d, const ad::Var& root_pos) {
  const Tensor& r = rot6d.value();
  if (r.rank() != 3 || r.dim(2) != 6 || r.dim(1) != skel.joint_count())
    throw ShapeMismatch("fk_transforms: rot6d must be (T,N,6) with N matching the skeleton");
  const Tensor& rp = root_pos.value();
  if (rp.rank() != 2 || rp.dim(1) != 3 || rp.dim(0) != r.dim(0))
    throw ShapeMismatch("fk_transforms: root_pos must be (T,3)");
  const int T = r.dim(0), N = r.dim(1);
  const std::vector<int> parent = skel.parent;

  std::vector<Vector3d> offs(static_cast<size_t>(N));
  for (int j = 0; j < N; ++j)
    offs[static_cast<size_t>(j)] =
        Vector3d(skel.offsets.at(j, 0), skel.offsets.at(j, 1), skel.offsets.at(j, 2));

  auto gs = std::make_shared<std::vector<GramSchmidt>>(static_cast<size_t>(T) * N);
  auto G = std::make_shared<std::vector<Matrix3d>>(static_cast<size_t>(T) * N);

  Tensor out({T, N, 12});
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < N; ++j) {
      const size_t idx = static_cast<size_t>(t) * N + j;
      GramSchmidt& g = (*gs)[idx];
      g.forward(r.data() + idx * 6);
      const Matrix3d L = g.matrix();
      const int p = parent[static_cast<size_t>(j)];
      Vector3d pos;
      if (p < 0) {
        (*G)[idx] = L;
        pos = Vector3d(rp.at(t, 0), rp.at(t, 1), rp.at(t, 2));
      } else {
        const size_t pidx = static_cast<size_t>(t) * N + p;
        (*G)[idx] = (*G)[pidx] * L;
        pos = Vector3d(out.at(t, p, 9), out.at(t, p, 10), out.at(t, p, 11)) +
              (*G)[pidx] * offs[static_cast<size_t>(j)];
      }
      const Matrix3d& Gj = (*G)[idx];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) out.at(t, j, a * 3 + b) = Gj(a, b);
      for (int k = 0; k < 3; ++k) out.at(t, j, 9 + k) = pos[k];
    }
  }

  return ad::make_op(
      "fk", std::move(out), {rot6d, root_pos}, [T, N, parent, offs, gs, G](ad::Node& n) {
        const ad::NodePtr& r6p = n.parents[0];
        const ad::NodePtr& rpp = n.parents[1];
        std::vector<Matrix3d> gG(static_cast<size_t>(N));
        std::vector<Vector3d> gp(static_cast<size_t>(N));
        for (int t = 0; t < T; ++t) {
          for (int j = 0; j < N; ++j) {
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b)
                gG[static_cast<size_t>(j)](a, b) = n.grad.at(t, j, a * 3 + b);
            for (int k = 0; k < 3; ++k) gp[static_cast<size_t>(j)][k] = n.grad.at(t, j, 9 + k);
          }
          for (int j = N - 1; j >= 0; --j) {
            const size_t idx = static_cast<size_t>(t) * N + j;
            const GramSchmidt& g = (*gs)[idx];
            const Matrix3d L = g.matrix();
            const int p = parent[static_cast<size_t>(j)];
            Matrix3d gL;
            if (p < 0) {
              gL = gG[static_cast<size_t>(j)];
              if (rpp->requires_grad) {
                Tensor& grp = rpp->ensure_grad();
                for (int k = 0; k < 3; ++k) grp.at(t, k) += gp[static_cast<size_t>(j)][k];
              }
            } else {
              const size_t pidx = static_cast<size_t>(t) * N + p;
              const Matrix3d& Gp = (*G)[pidx];
              gG[static_cast<size_t>(p)] += gG[static_cast<size_t>(j)] * L.transpose();
              gL = Gp.transpose() * gG[static_cast<size_t>(j)];
              gp[static_cast<size_t>(p)] += gp[static_cast<size_t>(j)];
              gG[static_cast<size_t>(p)] +=
                  gp[static_cast<size_t>(j)] * offs[static_cast<size_t>(j)].transpose();
            }
            if (r6p->requires_grad) {
              Tensor& gr = r6p->ensure_grad();
              g.backward(gL, gr.data() + idx * 6);
            }
          }
        }
      });
}

ad::Var fk_positions(const ad::Var& pack) {
  const Tensor& v = pack.value();
  if (v.rank() != 3 || v.dim(2) != 12) throw ShapeMismatch("fk_positions: need (T,N,12) pack");
  const int T = v.dim(0), N = v.dim(1);
  Tensor out({T, N, 3});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < 3; ++k) out.at(t, j, k) = v.at(t, j, 9 + k);
  return ad::make_op("fk_positions", std::move(out), {pack}, [T, N](ad::Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < N; ++j)
        for (int k = 0; k < 3; ++k) g.at(t, j, 9 + k) += n.grad.at(t, j, k);
  });
}

namespace {
constexpr double kDistGuard = 1e-12;
constexpr double kRowEps = 1e-8;
}  // namespace

DistanceMatrix joint_distance_matrix(const Tensor& positions) {
  if (positions.rank() != 2 || positions.dim(1) != 3)
    throw ShapeMismatch("joint_distance_matrix: need (N,3)");
  const int N = positions.dim(0);
  DistanceMatrix dm;
  dm.D = Tensor({N, N});
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) {
      double sq = 0;
      for (int k = 0; k < 3; ++k) {
        double d = positions.at(i, k) - positions.at(j, k);
        sq += d * d;
      }
      const double d = std::sqrt(sq + kDistGuard);
      dm.D.at(i, j) = d;
      dm.D.at(j, i) = d;
    }
  return dm;
}

DistanceMatrix normalize_jdm(const DistanceMatrix& d) {
  if (d.normalized) throw Error("normalize_jdm: already normalized");
  const int N = d.D.dim(0);
  DistanceMatrix out;
  out.D = Tensor({N, N});
  out.normalized = true;
  for (int i = 0; i < N; ++i) {
    double s = 0;
    for (int j = 0; j < N; ++j) {
      if (d.D.at(i, j) < 0) throw Error("normalize_jdm: negative distance");
      s += d.D.at(i, j);
    }
    for (int j = 0; j < N; ++j) out.D.at(i, j) = d.D.at(i, j) / (s + kRowEps);
  }
  return out;
}

ad::Var jdm_normalized(const ad::Var& positions) {
  const Tensor& P = positions.value();
  if (P.rank() != 3 || P.dim(2) != 3) throw ShapeMismatch("jdm_normalized: need (T,N,3)");
  const int T = P.dim(0), N = P.dim(1);

  // Keep the guarded distances and row sums for the backward pass.
  auto dist = std::make_shared<Tensor>(Shape{T, N, N});
  auto rowsum = std::make_shared<Tensor>(Shape{T, N});

  Tensor out({T, N, N});
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        double sq = 0;
        for (int k = 0; k < 3; ++k) {
          double dd = P.at(t, i, k) - P.at(t, j, k);
          sq += dd * dd;
        }
        dist->at(t, i, j) = std::sqrt(sq + kDistGuard);
      }
      double s = 0;
      for (int j = 0; j < N; ++j) s += dist->at(t, i, j);
      rowsum->at(t, i) = s;
      for (int j = 0; j < N; ++j) out.at(t, i, j) = dist->at(t, i, j) / (s + kRowEps);
    }
  }

  return ad::make_op("jdm_normalized", std::move(out), {positions}, [T, N, dist, rowsum](ad::Node& n) {
    const Tensor& P = n.parents[0]->value;
    Tensor& gP = n.parents[0]->ensure_grad();
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < N; ++i) {
        const double denom = rowsum->at(t, i) + kRowEps;
        double dot = 0;  // sum_k g_ik * D_ik
        for (int j = 0; j < N; ++j) dot += n.grad.at(t, i, j) * dist->at(t, i, j);
        for (int j = 0; j < N; ++j) {
          if (i == j) continue;
          const double gD = n.grad.at(t, i, j) / denom - dot / (denom * denom);
          const double dtil = dist->at(t, i, j);
          for (int k = 0; k < 3; ++k) {
            const double dir = (P.at(t, i, k) - P.at(t, j, k)) / dtil;
            gP.at(t, i, k) += gD * dir;
            gP.at(t, j, k) -= gD * dir;
          }
        }
      }
    }
  });
}

}  // namespace mrt
