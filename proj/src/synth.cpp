#include <Eigen/Dense>
#include <cmath>

#include "mrt/io.hpp"

namespace mrt {

using Eigen::Matrix3d;
using Eigen::Vector3d;

namespace {

struct Part {
  Tensor verts;
  std::vector<std::array<int, 3>> faces;
};

void append_part(SkinnedMesh& mesh, const Part& part,
                 const std::vector<std::vector<std::pair<int, double>>>& part_weights) {
  const int base = mesh.vertex_count();
  const int pv = part.verts.dim(0);
  Tensor merged({base + pv, 3});
  if (base > 0) std::copy_n(mesh.vertices_bind.data(), mesh.vertices_bind.size(), merged.data());
  std::copy_n(part.verts.data(), part.verts.size(), merged.data() + static_cast<std::int64_t>(base) * 3);
  mesh.vertices_bind = std::move(merged);
  for (const auto& f : part.faces) mesh.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  for (const auto& w : part_weights) mesh.weights.push_back(w);
}

/// Capsule weights along the axis: the owning joint everywhere, blending
/// 0.5/0.5 into the child over the last 15% of the axis.
std::vector<std::vector<std::pair<int, double>>> capsule_weights(const Tensor& verts,
                                                                 const Vector3d& p0,
                                                                 const Vector3d& p1, int joint,
                                                                 int child) {
  std::vector<std::vector<std::pair<int, double>>> w;
  const Vector3d axis = p1 - p0;
  const double len2 = std::max(axis.squaredNorm(), 1e-12);
  for (int v = 0; v < verts.dim(0); ++v) {
    const Vector3d x(verts.at(v, 0), verts.at(v, 1), verts.at(v, 2));
    const double t = (x - p0).dot(axis) / len2;
    if (child >= 0 && t > 0.85)
      w.push_back({{joint, 0.5}, {child, 0.5}});
    else
      w.push_back({{joint, 1.0}});
  }
  return w;
}

}  // namespace

Character make_synthetic_character(const SynthSpec& spec) {
  if (spec.joint_count < 6) throw SchemaViolation("synthetic character needs >= 6 joints");
  Rng rng(spec.seed);
  auto jitter = [&]() { return rng.uniform(0.92, 1.08); };

  // Joint budget: hips + spine + optional head + two arms + two legs.
  const bool with_head = spec.joint_count >= 7;
  int spine = 1, arm = 1, leg = 1;
  int used = 1 + spine + (with_head ? 1 : 0) + 2 * arm + 2 * leg;
  int which = 0;
  while (used < spec.joint_count) {
    const int remaining = spec.joint_count - used;
    if (remaining == 1) {
      ++spine;
      ++used;
      continue;
    }
    if (which % 3 == 0) {
      ++arm;
      used += 2;
    } else if (which % 3 == 1) {
      ++leg;
      used += 2;
    } else {
      ++spine;
      ++used;
    }
    ++which;
  }

  const double torso_len = 0.50 * jitter();
  const double base_torso_r = 0.11;
  const double torso_r = base_torso_r * jitter() * spec.torso_scale;
  const double arm_r = 0.042 * jitter();
  const double leg_r = 0.055 * jitter();
  const double head_r = 0.085 * jitter();
  const double arm_len = 0.46 * jitter() * spec.limb_scale;
  const double leg_len = 0.50 * jitter() * spec.limb_scale;
  const double shoulder_w = torso_r + arm_r + 0.02;
  const double hip_w = torso_r + leg_r + 0.02;

  Character ch;
  ch.name = spec.name.empty() ? "synth_" + std::to_string(spec.seed) : spec.name;
  Skeleton& sk = ch.skeleton;

  auto add_joint = [&](const std::string& name, int parent, const Vector3d& off) {
    sk.joint_names.push_back(name);
    sk.parent.push_back(parent);
    const int i = static_cast<int>(sk.joint_names.size()) - 1;
    Tensor merged({i + 1, 3});
    if (i > 0) std::copy_n(sk.offsets.data(), sk.offsets.size(), merged.data());
    for (int k = 0; k < 3; ++k) merged.at(i, k) = off[k];
    sk.offsets = std::move(merged);
    return i;
  };

  const int hips = add_joint("hips", -1, {0, 0, 0});
  std::vector<int> spine_ids;
  int prev = hips;
  for (int s = 1; s <= spine; ++s) {
    prev = add_joint("spine_" + std::to_string(s), prev, {0, torso_len / spine, 0});
    spine_ids.push_back(prev);
  }
  const int chest = spine_ids.back();
  int head = -1;
  // The neck offset clears the torso capsule so the head never starts inside.
  if (with_head) head = add_joint("head", chest, {0, (torso_r + head_r + 0.015) * jitter(), 0});

  auto add_chain = [&](const std::string& prefix, int attach, const Vector3d& first,
                       const Vector3d& seg, int count) {
    std::vector<int> ids;
    int p = attach;
    for (int i = 1; i <= count; ++i) {
      p = add_joint(prefix + "_" + std::to_string(i), p, i == 1 ? first : seg);
      ids.push_back(p);
    }
    return ids;
  };
  const double aseg = arm_len / arm, lseg = leg_len / leg;
  const auto arm_l = add_chain("arm_l", chest, {shoulder_w, -0.02, 0}, {aseg, 0, 0}, arm);
  const auto arm_r_ids = add_chain("arm_r", chest, {-shoulder_w, -0.02, 0}, {-aseg, 0, 0}, arm);
  const auto leg_l = add_chain("leg_l", hips, {hip_w, -0.04, 0}, {0, -lseg, 0}, leg);
  const auto leg_r_ids = add_chain("leg_r", hips, {-hip_w, -0.04, 0}, {0, -lseg, 0}, leg);

  const Tensor rest = sk.rest_positions();
  auto rest_of = [&](int j) { return Vector3d(rest.at(j, 0), rest.at(j, 1), rest.at(j, 2)); };

  // Geometry: one watertight torso capsule owned by the spine chain, one
  // capsule per limb bone, a head capsule. Limb capsules attach flush to the
  // torso by construction (attach offsets exceed the torso radius).
  SkinnedMesh& mesh = ch.mesh;
  {
    Part torso;
    make_capsule({0, 0, 0}, {0, torso_len, 0}, torso_r, 12, 4, torso.verts, torso.faces);
    // Blend torso weights along the hips/spine chain by height.
    std::vector<std::vector<std::pair<int, double>>> w;
    std::vector<int> anchors = {hips};
    for (int s : spine_ids) anchors.push_back(s);
    for (int v = 0; v < torso.verts.dim(0); ++v) {
      const double y = torso.verts.at(v, 1);
      const double step = torso_len / spine;
      double pos = y / step;  // anchor index space
      if (pos <= 0) {
        w.push_back({{hips, 1.0}});
        continue;
      }
      if (pos >= static_cast<double>(anchors.size() - 1)) {
        w.push_back({{chest, 1.0}});
        continue;
      }
      const int lo = static_cast<int>(pos);
      const double t = pos - lo;
      if (t < 1e-9)
        w.push_back({{anchors[static_cast<size_t>(lo)], 1.0}});
      else
        w.push_back({{anchors[static_cast<size_t>(lo)], 1.0 - t},
                     {anchors[static_cast<size_t>(lo + 1)], t}});
    }
    append_part(mesh, torso, w);
  }
  if (head >= 0) {
    Part hp;
    const Vector3d h = rest_of(head);
    const Vector3d htop = h + Vector3d(0, 0.12 * jitter(), 0);
    make_capsule({h[0], h[1], h[2]}, {htop[0], htop[1], htop[2]}, head_r, 10, 3, hp.verts, hp.faces);
    append_part(mesh, hp, capsule_weights(hp.verts, h, htop, head, -1));
  }
  auto add_limb_geometry = [&](const std::vector<int>& chain, const Vector3d& tip_dir, double r) {
    for (size_t i = 0; i < chain.size(); ++i) {
      const int j = chain[i];
      const int child = i + 1 < chain.size() ? chain[i + 1] : -1;
      const Vector3d p0 = rest_of(j);
      const Vector3d p1 = child >= 0 ? rest_of(child) : Vector3d(p0 + tip_dir);
      Part part;
      make_capsule({p0[0], p0[1], p0[2]}, {p1[0], p1[1], p1[2]}, r, 8, 3, part.verts, part.faces);
      append_part(mesh, part, capsule_weights(part.verts, p0, p1, j, child));
    }
  };
  add_limb_geometry(arm_l, {aseg * 0.8, 0, 0}, arm_r);
  add_limb_geometry(arm_r_ids, {-aseg * 0.8, 0, 0}, arm_r);
  add_limb_geometry(leg_l, {0, -lseg * 0.8, 0}, leg_r);
  add_limb_geometry(leg_r_ids, {0, -lseg * 0.8, 0}, leg_r);

  mesh.bind_inverse = Tensor({sk.joint_count(), 4, 4});
  for (int j = 0; j < sk.joint_count(); ++j) {
    for (int a = 0; a < 3; ++a) {
      mesh.bind_inverse.at(j, a, a) = 1.0;
      mesh.bind_inverse.at(j, a, 3) = -rest.at(j, a);
    }
    mesh.bind_inverse.at(j, 3, 3) = 1.0;
  }

  double ylo = 1e300, yhi = -1e300;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    ylo = std::min(ylo, mesh.vertices_bind.at(v, 1));
    yhi = std::max(yhi, mesh.vertices_bind.at(v, 1));
  }
  sk.height = yhi - ylo;

  auto names_of = [&](const std::vector<int>& ids) {
    std::vector<std::string> out;
    for (int j : ids) out.push_back(sk.joint_names[static_cast<size_t>(j)]);
    return out;
  };
  ch.limb_chains = {names_of(arm_l), names_of(arm_r_ids), names_of(leg_l), names_of(leg_r_ids)};
  if (head >= 0) ch.limb_chains.push_back({"head"});

  ch.validate();
  return ch;
}

namespace {

Matrix3d rot_xyz(double ax, double ay, double az) {
  return (Eigen::AngleAxisd(az, Vector3d::UnitZ()) * Eigen::AngleAxisd(ay, Vector3d::UnitY()) *
          Eigen::AngleAxisd(ax, Vector3d::UnitX()))
      .toRotationMatrix();
}

}  // namespace

Motion synthetic_motion(const Skeleton& skel, int frames, double fps, std::uint64_t seed,
                        const MotionStyle& style) {
  if (frames < 1) throw SchemaViolation("synthetic_motion: frames must be >= 1");
  const int N = skel.joint_count();
  Rng rng(seed ^ 0xA11CEull);
  std::vector<double> phase(static_cast<size_t>(N));
  for (auto& p : phase) p = rng.uniform(0, 2 * M_PI);

  Motion m;
  m.fps = fps;
  m.rot6d = Tensor({frames, N, 6});
  m.root_pos = Tensor({frames, 3});

  auto chain_index = [](const std::string& name) {
    const auto us = name.rfind('_');
    if (us == std::string::npos) return 1;
    try {
      return std::stoi(name.substr(us + 1));
    } catch (...) {
      return 1;
    }
  };

  for (int t = 0; t < frames; ++t) {
    const double u = 2.0 * M_PI * style.cycles * t / frames;
    m.root_pos.at(t, 1) = style.root_bob * std::sin(u);
    for (int j = 0; j < N; ++j) {
      const std::string& name = skel.joint_names[static_cast<size_t>(j)];
      double ax = 0, ay = 0, az = 0;
      const double ph = phase[static_cast<size_t>(j)];
      if (name.rfind("arm_l", 0) == 0) {
        const int k = chain_index(name);
        if (k == 1) {
          az = style.arm_amplitude * std::sin(u + ph * 0.1);
          ay = -style.arm_cross * (0.5 + 0.5 * std::sin(u + 0.4));
        } else {
          az = 0.35 * style.arm_amplitude * std::sin(u + 1.1);
        }
      } else if (name.rfind("arm_r", 0) == 0) {
        const int k = chain_index(name);
        if (k == 1) {
          az = -style.arm_amplitude * std::sin(u + ph * 0.1);
          ay = style.arm_cross * (0.5 + 0.5 * std::sin(u + 0.4));
        } else {
          az = -0.35 * style.arm_amplitude * std::sin(u + 1.1);
        }
      } else if (name.rfind("leg_l", 0) == 0) {
        ax = style.leg_amplitude * std::sin(u);
      } else if (name.rfind("leg_r", 0) == 0) {
        ax = -style.leg_amplitude * std::sin(u);
      } else if (name.rfind("spine", 0) == 0) {
        az = style.spine_amplitude * std::sin(u + 0.7);
      } else if (name == "head") {
        az = 0.5 * style.spine_amplitude * std::sin(u + 1.9);
      }
      const Matrix3d R = rot_xyz(ax, ay, az);
      m.rot6d.at(t, j, 0) = R(0, 0);
      m.rot6d.at(t, j, 1) = R(1, 0);
      m.rot6d.at(t, j, 2) = R(2, 0);
      m.rot6d.at(t, j, 3) = R(0, 1);
      m.rot6d.at(t, j, 4) = R(1, 1);
      m.rot6d.at(t, j, 5) = R(2, 1);
    }
  }
  return m;
}

}  // namespace mrt
