#include "mrt/render.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace mrt {

using Eigen::Vector2d;
using Eigen::Vector3d;

std::vector<Camera> default_cameras(const std::array<double, 3>& centroid, double char_height,
                                    int image_size) {
  const double d = 2.5 * char_height;
  const Vector3d c(centroid[0], centroid[1], centroid[2]);
  auto mk = [&](const char* name, const Vector3d& offset) {
    Camera cam;
    cam.view_name = name;
    cam.position = {c[0] + offset[0], c[1] + offset[1], c[2] + offset[2]};
    cam.look_at = centroid;
    cam.width = cam.height = image_size;
    return cam;
  };
  return {mk("front", {0, 0, d}), mk("left", {d, 0, 0}), mk("right", {-d, 0, 0})};
}

namespace {

struct CameraBasis {
  Vector3d pos, right, up, fwd;
  double focal = 0;
  int W = 0, H = 0;

  explicit CameraBasis(const Camera& cam) {
    pos = Vector3d(cam.position[0], cam.position[1], cam.position[2]);
    const Vector3d target(cam.look_at[0], cam.look_at[1], cam.look_at[2]);
    fwd = target - pos;
    if (fwd.norm() < 1e-12) throw DegenerateCamera("camera position equals look_at");
    fwd.normalize();
    const Vector3d up_hint(cam.up[0], cam.up[1], cam.up[2]);
    right = fwd.cross(up_hint);
    if (right.norm() < 1e-12) throw DegenerateCamera("camera up is parallel to view direction");
    right.normalize();
    up = right.cross(fwd);
    focal = 1.0 / std::tan(cam.fov_deg * M_PI / 360.0);
    W = cam.width;
    H = cam.height;
  }

  /// Projects to pixel coordinates; when `jac` is given also fills the 2x3
  /// world-space Jacobian [du/dp; dv/dp].
  Vector2d project(const Vector3d& p, Eigen::Matrix<double, 2, 3>* jac = nullptr) const {
    const Vector3d d = p - pos;
    const double xc = d.dot(right), yc = d.dot(up), zc = d.dot(fwd);
    const double aspect = static_cast<double>(W) / H;
    const double inv_z = 1.0 / zc;
    const double xn = focal * xc * inv_z / aspect;
    const double yn = focal * yc * inv_z;
    const Vector2d px((xn + 1.0) * 0.5 * W, (1.0 - yn) * 0.5 * H);
    if (jac) {
      const Vector3d dxn = (focal * inv_z / aspect) * right - (focal * xc * inv_z * inv_z / aspect) * fwd;
      const Vector3d dyn = (focal * inv_z) * up - (focal * yc * inv_z * inv_z) * fwd;
      jac->row(0) = (0.5 * W) * dxn.transpose();
      jac->row(1) = (-0.5 * H) * dyn.transpose();
    }
    return px;
  }
};

struct SegHit {
  double dist;
  double s;  // clamped segment parameter
  Vector2d n;  // unit vector from closest point toward the query
};

SegHit point_segment(const Vector2d& p, const Vector2d& a, const Vector2d& b) {
  const Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  double s = len2 > 1e-300 ? (p - a).dot(ab) / len2 : 0.0;
  s = std::min(1.0, std::max(0.0, s));
  const Vector2d q = a + s * ab;
  const Vector2d d = p - q;
  const double dist = d.norm();
  SegHit h;
  h.dist = dist;
  h.s = s;
  h.n = dist > 1e-12 ? Vector2d(d / dist) : Vector2d(0, 0);
  return h;
}

/// Signed 2-D distance from pixel p to triangle (a,b,c): positive inside.
/// `edge` and `hit` report the nearest boundary feature for gradients.
double signed_tri_distance(const Vector2d& p, const Vector2d& a, const Vector2d& b,
                           const Vector2d& c, int* edge, SegHit* hit) {
  const double ca = (b - a).x() * (p - a).y() - (b - a).y() * (p - a).x();
  const double cb = (c - b).x() * (p - b).y() - (c - b).y() * (p - b).x();
  const double cc = (a - c).x() * (p - c).y() - (a - c).y() * (p - c).x();
  const bool inside = (ca >= 0 && cb >= 0 && cc >= 0) || (ca <= 0 && cb <= 0 && cc <= 0);
  const SegHit h0 = point_segment(p, a, b);
  const SegHit h1 = point_segment(p, b, c);
  const SegHit h2 = point_segment(p, c, a);
  int e = 0;
  SegHit best = h0;
  if (h1.dist < best.dist) {
    best = h1;
    e = 1;
  }
  if (h2.dist < best.dist) {
    best = h2;
    e = 2;
  }
  if (edge) *edge = e;
  if (hit) *hit = best;
  return inside ? best.dist : -best.dist;
}

double stable_sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double log1m_sigmoid(double x) {  // log(1 - sigmoid(x)) = -softplus(x)
  return x > 0 ? -(x + std::log1p(std::exp(-x))) : -std::log1p(std::exp(x));
}

constexpr double kBandLogits = 30.0;  // sigmoid saturation cut in units of tau

}  // namespace

ad::Var render_silhouette(const ad::Var& vertices, const std::vector<std::array<int, 3>>& faces,
                          const Camera& camera, double tau_scale) {
  const Tensor& vt = vertices.value();
  if (vt.rank() != 2 || vt.dim(1) != 3) throw ShapeMismatch("render_silhouette: vertices (V,3)");
  const CameraBasis basis(camera);
  const int W = basis.W, H = basis.H, V = vt.dim(0);
  const double tau = tau_scale * std::sqrt(static_cast<double>(W) * W + static_cast<double>(H) * H);
  const double band = kBandLogits * tau;
  const int pad = static_cast<int>(std::ceil(band)) + 1;

  std::vector<Vector2d> px(static_cast<size_t>(V));
  for (int v = 0; v < V; ++v)
    px[static_cast<size_t>(v)] =
        basis.project(Vector3d(vt.at(v, 0), vt.at(v, 1), vt.at(v, 2)));

  // Accumulate log(1 - s) per pixel; occupancy = 1 - exp(logsum).
  auto logsum = std::make_shared<Tensor>(Shape{H, W});
  for (const auto& f : faces) {
    const Vector2d a = px[static_cast<size_t>(f[0])];
    const Vector2d b = px[static_cast<size_t>(f[1])];
    const Vector2d c = px[static_cast<size_t>(f[2])];
    const double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area2) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - pad)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}) + pad)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - pad)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}) + pad)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Vector2d p(x + 0.5, y + 0.5);
        const double d = signed_tri_distance(p, a, b, c, nullptr, nullptr);
        if (d <= -band) continue;
        logsum->at(y, x) += log1m_sigmoid(d / tau);
      }
  }

  Tensor img({H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) img.at(y, x) = 1.0 - std::exp(logsum->at(y, x));

  auto faces_copy = std::make_shared<std::vector<std::array<int, 3>>>(faces);
  const Camera cam_copy = camera;

  return ad::make_op(
      "render_silhouette", std::move(img), {vertices},
      [faces_copy, cam_copy, tau, band, pad, V, W, H, logsum](ad::Node& n) {
        const Tensor& vt = n.parents[0]->value;
        Tensor& gv = n.parents[0]->ensure_grad();
        const CameraBasis basis(cam_copy);
        std::vector<Vector2d> px(static_cast<size_t>(V));
        std::vector<Eigen::Matrix<double, 2, 3>> jac(static_cast<size_t>(V));
        for (int v = 0; v < V; ++v)
          px[static_cast<size_t>(v)] = basis.project(
              Vector3d(vt.at(v, 0), vt.at(v, 1), vt.at(v, 2)), &jac[static_cast<size_t>(v)]);

        for (const auto& f : *faces_copy) {
          const Vector2d a = px[static_cast<size_t>(f[0])];
          const Vector2d b = px[static_cast<size_t>(f[1])];
          const Vector2d c = px[static_cast<size_t>(f[2])];
          const double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
          if (std::abs(area2) < 1e-12) continue;
          const int x0 =
              std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - pad)));
          const int x1 =
              std::min(W - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}) + pad)));
          const int y0 =
              std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - pad)));
          const int y1 =
              std::min(H - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}) + pad)));
          Vector2d g2[3] = {Vector2d::Zero(), Vector2d::Zero(), Vector2d::Zero()};
          for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
              const double go = n.grad.at(y, x);
              if (go == 0.0) continue;
              const Vector2d p(x + 0.5, y + 0.5);
              int edge = 0;
              SegHit hit;
              const double d = signed_tri_distance(p, a, b, c, &edge, &hit);
              if (d <= -band || hit.dist <= 1e-12) continue;
              // occupancy o = 1 - exp(L); dL/dd = -s/tau.
              const double gL = -std::exp(logsum->at(y, x)) * go;
              const double gd = gL * (-stable_sigmoid(d / tau) / tau);
              const double sgn = d >= 0 ? 1.0 : -1.0;
              // d = sgn * |p - q(edge)|; dq distributes along the edge.
              const Vector2d gn = (sgn * gd) * hit.n;
              const int i0 = edge, i1 = (edge + 1) % 3;
              g2[i0] -= (1.0 - hit.s) * gn;
              g2[i1] -= hit.s * gn;
            }
          for (int k = 0; k < 3; ++k) {
            const Vector3d g3 = jac[static_cast<size_t>(f[static_cast<size_t>(k)])].transpose() *
                                g2[static_cast<size_t>(k)];
            for (int c3 = 0; c3 < 3; ++c3) gv.at(f[static_cast<size_t>(k)], c3) += g3[c3];
          }
        }
      });
}

RenderedFrame render_views(const Tensor& vertices, const std::vector<std::array<int, 3>>& faces,
                           const std::vector<Camera>& cameras, double tau_scale) {
  RenderedFrame frame;
  ad::Var v = ad::Var::leaf(vertices);
  for (const auto& cam : cameras)
    frame.images.push_back(render_silhouette(v, faces, cam, tau_scale).value());
  return frame;
}

Tensor render_shaded(const Tensor& vertices, const std::vector<std::array<int, 3>>& faces,
                     const Camera& camera) {
  if (vertices.rank() != 2 || vertices.dim(1) != 3)
    throw ShapeMismatch("render_shaded: vertices (V,3)");
  const CameraBasis basis(camera);
  const int W = basis.W, H = basis.H, V = vertices.dim(0);
  Tensor img({H, W});
  Tensor zbuf = Tensor::full({H, W}, 1e300);
  const Vector3d light = Vector3d(0.35, 0.8, 0.55).normalized();

  std::vector<Vector2d> px(static_cast<size_t>(V));
  std::vector<double> depth(static_cast<size_t>(V));
  for (int v = 0; v < V; ++v) {
    const Vector3d p(vertices.at(v, 0), vertices.at(v, 1), vertices.at(v, 2));
    px[static_cast<size_t>(v)] = basis.project(p);
    depth[static_cast<size_t>(v)] = (p - basis.pos).dot(basis.fwd);
  }
  for (const auto& f : faces) {
    const Vector2d a = px[static_cast<size_t>(f[0])], b = px[static_cast<size_t>(f[1])],
                   c = px[static_cast<size_t>(f[2])];
    const double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area2) < 1e-12) continue;
    Vector3d wa(vertices.at(f[0], 0), vertices.at(f[0], 1), vertices.at(f[0], 2));
    Vector3d wb(vertices.at(f[1], 0), vertices.at(f[1], 1), vertices.at(f[1], 2));
    Vector3d wc(vertices.at(f[2], 0), vertices.at(f[2], 1), vertices.at(f[2], 2));
    Vector3d nrm = (wb - wa).cross(wc - wa);
    if (nrm.norm() < 1e-15) continue;
    nrm.normalize();
    if (nrm.dot(basis.fwd) > 0) nrm = -nrm;  // face the camera
    const double shade = 0.25 + 0.75 * std::max(0.0, nrm.dot(light));
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Vector2d p(x + 0.5, y + 0.5);
        const double u = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area2;
        const double v2 = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area2;
        const double w = 1.0 - u - v2;
        if (u < 0 || v2 < 0 || w < 0) continue;
        const double z = u * depth[static_cast<size_t>(f[0])] +
                         v2 * depth[static_cast<size_t>(f[1])] +
                         w * depth[static_cast<size_t>(f[2])];
        if (z < zbuf.at(y, x)) {
          zbuf.at(y, x) = z;
          img.at(y, x) = shade;
        }
      }
  }
  return img;
}

}  // namespace mrt
