#pragma once

#include <array>
#include <string>
#include <vector>

#include "mrt/autodiff.hpp"
#include "mrt/mesh.hpp"

namespace mrt {

/// Perspective pinhole camera.
struct Camera {
  std::string view_name;  // front | left | right
  std::array<double, 3> position{};
  std::array<double, 3> look_at{};
  std::array<double, 3> up{0, 1, 0};
  double fov_deg = 30.0;
  int width = 128, height = 128;
};

/// The three default views: cameras at 2.5x character height from the
/// centroid, looking at it.
std::vector<Camera> default_cameras(const std::array<double, 3>& centroid, double char_height,
                                    int image_size = 128);

/// Per-camera soft silhouette occupancy images in [0,1].
struct RenderedFrame {
  std::vector<Tensor> images;  // each (H,W)
};

/// Soft silhouette rasterization over the tape. Per-pixel occupancy is
/// 1 - prod_f (1 - sigmoid(d_f / tau)) with d_f the signed 2-D pixel
/// distance to the projected face and tau = tau_scale * image diagonal.
/// Depth is discarded.
ad::Var render_silhouette(const ad::Var& vertices, const std::vector<std::array<int, 3>>& faces,
                          const Camera& camera, double tau_scale = 1e-4);

/// Convenience: all cameras, plain tensors in, plain tensors out.
RenderedFrame render_views(const Tensor& vertices, const std::vector<std::array<int, 3>>& faces,
                           const std::vector<Camera>& cameras, double tau_scale = 1e-4);

/// Non-differentiable z-buffered lambert render, used for image export and
/// external vision-language queries.
Tensor render_shaded(const Tensor& vertices, const std::vector<std::array<int, 3>>& faces,
                     const Camera& camera);

}  // namespace mrt
