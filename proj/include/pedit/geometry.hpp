#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "pedit/scene.hpp"

namespace pedit {

/// Points at or behind this camera-frame depth are treated as not projectable.
inline constexpr double kMinDepth = 1e-6;

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Axis-aligned rectangle in continuous pixel coordinates.
struct RectF {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double cx() const noexcept { return 0.5 * (x_min + x_max); }
  double cy() const noexcept { return 0.5 * (y_min + y_max); }
  double area() const noexcept { return width() * height(); }

  friend bool operator==(const RectF&, const RectF&) = default;
};

enum class Visibility { Visible, Truncated, OutOfView };

struct ViewBox2D {
  ViewId view = ViewId::Front;
  RectF rect;
  Visibility visibility = Visibility::OutOfView;

  bool usable() const noexcept { return visibility != Visibility::OutOfView; }
};

struct Keypoint2D {
  double u = 0.0;
  double v = 0.0;
  bool valid = false;
};

struct Keypoints2D {
  ViewId view = ViewId::Front;
  std::vector<Keypoint2D> joints;
};

inline Eigen::Vector3d to_camera(const CameraView& view, const Eigen::Vector3d& p) {
  return view.rotation * p + view.translation;
}

inline Eigen::Vector3d to_world(const CameraView& view, const Eigen::Vector3d& pc) {
  return view.rotation.transpose() * (pc - view.translation);
}

/// Projects a camera-frame point. Returns nullopt when depth <= kMinDepth.
inline std::optional<PixelPoint> project_camera_point(const CameraView& view, const Eigen::Vector3d& pc) {
  if (!(pc.z() > kMinDepth)) return std::nullopt;
  const Eigen::Vector3d h = view.intrinsics * pc;
  return PixelPoint{h.x() / h.z(), h.y() / h.z(), pc.z()};
}

/// World point to pixel + depth, or nullopt for points behind the image plane.
inline std::optional<PixelPoint> project_point(const CameraView& view, const Eigen::Vector3d& p) {
  return project_camera_point(view, to_camera(view, p));
}

/// Inverse of project_point given the camera-frame depth.
inline Eigen::Vector3d unproject(const CameraView& view, double u, double v, double depth) {
  const Eigen::Vector3d ray = view.intrinsics.inverse() * Eigen::Vector3d(u, v, 1.0);
  return to_world(view, ray * depth);
}

/// World-space corners; bit 0 of the index selects +l/2, bit 1 +w/2, bit 2 +h/2.
inline std::array<Eigen::Vector3d, 8> box_corners(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hw = 0.5 * box.size.x();
  const double hl = 0.5 * box.size.y();
  const double hh = 0.5 * box.size.z();
  std::array<Eigen::Vector3d, 8> out;
  for (int i = 0; i < 8; ++i) {
    const double dl = (i & 1) ? hl : -hl;
    const double dw = (i & 2) ? hw : -hw;
    const double dh = (i & 4) ? hh : -hh;
    out[static_cast<std::size_t>(i)] =
        box.center + Eigen::Vector3d(c * dl - s * dw, s * dl + c * dw, dh);
  }
  return out;
}

/// Hull of the projectable corners, clipped to the image. Boxes with any
/// corner behind the camera or a hull leaving the image are Truncated.
inline ViewBox2D project_box3d(const CameraView& view, const Box3D& box) {
  ViewBox2D out;
  out.view = view.id;
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = x0;
  double x1 = -x0;
  double y1 = -x0;
  int projected = 0;
  for (const auto& corner : box_corners(box)) {
    const auto p = project_point(view, corner);
    if (!p) continue;
    ++projected;
    x0 = std::min(x0, p->u);
    x1 = std::max(x1, p->u);
    y0 = std::min(y0, p->v);
    y1 = std::max(y1, p->v);
  }
  if (projected == 0) return out;
  const double w = view.width;
  const double h = view.height;
  if (x1 <= 0.0 || y1 <= 0.0 || x0 >= w || y0 >= h) return out;
  const bool inside = x0 >= 0.0 && y0 >= 0.0 && x1 <= w && y1 <= h;
  out.rect = RectF{std::max(x0, 0.0), std::max(y0, 0.0), std::min(x1, w), std::min(y1, h)};
  out.visibility = (inside && projected == 8) ? Visibility::Visible : Visibility::Truncated;
  return out;
}

inline Keypoints2D project_skeleton(const CameraView& view, const Skeleton3D& skeleton) {
  Keypoints2D out;
  out.view = view.id;
  out.joints.reserve(skeleton.size());
  for (const auto& joint : skeleton) {
    const auto p = project_point(view, joint);
    out.joints.push_back(p ? Keypoint2D{p->u, p->v, true} : Keypoint2D{});
  }
  return out;
}

inline Eigen::Vector2d bev_center(const Box3D& box) { return box.center.head<2>(); }

inline double bev_distance(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return (a - b).norm(); }

/// Rotation taking world axes (x fwd, y left, z up) into a camera looking
/// horizontally along heading `yaw`, with x right and y down.
inline Eigen::Matrix3d level_camera_rotation(double yaw) {
  Eigen::Matrix3d r;
  r << std::sin(yaw), -std::cos(yaw), 0.0,
       0.0, 0.0, -1.0,
       std::cos(yaw), std::sin(yaw), 0.0;
  return r;
}

}  // namespace pedit
