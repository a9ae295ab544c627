#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pedit/attributes.hpp"
#include "pedit/geometry.hpp"
#include "pedit/scene.hpp"
#include "pedit/sprite.hpp"

namespace pedit {

/// A pedestrian walking in a straight line on the ground plane.
struct PedestrianSpec {
  std::string track_id = "ped0";
  Eigen::Vector2d start = {6.0, 0.0};     // ground position at first_frame, metres
  Eigen::Vector2d velocity = {0.0, 1.4};  // metres per second
  double scale = 1.0;                     // body size multiplier
  double phase = 0.0;                     // gait phase at first_frame, radians
  int first_frame = 0;
  int last_frame = -1;  // inclusive; -1 = end of clip
  std::string top = "white";
  std::string pants = "black";
};

struct FixtureSpec {
  int frame_count = 16;
  double fps = 10.0;
  int width = 640;
  int height = 400;
  double focal = 360.0;
  double camera_height = 1.6;
  double ring_radius = 0.5;
  /// Headings (radians, CCW from world +x) in canonical view order.
  std::array<double, kViewCount> yaws = {std::numbers::pi / 3, 0.0, -std::numbers::pi / 3,
                                         2 * std::numbers::pi / 3, std::numbers::pi, -2 * std::numbers::pi / 3};
  std::vector<PedestrianSpec> pedestrians;
  int supersample = 4;
  std::uint64_t seed = 0;
};

struct Fixture {
  Scene scene;
  Scene empty;  // same rig and clip rendered without pedestrians
  std::vector<std::string> warnings;
};

inline constexpr double kStrideHz = 0.9;
inline constexpr double kSwingAmplitude = 0.28;  // radians

/// Articulated 17-joint walking pose standing at `ground` facing `heading`.
inline Skeleton3D walking_skeleton(const Eigen::Vector2d& ground, double heading, double phase, double scale = 1.0) {
  const Eigen::Vector3d fwd(std::cos(heading), std::sin(heading), 0.0);
  const Eigen::Vector3d left(-std::sin(heading), std::cos(heading), 0.0);
  const Eigen::Vector3d up(0.0, 0.0, 1.0);
  const Eigen::Vector3d base(ground.x(), ground.y(), 0.0);
  auto at = [&](double f, double l, double u) -> Eigen::Vector3d { return base + scale * (f * fwd + l * left + u * up); };
  Skeleton3D s(kBodyJointCount);
  s[kNose] = at(0.09, 0.0, 1.60);
  s[kLeftEye] = at(0.07, 0.035, 1.64);
  s[kRightEye] = at(0.07, -0.035, 1.64);
  s[kLeftEar] = at(0.0, 0.075, 1.62);
  s[kRightEar] = at(0.0, -0.075, 1.62);
  s[kLeftShoulder] = at(0.0, 0.18, 1.42);
  s[kRightShoulder] = at(0.0, -0.18, 1.42);
  s[kLeftHip] = at(0.0, 0.10, 0.92);
  s[kRightHip] = at(0.0, -0.10, 0.92);
  const double swing = kSwingAmplitude * std::sin(phase);
  auto arm = [&](int shoulder, int elbow, int wrist, double a, double side) {
    const double fs = std::sin(a);
    const double us = std::cos(a);
    s[static_cast<std::size_t>(elbow)] = at(0.28 * fs, side, 1.42 - 0.28 * us);
    const double b = a + 0.25;
    s[static_cast<std::size_t>(wrist)] = at(0.28 * fs + 0.25 * std::sin(b), side, 1.42 - 0.28 * us - 0.25 * std::cos(b));
    (void)shoulder;
  };
  arm(kLeftShoulder, kLeftElbow, kLeftWrist, -swing, 0.19);
  arm(kRightShoulder, kRightElbow, kRightWrist, swing, -0.19);
  auto leg = [&](int knee, int ankle, double a, double side) {
    const double bend = 0.3 * std::max(0.0, -std::sin(a / kSwingAmplitude * std::numbers::pi / 2));
    const double kf = 0.42 * std::sin(a);
    const double ku = 0.92 - 0.42 * std::cos(a);
    s[static_cast<std::size_t>(knee)] = at(kf, side, ku);
    const double b = a - bend;
    s[static_cast<std::size_t>(ankle)] = at(kf + 0.42 * std::sin(b), side, ku - 0.42 * std::cos(b));
  };
  leg(kLeftKnee, kLeftAnkle, swing, 0.10);
  leg(kRightKnee, kRightAnkle, -swing, -0.10);
  return s;
}

/// Oriented box enclosing the walking body.
inline Box3D pedestrian_box(const Eigen::Vector2d& ground, double heading, double scale = 1.0) {
  Box3D b;
  b.center = Eigen::Vector3d(ground.x(), ground.y(), 0.9 * scale);
  b.size = Eigen::Vector3d(0.8, 0.8, 1.8) * scale;
  b.yaw = heading;
  return b;
}

/// Camera on the rig ring looking horizontally along `yaw`.
inline CameraView rig_camera(ViewId id, double yaw, const FixtureSpec& spec) {
  CameraView cam;
  cam.id = id;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.intrinsics << spec.focal, 0.0, 0.5 * spec.width, 0.0, spec.focal, 0.5 * spec.height, 0.0, 0.0, 1.0;
  cam.rotation = level_camera_rotation(yaw);
  const Eigen::Vector3d centre(spec.ring_radius * std::cos(yaw), spec.ring_radius * std::sin(yaw), spec.camera_height);
  cam.translation = -cam.rotation * centre;
  return cam;
}

/// Smooth sky/ground backdrop. All structure has periods of ~90 px or more
/// so that resampling round trips stay within a couple of grey levels.
inline ImageU8 render_backdrop(const CameraView& cam, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + static_cast<std::uint64_t>(view_index(cam.id)) + 1);
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  const double p1 = phase(rng), p2 = phase(rng), p3 = phase(rng);
  const double tint = 12.0 * std::sin(phase(rng));
  const double horizon = cam.intrinsics(1, 2);
  ImageU8 img(cam.height, cam.width, 3);
  for (int y = 0; y < cam.height; ++y) {
    const double t = std::clamp((y + 0.5 - horizon) / 60.0, -1.0, 1.0);
    const double ground_w = 0.5 + 0.5 * std::sin(0.5 * std::numbers::pi * t);
    for (int x = 0; x < cam.width; ++x) {
      const double sky_r = 135 + tint + 15 * std::sin(x / 140.0 + p1);
      const double sky_g = 160 + 10 * std::sin(x / 170.0 + p2);
      const double sky_b = 200 - 0.05 * y;
      const double tex = 14 * std::sin(x / 95.0 + p3) * std::cos(y / 80.0 + p1);
      const double gr = 105 + tex + 0.04 * y;
      const double gg = 118 + tex + tint * 0.5;
      const double gb = 92 + 0.5 * tex;
      std::uint8_t* px = img.pixel(y, x);
      px[0] = saturate_u8((1 - ground_w) * sky_r + ground_w * gr);
      px[1] = saturate_u8((1 - ground_w) * sky_g + ground_w * gg);
      px[2] = saturate_u8((1 - ground_w) * sky_b + ground_w * gb);
    }
  }
  return img;
}

/// Renders one pedestrian frame into `img` (view `cam`), anti-aliased.
inline void render_pedestrian(ImageU8& img, const CameraView& cam, const Skeleton3D& skeleton,
                              const Eigen::Vector3d& body_center, const AttributeToken& attrs, int supersample) {
  const Eigen::Vector3d pc = to_camera(cam, body_center);
  if (!(pc.z() > 0.2)) return;
  const double ppm = cam.intrinsics(0, 0) / pc.z();
  const auto kp = project_skeleton(cam, skeleton);
  draw_pedestrian(img, kp.joints, ppm, attrs, supersample);
}

/// Boxes and skeletons of a straight-line walker, clipped to the clip length.
inline std::vector<TrackFrame> walker_frames(const PedestrianSpec& ps, int frame_count, double fps) {
  std::vector<TrackFrame> frames;
  const int last = ps.last_frame < 0 ? frame_count - 1 : std::min(ps.last_frame, frame_count - 1);
  const double heading = std::atan2(ps.velocity.y(), ps.velocity.x());
  for (int f = std::max(0, ps.first_frame); f <= last; ++f) {
    const double t = (f - ps.first_frame) / fps;
    const Eigen::Vector2d g = ps.start + ps.velocity * t;
    const double moving = ps.velocity.norm() > 0 ? 1.0 : 0.0;
    const double phase = ps.phase + moving * 2 * std::numbers::pi * kStrideHz * t;
    TrackFrame tf;
    tf.frame = f;
    tf.box = pedestrian_box(g, heading, ps.scale);
    tf.skeleton = walking_skeleton(g, heading, phase, ps.scale);
    frames.push_back(std::move(tf));
  }
  return frames;
}

/// Procedural desk-scale scene: six ring cameras, smooth backdrop and
/// straight-line walkers with exact boxes and skeletons.
inline Fixture make_fixture(const FixtureSpec& spec) {
  Fixture fx;
  Scene& scene = fx.scene;
  scene.frame_count = spec.frame_count;
  scene.joint_count = kBodyJointCount;
  for (ViewId v : kCanonicalViews) {
    scene.views[static_cast<std::size_t>(view_index(v))] =
        rig_camera(v, spec.yaws[static_cast<std::size_t>(view_index(v))], spec);
  }
  for (const auto& ps : spec.pedestrians) {
    PedestrianTrack track;
    track.track_id = ps.track_id;
    track.attributes = AttributeToken::from_names(ps.top, ps.pants);
    track.frames = walker_frames(ps, spec.frame_count, spec.fps);
    std::array<int, kViewCount> counts{};
    for (const auto& tf : track.frames) {
      for (ViewId v : kCanonicalViews) {
        if (project_box3d(scene.view(v), tf.box).usable()) ++counts[static_cast<std::size_t>(view_index(v))];
      }
    }
    const auto best = std::max_element(counts.begin(), counts.end());
    track.dominant_view = kCanonicalViews[static_cast<std::size_t>(best - counts.begin())];
    if (*best == 0) fx.warnings.push_back("pedestrian '" + ps.track_id + "' is outside every view for the whole clip");
    scene.tracks.push_back(std::move(track));
  }
  fx.empty = scene;
  fx.empty.tracks.clear();
  for (ViewId v : kCanonicalViews) {
    const auto& cam = scene.view(v);
    const ImageU8 backdrop = render_backdrop(cam, spec.seed);
    auto& video = scene.video(v);
    fx.empty.video(v) = Video(static_cast<std::size_t>(spec.frame_count), backdrop);
    video.clear();
    for (int f = 0; f < spec.frame_count; ++f) {
      ImageU8 frame = backdrop;
      // Painter's order: far pedestrians first.
      std::vector<std::pair<double, const PedestrianTrack*>> order;
      for (const auto& tr : scene.tracks) {
        if (const auto* tf = tr.at_frame(f)) order.emplace_back(to_camera(cam, tf->box.center).z(), &tr);
      }
      std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      for (const auto& [depth, tr] : order) {
        const auto* tf = tr->at_frame(f);
        render_pedestrian(frame, cam, *tf->skeleton, tf->box.center, tr->attributes, spec.supersample);
      }
      video.push_back(std::move(frame));
    }
  }
  return fx;
}

}  // namespace pedit
