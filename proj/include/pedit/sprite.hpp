#pragma once

#include <vector>

#include <Eigen/Core>

#include "pedit/attributes.hpp"
#include "pedit/draw.hpp"
#include "pedit/geometry.hpp"
#include "pedit/skeleton.hpp"

namespace pedit {

inline constexpr Rgb kSkinTone{225, 180, 150};

/// Body proportions of the stylised pedestrian, in metres.
struct SpriteProportions {
  double leg_radius = 0.06;
  double arm_radius = 0.045;
  double torso_radius = 0.12;
  double head_radius = 0.11;
  double torso_length = 0.5;  // shoulder midpoint to hip midpoint
};

namespace detail {

inline Eigen::Vector2d kp(const std::vector<Keypoint2D>& j, int i) { return {j[static_cast<std::size_t>(i)].u, j[static_cast<std::size_t>(i)].v}; }
inline bool ok(const std::vector<Keypoint2D>& j, int i) { return j[static_cast<std::size_t>(i)].valid; }

}  // namespace detail

/// Pixels per metre implied by the 2D torso length, or 0 if unavailable.
inline double sprite_scale_from_keypoints(const std::vector<Keypoint2D>& j, const SpriteProportions& p = {}) {
  using detail::kp;
  using detail::ok;
  if (j.size() < static_cast<std::size_t>(kBodyJointCount)) return 0.0;
  if (!ok(j, kLeftShoulder) || !ok(j, kRightShoulder) || !ok(j, kLeftHip) || !ok(j, kRightHip)) return 0.0;
  const Eigen::Vector2d sh = 0.5 * (kp(j, kLeftShoulder) + kp(j, kRightShoulder));
  const Eigen::Vector2d hp = 0.5 * (kp(j, kLeftHip) + kp(j, kRightHip));
  return (sh - hp).norm() / p.torso_length;
}

/// Draws the stylised pedestrian (legs in pants colour, torso and sleeves in
/// top colour, skin-tone head) over 2D keypoints at `ppm` pixels per metre.
inline void draw_pedestrian(ImageU8& img, const std::vector<Keypoint2D>& j, double ppm, const AttributeToken& attrs,
                            int supersample = 1, const SpriteProportions& p = {}) {
  using detail::kp;
  using detail::ok;
  if (j.size() < static_cast<std::size_t>(kBodyJointCount) || !(ppm > 0.0)) return;
  const auto top = draw::rgb(attrs.top.rgb);
  const auto pants = draw::rgb(attrs.pants.rgb);
  const auto skin = draw::rgb(kSkinTone);
  auto limb = [&](int a, int b, double radius, const std::array<std::uint8_t, 3>& col) {
    if (ok(j, a) && ok(j, b)) draw::capsule<std::uint8_t>(img, kp(j, a), kp(j, b), radius * ppm, col, supersample);
  };
  limb(kLeftHip, kLeftKnee, p.leg_radius, pants);
  limb(kLeftKnee, kLeftAnkle, p.leg_radius, pants);
  limb(kRightHip, kRightKnee, p.leg_radius, pants);
  limb(kRightKnee, kRightAnkle, p.leg_radius, pants);
  if (ok(j, kLeftShoulder) && ok(j, kRightShoulder) && ok(j, kLeftHip) && ok(j, kRightHip)) {
    draw::polygon<std::uint8_t>(img, {kp(j, kLeftShoulder), kp(j, kRightShoulder), kp(j, kRightHip), kp(j, kLeftHip)},
                                top, supersample);
    const Eigen::Vector2d sh = 0.5 * (kp(j, kLeftShoulder) + kp(j, kRightShoulder));
    const Eigen::Vector2d hp = 0.5 * (kp(j, kLeftHip) + kp(j, kRightHip));
    draw::capsule<std::uint8_t>(img, sh, hp, p.torso_radius * ppm, top, supersample);
  }
  limb(kLeftShoulder, kRightShoulder, p.arm_radius, top);
  limb(kLeftHip, kRightHip, p.leg_radius, top);
  limb(kLeftShoulder, kLeftElbow, p.arm_radius, top);
  limb(kLeftElbow, kLeftWrist, p.arm_radius, top);
  limb(kRightShoulder, kRightElbow, p.arm_radius, top);
  limb(kRightElbow, kRightWrist, p.arm_radius, top);
  Eigen::Vector2d head;
  if (ok(j, kLeftEar) && ok(j, kRightEar)) {
    head = 0.5 * (kp(j, kLeftEar) + kp(j, kRightEar));
  } else if (ok(j, kNose)) {
    head = kp(j, kNose);
  } else {
    return;
  }
  draw::disc<std::uint8_t>(img, head, p.head_radius * ppm, skin, supersample);
}

/// Interior of the torso capsule: the middle `span` of the shoulder-to-hip
/// axis, `width` torso radii across. Used to measure clothing colour.
/// Empty when the torso keypoints are missing.
inline std::vector<Eigen::Vector2d> torso_core(const std::vector<Keypoint2D>& j, double span = 0.6,
                                               double width = 1.0, const SpriteProportions& p = {}) {
  using detail::kp;
  const double ppm = sprite_scale_from_keypoints(j, p);
  if (!(ppm > 0.0)) return {};
  const Eigen::Vector2d sh = 0.5 * (kp(j, kLeftShoulder) + kp(j, kRightShoulder));
  const Eigen::Vector2d hp = 0.5 * (kp(j, kLeftHip) + kp(j, kRightHip));
  const Eigen::Vector2d axis = hp - sh;
  const Eigen::Vector2d a = sh + 0.5 * (1.0 - span) * axis, b = sh + 0.5 * (1.0 + span) * axis;
  const Eigen::Vector2d n = Eigen::Vector2d(-axis.y(), axis.x()).normalized() * (0.5 * width * p.torso_radius * ppm);
  return {a + n, b + n, b - n, a - n};
}

}  // namespace pedit
