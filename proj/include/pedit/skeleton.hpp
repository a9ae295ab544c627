#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "pedit/image.hpp"

namespace pedit {

/// COCO 17-keypoint body order.
enum Joint : int {
  kNose = 0,
  kLeftEye,
  kRightEye,
  kLeftEar,
  kRightEar,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
  kLeftHip,
  kRightHip,
  kLeftKnee,
  kRightKnee,
  kLeftAnkle,
  kRightAnkle,
};

inline constexpr int kBodyJointCount = 17;

inline constexpr std::array<std::pair<int, int>, 19> kBodyLimbs = {{
    {kLeftAnkle, kLeftKnee},
    {kLeftKnee, kLeftHip},
    {kRightAnkle, kRightKnee},
    {kRightKnee, kRightHip},
    {kLeftHip, kRightHip},
    {kLeftShoulder, kLeftHip},
    {kRightShoulder, kRightHip},
    {kLeftShoulder, kRightShoulder},
    {kLeftShoulder, kLeftElbow},
    {kRightShoulder, kRightElbow},
    {kLeftElbow, kLeftWrist},
    {kRightElbow, kRightWrist},
    {kLeftEye, kRightEye},
    {kNose, kLeftEye},
    {kNose, kRightEye},
    {kLeftEye, kLeftEar},
    {kRightEye, kRightEar},
    {kLeftEar, kLeftShoulder},
    {kRightEar, kRightShoulder},
}};

/// OpenPose rendering colours; limbs and joints index into this cyclically.
inline constexpr std::array<Rgb, 18> kPoseColors = {{
    {255, 0, 0},   {255, 85, 0},  {255, 170, 0}, {255, 255, 0}, {170, 255, 0}, {85, 255, 0},
    {0, 255, 0},   {0, 255, 85},  {0, 255, 170}, {0, 255, 255}, {0, 170, 255}, {0, 85, 255},
    {0, 0, 255},   {85, 0, 255},  {170, 0, 255}, {255, 0, 255}, {255, 0, 170}, {255, 0, 85},
}};

inline constexpr Rgb limb_color(std::size_t limb) { return kPoseColors[limb % kPoseColors.size()]; }
inline constexpr Rgb joint_color(std::size_t joint) { return kPoseColors[joint % kPoseColors.size()]; }

}  // namespace pedit
