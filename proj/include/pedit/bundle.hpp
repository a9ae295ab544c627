#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedit/attributes.hpp"
#include "pedit/crop_canvas.hpp"
#include "pedit/mask_pose.hpp"

namespace pedit {

/// Everything a generator sees. `pose_keypoints` holds the canvas-space
/// joints behind `pose` (empty when the raster is all zero).
struct ConditioningBundle {
  CanvasClip masked_canvas;
  MaskVolume mask;
  Video pose;
  AttributeToken attributes;
  std::uint64_t seed = 0;
  PoseSequence pose_keypoints;

  int frame_count() const noexcept { return masked_canvas.frame_count(); }

  /// Shape agreement across the three videos plus the zeroed-mask rule.
  void validate() const {
    const auto n = masked_canvas.frames.size();
    if (mask.frames.size() != n || pose.size() != n) throw ValidationError("bundle: frame count mismatch");
    for (std::size_t f = 0; f < n; ++f) {
      const auto& c = masked_canvas.frames[f];
      const auto& m = mask.frames[f];
      const auto& p = pose[f];
      if (c.channels() != 3 || p.channels() != 3 || m.channels() != 1) throw ValidationError("bundle: channel mismatch");
      if (m.height() != c.height() || m.width() != c.width() || p.height() != c.height() || p.width() != c.width()) {
        throw ValidationError("bundle: frame " + std::to_string(f) + " shape mismatch");
      }
      for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
          const auto v = m.at(y, x);
          if (v > 1) throw ValidationError("bundle: mask is not binary");
          if (v) {
            const auto* px = c.pixel(y, x);
            if (px[0] || px[1] || px[2]) throw ValidationError("bundle: masked pixel is not zero");
          }
        }
      }
    }
    if (!pose_keypoints.empty() && pose_keypoints.size() != n) throw ValidationError("bundle: keypoint frame count mismatch");
  }
};

/// Zeroes the masked pixels of `canvas`.
inline CanvasClip apply_mask(const CanvasClip& canvas, const MaskVolume& mask) {
  if (mask.frames.size() != canvas.frames.size()) throw ValidationError("apply_mask: frame count mismatch");
  CanvasClip out = canvas;
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    const auto& m = mask.frames[f];
    auto& img = out.frames[f];
    if (m.height() != img.height() || m.width() != img.width()) throw ValidationError("apply_mask: shape mismatch");
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (m.at(y, x)) {
          auto* p = img.pixel(y, x);
          p[0] = p[1] = p[2] = 0;
        }
      }
    }
  }
  return out;
}

inline ConditioningBundle make_bundle(const CanvasClip& canvas, const MaskVolume& mask, Video pose,
                                      const AttributeToken& attributes, std::uint64_t seed,
                                      PoseSequence pose_keypoints = {}) {
  ConditioningBundle b;
  b.masked_canvas = apply_mask(canvas, mask);
  b.mask = mask;
  b.pose = std::move(pose);
  b.attributes = attributes;
  b.seed = seed;
  b.pose_keypoints = std::move(pose_keypoints);
  b.validate();
  return b;
}

/// Overwrites every mask=0 pixel of `out` with the bundle's masked canvas.
inline void enforce_background(CanvasClip& out, const ConditioningBundle& b) {
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    const auto& m = b.mask.frames[f];
    const auto& src = b.masked_canvas.frames[f];
    auto& dst = out.frames[f];
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (!m.at(y, x)) std::copy_n(src.pixel(y, x), 3, dst.pixel(y, x));
      }
    }
  }
}

/// Whether slot `s` of frame `f` has any masked pixel.
inline bool tile_has_mask(const ConditioningBundle& b, int f, int s) {
  const auto& L = b.masked_canvas.layout;
  const auto& m = b.mask.frames[static_cast<std::size_t>(f)];
  for (int y = 0; y < L.tile.height; ++y) {
    for (int x = 0; x < L.tile.width; ++x) {
      if (m.at(L.slot_y0(s) + y, L.slot_x0(s) + x)) return true;
    }
  }
  return false;
}

}  // namespace pedit
