#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "pedit/attributes.hpp"
#include "pedit/crop_canvas.hpp"
#include "pedit/draw.hpp"
#include "pedit/geometry.hpp"
#include "pedit/image.hpp"
#include "pedit/skeleton.hpp"

namespace pedit {

/// Binary editable-region volume at canvas resolution (1 = regenerate).
struct MaskVolume {
  std::vector<ImageU8> frames;  // single channel, values in {0, 1}

  int frame_count() const noexcept { return static_cast<int>(frames.size()); }
  bool any() const {
    return std::any_of(frames.begin(), frames.end(), [](const ImageU8& m) { return count_nonzero(m) > 0; });
  }
};

inline MaskVolume empty_mask(const CanvasLayout& layout, int frame_count) {
  return {std::vector<ImageU8>(static_cast<std::size_t>(frame_count),
                               ImageU8(layout.canvas_height(), layout.canvas_width(), 1))};
}

/// Fills tile pixels whose centres lie inside `r` (tile coordinates) and
/// inside `content` (the non-pad part of the tile).
inline void fill_tile_rect(ImageU8& canvas_mask, const CanvasLayout& layout, int slot, const RectF& r,
                           const RectF& content) {
  const double x0 = std::max(r.x_min, content.x_min);
  const double y0 = std::max(r.y_min, content.y_min);
  const double x1 = std::min(r.x_max, content.x_max);
  const double y1 = std::min(r.y_max, content.y_max);
  const int ix0 = std::max(0, static_cast<int>(std::ceil(x0 - 0.5)));
  const int iy0 = std::max(0, static_cast<int>(std::ceil(y0 - 0.5)));
  const int ix1 = std::min(layout.tile.width, static_cast<int>(std::ceil(x1 - 0.5)));
  const int iy1 = std::min(layout.tile.height, static_cast<int>(std::ceil(y1 - 0.5)));
  const int oy = layout.slot_y0(slot);
  const int ox = layout.slot_x0(slot);
  for (int y = iy0; y < iy1; ++y) {
    for (int x = ix0; x < ix1; ++x) canvas_mask.at(oy + y, ox + x) = 1;
  }
}

/// Masks each visible box, grown by `mask_factor`, inside its tile.
/// `boxes` is indexed [view][frame] in canonical view order.
inline MaskVolume build_mask_from_boxes(const std::array<std::vector<std::optional<ViewBox2D>>, kViewCount>& boxes,
                                        const CanvasClip& clip, double mask_factor) {
  MaskVolume mask = empty_mask(clip.layout, clip.frame_count());
  for (int s = 0; s < kViewCount; ++s) {
    if (clip.layout.placeholder[static_cast<std::size_t>(s)]) continue;
    const ViewId v = clip.layout.view_order[static_cast<std::size_t>(s)];
    const auto& view_boxes = boxes[static_cast<std::size_t>(view_index(v))];
    const auto& transforms = clip.transforms[static_cast<std::size_t>(s)];
    for (int f = 0; f < clip.frame_count(); ++f) {
      const auto& t = transforms[static_cast<std::size_t>(f)];
      if (!t || static_cast<std::size_t>(f) >= view_boxes.size()) continue;
      const auto& box = view_boxes[static_cast<std::size_t>(f)];
      if (!box || !box->usable()) continue;
      const RectF grown = expand_rect(box->rect, mask_factor);
      fill_tile_rect(mask.frames[static_cast<std::size_t>(f)], clip.layout, s, t->source_to_tile(grown),
                     t->content_rect());
    }
  }
  return mask;
}

/// Editable mask for one track: bbox grown by `mask_factor` (default 1.2),
/// mapped into each tile through the crop transforms of `clip`.
inline MaskVolume build_mask(const Scene& scene, const PedestrianTrack& track, const CanvasClip& clip,
                             double mask_factor = 1.2) {
  std::array<std::vector<std::optional<ViewBox2D>>, kViewCount> boxes;
  for (ViewId v : kCanonicalViews) boxes[static_cast<std::size_t>(view_index(v))] = track_boxes(scene, track, v);
  return build_mask_from_boxes(boxes, clip, mask_factor);
}

// ---------------------------------------------------------------------------
// Pose rasters

struct PoseStyle {
  double limb_width = 4.0;
  double joint_radius = 4.0;
};

/// OpenPose-style skeleton drawing in tile coordinates. Limbs with an
/// invalid endpoint and invalid joints are skipped.
inline ImageU8 rasterize_pose(const std::vector<Keypoint2D>& joints, TileSize tile, const PoseStyle& style = {}) {
  ImageU8 out(tile.height, tile.width, 3);
  if (joints.size() < static_cast<std::size_t>(kBodyJointCount)) {
    // Only the 17-joint body convention has a limb table; draw joints alone.
    for (std::size_t j = 0; j < joints.size(); ++j) {
      if (!joints[j].valid) continue;
      const auto col = draw::rgb(joint_color(j));
      draw::disc<std::uint8_t>(out, {joints[j].u, joints[j].v}, style.joint_radius, col);
    }
    return out;
  }
  for (std::size_t l = 0; l < kBodyLimbs.size(); ++l) {
    const auto& a = joints[static_cast<std::size_t>(kBodyLimbs[l].first)];
    const auto& b = joints[static_cast<std::size_t>(kBodyLimbs[l].second)];
    if (!a.valid || !b.valid) continue;
    const auto col = draw::rgb(limb_color(l));
    draw::capsule<std::uint8_t>(out, {a.u, a.v}, {b.u, b.v}, 0.5 * style.limb_width, col);
  }
  for (std::size_t j = 0; j < joints.size(); ++j) {
    if (!joints[j].valid || style.joint_radius <= 0.0) continue;
    const auto col = draw::rgb(joint_color(j));
    draw::disc<std::uint8_t>(out, {joints[j].u, joints[j].v}, style.joint_radius, col);
  }
  return out;
}

/// Channel-wise max filter with a (2r+1)^2 square element, applied
/// `iterations` times. Out-of-image neighbours are ignored.
template <typename T>
Image<T> dilate(const Image<T>& src, int radius, int iterations = 1) {
  if (radius < 0) throw ValidationError("dilate: radius must be >= 0");
  Image<T> cur = src;
  if (radius == 0) return cur;
  const int h = src.height();
  const int w = src.width();
  const int ch = src.channels();
  Image<T> tmp(h, w, ch);
  for (int it = 0; it < iterations; ++it) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int xa = std::max(0, x - radius);
        const int xb = std::min(w - 1, x + radius);
        for (int c = 0; c < ch; ++c) {
          T m = cur.at(y, xa, c);
          for (int k = xa + 1; k <= xb; ++k) m = std::max(m, cur.at(y, k, c));
          tmp.at(y, x, c) = m;
        }
      }
    }
    for (int y = 0; y < h; ++y) {
      const int ya = std::max(0, y - radius);
      const int yb = std::min(h - 1, y + radius);
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < ch; ++c) {
          T m = tmp.at(ya, x, c);
          for (int k = ya + 1; k <= yb; ++k) m = std::max(m, tmp.at(k, x, c));
          cur.at(y, x, c) = m;
        }
      }
    }
  }
  return cur;
}

/// Skeleton of one tile in canvas coordinates.
struct TileKeypoints {
  int slot = 0;
  std::vector<Keypoint2D> joints;
};

/// [frame] -> skeletons visible in that canvas frame.
using PoseSequence = std::vector<std::vector<TileKeypoints>>;

/// Projects per-frame 3D skeletons into every non-placeholder tile of `clip`.
inline PoseSequence map_skeletons_to_canvas(const Scene& scene, const std::vector<std::optional<Skeleton3D>>& skeletons,
                                            const CanvasClip& clip) {
  PoseSequence seq(static_cast<std::size_t>(clip.frame_count()));
  for (int s = 0; s < kViewCount; ++s) {
    if (clip.layout.placeholder[static_cast<std::size_t>(s)]) continue;
    const ViewId v = clip.layout.view_order[static_cast<std::size_t>(s)];
    const Eigen::Vector2d origin(clip.layout.slot_x0(s), clip.layout.slot_y0(s));
    for (int f = 0; f < clip.frame_count(); ++f) {
      const auto& t = clip.transforms[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)];
      if (!t || static_cast<std::size_t>(f) >= skeletons.size() || !skeletons[static_cast<std::size_t>(f)]) continue;
      const auto kp = project_skeleton(scene.view(v), *skeletons[static_cast<std::size_t>(f)]);
      TileKeypoints tk;
      tk.slot = s;
      for (const auto& j : kp.joints) {
        if (!j.valid) {
          tk.joints.push_back({});
          continue;
        }
        const Eigen::Vector2d p = t->source_to_tile(Eigen::Vector2d(j.u, j.v)) + origin;
        tk.joints.push_back({p.x(), p.y(), true});
      }
      seq[static_cast<std::size_t>(f)].push_back(std::move(tk));
    }
  }
  return seq;
}

/// Draws every tile skeleton in tile-local space, dilates per tile (no
/// bleed across tile borders) and stitches the result.
inline Video rasterize_pose_canvas(const PoseSequence& seq, const CanvasLayout& layout, const PoseStyle& style = {},
                                   int dilate_radius = 1, int dilate_iterations = 2) {
  Video out;
  out.reserve(seq.size());
  for (const auto& frame : seq) {
    ImageU8 canvas(layout.canvas_height(), layout.canvas_width(), 3);
    for (const auto& tk : frame) {
      std::vector<Keypoint2D> local = tk.joints;
      for (auto& j : local) {
        j.u -= layout.slot_x0(tk.slot);
        j.v -= layout.slot_y0(tk.slot);
      }
      ImageU8 tile = rasterize_pose(local, layout.tile, style);
      if (dilate_radius > 0 && dilate_iterations > 0) tile = dilate(tile, dilate_radius, dilate_iterations);
      // Several skeletons may share a tile; keep the brighter value.
      const int oy = layout.slot_y0(tk.slot);
      const int ox = layout.slot_x0(tk.slot);
      for (int y = 0; y < tile.height(); ++y) {
        for (int x = 0; x < tile.width(); ++x) {
          for (int c = 0; c < 3; ++c) {
            auto& dst = canvas.at(oy + y, ox + x, c);
            dst = std::max(dst, tile.at(y, x, c));
          }
        }
      }
    }
    out.push_back(std::move(canvas));
  }
  return out;
}

/// Suppresses pose signal inside the removed track's mask; the mask itself
/// stays editable so the background is regenerated there.
inline Video zero_pose_for_removal(const Video& raster, const MaskVolume& removal_mask) {
  if (raster.size() != removal_mask.frames.size()) throw ValidationError("zero_pose_for_removal: frame count mismatch");
  Video out = raster;
  for (std::size_t f = 0; f < out.size(); ++f) {
    const auto& m = removal_mask.frames[f];
    if (m.height() != out[f].height() || m.width() != out[f].width()) {
      throw ValidationError("zero_pose_for_removal: shape mismatch");
    }
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (m.at(y, x)) {
          std::uint8_t* p = out[f].pixel(y, x);
          p[0] = p[1] = p[2] = 0;
        }
      }
    }
  }
  return out;
}

}  // namespace pedit
