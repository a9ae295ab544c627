#pragma once

#include <optional>
#include <vector>

#include "pedit/bundle.hpp"
#include "pedit/crop_canvas.hpp"
#include "pedit/mask_pose.hpp"
#include "pedit/scene.hpp"

namespace pedit {

/// Knobs shared by the crop, mask and pose stages.
struct StageConfig {
  CropConfig crop;
  CanvasLayout layout;
  double mask_factor = 1.2;
  PoseStyle pose;
  int dilate_radius = 1;
  int dilate_iterations = 2;
};

/// Canvas-level conditioning for one track.
struct TrackCanvas {
  CanvasClip canvas;
  MaskVolume mask;
  PoseSequence keypoints;
  Video pose;
};

/// Crops every view the track appears in and stitches the tiles; views the
/// track never reaches become placeholders.
inline CanvasClip crop_and_compose(const Scene& scene, const PedestrianTrack& track, const StageConfig& cfg) {
  CropConfig crop = cfg.crop;
  crop.tile = cfg.layout.tile;
  std::array<std::optional<TileVideo>, kViewCount> tiles;
  for (ViewId v : kCanonicalViews) {
    const auto boxes = track_boxes(scene, track, v);
    const bool visible = std::any_of(boxes.begin(), boxes.end(), [](const auto& b) { return b && b->usable(); });
    if (visible) tiles[static_cast<std::size_t>(view_index(v))] = crop_track(scene, track, v, crop);
  }
  return compose_canvas(tiles, cfg.layout, scene.frame_count);
}

/// Per-frame skeletons of a track, aligned to the scene's frame indices.
inline std::vector<std::optional<Skeleton3D>> track_skeletons(const Scene& scene, const PedestrianTrack& track) {
  std::vector<std::optional<Skeleton3D>> out(static_cast<std::size_t>(scene.frame_count));
  for (const auto& f : track.frames) {
    if (f.frame >= 0 && f.frame < scene.frame_count) out[static_cast<std::size_t>(f.frame)] = f.skeleton;
  }
  return out;
}

/// Crop, compose, mask and pose for `track`, with the pose drawn from
/// `skeletons` (the track's own motion unless replaced).
inline TrackCanvas prepare_track(const Scene& scene, const PedestrianTrack& track,
                                 const std::vector<std::optional<Skeleton3D>>& skeletons, const StageConfig& cfg) {
  TrackCanvas tc;
  tc.canvas = crop_and_compose(scene, track, cfg);
  tc.mask = build_mask(scene, track, tc.canvas, cfg.mask_factor);
  tc.keypoints = map_skeletons_to_canvas(scene, skeletons, tc.canvas);
  tc.pose = rasterize_pose_canvas(tc.keypoints, tc.canvas.layout, cfg.pose, cfg.dilate_radius, cfg.dilate_iterations);
  return tc;
}

}  // namespace pedit
