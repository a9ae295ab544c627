#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pedit/bundle.hpp"
#include "pedit/generators.hpp"
#include "pedit/stages.hpp"

namespace pedit {

/// Blend weights over one crop's source rectangle.
struct SourceAlpha {
  PixelRect rect;
  ImageU8 mask;        // back-mapped editable region, {0, 1}
  Image<float> alpha;  // in [0, 1], zero outside `mask`
};

/// Chessboard distance from each mask pixel to the nearest non-mask pixel,
/// where pixels just outside the grid count as non-mask on sides flagged
/// open. Non-mask pixels get 0.
inline Image<int> chessboard_distance(const ImageU8& mask, bool open_top, bool open_bottom, bool open_left,
                                      bool open_right) {
  const int h = mask.height(), w = mask.width();
  const int inf = std::numeric_limits<int>::max() / 2;
  Image<int> d(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = (open_top && y == 0) || (open_bottom && y == h - 1) || (open_left && x == 0) ||
                        (open_right && x == w - 1);
      d.at(y, x) = edge ? 1 : inf;
    }
  }
  auto relax = [&](int y, int x, int ny, int nx) {
    if (ny < 0 || ny >= h || nx < 0 || nx >= w) return;
    d.at(y, x) = std::min(d.at(y, x), d.at(ny, nx) + 1);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!d.at(y, x)) continue;
      relax(y, x, y - 1, x - 1);
      relax(y, x, y - 1, x);
      relax(y, x, y - 1, x + 1);
      relax(y, x, y, x - 1);
    }
  }
  for (int y = h - 1; y >= 0; --y) {
    for (int x = w - 1; x >= 0; --x) {
      if (!d.at(y, x)) continue;
      relax(y, x, y + 1, x + 1);
      relax(y, x, y + 1, x);
      relax(y, x, y + 1, x - 1);
      relax(y, x, y, x + 1);
    }
  }
  return d;
}

/// Maps the tile mask of `slot` back onto the source rectangle of `t` and
/// ramps alpha linearly from the mask boundary over `blend_band` pixels.
/// Frame borders are not treated as mask boundaries.
inline SourceAlpha source_alpha(const CropTransform& t, const ImageU8& canvas_mask, const CanvasLayout& L, int slot,
                                int frame_width, int frame_height, int blend_band) {
  if (blend_band < 0) throw ValidationError("reintegrate: blend_band must be >= 0");
  SourceAlpha out;
  out.rect = t.source_rect;
  const int h = out.rect.height(), w = out.rect.width();
  out.mask = ImageU8(h, w, 1);
  out.alpha = Image<float>(h, w, 1);
  const int oy = L.slot_y0(slot), ox = L.slot_x0(slot);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d q = t.source_to_tile(Eigen::Vector2d(out.rect.x0 + x + 0.5, out.rect.y0 + y + 0.5));
      const int iy = static_cast<int>(std::floor(q.y())), ix = static_cast<int>(std::floor(q.x()));
      if (iy < 0 || ix < 0 || iy >= L.tile.height || ix >= L.tile.width) continue;
      out.mask.at(y, x) = canvas_mask.at(oy + iy, ox + ix) ? 1 : 0;
    }
  }
  const Image<int> d = chessboard_distance(out.mask, out.rect.y0 > 0, out.rect.y1 < frame_height, out.rect.x0 > 0,
                                           out.rect.x1 < frame_width);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!out.mask.at(y, x)) continue;
      out.alpha.at(y, x) =
          blend_band == 0 ? 1.0f : static_cast<float>(std::min(1.0, static_cast<double>(d.at(y, x)) / blend_band));
    }
  }
  return out;
}

/// Pastes generated tile content back into the scene frames. Only pixels
/// with nonzero alpha change; the pad region is never written.
inline Scene reintegrate(const Scene& scene, const CanvasClip& generated, const MaskVolume& mask, int blend_band = 8) {
  const auto& L = generated.layout;
  if (generated.frame_count() != scene.frame_count || mask.frame_count() != scene.frame_count) {
    throw ValidationError("reintegrate: clip and scene frame counts differ");
  }
  Scene out = scene;
  for (int s = 0; s < kViewCount; ++s) {
    if (L.placeholder[static_cast<std::size_t>(s)]) continue;
    const ViewId v = L.view_order[static_cast<std::size_t>(s)];
    const auto& transforms = generated.transforms[static_cast<std::size_t>(s)];
    if (static_cast<int>(transforms.size()) != scene.frame_count) {
      throw ValidationError("reintegrate: slot " + std::to_string(s) + " has no transform per frame");
    }
    const auto& cam = scene.view(v);
    for (int f = 0; f < scene.frame_count; ++f) {
      const auto& t = transforms[static_cast<std::size_t>(f)];
      if (!t) continue;
      if (t->view != v || t->tile.height != L.tile.height || t->tile.width != L.tile.width) {
        throw ValidationError("reintegrate: transform does not match slot " + std::to_string(s));
      }
      const auto fi = static_cast<std::size_t>(f);
      const SourceAlpha sa = source_alpha(*t, mask.frames[fi], L, s, cam.width, cam.height, blend_band);
      const ImageU8 tile = extract(generated.frames[fi], L.slot_y0(s), L.slot_x0(s), L.tile.height, L.tile.width);
      ImageU8& frame = out.video(v)[fi];
      std::array<double, 3> g{};
      for (int y = 0; y < sa.rect.height(); ++y) {
        for (int x = 0; x < sa.rect.width(); ++x) {
          const double a = sa.alpha.at(y, x);
          if (a <= 0.0) continue;
          const int sy = sa.rect.y0 + y, sx = sa.rect.x0 + x;
          const Eigen::Vector2d q = t->source_to_tile(Eigen::Vector2d(sx + 0.5, sy + 0.5));
          sample_bilinear(tile, q.y() - 0.5, q.x() - 0.5, g.data());
          std::uint8_t* px = frame.pixel(sy, sx);
          for (int c = 0; c < 3; ++c) px[c] = saturate_u8(a * g[static_cast<std::size_t>(c)] + (1.0 - a) * px[c]);
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Edit requests

enum class EditOp { Replace, Insert, Remove };

/// `motion` is indexed by scene frame; absent entries mean "not present".
struct EditRequest {
  EditOp op = EditOp::Replace;
  std::string track_id;
  std::vector<std::optional<Skeleton3D>> motion;
  std::optional<AttributeToken> attributes;
};

struct EditConfig {
  StageConfig stages;
  int blend_band = 8;
  std::uint64_t seed = 0;
  double insert_inflation = 0.15;
  double insert_min_extent = 0.5;
};

struct EditResult {
  Scene edited;
  PedestrianTrack region;  // track whose boxes define crops and masks
  std::array<std::vector<std::optional<ViewBox2D>>, kViewCount> projections;  // [view][frame] of `region`
  TrackCanvas conditioning;
  ConditioningBundle bundle;
  CanvasClip generated;
};

/// World-axis box around a skeleton, each extent grown by `inflation`.
/// Horizontal extents are floored at `min_horizontal` metres so a side-on
/// or mid-stride pose still covers the drawn body thickness.
inline Box3D skeleton_box(const Skeleton3D& sk, double inflation = 0.15, double min_horizontal = 0.5) {
  if (sk.empty()) throw ValidationError("skeleton_box: empty skeleton");
  Eigen::Vector3d lo = sk.front(), hi = sk.front();
  for (const auto& j : sk) {
    lo = lo.cwiseMin(j);
    hi = hi.cwiseMax(j);
  }
  Eigen::Vector3d ext = ((hi - lo) * (1.0 + inflation)).cwiseMax(1e-3);
  ext.x() = std::max(ext.x(), min_horizontal);
  ext.y() = std::max(ext.y(), min_horizontal);
  Box3D b;
  b.center = 0.5 * (lo + hi);
  b.size = {ext.y(), ext.x(), ext.z()};  // (w, l, h) with heading along +x
  b.yaw = 0.0;
  return b;
}

/// World-axis box enclosing the corners of both boxes.
inline Box3D enclosing_box(const Box3D& a, const Box3D& b) {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const Box3D* box : {&a, &b}) {
    for (const auto& c : box_corners(*box)) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  Box3D out;
  out.center = 0.5 * (lo + hi);
  out.size = {hi.y() - lo.y(), hi.x() - lo.x(), hi.z() - lo.z()};
  return out;
}

/// Track following `motion` with inflated skeleton boxes.
inline PedestrianTrack track_from_motion(const std::string& id, const std::vector<std::optional<Skeleton3D>>& motion,
                                         int frame_count, int joint_count, double inflation,
                                         double min_horizontal = 0.5) {
  if (static_cast<int>(motion.size()) < frame_count) {
    throw ValidationError("motion has " + std::to_string(motion.size()) + " frames, clip has " +
                          std::to_string(frame_count));
  }
  PedestrianTrack t;
  t.track_id = id;
  bool ended = false;
  for (int f = 0; f < frame_count; ++f) {
    const auto& sk = motion[static_cast<std::size_t>(f)];
    if (!sk) {
      ended = ended || !t.frames.empty();
      continue;
    }
    if (ended) throw ValidationError("motion: frames must be contiguous");
    if (static_cast<int>(sk->size()) != joint_count) {
      throw ValidationError("motion: frame " + std::to_string(f) + " has " + std::to_string(sk->size()) +
                            " joints, expected " + std::to_string(joint_count));
    }
    t.frames.push_back({f, skeleton_box(*sk, inflation, min_horizontal), *sk});
  }
  if (t.frames.empty()) throw ValidationError("motion: no frame carries a skeleton");
  return t;
}

inline std::size_t find_track(const Scene& scene, const std::string& id) {
  for (std::size_t i = 0; i < scene.tracks.size(); ++i) {
    if (scene.tracks[i].track_id == id) return i;
  }
  throw ValidationError("unknown track_id '" + id + "'");
}

/// Union of two tracks' boxes per frame (boxes present in either).
inline PedestrianTrack union_track(const PedestrianTrack& a, const PedestrianTrack& b, int frame_count) {
  PedestrianTrack out;
  out.track_id = a.track_id;
  for (int f = 0; f < frame_count; ++f) {
    const TrackFrame* fa = a.at_frame(f);
    const TrackFrame* fb = b.at_frame(f);
    if (!fa && !fb) continue;
    TrackFrame tf{f, fa && fb ? enclosing_box(fa->box, fb->box) : (fa ? fa->box : fb->box), std::nullopt};
    if (!out.frames.empty() && out.frames.back().frame != f - 1) {
      throw ValidationError("replace: old and new motion leave a gap");
    }
    out.frames.push_back(tf);
  }
  return out;
}

/// Invokes each stage body directly.
struct DirectStages {
  template <typename F>
  void operator()(const char*, F&& body) const {
    body();
  }
};

/// request -> project -> crop -> mask -> pose -> generate -> reintegrate.
/// `stage(name, body)` runs each step and may wrap, time or audit it.
template <typename StageRunner>
EditResult edit_pipeline_staged(const Scene& scene, const EditRequest& req, const Generator& gen, const EditConfig& cfg,
                                StageRunner&& stage) {
  EditResult r;
  std::vector<std::optional<Skeleton3D>> skeletons;
  AttributeToken attrs = req.attributes.value_or(AttributeToken::from_names("white", "black"));
  stage("request", [&] {
    r.edited.views = scene.views;
    r.edited.frame_count = scene.frame_count;
    r.edited.joint_count = scene.joint_count;
    r.edited.tracks = scene.tracks;
    switch (req.op) {
      case EditOp::Replace: {
        const std::size_t i = find_track(scene, req.track_id);
        const PedestrianTrack& old = scene.tracks[i];
        attrs = req.attributes.value_or(old.attributes);
        PedestrianTrack updated = old;
        if (req.motion.empty()) {
          r.region = old;
          skeletons = track_skeletons(scene, old);
        } else {
          updated = track_from_motion(old.track_id, req.motion, scene.frame_count, scene.joint_count,
                                      cfg.insert_inflation, cfg.insert_min_extent);
          updated.dominant_view = old.dominant_view;
          r.region = union_track(old, updated, scene.frame_count);
          skeletons = track_skeletons(scene, updated);
        }
        updated.attributes = attrs;
        r.edited.tracks[i] = updated;
        break;
      }
      case EditOp::Insert: {
        const std::string id = req.track_id.empty() ? "inserted" : req.track_id;
        for (const auto& t : scene.tracks) {
          if (t.track_id == id) throw ValidationError("insert: track_id '" + id + "' already exists");
        }
        r.region = track_from_motion(id, req.motion, scene.frame_count, scene.joint_count, cfg.insert_inflation,
                                     cfg.insert_min_extent);
        r.region.attributes = attrs;
        skeletons = track_skeletons(scene, r.region);
        r.edited.tracks.push_back(r.region);
        break;
      }
      case EditOp::Remove: {
        const std::size_t i = find_track(scene, req.track_id);
        r.region = scene.tracks[i];
        skeletons.assign(static_cast<std::size_t>(scene.frame_count), std::nullopt);
        r.edited.tracks.erase(r.edited.tracks.begin() + static_cast<std::ptrdiff_t>(i));
        break;
      }
    }
  });
  stage("project", [&] {
    for (ViewId v : kCanonicalViews) r.projections[static_cast<std::size_t>(view_index(v))] = track_boxes(scene, r.region, v);
  });
  stage("crop", [&] { r.conditioning.canvas = crop_and_compose(scene, r.region, cfg.stages); });
  stage("mask", [&] { r.conditioning.mask = build_mask(scene, r.region, r.conditioning.canvas, cfg.stages.mask_factor); });
  stage("pose", [&] {
    auto& tc = r.conditioning;
    tc.keypoints = map_skeletons_to_canvas(scene, skeletons, tc.canvas);
    tc.pose = rasterize_pose_canvas(tc.keypoints, tc.canvas.layout, cfg.stages.pose, cfg.stages.dilate_radius,
                                    cfg.stages.dilate_iterations);
    if (req.op == EditOp::Remove) {
      tc.pose = zero_pose_for_removal(tc.pose, tc.mask);
      tc.keypoints.assign(tc.keypoints.size(), {});
    }
  });
  stage("generate", [&] {
    const auto& tc = r.conditioning;
    r.bundle = make_bundle(tc.canvas, tc.mask, tc.pose, attrs, cfg.seed, tc.keypoints);
    r.generated = gen.generate(r.bundle);
  });
  stage("reintegrate", [&] {
    Scene pasted = reintegrate(scene, r.generated, r.conditioning.mask, cfg.blend_band);
    r.edited.frames = std::move(pasted.frames);
  });
  return r;
}

inline EditResult edit_pipeline(const Scene& scene, const EditRequest& req, const Generator& gen, const EditConfig& cfg = {}) {
  return edit_pipeline_staged(scene, req, gen, cfg, DirectStages{});
}

}  // namespace pedit
