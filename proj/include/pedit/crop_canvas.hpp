#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pedit/error.hpp"
#include "pedit/geometry.hpp"
#include "pedit/image.hpp"
#include "pedit/scene.hpp"

namespace pedit {

/// Half-open integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Zero rows/columns standing in for the part of the crop window outside the frame.
struct Padding {
  int top = 0, bottom = 0, left = 0, right = 0;
  friend bool operator==(const Padding&, const Padding&) = default;
};

struct TileSize {
  int height = 480;
  int width = 240;
  friend bool operator==(const TileSize&, const TileSize&) = default;
};

/// Maps between a view frame and its tile. The crop window is source_rect
/// grown by pad; the window is scaled onto the tile. Coordinates are
/// continuous with pixel i spanning [i, i+1).
struct CropTransform {
  ViewId view = ViewId::Front;
  PixelRect source_rect;
  Padding pad;
  TileSize tile;
  double scale_y = 1.0;
  double scale_x = 1.0;

  double window_x0() const noexcept { return source_rect.x0 - pad.left; }
  double window_y0() const noexcept { return source_rect.y0 - pad.top; }
  int window_width() const noexcept { return source_rect.width() + pad.left + pad.right; }
  int window_height() const noexcept { return source_rect.height() + pad.top + pad.bottom; }

  Eigen::Vector2d tile_to_source(const Eigen::Vector2d& tile_xy) const {
    return {window_x0() + tile_xy.x() / scale_x, window_y0() + tile_xy.y() / scale_y};
  }
  Eigen::Vector2d source_to_tile(const Eigen::Vector2d& src_xy) const {
    return {(src_xy.x() - window_x0()) * scale_x, (src_xy.y() - window_y0()) * scale_y};
  }
  RectF source_to_tile(const RectF& r) const {
    const auto a = source_to_tile(Eigen::Vector2d(r.x_min, r.y_min));
    const auto b = source_to_tile(Eigen::Vector2d(r.x_max, r.y_max));
    return {a.x(), a.y(), b.x(), b.y()};
  }

  /// Tile region that carries real source pixels (complement of the pad).
  RectF content_rect() const {
    return source_to_tile(RectF{static_cast<double>(source_rect.x0), static_cast<double>(source_rect.y0),
                                static_cast<double>(source_rect.x1), static_cast<double>(source_rect.y1)});
  }

  friend bool operator==(const CropTransform&, const CropTransform&) = default;
};

struct CropConfig {
  TileSize tile;
  double expand_factor = 1.6;
  /// Exponential smoothing weight for per-frame crop windows; unset = none.
  std::optional<double> smoothing;
};

/// Grows a rect about its centre so width and height each scale by `factor`.
inline RectF expand_rect(const RectF& rect, double factor) {
  if (!(rect.width() > 0.0) || !(rect.height() > 0.0)) {
    throw ValidationError("expand_rect: degenerate rect");
  }
  if (!(factor >= 1.0)) throw ValidationError("expand_rect: factor must be >= 1");
  const double hw = 0.5 * rect.width() * factor;
  const double hh = 0.5 * rect.height() * factor;
  return {rect.cx() - hw, rect.cy() - hh, rect.cx() + hw, rect.cy() + hh};
}

struct FittedWindow {
  PixelRect source;  // clamped to the frame
  Padding pad;
  int window_width() const noexcept { return source.width() + pad.left + pad.right; }
  int window_height() const noexcept { return source.height() + pad.top + pad.bottom; }
};

namespace detail {

/// Places an integer span of `len` around `center` inside [0, limit).
/// Spans that fit are shifted inward; oversized spans keep their centre and
/// record the overhang as padding.
inline void place_span(double center, int len, int limit, int& lo, int& hi, int& pad_lo, int& pad_hi) {
  int start = static_cast<int>(std::floor(center - 0.5 * len + 0.5));
  if (len <= limit) {
    start = std::clamp(start, 0, limit - len);
    lo = start;
    hi = start + len;
    pad_lo = pad_hi = 0;
  } else {
    lo = std::max(start, 0);
    hi = std::min(start + len, limit);
    pad_lo = lo - start;
    pad_hi = start + len - hi;
  }
}

}  // namespace detail

/// Grows the shorter side so height / width == aspect, snaps to integers and
/// fits the window into a frame of frame_width x frame_height.
inline FittedWindow fit_aspect(const RectF& rect, double aspect, int frame_width, int frame_height) {
  if (!(aspect > 0.0)) throw ValidationError("fit_aspect: aspect must be positive");
  double w = rect.width();
  double h = rect.height();
  if (h < w * aspect) {
    h = w * aspect;
  } else {
    w = h / aspect;
  }
  const int w_int = std::max(1, static_cast<int>(std::lround(w)));
  const int h_int = std::max(1, static_cast<int>(std::lround(w_int * aspect)));
  FittedWindow out;
  detail::place_span(rect.cx(), w_int, frame_width, out.source.x0, out.source.x1, out.pad.left, out.pad.right);
  detail::place_span(rect.cy(), h_int, frame_height, out.source.y0, out.source.y1, out.pad.top, out.pad.bottom);
  return out;
}

inline CropTransform make_transform(ViewId view, const FittedWindow& win, TileSize tile) {
  CropTransform t;
  t.view = view;
  t.source_rect = win.source;
  t.pad = win.pad;
  t.tile = tile;
  t.scale_y = static_cast<double>(tile.height) / win.window_height();
  t.scale_x = static_cast<double>(tile.width) / win.window_width();
  return t;
}

/// Bilinear resample of the crop window onto the tile; pad pixels are zero.
inline ImageU8 crop_resize(const ImageU8& frame, const CropTransform& t) {
  ImageU8 tile(t.tile.height, t.tile.width, frame.channels());
  std::array<double, 4> px{};
  const auto& s = t.source_rect;
  for (int ty = 0; ty < t.tile.height; ++ty) {
    const double sy = t.window_y0() + (ty + 0.5) / t.scale_y;
    if (sy < s.y0 || sy >= s.y1) continue;
    for (int tx = 0; tx < t.tile.width; ++tx) {
      const double sx = t.window_x0() + (tx + 0.5) / t.scale_x;
      if (sx < s.x0 || sx >= s.x1) continue;
      sample_bilinear(frame, sy - 0.5, sx - 0.5, px.data());
      std::uint8_t* out = tile.pixel(ty, tx);
      for (int c = 0; c < frame.channels(); ++c) out[c] = saturate_u8(px[static_cast<std::size_t>(c)]);
    }
  }
  return tile;
}

/// Per-frame 2D boxes of a track in one view; nullopt where the track has no
/// record. Views flagged occluded on the track report OutOfView.
inline std::vector<std::optional<ViewBox2D>> track_boxes(const Scene& scene, const PedestrianTrack& track,
                                                         ViewId view) {
  std::vector<std::optional<ViewBox2D>> out(static_cast<std::size_t>(scene.frame_count));
  const bool occluded = track.occluded[static_cast<std::size_t>(view_index(view))];
  for (const auto& f : track.frames) {
    if (f.frame < 0 || f.frame >= scene.frame_count) continue;
    out[static_cast<std::size_t>(f.frame)] = occluded ? ViewBox2D{view, {}, Visibility::OutOfView}
                                                      : project_box3d(scene.view(view), f.box);
  }
  return out;
}

/// A view's tile sequence and the transform of every non-empty frame.
struct TileVideo {
  ViewId view = ViewId::Front;
  Video frames;
  std::vector<std::optional<CropTransform>> transforms;
};

/// Per-frame windows for the usable boxes of a view, with optional smoothing.
inline std::vector<std::optional<CropTransform>> crop_windows(const std::vector<std::optional<ViewBox2D>>& boxes,
                                                              const CameraView& cam, const CropConfig& cfg) {
  std::vector<std::optional<CropTransform>> out(boxes.size());
  const double aspect = static_cast<double>(cfg.tile.height) / cfg.tile.width;
  RectF prev{};
  bool have_prev = false;
  for (std::size_t f = 0; f < boxes.size(); ++f) {
    if (!boxes[f] || !boxes[f]->usable()) {
      have_prev = false;
      continue;
    }
    RectF r = expand_rect(boxes[f]->rect, cfg.expand_factor);
    if (cfg.smoothing) {
      const double a = *cfg.smoothing;
      if (have_prev) {
        r = RectF{a * r.x_min + (1 - a) * prev.x_min, a * r.y_min + (1 - a) * prev.y_min,
                  a * r.x_max + (1 - a) * prev.x_max, a * r.y_max + (1 - a) * prev.y_max};
      }
      prev = r;
      have_prev = true;
    }
    out[f] = make_transform(cam.id, fit_aspect(r, aspect, cam.width, cam.height), cfg.tile);
  }
  return out;
}

/// Crops and rescales a track's region from every frame of one view.
/// Throws ValidationError when the track never appears in the view.
inline TileVideo crop_track(const Scene& scene, const PedestrianTrack& track, ViewId view,
                            const CropConfig& cfg = {}) {
  const auto boxes = track_boxes(scene, track, view);
  TileVideo out;
  out.view = view;
  out.transforms = crop_windows(boxes, scene.view(view), cfg);
  bool any = false;
  const auto& video = scene.video(view);
  for (std::size_t f = 0; f < out.transforms.size(); ++f) {
    if (out.transforms[f]) {
      any = true;
      out.frames.push_back(crop_resize(video[f], *out.transforms[f]));
    } else {
      out.frames.emplace_back(cfg.tile.height, cfg.tile.width, 3);
    }
  }
  if (!any) {
    throw ValidationError("track '" + track.track_id + "' is never visible in view " + std::string(view_name(view)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canvas

struct CanvasLayout {
  int rows = 2;
  int cols = 3;
  TileSize tile;
  std::array<ViewId, kViewCount> view_order = kCanonicalViews;
  std::array<bool, kViewCount> placeholder{};

  int canvas_height() const noexcept { return rows * tile.height; }
  int canvas_width() const noexcept { return cols * tile.width; }
  int tile_count() const noexcept { return rows * cols; }
  int slot_y0(int slot) const noexcept { return (slot / cols) * tile.height; }
  int slot_x0(int slot) const noexcept { return (slot % cols) * tile.width; }

  int slot_of(ViewId v) const {
    for (int s = 0; s < kViewCount; ++s) {
      if (view_order[static_cast<std::size_t>(s)] == v) return s;
    }
    throw ValidationError("layout: view not present");
  }

  void validate() const {
    if (rows * cols != kViewCount) throw ValidationError("layout: rows*cols must equal 6");
    if (tile.height <= 0 || tile.width <= 0) throw ValidationError("layout: tile size must be positive");
    std::array<bool, kViewCount> seen{};
    for (ViewId v : view_order) {
      auto& s = seen[static_cast<std::size_t>(view_index(v))];
      if (s) throw ValidationError("layout: view_order must be a permutation of the six views");
      s = true;
    }
  }

  friend bool operator==(const CanvasLayout&, const CanvasLayout&) = default;
};

/// Stitches per-slot tile sequences (nullptr = placeholder) into canvases.
template <typename T>
std::vector<Image<T>> compose_frames(const std::array<const std::vector<Image<T>>*, kViewCount>& tiles,
                                     const CanvasLayout& layout, int frame_count, int channels) {
  layout.validate();
  for (int s = 0; s < kViewCount; ++s) {
    const auto* seq = tiles[static_cast<std::size_t>(s)];
    if (!seq) continue;
    if (static_cast<int>(seq->size()) != frame_count) throw ValidationError("compose: frame count mismatch");
    for (const auto& img : *seq) {
      if (img.height() != layout.tile.height || img.width() != layout.tile.width || img.channels() != channels) {
        throw ValidationError("compose: tile dimension mismatch");
      }
    }
  }
  std::vector<Image<T>> out;
  out.reserve(static_cast<std::size_t>(frame_count));
  for (int f = 0; f < frame_count; ++f) {
    Image<T> canvas(layout.canvas_height(), layout.canvas_width(), channels);
    for (int s = 0; s < kViewCount; ++s) {
      const auto* seq = tiles[static_cast<std::size_t>(s)];
      if (seq) paste(canvas, (*seq)[static_cast<std::size_t>(f)], layout.slot_y0(s), layout.slot_x0(s));
    }
    out.push_back(std::move(canvas));
  }
  return out;
}

/// Exact inverse of compose_frames; returns one sequence per slot.
template <typename T>
std::array<std::vector<Image<T>>, kViewCount> decompose_frames(const std::vector<Image<T>>& canvas,
                                                               const CanvasLayout& layout) {
  layout.validate();
  std::array<std::vector<Image<T>>, kViewCount> out;
  for (const auto& frame : canvas) {
    if (frame.height() != layout.canvas_height() || frame.width() != layout.canvas_width()) {
      throw ValidationError("decompose: canvas dimension mismatch");
    }
    for (int s = 0; s < kViewCount; ++s) {
      out[static_cast<std::size_t>(s)].push_back(
          extract(frame, layout.slot_y0(s), layout.slot_x0(s), layout.tile.height, layout.tile.width));
    }
  }
  return out;
}

/// Stitched multi-view clip plus the provenance of each tile.
struct CanvasClip {
  Video frames;
  CanvasLayout layout;
  /// [slot][frame]; empty for placeholder slots.
  std::array<std::vector<std::optional<CropTransform>>, kViewCount> transforms;

  int frame_count() const noexcept { return static_cast<int>(frames.size()); }
};

/// `tiles` is indexed by view (canonical order); missing views become placeholders.
inline CanvasClip compose_canvas(const std::array<std::optional<TileVideo>, kViewCount>& tiles, CanvasLayout layout,
                                 int frame_count) {
  layout.validate();
  CanvasClip clip;
  std::array<const Video*, kViewCount> by_slot{};
  for (int s = 0; s < kViewCount; ++s) {
    const auto& tv = tiles[static_cast<std::size_t>(view_index(layout.view_order[static_cast<std::size_t>(s)]))];
    layout.placeholder[static_cast<std::size_t>(s)] = !tv.has_value();
    if (tv) {
      by_slot[static_cast<std::size_t>(s)] = &tv->frames;
      clip.transforms[static_cast<std::size_t>(s)] = tv->transforms;
      if (static_cast<int>(tv->transforms.size()) != frame_count) {
        throw ValidationError("compose: transform count mismatch");
      }
    }
  }
  clip.frames = compose_frames<std::uint8_t>(by_slot, layout, frame_count, 3);
  clip.layout = layout;
  return clip;
}

/// Splits a clip back into per-view tiles (indexed by view). Placeholder
/// views come back as zero tiles without transforms.
inline std::array<TileVideo, kViewCount> decompose_canvas(const CanvasClip& clip) {
  auto slots = decompose_frames(clip.frames, clip.layout);
  std::array<TileVideo, kViewCount> out;
  for (int s = 0; s < kViewCount; ++s) {
    const ViewId v = clip.layout.view_order[static_cast<std::size_t>(s)];
    auto& tv = out[static_cast<std::size_t>(view_index(v))];
    tv.view = v;
    tv.frames = std::move(slots[static_cast<std::size_t>(s)]);
    tv.transforms = clip.transforms[static_cast<std::size_t>(s)];
    tv.transforms.resize(tv.frames.size());
  }
  return out;
}

}  // namespace pedit
