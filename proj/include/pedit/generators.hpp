#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pedit/bundle.hpp"
#include "pedit/sprite.hpp"

namespace pedit {

/// Generation contract: same (T, H, W) as the bundle and every mask=0 pixel
/// equal to `masked_canvas`. Implementations are const and reentrant.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string name() const = 0;
  virtual CanvasClip generate(const ConditioningBundle& bundle) const = 0;
};

class IdentityGenerator final : public Generator {
 public:
  std::string name() const override { return "identity"; }
  CanvasClip generate(const ConditioningBundle& bundle) const override {
    bundle.validate();
    return bundle.masked_canvas;
  }
};

namespace detail {

inline double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double hi = *mid;
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

/// Per-frame map of tile pixels that carry real, unmasked content.
inline std::vector<std::vector<std::uint8_t>> usable_maps(const ConditioningBundle& b, int s) {
  const auto& L = b.masked_canvas.layout;
  const int th = L.tile.height, tw = L.tile.width;
  const auto& transforms = b.masked_canvas.transforms[static_cast<std::size_t>(s)];
  // A slot with crop provenance holds blank tiles on frames it has no
  // transform for; those carry no background.
  const bool tracked = std::any_of(transforms.begin(), transforms.end(), [](const auto& t) { return t.has_value(); });
  std::vector<std::vector<std::uint8_t>> maps(static_cast<std::size_t>(b.frame_count()));
  for (int f = 0; f < b.frame_count(); ++f) {
    auto& u = maps[static_cast<std::size_t>(f)];
    u.assign(static_cast<std::size_t>(th) * tw, 0);
    const auto fi = static_cast<std::size_t>(f);
    const bool has_t = fi < transforms.size() && transforms[fi].has_value();
    if (tracked && !has_t) continue;
    RectF content{0, 0, static_cast<double>(tw), static_cast<double>(th)};
    if (has_t) content = transforms[fi]->content_rect();
    const auto& m = b.mask.frames[static_cast<std::size_t>(f)];
    for (int y = 0; y < th; ++y) {
      if (y + 0.5 < content.y_min || y + 0.5 > content.y_max) continue;
      for (int x = 0; x < tw; ++x) {
        if (x + 0.5 < content.x_min || x + 0.5 > content.x_max) continue;
        u[static_cast<std::size_t>(y) * tw + x] = m.at(L.slot_y0(s) + y, L.slot_x0(s) + x) ? 0 : 1;
      }
    }
  }
  return maps;
}

}  // namespace detail

namespace detail {

/// Fills unknown pixels layer by layer from the mean of their known
/// 8-neighbours. Pixels with no path to a known pixel stay unknown.
inline void onion_fill(ImageU8& img, int oy, int ox, int th, int tw, std::vector<std::uint8_t>& known,
                       const std::vector<std::uint8_t>& wanted) {
  std::vector<int> frontier, next;
  auto idx = [tw](int y, int x) { return y * tw + x; };
  auto touches_known = [&](int y, int x) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy, nx = x + dx;
        if ((dy || dx) && ny >= 0 && nx >= 0 && ny < th && nx < tw && known[static_cast<std::size_t>(idx(ny, nx))]) {
          return true;
        }
      }
    }
    return false;
  };
  for (int y = 0; y < th; ++y) {
    for (int x = 0; x < tw; ++x) {
      const auto i = static_cast<std::size_t>(idx(y, x));
      if (wanted[i] && !known[i] && touches_known(y, x)) frontier.push_back(idx(y, x));
    }
  }
  std::vector<std::uint8_t> queued(known.size(), 0);
  while (!frontier.empty()) {
    std::vector<std::array<std::uint8_t, 3>> values(frontier.size());
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      const int y = frontier[k] / tw, x = frontier[k] % tw;
      std::array<double, 3> sum{};
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (!(dy || dx) || ny < 0 || nx < 0 || ny >= th || nx >= tw) continue;
          if (!known[static_cast<std::size_t>(idx(ny, nx))]) continue;
          const auto* px = img.pixel(oy + ny, ox + nx);
          for (int c = 0; c < 3; ++c) sum[static_cast<std::size_t>(c)] += px[c];
          ++n;
        }
      }
      for (int c = 0; c < 3; ++c) values[k][static_cast<std::size_t>(c)] = saturate_u8(sum[static_cast<std::size_t>(c)] / n);
    }
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      const int y = frontier[k] / tw, x = frontier[k] % tw;
      std::copy_n(values[k].data(), 3, img.pixel(oy + y, ox + x));
      known[static_cast<std::size_t>(frontier[k])] = 1;
    }
    next.clear();
    for (const int i : frontier) {
      const int y = i / tw, x = i % tw;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || nx < 0 || ny >= th || nx >= tw) continue;
          const auto j = static_cast<std::size_t>(idx(ny, nx));
          if (wanted[j] && !known[j] && !queued[j]) {
            queued[j] = 1;
            next.push_back(idx(ny, nx));
          }
        }
      }
    }
    frontier.swap(next);
  }
}

}  // namespace detail

/// Fills every masked pixel with a background estimate. Pixels whose source
/// point is seen unmasked in other frames take the temporal median of those
/// observations; the rest are inpainted from surrounding known pixels of the
/// same tile, and a tile with nothing known falls back to the same-position
/// temporal median. Slots without crop transforms are treated as static.
inline void fill_background(CanvasClip& out, const ConditioningBundle& b) {
  const auto& L = b.masked_canvas.layout;
  const int th = L.tile.height, tw = L.tile.width;
  const int T = b.frame_count();
  for (int s = 0; s < kViewCount; ++s) {
    bool needed = false;
    for (int f = 0; f < T && !needed; ++f) needed = tile_has_mask(b, f, s);
    if (!needed) continue;
    const auto usable = detail::usable_maps(b, s);
    const auto& transforms = b.masked_canvas.transforms[static_cast<std::size_t>(s)];
    auto tf = [&](int f) -> const std::optional<CropTransform>* {
      if (static_cast<std::size_t>(f) >= transforms.size() || !transforms[static_cast<std::size_t>(f)]) return nullptr;
      return &transforms[static_cast<std::size_t>(f)];
    };
    auto ok = [&](int g, int y, int x) { return usable[static_cast<std::size_t>(g)][static_cast<std::size_t>(y) * tw + x] != 0; };
    const int oy = L.slot_y0(s), ox = L.slot_x0(s);
    std::array<std::vector<double>, 3> samples;
    auto same_position = [&](int f, int y, int x) {
      for (auto& v : samples) v.clear();
      for (int g = 0; g < T; ++g) {
        if (g == f || !ok(g, y, x)) continue;
        const auto& gi = b.masked_canvas.frames[static_cast<std::size_t>(g)];
        for (int c = 0; c < 3; ++c) samples[static_cast<std::size_t>(c)].push_back(gi.at(oy + y, ox + x, c));
      }
      return !samples[0].empty();
    };
    // Without crop provenance the tile grid is the source grid.
    const bool tracked = std::any_of(transforms.begin(), transforms.end(), [](const auto& t) { return t.has_value(); });
    for (int f = 0; f < T; ++f) {
      const auto& m = b.mask.frames[static_cast<std::size_t>(f)];
      auto& img = out.frames[static_cast<std::size_t>(f)];
      const auto* tf_f = tf(f);
      std::vector<std::uint8_t> known = usable[static_cast<std::size_t>(f)];
      std::vector<std::uint8_t> wanted(known.size(), 0);
      bool holes = false;
      for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
          if (!m.at(oy + y, ox + x)) continue;
          const auto i = static_cast<std::size_t>(y) * tw + x;
          wanted[i] = 1;
          if (!tracked && same_position(f, y, x)) {
            auto* px = img.pixel(oy + y, ox + x);
            for (int c = 0; c < 3; ++c) px[c] = saturate_u8(detail::median_of(samples[static_cast<std::size_t>(c)]));
            known[i] = 1;
            continue;
          }
          if (!tf_f) {
            holes = true;
            continue;
          }
          for (auto& v : samples) v.clear();
          const Eigen::Vector2d src = (*tf_f)->tile_to_source(Eigen::Vector2d(x + 0.5, y + 0.5));
          for (int g = 0; g < T; ++g) {
            const auto* tf_g = tf(g);
            if (g == f || !tf_g) continue;
            const Eigen::Vector2d q = (*tf_g)->source_to_tile(src) - Eigen::Vector2d(0.5, 0.5);
            const int iy = static_cast<int>(std::floor(q.y()));
            const int ix = static_cast<int>(std::floor(q.x()));
            if (iy < 0 || ix < 0 || iy + 1 >= th || ix + 1 >= tw) continue;
            if (!ok(g, iy, ix) || !ok(g, iy, ix + 1) || !ok(g, iy + 1, ix) || !ok(g, iy + 1, ix + 1)) continue;
            const auto& gi = b.masked_canvas.frames[static_cast<std::size_t>(g)];
            const double wy = q.y() - iy, wx = q.x() - ix;
            for (int c = 0; c < 3; ++c) {
              const double top = (1 - wx) * gi.at(oy + iy, ox + ix, c) + wx * gi.at(oy + iy, ox + ix + 1, c);
              const double bot = (1 - wx) * gi.at(oy + iy + 1, ox + ix, c) + wx * gi.at(oy + iy + 1, ox + ix + 1, c);
              samples[static_cast<std::size_t>(c)].push_back((1 - wy) * top + wy * bot);
            }
          }
          if (samples[0].empty()) {
            holes = true;
            continue;
          }
          auto* px = img.pixel(oy + y, ox + x);
          for (int c = 0; c < 3; ++c) px[c] = saturate_u8(detail::median_of(samples[static_cast<std::size_t>(c)]));
          known[i] = 1;
        }
      }
      if (!holes) continue;
      detail::onion_fill(img, oy, ox, th, tw, known, wanted);
      for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
          const auto i = static_cast<std::size_t>(y) * tw + x;
          if (!wanted[i] || known[i] || !same_position(f, y, x)) continue;
          auto* px = img.pixel(oy + y, ox + x);
          for (int c = 0; c < 3; ++c) px[c] = saturate_u8(detail::median_of(samples[static_cast<std::size_t>(c)]));
        }
      }
    }
  }
}

/// Whether the pose raster has signal inside the mask of slot `s`.
inline bool pose_in_mask(const ConditioningBundle& b, int f, int s) {
  const auto& L = b.masked_canvas.layout;
  const auto& m = b.mask.frames[static_cast<std::size_t>(f)];
  const auto& p = b.pose[static_cast<std::size_t>(f)];
  for (int y = L.slot_y0(s); y < L.slot_y0(s) + L.tile.height; ++y) {
    for (int x = L.slot_x0(s); x < L.slot_x0(s) + L.tile.width; ++x) {
      if (!m.at(y, x)) continue;
      const auto* px = p.pixel(y, x);
      if (px[0] || px[1] || px[2]) return true;
    }
  }
  return false;
}

/// Procedural backend: background fill, then the stylised pedestrian drawn
/// over each skeleton whose pose signal reaches the mask.
class SpriteGenerator final : public Generator {
 public:
  explicit SpriteGenerator(int supersample = 4, SpriteProportions proportions = {})
      : supersample_(supersample), proportions_(proportions) {}

  std::string name() const override { return "sprite"; }

  CanvasClip generate(const ConditioningBundle& b) const override {
    b.validate();
    CanvasClip out = b.masked_canvas;
    fill_background(out, b);
    const auto& L = b.masked_canvas.layout;
    for (std::size_t f = 0; f < b.pose_keypoints.size(); ++f) {
      for (const auto& tk : b.pose_keypoints[f]) {
        if (tk.slot < 0 || tk.slot >= kViewCount || !pose_in_mask(b, static_cast<int>(f), tk.slot)) continue;
        const int oy = L.slot_y0(tk.slot), ox = L.slot_x0(tk.slot);
        ImageU8 tile = extract(out.frames[f], oy, ox, L.tile.height, L.tile.width);
        std::vector<Keypoint2D> local = tk.joints;
        for (auto& j : local) {
          j.u -= ox;
          j.v -= oy;
        }
        draw_pedestrian(tile, local, sprite_scale_from_keypoints(local, proportions_), b.attributes, supersample_,
                        proportions_);
        const auto& m = b.mask.frames[f];
        for (int y = 0; y < L.tile.height; ++y) {
          for (int x = 0; x < L.tile.width; ++x) {
            if (m.at(oy + y, ox + x)) std::copy_n(tile.pixel(y, x), 3, out.frames[f].pixel(oy + y, ox + x));
          }
        }
      }
    }
    enforce_background(out, b);
    return out;
  }

 private:
  int supersample_;
  SpriteProportions proportions_;
};

}  // namespace pedit
