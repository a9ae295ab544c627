#include <gtest/gtest.h>

#include <random>

#include "pedit/crop_canvas.hpp"
#include "pedit/fixture.hpp"

using namespace pedit;

TEST(ExpandRect, DefaultFactorArithmetic) {
  const RectF r = expand_rect({100, 100, 200, 300}, 1.6);
  EXPECT_DOUBLE_EQ(r.x_min, 70);
  EXPECT_DOUBLE_EQ(r.y_min, 40);
  EXPECT_DOUBLE_EQ(r.x_max, 230);
  EXPECT_DOUBLE_EQ(r.y_max, 360);
}

TEST(ExpandRect, UnitFactorIsIdentity) {
  const RectF r{12.5, 3, 40, 99};
  EXPECT_EQ(expand_rect(r, 1.0), r);
}

TEST(ExpandRect, AreaScalesWithFactorSquared) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-500, 500), len(0.5, 300), fac(1.0, 4.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = pos(rng), y = pos(rng);
    const RectF r{x, y, x + len(rng), y + len(rng)};
    const double f = fac(rng);
    EXPECT_NEAR(expand_rect(r, f).area() / r.area(), f * f, 1e-9);
  }
}

TEST(ExpandRect, RejectsDegenerateInput) {
  EXPECT_THROW(expand_rect({1, 1, 1, 5}, 1.6), ValidationError);
  EXPECT_THROW(expand_rect({0, 0, 4, 4}, 0.5), ValidationError);
}

TEST(FitAspect, AlreadyAtAspectIsUnchanged) {
  const auto w = fit_aspect({100, 100, 260, 420}, 2.0, 1000, 1000);
  EXPECT_EQ(w.source, (PixelRect{100, 100, 260, 420}));
  EXPECT_EQ(w.pad, Padding{});
}

TEST(FitAspect, GrowsShortSideAboutCentre) {
  const auto w = fit_aspect({100, 100, 300, 400}, 2.0, 1000, 1000);
  EXPECT_EQ(w.source, (PixelRect{100, 50, 300, 450}));
}

TEST(FitAspect, RandomRectsStayFeasible) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> frame(50, 800);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const int fw = frame(rng), fh = frame(rng);
    const double w = 1 + unit(rng) * fw * 1.5, h = 1 + unit(rng) * fh * 1.5;
    const double cx = (unit(rng) * 1.4 - 0.2) * fw, cy = (unit(rng) * 1.4 - 0.2) * fh;
    const RectF r{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
    const auto out = fit_aspect(r, 2.0, fw, fh);
    // Inside the frame.
    ASSERT_GE(out.source.x0, 0);
    ASSERT_GE(out.source.y0, 0);
    ASSERT_LE(out.source.x1, fw);
    ASSERT_LE(out.source.y1, fh);
    ASSERT_GT(out.source.width(), 0);
    ASSERT_GT(out.source.height(), 0);
    // Window keeps the exact aspect; padding only appears when the window
    // is larger than the frame along that axis.
    ASSERT_EQ(out.window_height(), 2 * out.window_width());
    if (out.pad.left + out.pad.right > 0) { ASSERT_GT(out.window_width(), fw); }
    if (out.pad.top + out.pad.bottom > 0) { ASSERT_GT(out.window_height(), fh); }
    // The window covers the request (up to rounding).
    ASSERT_GE(out.window_width(), std::lround(std::max(w, h / 2)) - 1);
  }
}

TEST(CropTransform, CornersRoundTripWithinHalfPixel) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const RectF r{unit(rng) * 600, unit(rng) * 300, 0, 0};
    RectF rr = r;
    rr.x_max = r.x_min + 5 + unit(rng) * 300;
    rr.y_max = r.y_min + 5 + unit(rng) * 300;
    const auto t = make_transform(ViewId::Front, fit_aspect(rr, 2.0, 640, 400), TileSize{});
    const auto a = t.tile_to_source(Eigen::Vector2d(0, 0));
    const auto b = t.tile_to_source(Eigen::Vector2d(t.tile.width, t.tile.height));
    EXPECT_NEAR(a.x(), t.source_rect.x0 - t.pad.left, 0.5);
    EXPECT_NEAR(a.y(), t.source_rect.y0 - t.pad.top, 0.5);
    EXPECT_NEAR(b.x(), t.source_rect.x1 + t.pad.right, 0.5);
    EXPECT_NEAR(b.y(), t.source_rect.y1 + t.pad.bottom, 0.5);
    const auto back = t.source_to_tile(a);
    EXPECT_NEAR(back.norm(), 0.0, 1e-9);
    if (t.pad == Padding{}) {
      const RectF content = t.content_rect();
      EXPECT_NEAR(content.x_min, 0.0, 1e-9);
      EXPECT_NEAR(content.y_max, t.tile.height, 1e-9);
    }
  }
}

TEST(CropResize, UnitScaleCopiesSourceExactly) {
  ImageU8 frame(600, 500, 3);
  std::mt19937_64 rng(1);
  for (auto& v : frame.data()) v = static_cast<std::uint8_t>(rng());
  FittedWindow win;
  win.source = {37, 21, 37 + 240, 21 + 480};
  const auto t = make_transform(ViewId::Front, win, TileSize{});
  EXPECT_DOUBLE_EQ(t.scale_x, 1.0);
  const ImageU8 tile = crop_resize(frame, t);
  EXPECT_TRUE(tile == extract(frame, 21, 37, 480, 240));
}

TEST(CropResize, PadRegionIsZero) {
  ImageU8 frame(100, 100, 3, 200);
  FittedWindow win;
  win.source = {0, 0, 50, 100};
  win.pad = {0, 0, 50, 0};
  const auto t = make_transform(ViewId::Front, win, TileSize{400, 200});
  const ImageU8 tile = crop_resize(frame, t);
  EXPECT_EQ(tile.at(200, 10, 0), 0);   // left pad
  EXPECT_EQ(tile.at(200, 150, 0), 200);
}

namespace {

FixtureSpec scaled_spec(double focal) {
  FixtureSpec spec;
  spec.frame_count = 1;
  spec.width = 640;
  spec.height = 720;
  spec.focal = focal;
  PedestrianSpec p;
  p.start = {6.0, 0.0};
  p.velocity = {0.0, 0.0};
  p.phase = 0.6;
  spec.pedestrians.push_back(p);
  return spec;
}

/// Vertical extent of pixels that differ from the empty render.
double sprite_height(const ImageU8& tile, const ImageU8& empty_tile) {
  int top = -1, bottom = -1;
  for (int y = 0; y < tile.height(); ++y) {
    for (int x = 0; x < tile.width(); ++x) {
      int d = 0;
      for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(tile.at(y, x, c) - empty_tile.at(y, x, c)));
      if (d > 40) {
        if (top < 0) top = y;
        bottom = y;
        break;
      }
    }
  }
  return top < 0 ? 0.0 : bottom - top + 1;
}

}  // namespace

TEST(CropTrack, ScaleNormalisationAcrossSourceSizes) {
  // The sprite is ~1.7 m tall at 6 m: focal 282/565/1130 gives 80/160/320 px.
  std::vector<double> heights;
  for (double px : {80.0, 160.0, 320.0}) {
    const double focal = px * 6.0 / 1.70;
    const Fixture fx = make_fixture(scaled_spec(focal));
    const auto& track = fx.scene.tracks[0];
    const auto tiles = crop_track(fx.scene, track, ViewId::Front);
    PedestrianTrack ghost = track;
    Scene empty = fx.empty;
    const auto empty_tiles = crop_track(Scene{empty.views, {ghost}, 1, 17, empty.frames}, ghost, ViewId::Front);
    heights.push_back(sprite_height(tiles.frames[0], empty_tiles.frames[0]));
  }
  EXPECT_GT(heights[0], 100.0);
  EXPECT_LE(std::abs(heights[0] - heights[1]), 2.0);
  EXPECT_LE(std::abs(heights[1] - heights[2]), 2.0);
  EXPECT_LE(std::abs(heights[0] - heights[2]), 2.0);
}

TEST(CropTrack, NeverVisibleTrackIsAnError) {
  FixtureSpec spec = scaled_spec(300);
  spec.pedestrians[0].start = {-6.0, 0.0};
  const Fixture fx = make_fixture(spec);
  EXPECT_THROW(crop_track(fx.scene, fx.scene.tracks[0], ViewId::Front), ValidationError);
}

TEST(CropTrack, FramesWithoutBoxesGiveEmptyTiles) {
  FixtureSpec spec;
  spec.frame_count = 4;
  PedestrianSpec p;
  p.first_frame = 1;
  p.last_frame = 2;
  spec.pedestrians.push_back(p);
  const Fixture fx = make_fixture(spec);
  const auto tv = crop_track(fx.scene, fx.scene.tracks[0], ViewId::Front);
  ASSERT_EQ(tv.frames.size(), 4u);
  EXPECT_FALSE(tv.transforms[0]);
  EXPECT_TRUE(tv.transforms[1]);
  EXPECT_EQ(count_nonzero(tv.frames[0]), 0u);
  EXPECT_GT(count_nonzero(tv.frames[1]), 0u);
}

TEST(CropTrack, SmoothingBlendsConsecutiveWindows) {
  FixtureSpec spec;
  spec.frame_count = 3;
  PedestrianSpec p;
  p.velocity = {0.0, 3.0};
  spec.pedestrians.push_back(p);
  const Fixture fx = make_fixture(spec);
  CropConfig raw, smooth;
  smooth.smoothing = 0.5;
  const auto a = crop_track(fx.scene, fx.scene.tracks[0], ViewId::Front, raw);
  const auto b = crop_track(fx.scene, fx.scene.tracks[0], ViewId::Front, smooth);
  EXPECT_EQ(a.transforms[0]->source_rect, b.transforms[0]->source_rect);
  const double ca = a.transforms[2]->source_rect.x0, cb = b.transforms[2]->source_rect.x0;
  const double c0 = a.transforms[0]->source_rect.x0;
  EXPECT_LT(std::abs(cb - c0), std::abs(ca - c0));
}

// ---------------------------------------------------------------------------

namespace {

CanvasLayout default_layout() { return CanvasLayout{}; }

std::array<std::optional<TileVideo>, kViewCount> solid_tiles(const CanvasLayout& layout, int frames) {
  std::array<std::optional<TileVideo>, kViewCount> tiles;
  for (int i = 0; i < kViewCount; ++i) {
    TileVideo tv;
    tv.view = kCanonicalViews[static_cast<std::size_t>(i)];
    const auto c = static_cast<std::uint8_t>(10 * (i + 1));
    tv.frames.assign(static_cast<std::size_t>(frames), ImageU8(layout.tile.height, layout.tile.width, 3, c));
    tv.transforms.resize(static_cast<std::size_t>(frames));
    tiles[static_cast<std::size_t>(i)] = std::move(tv);
  }
  return tiles;
}

}  // namespace

TEST(Canvas, SolidTilesLandInRowMajorSlots) {
  const CanvasLayout layout = default_layout();
  EXPECT_EQ(layout.canvas_height(), 960);
  EXPECT_EQ(layout.canvas_width(), 720);
  const CanvasClip clip = compose_canvas(solid_tiles(layout, 1), layout, 1);
  EXPECT_EQ(clip.frames[0].at(0, 0, 0), 10);
  EXPECT_EQ(clip.frames[0].at(480, 240, 0), 50);
  EXPECT_EQ(clip.frames[0].at(959, 719, 0), 60);
}

TEST(Canvas, AllPlaceholdersGiveZeroCanvas) {
  const CanvasClip clip = compose_canvas({}, default_layout(), 2);
  ASSERT_EQ(clip.frames.size(), 2u);
  EXPECT_EQ(clip.frames[0].height(), 960);
  EXPECT_EQ(count_nonzero(clip.frames[1]), 0u);
  for (bool p : clip.layout.placeholder) EXPECT_TRUE(p);
}

TEST(Canvas, DimensionMismatchIsRejected) {
  const CanvasLayout layout = default_layout();
  auto tiles = solid_tiles(layout, 1);
  tiles[3]->frames[0] = ImageU8(10, 10, 3);
  EXPECT_THROW(compose_canvas(tiles, layout, 1), ValidationError);
  CanvasClip clip = compose_canvas({}, layout, 1);
  clip.frames[0] = ImageU8(100, 100, 3);
  EXPECT_THROW(decompose_canvas(clip), ValidationError);
}

TEST(Canvas, LayoutMustBePermutation) {
  CanvasLayout layout;
  layout.view_order[1] = ViewId::FrontLeft;
  EXPECT_THROW(layout.validate(), ValidationError);
}

TEST(Canvas, SingleNonzeroTileDecomposesToOne) {
  const CanvasLayout layout = default_layout();
  std::array<std::optional<TileVideo>, kViewCount> tiles;
  tiles[view_index(ViewId::BackRight)] = solid_tiles(layout, 1)[5];
  const auto out = decompose_canvas(compose_canvas(tiles, layout, 1));
  int nonzero = 0;
  for (const auto& tv : out) {
    ASSERT_EQ(tv.frames.size(), 1u);
    if (count_nonzero(tv.frames[0]) > 0) ++nonzero;
  }
  EXPECT_EQ(nonzero, 1);
  EXPECT_GT(count_nonzero(out[view_index(ViewId::BackRight)].frames[0]), 0u);
}

TEST(Canvas, RoundTripIsBitExactForOtherDtypes) {
  CanvasLayout layout;
  layout.tile = {6, 4};
  layout.view_order = {ViewId::Back, ViewId::FrontLeft, ViewId::BackRight, ViewId::Front, ViewId::BackLeft,
                       ViewId::FrontRight};
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n;
  std::vector<Image<float>> canvas;
  for (int f = 0; f < 3; ++f) {
    Image<float> img(12, 12, 2);
    for (auto& v : img.data()) v = n(rng);
    canvas.push_back(img);
  }
  const auto slots = decompose_frames(canvas, layout);
  std::array<const std::vector<Image<float>>*, kViewCount> ptrs;
  for (int s = 0; s < kViewCount; ++s) ptrs[static_cast<std::size_t>(s)] = &slots[static_cast<std::size_t>(s)];
  EXPECT_TRUE(compose_frames(ptrs, layout, 3, 2) == canvas);
}
