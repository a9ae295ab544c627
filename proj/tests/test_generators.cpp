#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "pedit/diffusion.hpp"
#include "pedit/fixture.hpp"
#include "pedit/generators.hpp"
#include "pedit/stages.hpp"

using namespace pedit;

namespace {

CanvasLayout small_layout() {
  CanvasLayout L;
  L.tile = {32, 16};
  return L;
}

/// Random canvas, rectangular masks in random slots, pose strokes inside
/// the masks and one random skeleton per masked slot.
ConditioningBundle random_bundle(std::uint64_t seed, int frames, bool with_mask = true) {
  std::mt19937_64 rng(seed);
  const CanvasLayout L = small_layout();
  CanvasClip clip;
  clip.layout = L;
  std::uniform_int_distribution<int> byte(0, 255);
  for (int f = 0; f < frames; ++f) {
    ImageU8 img(L.canvas_height(), L.canvas_width(), 3);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(byte(rng));
    clip.frames.push_back(img);
  }
  MaskVolume mask = empty_mask(L, frames);
  Video pose(static_cast<std::size_t>(frames), ImageU8(L.canvas_height(), L.canvas_width(), 3));
  PoseSequence kps(static_cast<std::size_t>(frames));
  std::uniform_int_distribution<int> slot(0, kViewCount - 1), ry(0, L.tile.height - 8), rx(0, L.tile.width - 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (with_mask) {
    for (int f = 0; f < frames; ++f) {
      const int s = slot(rng);
      const int y0 = ry(rng), x0 = rx(rng);
      const int y1 = std::min(L.tile.height, y0 + 8 + ry(rng) / 2), x1 = std::min(L.tile.width, x0 + 6 + rx(rng) / 2);
      auto& m = mask.frames[static_cast<std::size_t>(f)];
      auto& p = pose[static_cast<std::size_t>(f)];
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          m.at(L.slot_y0(s) + y, L.slot_x0(s) + x) = 1;
          if ((x + y) % 3 == 0) p.at(L.slot_y0(s) + y, L.slot_x0(s) + x, 0) = 255;
        }
      }
      TileKeypoints tk;
      tk.slot = s;
      for (int j = 0; j < kBodyJointCount; ++j) {
        tk.joints.push_back({L.slot_x0(s) + x0 + u(rng) * (x1 - x0), L.slot_y0(s) + y0 + u(rng) * (y1 - y0), true});
      }
      kps[static_cast<std::size_t>(f)].push_back(tk);
    }
  }
  return make_bundle(clip, mask, pose, AttributeToken::from_names("red", "blue"), seed, kps);
}

std::shared_ptr<const DdpmModel> tiny_model(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.blocks = 1;
  cfg.embed_dim = 4;
  cfg.schedule = NoiseSchedule::linear(10, 1e-4, 0.2);
  cfg.seed = seed;
  auto m = std::make_shared<DdpmModel>(make_model(cfg));
  m->net.init(seed, false);
  return m;
}

std::vector<std::unique_ptr<Generator>> all_backends() {
  std::vector<std::unique_ptr<Generator>> g;
  g.push_back(std::make_unique<IdentityGenerator>());
  g.push_back(std::make_unique<SpriteGenerator>());
  g.push_back(std::make_unique<DdpmGenerator>(tiny_model(3)));
  return g;
}

bool same_shape(const CanvasClip& a, const CanvasClip& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    const auto& x = a.frames[f];
    const auto& y = b.frames[f];
    if (x.height() != y.height() || x.width() != y.width() || x.channels() != y.channels()) return false;
  }
  return true;
}

/// Count of mask=0 pixels whose output differs from the masked canvas.
long background_violations(const CanvasClip& out, const ConditioningBundle& b) {
  long bad = 0;
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    const auto& m = b.mask.frames[f];
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (m.at(y, x)) continue;
        const auto* o = out.frames[f].pixel(y, x);
        const auto* c = b.masked_canvas.frames[f].pixel(y, x);
        if (o[0] != c[0] || o[1] != c[1] || o[2] != c[2]) ++bad;
      }
    }
  }
  return bad;
}

Fixture walker_fixture(const std::string& top = "red", const std::string& pants = "blue") {
  FixtureSpec spec;
  PedestrianSpec p;
  p.start = {5.0, -1.2};
  p.velocity = {0.0, 1.4};
  p.top = top;
  p.pants = pants;
  spec.pedestrians.push_back(p);
  return make_fixture(spec);
}

}  // namespace

TEST(Generators, IdentityReturnsMaskedCanvas) {
  const auto b = random_bundle(1, 3);
  const CanvasClip out = IdentityGenerator().generate(b);
  EXPECT_EQ(out.frames, b.masked_canvas.frames);
}

TEST(Generators, BackgroundContractOnRandomBundles) {
  const auto gens = all_backends();
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto b = random_bundle(100 + seed, 3);
    for (const auto& g : gens) {
      const CanvasClip out = g->generate(b);
      ASSERT_TRUE(same_shape(out, b.masked_canvas)) << g->name();
      EXPECT_EQ(background_violations(out, b), 0) << g->name() << " seed " << seed;
    }
  }
}

TEST(Generators, EmptyMaskIsBitExact) {
  const auto b = random_bundle(7, 2, false);
  for (const auto& g : all_backends()) EXPECT_EQ(g->generate(b).frames, b.masked_canvas.frames) << g->name();
}

TEST(Generators, SeedIrrelevantWithoutMask) {
  auto b = random_bundle(8, 2, false);
  DdpmGenerator g(tiny_model(5));
  const auto a = g.generate(b);
  b.seed = 12345;
  EXPECT_EQ(g.generate(b).frames, a.frames);
}

TEST(Generators, DeterministicPerBackend) {
  const auto b = random_bundle(9, 3);
  for (const auto& g : all_backends()) EXPECT_EQ(g->generate(b).frames, g->generate(b).frames) << g->name();
}

TEST(Generators, InvalidBundleRejected) {
  auto b = random_bundle(10, 2);
  b.pose.pop_back();
  for (const auto& g : all_backends()) EXPECT_THROW(g->generate(b), ValidationError) << g->name();
  auto c = random_bundle(11, 2);
  for (int y = 0; y < c.mask.frames[0].height(); ++y) {
    for (int x = 0; x < c.mask.frames[0].width(); ++x) {
      if (c.mask.frames[0].at(y, x)) c.masked_canvas.frames[0].at(y, x, 0) = 9;
    }
  }
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Generators, ConcurrentCallsMatchSerial) {
  std::vector<ConditioningBundle> bundles;
  for (std::uint64_t s = 0; s < 4; ++s) bundles.push_back(random_bundle(200 + s, 2));
  for (const auto& g : all_backends()) {
    std::vector<CanvasClip> serial, parallel(bundles.size());
    for (const auto& b : bundles) serial.push_back(g->generate(b));
    std::vector<std::thread> th;
    for (std::size_t i = 0; i < bundles.size(); ++i) th.emplace_back([&, i] { parallel[i] = g->generate(bundles[i]); });
    for (auto& t : th) t.join();
    for (std::size_t i = 0; i < bundles.size(); ++i) EXPECT_EQ(parallel[i].frames, serial[i].frames) << g->name();
  }
}

TEST(MedianOf, OddAndEven) {
  std::vector<double> a{5, 1, 3};
  EXPECT_EQ(detail::median_of(a), 3.0);
  std::vector<double> b{4, 1, 3, 2};
  EXPECT_EQ(detail::median_of(b), 2.5);
}

TEST(FillBackground, StaticTileRecoveredFromOtherFrames) {
  // Same content every frame, mask moving across it: every masked pixel is
  // visible unmasked in some other frame.
  const CanvasLayout L = small_layout();
  CanvasClip clip;
  clip.layout = L;
  ImageU8 img(L.canvas_height(), L.canvas_width(), 3);
  std::mt19937_64 rng(4);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng() & 0xff);
  clip.frames.assign(4, img);
  MaskVolume mask = empty_mask(L, 4);
  for (int f = 0; f < 4; ++f) {
    for (int y = 4; y < 12; ++y) {
      for (int x = 3 * f; x < 3 * f + 3; ++x) mask.frames[static_cast<std::size_t>(f)].at(y, x) = 1;
    }
  }
  Video pose(4, ImageU8(L.canvas_height(), L.canvas_width(), 3));
  const auto b = make_bundle(clip, mask, pose, AttributeToken::from_names("white", "black"), 0);
  const CanvasClip out = SpriteGenerator().generate(b);
  EXPECT_EQ(out.frames, clip.frames);
}

TEST(FillBackground, UnseenPixelsInpaintedFromNeighbours) {
  const CanvasLayout L = small_layout();
  CanvasClip clip;
  clip.layout = L;
  ImageU8 img(L.canvas_height(), L.canvas_width(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 70;
    }
  }
  clip.frames.assign(2, img);
  MaskVolume mask = empty_mask(L, 2);
  for (int f = 0; f < 2; ++f) {
    for (int y = 10; y < 20; ++y) {
      for (int x = 4; x < 12; ++x) mask.frames[static_cast<std::size_t>(f)].at(y, x) = 1;
    }
  }
  Video pose(2, ImageU8(L.canvas_height(), L.canvas_width(), 3));
  const auto b = make_bundle(clip, mask, pose, AttributeToken::from_names("white", "black"), 0);
  EXPECT_EQ(SpriteGenerator().generate(b).frames, clip.frames);
}

TEST(SpriteGenerator, DrawsOnlyInsideMask) {
  const Fixture fx = walker_fixture();
  const auto& track = fx.scene.tracks.front();
  const TrackCanvas tc = prepare_track(fx.scene, track, track_skeletons(fx.scene, track), StageConfig{});
  const auto b = make_bundle(tc.canvas, tc.mask, tc.pose, track.attributes, 0, tc.keypoints);
  const CanvasClip out = SpriteGenerator().generate(b);
  long inside_changed = 0;
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    const auto& m = b.mask.frames[f];
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        const auto* o = out.frames[f].pixel(y, x);
        const auto* c = b.masked_canvas.frames[f].pixel(y, x);
        const bool diff = o[0] != c[0] || o[1] != c[1] || o[2] != c[2];
        if (!m.at(y, x)) {
          ASSERT_FALSE(diff) << "frame " << f << " (" << y << "," << x << ")";
        } else if (diff) {
          ++inside_changed;
        }
      }
    }
  }
  EXPECT_GT(inside_changed, 1000);
}

TEST(SpriteGenerator, TorsoColourMatchesRequest) {
  const Fixture fx = walker_fixture();
  const auto& track = fx.scene.tracks.front();
  const TrackCanvas tc = prepare_track(fx.scene, track, track_skeletons(fx.scene, track), StageConfig{});
  for (const char* colour : {"white", "green", "yellow"}) {
    const auto attrs = AttributeToken::from_names(colour, "black");
    const auto b = make_bundle(tc.canvas, tc.mask, tc.pose, attrs, 0, tc.keypoints);
    const CanvasClip out = SpriteGenerator().generate(b);
    for (std::size_t f = 0; f < out.frames.size(); ++f) {
      for (const auto& tk : b.pose_keypoints[f]) {
        const auto core = torso_core(tk.joints);
        if (core.empty()) continue;
        ImageU8 m(out.frames[f].height(), out.frames[f].width(), 1);
        draw::polygon<std::uint8_t>(m, core, std::array<std::uint8_t, 1>{1}, 1);
        std::array<double, 3> sum{};
        long n = 0;
        for (int y = 0; y < m.height(); ++y) {
          for (int x = 0; x < m.width(); ++x) {
            if (!m.at(y, x)) continue;
            for (int c = 0; c < 3; ++c) sum[static_cast<std::size_t>(c)] += out.frames[f].at(y, x, c);
            ++n;
          }
        }
        if (n < 20) continue;
        const Rgb want = attrs.top.rgb;
        EXPECT_NEAR(sum[0] / n, want.r, 20.0) << colour << " frame " << f;
        EXPECT_NEAR(sum[1] / n, want.g, 20.0) << colour << " frame " << f;
        EXPECT_NEAR(sum[2] / n, want.b, 20.0) << colour << " frame " << f;
      }
    }
  }
}

TEST(SpriteGenerator, RemovalRecoversEmptyBackground) {
  const Fixture fx = walker_fixture();
  const auto& track = fx.scene.tracks.front();
  std::vector<std::optional<Skeleton3D>> none(static_cast<std::size_t>(fx.scene.frame_count));
  const TrackCanvas tc = prepare_track(fx.scene, track, none, StageConfig{});
  const CanvasClip truth = crop_and_compose(fx.empty, track, StageConfig{});
  const auto b = make_bundle(tc.canvas, tc.mask, zero_pose_for_removal(tc.pose, tc.mask), track.attributes, 0);
  const CanvasClip out = SpriteGenerator().generate(b);
  long n = 0;
  double sum = 0.0;
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    const auto& m = b.mask.frames[f];
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (!m.at(y, x)) continue;
        for (int c = 0; c < 3; ++c) sum += std::abs(out.frames[f].at(y, x, c) - truth.frames[f].at(y, x, c));
        n += 3;
      }
    }
  }
  ASSERT_GT(n, 0);
  EXPECT_LE(sum / n, 2.0);
}
