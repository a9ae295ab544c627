#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "pedit/pipeline.hpp"

using namespace pedit;
namespace fs = std::filesystem;

namespace {

std::uint64_t fnv_of(std::string_view s) {
  Fnv1a h;
  h.bytes(s.data(), s.size());
  return h.value();
}

Fixture small_fixture() {
  FixtureSpec spec;
  spec.frame_count = 6;
  PedestrianSpec p;
  p.start = {5.0, -1.2};
  p.velocity = {0.0, 1.4};
  p.top = "red";
  p.pants = "blue";
  spec.pedestrians.push_back(p);
  return make_fixture(spec);
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pedit_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kReplace = R"({"backend": "sprite", "seed": 3, "edit": {"op": "replace", "track_id": "ped0", "top": "green"}})";
const char* kRemove = R"({"backend": "sprite", "edit": {"op": "remove", "track_id": "ped0"}})";
const char* kInsert =
    R"({"backend": "sprite", "edit": {"op": "insert", "track_id": "new",
        "walk": {"start": [4.0, -0.5], "velocity": [0.0, 2.0], "top": "yellow", "pants": "black"}}})";

}  // namespace

TEST(Fnv1a, ReferenceVectors) {
  EXPECT_EQ(fnv_of(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv_of("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv_of("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(PipelineConfig, Defaults) {
  const auto c = parse_pipeline_config(R"({"edit": {"op": "remove", "track_id": "p"}})");
  EXPECT_EQ(c.backend, "sprite");
  EXPECT_EQ(c.edit.blend_band, 8);
  EXPECT_DOUBLE_EQ(c.edit.stages.mask_factor, 1.2);
  EXPECT_DOUBLE_EQ(c.edit.stages.crop.expand_factor, 1.6);
  EXPECT_EQ(c.op, EditOp::Remove);
}

TEST(PipelineConfig, Rejections) {
  EXPECT_THROW(parse_pipeline_config("{"), ValidationError);
  EXPECT_THROW(parse_pipeline_config(R"({"edit": {"op": "remove", "track_id": "p"}, "bogus": 1})"), ValidationError);
  EXPECT_THROW(parse_pipeline_config(R"({"edit": {"track_id": "p"}})"), ValidationError);
  EXPECT_THROW(parse_pipeline_config(R"({"edit": {"op": "explode", "track_id": "p"}})"), ValidationError);
  EXPECT_THROW(parse_pipeline_config(R"({"backend": "gan", "edit": {"op": "remove", "track_id": "p"}})"),
               ValidationError);
  EXPECT_THROW(parse_pipeline_config(R"({"backend": "ddpm", "edit": {"op": "remove", "track_id": "p"}})"),
               ValidationError);
  EXPECT_THROW(parse_pipeline_config(R"({"edit": {"op": "insert"}})"), ValidationError);
  EXPECT_THROW(parse_pipeline_config(R"({"edit": {"op": "replace", "track_id": "p", "top": "mauve"}})"),
               ValidationError);
  EXPECT_THROW(parse_pipeline_config(R"({"edit": {"op": "remove", "track_id": "p", "top": "red"}})"),
               ValidationError);
  EXPECT_THROW(parse_pipeline_config(R"({"seed": -1, "edit": {"op": "remove", "track_id": "p"}})"), ValidationError);
}

TEST(PipelineConfig, EnvironmentFallback) {
  ::unsetenv(kConfigEnvVar);
  EXPECT_FALSE(resolve_config_path("").has_value());
  ::setenv(kConfigEnvVar, "/tmp/from_env.json", 1);
  EXPECT_EQ(resolve_config_path("").value(), fs::path("/tmp/from_env.json"));
  EXPECT_EQ(resolve_config_path("/x.json").value(), fs::path("/x.json"));
  ::unsetenv(kConfigEnvVar);
}

TEST(FixtureSpecJson, ParsesAndRejects) {
  const auto s = parse_fixture_spec(
      R"({"frame_count": 4, "seed": 9, "pedestrians": [{"track_id": "a", "start": [5, 0], "top": "red"}]})");
  EXPECT_EQ(s.frame_count, 4);
  EXPECT_EQ(s.seed, 9u);
  ASSERT_EQ(s.pedestrians.size(), 1u);
  EXPECT_EQ(s.pedestrians[0].top, "red");
  EXPECT_THROW(parse_fixture_spec(R"({"frame_count": 0})"), ValidationError);
  EXPECT_THROW(parse_fixture_spec(R"({"pedestrians": [{"track_id": "a"}, {"track_id": "a"}]})"), ValidationError);
  EXPECT_THROW(parse_fixture_spec(R"({"pedestrians": [{"pants": "plaid"}]})"), ValidationError);
}

TEST(RunPipeline, EveryOpPassesLiveAudit) {
  const Fixture fx = small_fixture();
  for (const char* text : {kReplace, kRemove, kInsert}) {
    RunOptions opts;
    opts.verify = true;
    const RunResult r = run_pipeline(fx.scene, parse_pipeline_config(text), opts);
    EXPECT_TRUE(r.audit_failures.empty()) << text << "\n" << (r.audit_failures.empty() ? "" : r.audit_failures[0]);
    EXPECT_EQ(r.checksums.size(), stage_names().size());
  }
}

TEST(RunPipeline, IdentityReplaceOnlyTouchesMasks) {
  const Fixture fx = small_fixture();
  const auto cfg = parse_pipeline_config(R"({"backend": "identity", "edit": {"op": "replace", "track_id": "ped0"}})");
  const RunResult r = run_pipeline(fx.scene, cfg);
  const auto& L = r.result.conditioning.canvas.layout;
  int checked_views = 0;
  for (int s = 0; s < kViewCount; ++s) {
    if (!L.placeholder[static_cast<std::size_t>(s)]) continue;
    const auto v = static_cast<std::size_t>(view_index(L.view_order[static_cast<std::size_t>(s)]));
    EXPECT_EQ(r.result.edited.frames[v], fx.scene.frames[v]);
    ++checked_views;
  }
  EXPECT_GT(checked_views, 0);
}

TEST(RunPipeline, DeterministicChecksums) {
  const Fixture fx = small_fixture();
  const auto cfg = parse_pipeline_config(kInsert);
  const auto a = run_pipeline(fx.scene, cfg);
  const auto b = run_pipeline(fx.scene, cfg);
  EXPECT_EQ(a.checksums, b.checksums);
  EXPECT_EQ(a.manifest, b.manifest);
}

TEST(RunPipeline, WritesArtifactsAndManifestReplays) {
  const Fixture fx = small_fixture();
  const fs::path dir = scratch("replay");
  save_scene(fx.scene, dir / "scene");
  const Scene scene = load_scene(dir / "scene");
  RunOptions opts;
  opts.out_dir = dir / "run";
  opts.scene_path = (dir / "scene").string();
  const auto run = run_pipeline(scene, parse_pipeline_config(kReplace), opts);

  EXPECT_TRUE(fs::exists(dir / "run" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "edited" / "scene.json"));
  for (const char* sub : {"canvas", "mask", "pose", "masked", "generated", "tiles"})
    EXPECT_TRUE(fs::is_directory(dir / "run" / "intermediates" / sub)) << sub;
  EXPECT_TRUE(fs::exists(dir / "run" / "intermediates" / "canvas" / "0000.png"));

  std::ifstream in(dir / "run" / "manifest.json");
  const auto m = nlohmann::json::parse(in);
  EXPECT_EQ(m["config"].get<std::string>(), kReplace);
  EXPECT_EQ(m["seeds"]["generator"].get<std::uint64_t>(), 3u);

  const auto check = verify_manifest(dir / "run" / "manifest.json", true);
  EXPECT_TRUE(check.mismatches.empty());
  EXPECT_TRUE(check.rerun.audit_failures.empty());
  EXPECT_EQ(check.rerun.checksums, run.checksums);

  const Scene edited = load_scene(dir / "run" / "edited");
  EXPECT_EQ(edited.frames, run.result.edited.frames);
  EXPECT_EQ(edited.track("ped0").attributes.top.name, "green");
  fs::remove_all(dir);
}

TEST(RunPipeline, TamperedManifestIsReported) {
  const Fixture fx = small_fixture();
  const fs::path dir = scratch("tamper");
  save_scene(fx.scene, dir / "scene");
  RunOptions opts;
  opts.out_dir = dir / "run";
  opts.scene_path = (dir / "scene").string();
  opts.intermediates = false;
  run_pipeline(load_scene(dir / "scene"), parse_pipeline_config(kRemove), opts);
  EXPECT_FALSE(fs::exists(dir / "run" / "intermediates"));

  nlohmann::json m;
  {
    std::ifstream in(dir / "run" / "manifest.json");
    m = nlohmann::json::parse(in);
  }
  m["stages"][5]["checksum"] = "0000000000000000";
  {
    std::ofstream out(dir / "run" / "manifest.json");
    out << m.dump();
  }
  const auto check = verify_manifest(dir / "run" / "manifest.json");
  ASSERT_EQ(check.mismatches.size(), 1u);
  EXPECT_NE(check.mismatches[0].find("generate"), std::string::npos);
  fs::remove_all(dir);
}

TEST(RunPipeline, ErrorsCarryKindAndStage) {
  const Fixture fx = small_fixture();
  EXPECT_THROW(run_pipeline(fx.scene, parse_pipeline_config(R"({"edit": {"op": "remove", "track_id": "ghost"}})")),
               ValidationError);
  try {
    run_pipeline(fx.scene, parse_pipeline_config(
                               R"({"backend": "ddpm", "checkpoint": "/nonexistent/model.bin",
                                   "edit": {"op": "remove", "track_id": "ped0"}})"));
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "generate");
  }
  EXPECT_THROW(run_pipeline(fx.scene, parse_pipeline_config(R"({"edit": {"op": "insert", "track_id": "x",
                                                                 "skeletons": [[[0, 0, 1]]]}})")),
               ValidationError);
}
