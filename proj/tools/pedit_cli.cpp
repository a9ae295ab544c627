#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "pedit/pipeline.hpp"

using namespace pedit;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

struct TrackArgs {
  std::string scene;
  std::string track;
  std::string out;
};

void add_track_args(CLI::App* cmd, TrackArgs& a, bool need_out = true) {
  cmd->add_option("--scene", a.scene, "Scene directory or scene.json")->required();
  cmd->add_option("--track", a.track, "Track id")->required();
  auto* o = cmd->add_option("--out", a.out, "Output directory");
  if (need_out) o->required();
}

nlohmann::json transform_json(const std::optional<CropTransform>& t) {
  if (!t) return nullptr;
  return {{"view", std::string(view_name(t->view))},
          {"source_rect", {t->source_rect.x0, t->source_rect.y0, t->source_rect.x1, t->source_rect.y1}},
          {"pad", {t->pad.top, t->pad.bottom, t->pad.left, t->pad.right}},
          {"scale", {t->scale_y, t->scale_x}}};
}

nlohmann::json layout_json(const CanvasClip& c) {
  nlohmann::json slots = nlohmann::json::array();
  for (int s = 0; s < kViewCount; ++s) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& t : c.transforms[static_cast<std::size_t>(s)]) frames.push_back(transform_json(t));
    slots.push_back({{"view", std::string(view_name(c.layout.view_order[static_cast<std::size_t>(s)]))},
                     {"placeholder", c.layout.placeholder[static_cast<std::size_t>(s)]},
                     {"transforms", std::move(frames)}});
  }
  return {{"rows", c.layout.rows},
          {"cols", c.layout.cols},
          {"tile", {c.layout.tile.height, c.layout.tile.width}},
          {"slots", std::move(slots)}};
}

void write_json(const fs::path& path, const nlohmann::json& j) { detail::write_text(path, j.dump(1) + "\n"); }

int run(int argc, char** argv) {
  CLI::App app{"Multi-view pedestrian editing pipeline"};
  app.require_subcommand(1);

  // fixture
  std::string fx_spec, fx_out, fx_empty;
  auto* fixture = app.add_subcommand("fixture", "Render a procedural scene");
  fixture->add_option("--spec", fx_spec, "Fixture spec JSON (defaults if omitted)");
  fixture->add_option("--out", fx_out, "Scene output directory")->required();
  fixture->add_option("--empty-out", fx_empty, "Also write the pedestrian-free twin here");

  // project
  TrackArgs pj;
  auto* project = app.add_subcommand("project", "Project a track's 3D boxes into every view");
  add_track_args(project, pj, false);

  // crop
  TrackArgs cr;
  std::string cr_view;
  auto* crop = app.add_subcommand("crop", "Crop one view of a track into tiles");
  add_track_args(crop, cr);
  crop->add_option("--view", cr_view, "View name, e.g. FRONT_LEFT")->required();

  // compose / mask / pose-raster share arguments
  TrackArgs cm, mk, pr;
  auto* compose = app.add_subcommand("compose", "Stitch a track's tiles into canvases");
  add_track_args(compose, cm);
  auto* mask = app.add_subcommand("mask", "Build the canvas mask of a track");
  add_track_args(mask, mk);
  auto* pose = app.add_subcommand("pose-raster", "Rasterise the track's skeletons onto the canvas");
  add_track_args(pose, pr);

  // train
  std::string tr_out, tr_opt = "sgd";
  TrainConfig tcfg;
  int tr_samples = 4;
  std::uint64_t tr_data_seed = 0;
  auto* train = app.add_subcommand("train", "Train the toy denoiser on the sprite dataset");
  train->add_option("--out", tr_out, "Checkpoint path")->required();
  train->add_option("--steps", tcfg.steps)->capture_default_str();
  train->add_option("--lr", tcfg.learning_rate)->capture_default_str();
  train->add_option("--optimizer", tr_opt)->check(CLI::IsMember({"sgd", "adam"}))->capture_default_str();
  train->add_option("--seed", tcfg.seed)->capture_default_str();
  train->add_option("--samples", tr_samples)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--data-seed", tr_data_seed)->capture_default_str();
  train->add_option("--hidden", tcfg.hidden)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--blocks", tcfg.blocks)->check(CLI::NonNegativeNumber)->capture_default_str();

  // sample
  std::string sm_ckpt, sm_out;
  std::uint64_t sm_seed = 0, sm_data_seed = 99;
  auto* sample = app.add_subcommand("sample", "Sample the toy denoiser on a held-out sprite bundle");
  sample->add_option("--checkpoint", sm_ckpt)->required()->check(CLI::ExistingFile);
  sample->add_option("--out", sm_out, "Output directory")->required();
  sample->add_option("--seed", sm_seed)->capture_default_str();
  sample->add_option("--data-seed", sm_data_seed)->capture_default_str();

  // generate
  TrackArgs gn;
  std::string gn_backend = "sprite", gn_ckpt;
  std::uint64_t gn_seed = 0;
  auto* generate = app.add_subcommand("generate", "Run one backend on a track's conditioning bundle");
  add_track_args(generate, gn);
  generate->add_option("--backend", gn_backend)->check(CLI::IsMember({"identity", "sprite", "ddpm"}))->capture_default_str();
  generate->add_option("--checkpoint", gn_ckpt, "Required for ddpm");
  generate->add_option("--seed", gn_seed)->capture_default_str();

  // edit
  std::string ed_scene, ed_config, ed_out;
  bool ed_no_inter = false, ed_verify = false;
  auto* edit = app.add_subcommand("edit", "Run the full edit pipeline");
  edit->add_option("--scene", ed_scene)->required();
  edit->add_option("--config", ed_config, std::string("Run config JSON (default: $") + kConfigEnvVar + ")");
  edit->add_option("--out", ed_out, "Run directory")->required();
  edit->add_flag("--no-intermediates", ed_no_inter, "Write only the edited scene and the manifest");
  edit->add_flag("--verify", ed_verify, "Re-check module invariants on live stage outputs");

  // eval
  std::vector<std::string> ev_dets, ev_names;
  std::string ev_gt, ev_conv = "nuscenes";
  auto* eval = app.add_subcommand("eval", "BEV centre-distance mAP");
  eval->add_option("--dets", ev_dets, "Detection file(s); one report column each")->required();
  eval->add_option("--gt", ev_gt, "Ground-truth file")->required();
  eval->add_option("--name", ev_names, "Column names");
  eval->add_option("--convention", ev_conv)->check(CLI::IsMember({"nuscenes", "voc101"}))->capture_default_str();

  // verify
  std::string vf_manifest;
  bool vf_audit = false;
  auto* verify = app.add_subcommand("verify", "Rerun a manifest and compare stage checksums");
  verify->add_option("--manifest", vf_manifest)->required();
  verify->add_flag("--audit", vf_audit, "Also re-check module invariants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  auto load_track = [](const TrackArgs& a, Scene& scene) -> const PedestrianTrack& {
    scene = load_scene(a.scene);
    return scene.track(a.track);
  };
  const StageConfig stages;

  if (*fixture) {
    FixtureSpec spec;
    if (!fx_spec.empty()) spec = parse_fixture_spec(detail::read_text(fx_spec), fx_spec);
    const Fixture fx = make_fixture(spec);
    for (const auto& w : fx.warnings) std::cerr << "warning: " << w << '\n';
    save_scene(fx.scene, fx_out);
    if (!fx_empty.empty()) save_scene(fx.empty, fx_empty);
    std::cout << "wrote " << fx.scene.frame_count << " frames x " << kViewCount << " views, "
              << fx.scene.tracks.size() << " pedestrian(s) to " << fx_out << '\n';
    return 0;
  }

  if (*project) {
    Scene scene;
    const auto& track = load_track(pj, scene);
    EditResult r;
    r.region = track;
    for (ViewId v : kCanonicalViews) r.projections[static_cast<std::size_t>(view_index(v))] = track_boxes(scene, track, v);
    const std::string text = detail::projections_json(r).dump(1) + "\n";
    if (pj.out.empty())
      std::cout << text;
    else
      detail::write_text(pj.out, text);
    return 0;
  }

  if (*crop) {
    Scene scene;
    const auto& track = load_track(cr, scene);
    const auto view = parse_view(cr_view);
    if (!view) throw ValidationError("unknown view '" + cr_view + "'");
    CropConfig cc = stages.crop;
    cc.tile = stages.layout.tile;
    const TileVideo tv = crop_track(scene, track, *view, cc);
    detail::write_video(cr.out, tv.frames);
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : tv.transforms) ts.push_back(transform_json(t));
    write_json(fs::path(cr.out) / "transforms.json", ts);
    return 0;
  }

  if (*compose || *mask || *pose) {
    const TrackArgs& a = *compose ? cm : (*mask ? mk : pr);
    Scene scene;
    const auto& track = load_track(a, scene);
    const TrackCanvas tc = prepare_track(scene, track, track_skeletons(scene, track), stages);
    if (*compose) detail::write_video(a.out, tc.canvas.frames);
    if (*mask) detail::write_video(a.out, tc.mask.frames, 255);
    if (*pose) detail::write_video(a.out, tc.pose);
    write_json(fs::path(a.out) / "layout.json", layout_json(tc.canvas));
    return 0;
  }

  if (*train) {
    tcfg.optimizer = tr_opt == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
    const auto data = make_sprite_dataset(tr_data_seed, tr_samples);
    const TrainResult res = train_denoiser(data, tcfg);
    save_checkpoint(res.model, tr_out);
    const std::size_t n = res.loss.size(), k = std::min<std::size_t>(100, n);
    double first = 0, last = 0;
    for (std::size_t i = 0; i < k; ++i) {
      first += res.loss[i];
      last += res.loss[n - k + i];
    }
    std::printf("steps %zu  first-%zu mean loss %.4f  last-%zu mean loss %.4f\n", n, k, first / double(k), k,
                last / double(k));
    return 0;
  }

  if (*sample) {
    auto model = std::make_shared<const DdpmModel>(load_checkpoint(sm_ckpt));
    const auto data = make_sprite_dataset(sm_data_seed, 1);
    const CanvasClip out = ddpm_sample(*model, data.front().bundle, sm_seed);
    detail::write_video(sm_out, out.frames);
    detail::write_video(fs::path(sm_out) / "target", data.front().target.frames);
    return 0;
  }

  if (*generate) {
    Scene scene;
    const auto& track = load_track(gn, scene);
    if (gn_backend == "ddpm" && gn_ckpt.empty()) throw ValidationError("--checkpoint is required for ddpm");
    PipelineConfig pc;
    pc.backend = gn_backend;
    pc.checkpoint = gn_ckpt;
    std::unique_ptr<Generator> backend;
    try {
      backend = make_generator(pc);
    } catch (const std::exception& e) {
      throw StageError("generate", std::string("loading backend: ") + e.what());
    }
    const TrackCanvas tc = prepare_track(scene, track, track_skeletons(scene, track), stages);
    const auto bundle = make_bundle(tc.canvas, tc.mask, tc.pose, track.attributes, gn_seed, tc.keypoints);
    CanvasClip out;
    try {
      out = backend->generate(bundle);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError("generate", e.what());
    }
    detail::write_video(gn.out, out.frames);
    return 0;
  }

  if (*edit) {
    const auto cfg_path = resolve_config_path(ed_config);
    if (!cfg_path) throw ValidationError(std::string("no config: pass --config or set ") + kConfigEnvVar);
    const PipelineConfig cfg = load_pipeline_config(*cfg_path);
    const Scene scene = load_scene(ed_scene);
    RunOptions opts;
    opts.out_dir = fs::path(ed_out);
    opts.intermediates = !ed_no_inter;
    opts.verify = ed_verify;
    opts.scene_path = fs::absolute(ed_scene).string();
    const RunResult r = run_pipeline(scene, cfg, opts);
    for (const auto& name : stage_names()) {
      std::printf("%-12s %s  %.3fs\n", name.c_str(), hex64(r.checksums.at(name)).c_str(), r.seconds.at(name));
    }
    if (ed_verify) {
      for (const auto& f : r.audit_failures) std::cerr << "audit: " << f << '\n';
      std::printf("audit: %s\n", r.audit_failures.empty() ? "ok" : "FAILED");
      if (!r.audit_failures.empty()) return kExitStage;
    }
    return 0;
  }

  if (*eval) {
    if (!ev_names.empty() && ev_names.size() != ev_dets.size())
      throw ValidationError("--name must be given once per --dets file");
    const auto gt = load_ground_truth(ev_gt);
    const auto conv = ev_conv == "voc101" ? ApConvention::Voc101 : ApConvention::Clipped;
    std::vector<std::pair<std::string, ApResult>> columns;
    for (std::size_t i = 0; i < ev_dets.size(); ++i) {
      DetectionSet set{load_detections(ev_dets[i]), gt};
      columns.emplace_back(ev_names.empty() ? fs::path(ev_dets[i]).stem().string() : ev_names[i],
                           evaluate_bev(set, conv));
    }
    std::cout << format_report(columns);
    return 0;
  }

  if (*verify) {
    const ManifestCheck check = verify_manifest(vf_manifest, vf_audit);
    for (const auto& m : check.mismatches) std::cerr << "mismatch: " << m << '\n';
    for (const auto& f : check.rerun.audit_failures) std::cerr << "audit: " << f << '\n';
    const bool ok = check.mismatches.empty() && check.rerun.audit_failures.empty();
    std::printf("%s\n", ok ? "reproduced" : "NOT reproduced");
    return ok ? 0 : kExitStage;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const StageError& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return kExitStage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return kExitStage;
  }
}
