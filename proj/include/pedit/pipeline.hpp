#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedit/diffusion.hpp"
#include "pedit/eval_bev.hpp"
#include "pedit/fixture.hpp"
#include "pedit/png_io.hpp"
#include "pedit/reintegrate.hpp"
#include "pedit/scene.hpp"

namespace pedit {

inline constexpr const char* kConfigEnvVar = "PEDIT_CONFIG";
inline constexpr std::string_view kManifestFormat = "pedit-run/1";

// ---------------------------------------------------------------------------
// Checksums

/// 64-bit FNV-1a over a byte stream.
class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(std::string_view s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  template <typename T>
  void image(const Image<T>& img) {
    i64(img.height());
    i64(img.width());
    i64(img.channels());
    bytes(img.data().data(), img.data().size_bytes());
  }
  void video(const Video& v) {
    u64(v.size());
    for (const auto& f : v) image(f);
  }
  std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

inline void hash_box(Fnv1a& h, const Box3D& b) {
  for (int i = 0; i < 3; ++i) h.f64(b.center[i]);
  for (int i = 0; i < 3; ++i) h.f64(b.size[i]);
  h.f64(b.yaw);
}

inline void hash_track(Fnv1a& h, const PedestrianTrack& t) {
  h.str(t.track_id);
  h.i64(view_index(t.dominant_view));
  h.str(t.attributes.top.name);
  h.str(t.attributes.pants.name);
  h.u64(t.frames.size());
  for (const auto& f : t.frames) {
    h.i64(f.frame);
    hash_box(h, f.box);
    h.u64(f.skeleton ? f.skeleton->size() : 0);
    if (f.skeleton) {
      for (const auto& j : *f.skeleton) {
        for (int i = 0; i < 3; ++i) h.f64(j[i]);
      }
    }
  }
}

inline void hash_keypoints(Fnv1a& h, const PoseSequence& seq) {
  h.u64(seq.size());
  for (const auto& frame : seq) {
    h.u64(frame.size());
    for (const auto& tk : frame) {
      h.i64(tk.slot);
      for (const auto& j : tk.joints) {
        h.f64(j.u);
        h.f64(j.v);
        h.i64(j.valid);
      }
    }
  }
}

}  // namespace detail

inline std::uint64_t scene_checksum(const Scene& scene) {
  Fnv1a h;
  h.i64(scene.frame_count);
  h.i64(scene.joint_count);
  for (const auto& v : scene.views) {
    h.i64(view_index(v.id));
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        h.f64(v.intrinsics(r, c));
        h.f64(v.rotation(r, c));
      }
      h.f64(v.translation[r]);
    }
    h.i64(v.width);
    h.i64(v.height);
  }
  h.u64(scene.tracks.size());
  for (const auto& t : scene.tracks) detail::hash_track(h, t);
  for (const auto& video : scene.frames) h.video(video);
  return h.value();
}

/// One checksum per pipeline stage, keyed by stage name.
inline std::map<std::string, std::uint64_t> stage_checksums(const EditResult& r) {
  std::map<std::string, std::uint64_t> out;
  {
    Fnv1a h;
    detail::hash_track(h, r.region);
    h.u64(r.edited.tracks.size());
    for (const auto& t : r.edited.tracks) detail::hash_track(h, t);
    out["request"] = h.value();
  }
  {
    Fnv1a h;
    for (const auto& view : r.projections) {
      h.u64(view.size());
      for (const auto& b : view) {
        h.i64(b ? static_cast<int>(b->visibility) : -1);
        if (!b) continue;
        h.f64(b->rect.x_min);
        h.f64(b->rect.y_min);
        h.f64(b->rect.x_max);
        h.f64(b->rect.y_max);
      }
    }
    out["project"] = h.value();
  }
  {
    Fnv1a h;
    const auto& c = r.conditioning.canvas;
    h.video(c.frames);
    for (int s = 0; s < kViewCount; ++s) {
      h.i64(view_index(c.layout.view_order[static_cast<std::size_t>(s)]));
      h.i64(c.layout.placeholder[static_cast<std::size_t>(s)]);
      for (const auto& t : c.transforms[static_cast<std::size_t>(s)]) {
        h.i64(t.has_value());
        if (!t) continue;
        h.i64(t->source_rect.x0);
        h.i64(t->source_rect.y0);
        h.i64(t->source_rect.x1);
        h.i64(t->source_rect.y1);
        h.i64(t->pad.top);
        h.i64(t->pad.bottom);
        h.i64(t->pad.left);
        h.i64(t->pad.right);
        h.f64(t->scale_y);
        h.f64(t->scale_x);
      }
    }
    out["crop"] = h.value();
  }
  {
    Fnv1a h;
    h.video(r.conditioning.mask.frames);
    out["mask"] = h.value();
  }
  {
    Fnv1a h;
    h.video(r.conditioning.pose);
    detail::hash_keypoints(h, r.conditioning.keypoints);
    out["pose"] = h.value();
  }
  {
    Fnv1a h;
    h.video(r.bundle.masked_canvas.frames);
    h.u64(r.bundle.seed);
    h.video(r.generated.frames);
    out["generate"] = h.value();
  }
  {
    Fnv1a h;
    for (const auto& v : r.edited.frames) h.video(v);
    out["reintegrate"] = h.value();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

/// Parsed run configuration. `text` is kept verbatim for the manifest.
struct PipelineConfig {
  std::string text;
  std::string backend = "sprite";
  std::string checkpoint;
  int sprite_supersample = 4;
  double fps = 10.0;
  EditConfig edit;
  EditOp op = EditOp::Replace;
  std::string track_id;
  std::optional<std::string> top, pants;
  std::optional<PedestrianSpec> walk;
  std::vector<std::optional<Skeleton3D>> skeletons;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& known, const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) throw ValidationError(path + ": unknown key '" + it.key() + "'");
  }
}

inline Eigen::Vector2d vec2(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ValidationError(path + ": expected 2-vector");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
}

template <typename T, typename Get>
void optional_field(const nlohmann::json& obj, const char* key, const std::string& path, T& out, Get get) {
  auto it = obj.find(key);
  if (it != obj.end() && !it->is_null()) out = get(*it, path + "." + key);
}

inline PedestrianSpec parse_walker(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected object");
  reject_unknown(j, {"track_id", "start", "velocity", "scale", "phase", "first_frame", "last_frame", "top", "pants"},
                 path);
  PedestrianSpec p;
  optional_field(j, "track_id", path, p.track_id, string);
  optional_field(j, "start", path, p.start, vec2);
  optional_field(j, "velocity", path, p.velocity, vec2);
  optional_field(j, "scale", path, p.scale, number);
  optional_field(j, "phase", path, p.phase, number);
  optional_field(j, "first_frame", path, p.first_frame, integer);
  optional_field(j, "last_frame", path, p.last_frame, integer);
  optional_field(j, "top", path, p.top, string);
  optional_field(j, "pants", path, p.pants, string);
  if (!(p.scale > 0)) throw ValidationError(path + ".scale: must be positive");
  return p;
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(origin + ": malformed JSON: " + e.what());
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

/// Parses the JSON run configuration. Every key is optional except `edit.op`.
inline PipelineConfig parse_pipeline_config(const std::string& text, const std::string& origin = "config") {
  using namespace detail;
  const nlohmann::json doc = parse_json_text(text, origin);
  if (!doc.is_object()) throw ValidationError(origin + ": expected object");
  reject_unknown(doc,
                 {"backend", "checkpoint", "seed", "fps", "blend_band", "mask_factor", "expand_factor",
                  "crop_smoothing", "dilate_radius", "dilate_iterations", "limb_width", "joint_radius",
                  "insert_inflation", "insert_min_extent", "sprite_supersample", "edit"},
                 origin);
  PipelineConfig c;
  c.text = text;
  auto& st = c.edit.stages;
  optional_field(doc, "backend", origin, c.backend, string);
  optional_field(doc, "checkpoint", origin, c.checkpoint, string);
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!it->is_number_unsigned()) throw ValidationError(origin + ".seed: expected non-negative integer");
    c.edit.seed = it->get<std::uint64_t>();
  }
  optional_field(doc, "fps", origin, c.fps, number);
  optional_field(doc, "blend_band", origin, c.edit.blend_band, integer);
  optional_field(doc, "mask_factor", origin, st.mask_factor, number);
  optional_field(doc, "expand_factor", origin, st.crop.expand_factor, number);
  if (auto it = doc.find("crop_smoothing"); it != doc.end() && !it->is_null())
    st.crop.smoothing = number(*it, origin + ".crop_smoothing");
  optional_field(doc, "dilate_radius", origin, st.dilate_radius, integer);
  optional_field(doc, "dilate_iterations", origin, st.dilate_iterations, integer);
  optional_field(doc, "limb_width", origin, st.pose.limb_width, number);
  optional_field(doc, "joint_radius", origin, st.pose.joint_radius, number);
  optional_field(doc, "insert_inflation", origin, c.edit.insert_inflation, number);
  optional_field(doc, "insert_min_extent", origin, c.edit.insert_min_extent, number);
  optional_field(doc, "sprite_supersample", origin, c.sprite_supersample, integer);

  if (c.backend != "identity" && c.backend != "sprite" && c.backend != "ddpm")
    throw ValidationError(origin + ".backend: expected identity, sprite or ddpm");
  if (c.backend == "ddpm" && c.checkpoint.empty()) throw ValidationError(origin + ".checkpoint: required for ddpm");
  if (!(c.fps > 0)) throw ValidationError(origin + ".fps: must be positive");
  if (c.edit.blend_band < 0) throw ValidationError(origin + ".blend_band: must be >= 0");
  if (!(st.mask_factor >= 1.0)) throw ValidationError(origin + ".mask_factor: must be >= 1");
  if (!(st.crop.expand_factor >= 1.0)) throw ValidationError(origin + ".expand_factor: must be >= 1");
  if (st.dilate_radius < 0 || st.dilate_iterations < 0) throw ValidationError(origin + ": dilation must be >= 0");
  if (c.sprite_supersample < 1) throw ValidationError(origin + ".sprite_supersample: must be >= 1");

  const std::string ep = origin + ".edit";
  const auto& e = field(doc, "edit", origin);
  if (!e.is_object()) throw ValidationError(ep + ": expected object");
  reject_unknown(e, {"op", "track_id", "top", "pants", "walk", "skeletons"}, ep);
  const std::string op = string(field(e, "op", ep), ep + ".op");
  if (op == "replace")
    c.op = EditOp::Replace;
  else if (op == "insert")
    c.op = EditOp::Insert;
  else if (op == "remove")
    c.op = EditOp::Remove;
  else
    throw ValidationError(ep + ".op: expected replace, insert or remove");
  optional_field(e, "track_id", ep, c.track_id, string);
  if (auto it = e.find("top"); it != e.end()) c.top = string(*it, ep + ".top");
  if (auto it = e.find("pants"); it != e.end()) c.pants = string(*it, ep + ".pants");
  if (c.top) ColorPalette::standard().find(*c.top);
  if (c.pants) ColorPalette::standard().find(*c.pants);
  if (auto it = e.find("walk"); it != e.end()) c.walk = parse_walker(*it, ep + ".walk");
  if (auto it = e.find("skeletons"); it != e.end()) {
    if (c.walk) throw ValidationError(ep + ": give either walk or skeletons");
    if (!it->is_array()) throw ValidationError(ep + ".skeletons: expected array");
    for (std::size_t f = 0; f < it->size(); ++f) {
      const auto& jf = (*it)[f];
      const std::string fp = ep + ".skeletons[" + std::to_string(f) + "]";
      if (jf.is_null()) {
        c.skeletons.emplace_back();
        continue;
      }
      if (!jf.is_array()) throw ValidationError(fp + ": expected array of joints or null");
      Skeleton3D sk;
      for (std::size_t j = 0; j < jf.size(); ++j) sk.push_back(vec3(jf[j], fp + "[" + std::to_string(j) + "]"));
      c.skeletons.emplace_back(std::move(sk));
    }
  }
  if (c.op != EditOp::Insert && c.track_id.empty()) throw ValidationError(ep + ".track_id: required for " + op);
  if (c.op == EditOp::Insert && !c.walk && c.skeletons.empty())
    throw ValidationError(ep + ": insert needs walk or skeletons");
  if (c.op == EditOp::Remove && (c.walk || !c.skeletons.empty() || c.top || c.pants))
    throw ValidationError(ep + ": remove takes only track_id");
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(detail::read_text(path), path.string());
}

/// `explicit_path` if given, else the file named by PEDIT_CONFIG.
inline std::optional<std::filesystem::path> resolve_config_path(const std::string& explicit_path) {
  if (!explicit_path.empty()) return std::filesystem::path(explicit_path);
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

/// Turns the configured edit into a request against `scene`.
inline EditRequest make_request(const PipelineConfig& c, const Scene& scene) {
  EditRequest req;
  req.op = c.op;
  req.track_id = c.track_id;
  if (c.walk) {
    PedestrianSpec w = *c.walk;
    if (req.track_id.empty()) req.track_id = w.track_id;
    req.motion.assign(static_cast<std::size_t>(scene.frame_count), std::nullopt);
    for (auto& tf : walker_frames(w, scene.frame_count, c.fps)) req.motion[static_cast<std::size_t>(tf.frame)] = tf.skeleton;
  } else if (!c.skeletons.empty()) {
    req.motion = c.skeletons;
  }
  if (c.op == EditOp::Remove) return req;
  std::string top = "white", pants = "black";
  if (c.op == EditOp::Replace) {
    const auto& t = scene.track(c.track_id);
    top = t.attributes.top.name;
    pants = t.attributes.pants.name;
  } else if (c.walk) {
    top = c.walk->top;
    pants = c.walk->pants;
  }
  if (c.top || c.pants || c.op == EditOp::Insert)
    req.attributes = AttributeToken::from_names(c.top.value_or(top), c.pants.value_or(pants));
  return req;
}

inline std::unique_ptr<Generator> make_generator(const PipelineConfig& c) {
  if (c.backend == "identity") return std::make_unique<IdentityGenerator>();
  if (c.backend == "sprite") return std::make_unique<SpriteGenerator>(c.sprite_supersample);
  return std::make_unique<DdpmGenerator>(std::make_shared<const DdpmModel>(load_checkpoint(c.checkpoint)));
}

// ---------------------------------------------------------------------------
// Fixture specs

inline FixtureSpec parse_fixture_spec(const std::string& text, const std::string& origin = "fixture") {
  using namespace detail;
  const nlohmann::json doc = parse_json_text(text, origin);
  if (!doc.is_object()) throw ValidationError(origin + ": expected object");
  reject_unknown(doc,
                 {"frame_count", "fps", "width", "height", "focal", "camera_height", "ring_radius", "supersample",
                  "seed", "yaws_deg", "pedestrians"},
                 origin);
  FixtureSpec s;
  optional_field(doc, "frame_count", origin, s.frame_count, integer);
  optional_field(doc, "fps", origin, s.fps, number);
  optional_field(doc, "width", origin, s.width, integer);
  optional_field(doc, "height", origin, s.height, integer);
  optional_field(doc, "focal", origin, s.focal, number);
  optional_field(doc, "camera_height", origin, s.camera_height, number);
  optional_field(doc, "ring_radius", origin, s.ring_radius, number);
  optional_field(doc, "supersample", origin, s.supersample, integer);
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!it->is_number_unsigned()) throw ValidationError(origin + ".seed: expected non-negative integer");
    s.seed = it->get<std::uint64_t>();
  }
  if (auto it = doc.find("yaws_deg"); it != doc.end()) {
    if (!it->is_array() || it->size() != kViewCount) throw ValidationError(origin + ".yaws_deg: expected 6 numbers");
    for (int i = 0; i < kViewCount; ++i)
      s.yaws[static_cast<std::size_t>(i)] =
          number((*it)[static_cast<std::size_t>(i)], origin + ".yaws_deg") * std::numbers::pi / 180.0;
  }
  if (auto it = doc.find("pedestrians"); it != doc.end()) {
    if (!it->is_array()) throw ValidationError(origin + ".pedestrians: expected array");
    for (std::size_t i = 0; i < it->size(); ++i)
      s.pedestrians.push_back(parse_walker((*it)[i], origin + ".pedestrians[" + std::to_string(i) + "]"));
  }
  if (s.frame_count < 1) throw ValidationError(origin + ".frame_count: must be >= 1");
  if (s.width < 16 || s.height < 16) throw ValidationError(origin + ": frame size too small");
  if (!(s.fps > 0) || !(s.focal > 0)) throw ValidationError(origin + ": fps and focal must be positive");
  if (s.supersample < 1) throw ValidationError(origin + ".supersample: must be >= 1");
  std::set<std::string> ids;
  for (const auto& p : s.pedestrians) {
    if (!ids.insert(p.track_id).second) throw ValidationError(origin + ": duplicate track_id '" + p.track_id + "'");
    AttributeToken::from_names(p.top, p.pants);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // nothing is written when unset
  bool intermediates = true;
  bool verify = false;
  std::string scene_path;  // recorded in the manifest
};

struct RunResult {
  EditResult result;
  std::map<std::string, std::uint64_t> checksums;
  std::map<std::string, double> seconds;
  std::uint64_t input_checksum = 0;
  std::vector<std::string> audit_failures;  // filled in verify mode
  nlohmann::json manifest;
};

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"request", "project", "crop", "mask", "pose", "generate", "reintegrate"};
  return names;
}

namespace detail {

inline std::string frame_name(int f) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d.png", f);
  return buf;
}

inline void write_video(const std::filesystem::path& dir, const Video& v, int scale = 1) {
  std::filesystem::create_directories(dir);
  for (std::size_t f = 0; f < v.size(); ++f) {
    if (scale == 1) {
      write_png(dir / frame_name(static_cast<int>(f)), v[f]);
      continue;
    }
    ImageU8 img = v[f];
    for (auto& px : img.data()) px = static_cast<std::uint8_t>(px * scale);
    write_png(dir / frame_name(static_cast<int>(f)), img);
  }
}

inline nlohmann::json projections_json(const EditResult& r) {
  nlohmann::json out = nlohmann::json::object();
  for (ViewId v : kCanonicalViews) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& b : r.projections[static_cast<std::size_t>(view_index(v))]) {
      if (!b || !b->usable()) {
        frames.push_back(nullptr);
        continue;
      }
      frames.push_back({{"rect", {b->rect.x_min, b->rect.y_min, b->rect.x_max, b->rect.y_max}},
                        {"truncated", b->visibility == Visibility::Truncated}});
    }
    out[std::string(view_name(v))] = std::move(frames);
  }
  return out;
}

inline void write_intermediates(const std::filesystem::path& dir, const EditResult& r) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_text(dir / "projections.json", projections_json(r).dump(1) + "\n");
  const auto& tc = r.conditioning;
  write_video(dir / "canvas", tc.canvas.frames);
  const auto tiles = decompose_canvas(tc.canvas);
  for (int s = 0; s < kViewCount; ++s) {
    if (tc.canvas.layout.placeholder[static_cast<std::size_t>(s)]) continue;
    const ViewId v = tc.canvas.layout.view_order[static_cast<std::size_t>(s)];
    write_video(dir / "tiles" / std::string(view_name(v)), tiles[static_cast<std::size_t>(view_index(v))].frames);
  }
  write_video(dir / "mask", tc.mask.frames, 255);
  write_video(dir / "pose", tc.pose);
  write_video(dir / "masked", r.bundle.masked_canvas.frames);
  write_video(dir / "generated", r.generated.frames);
}

/// Slots and frames whose mask is non-empty, per view.
inline std::array<std::vector<bool>, kViewCount> touched_frames(const EditResult& r) {
  std::array<std::vector<bool>, kViewCount> out;
  const auto& L = r.conditioning.canvas.layout;
  const auto& mask = r.conditioning.mask.frames;
  for (int s = 0; s < kViewCount; ++s) {
    auto& row = out[static_cast<std::size_t>(view_index(L.view_order[static_cast<std::size_t>(s)]))];
    row.assign(mask.size(), false);
    for (std::size_t f = 0; f < mask.size(); ++f) {
      for (int y = 0; y < L.tile.height && !row[f]; ++y) {
        for (int x = 0; x < L.tile.width; ++x) {
          if (mask[f].at(L.slot_y0(s) + y, L.slot_x0(s) + x)) {
            row[f] = true;
            break;
          }
        }
      }
    }
  }
  return out;
}

/// Module invariants re-checked on live stage outputs.
inline std::vector<std::string> audit(const Scene& input, const EditResult& r, const StageConfig& stages) {
  std::vector<std::string> fail;
  const auto& tc = r.conditioning;
  const auto& L = tc.canvas.layout;

  auto slots = decompose_frames(tc.canvas.frames, L);
  std::array<const Video*, kViewCount> ptrs{};
  for (int s = 0; s < kViewCount; ++s) ptrs[static_cast<std::size_t>(s)] = &slots[static_cast<std::size_t>(s)];
  if (compose_frames<std::uint8_t>(ptrs, L, tc.canvas.frame_count(), 3) != tc.canvas.frames)
    fail.push_back("crop: compose/decompose is not an exact round trip");

  for (std::size_t f = 0; f < tc.mask.frames.size(); ++f) {
    const auto& m = tc.mask.frames[f];
    for (int s = 0; s < kViewCount; ++s) {
      for (int y = 0; y < L.tile.height; ++y) {
        for (int x = 0; x < L.tile.width; ++x) {
          const auto v = m.at(L.slot_y0(s) + y, L.slot_x0(s) + x);
          if (v > 1) {
            fail.push_back("mask: non-binary value in frame " + std::to_string(f));
            s = kViewCount;
            y = L.tile.height;
            break;
          }
          if (v && L.placeholder[static_cast<std::size_t>(s)]) {
            fail.push_back("mask: placeholder slot is masked in frame " + std::to_string(f));
            s = kViewCount;
            y = L.tile.height;
            break;
          }
        }
      }
    }
  }

  Video again = rasterize_pose_canvas(tc.keypoints, L, stages.pose, stages.dilate_radius, stages.dilate_iterations);
  if (again != tc.pose) fail.push_back("pose: raster is not reproducible from keypoints");

  try {
    r.bundle.validate();
  } catch (const Error& e) {
    fail.push_back(std::string("generate: bundle invalid: ") + e.what());
  }
  bool preserved = r.generated.frames.size() == r.bundle.masked_canvas.frames.size();
  for (std::size_t f = 0; preserved && f < r.generated.frames.size(); ++f) {
    const auto& g = r.generated.frames[f];
    const auto& c = r.bundle.masked_canvas.frames[f];
    const auto& m = r.bundle.mask.frames[f];
    if (!g.same_shape(c)) {
      preserved = false;
      break;
    }
    for (int y = 0; y < g.height() && preserved; ++y) {
      for (int x = 0; x < g.width(); ++x) {
        if (!m.at(y, x) && !std::equal(g.pixel(y, x), g.pixel(y, x) + 3, c.pixel(y, x))) {
          preserved = false;
          break;
        }
      }
    }
  }
  if (!preserved) fail.push_back("generate: unmasked canvas pixels changed");

  const auto touched = touched_frames(r);
  for (ViewId v : kCanonicalViews) {
    const auto i = static_cast<std::size_t>(view_index(v));
    for (int f = 0; f < input.frame_count; ++f) {
      if (touched[i][static_cast<std::size_t>(f)]) continue;
      if (r.edited.frames[i][static_cast<std::size_t>(f)] != input.frames[i][static_cast<std::size_t>(f)]) {
        fail.push_back("reintegrate: " + std::string(view_name(v)) + " frame " + std::to_string(f) +
                       " changed without a mask");
      }
    }
  }

  DetectionSet self;
  for (const auto& t : r.edited.tracks) {
    for (const auto& tf : t.frames) {
      const auto c = bev_center(tf.box);
      self.ground_truth.push_back({std::to_string(tf.frame), c.x(), c.y()});
      self.detections.push_back({std::to_string(tf.frame), c.x(), c.y(), 1.0});
    }
  }
  if (!self.ground_truth.empty() && evaluate_bev(self).map_score != 1.0)
    fail.push_back("eval: edited boxes do not self-match");
  return fail;
}

}  // namespace detail

/// Runs the edit described by `config` on `scene`, writing the edited scene,
/// intermediates and a manifest under `opts.out_dir` when set. Stage
/// failures surface as StageError carrying the stage name.
inline RunResult run_pipeline(const Scene& scene, const PipelineConfig& config, const RunOptions& opts = {}) {
  RunResult run;
  run.input_checksum = scene_checksum(scene);
  const EditRequest req = make_request(config, scene);
  std::unique_ptr<Generator> gen;
  try {
    gen = make_generator(config);
  } catch (const std::exception& e) {
    throw StageError("generate", std::string("loading backend: ") + e.what());
  }

  auto runner = [&](const char* name, auto&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const ValidationError& e) {
      if (std::string_view(name) == "request") throw;
      throw StageError(name, e.what());
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    run.seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  run.result = edit_pipeline_staged(scene, req, *gen, config.edit, runner);
  run.checksums = stage_checksums(run.result);
  if (opts.verify) run.audit_failures = detail::audit(scene, run.result, config.edit.stages);

  nlohmann::json& m = run.manifest;
  m["format"] = kManifestFormat;
  m["config"] = config.text;
  m["scene"] = opts.scene_path;
  m["scene_checksum"] = hex64(run.input_checksum);
  m["backend"] = gen->name();
  m["seeds"] = {{"generator", config.edit.seed}};
  if (config.backend == "ddpm") {
    Fnv1a h;
    const std::string bytes = detail::read_text(config.checkpoint);
    h.bytes(bytes.data(), bytes.size());
    m["checkpoint"] = {{"path", config.checkpoint}, {"checksum", hex64(h.value())}};
  }
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& name : stage_names()) stages.push_back({{"name", name}, {"checksum", hex64(run.checksums.at(name))}});
  m["stages"] = std::move(stages);

  if (opts.out_dir) {
    namespace fs = std::filesystem;
    try {
      fs::create_directories(*opts.out_dir);
      save_scene(run.result.edited, *opts.out_dir / "edited");
      if (opts.intermediates) detail::write_intermediates(*opts.out_dir / "intermediates", run.result);
      detail::write_text(*opts.out_dir / "manifest.json", m.dump(1) + "\n");
    } catch (const fs::filesystem_error& e) {
      throw IoError(e.what());
    }
  }
  return run;
}

/// Outcome of re-running a manifest.
struct ManifestCheck {
  std::vector<std::string> mismatches;  // empty means reproduced
  RunResult rerun;
};

/// Reloads the recorded scene and config, reruns without writing and
/// compares every stage checksum.
inline ManifestCheck verify_manifest(const std::filesystem::path& manifest_path, bool audit = false) {
  const nlohmann::json m = detail::parse_json_text(detail::read_text(manifest_path), manifest_path.string());
  const std::string origin = manifest_path.string();
  if (!m.is_object() || m.value("format", "") != kManifestFormat) throw ValidationError(origin + ": not a run manifest");
  const std::string cfg_text = detail::string(detail::field(m, "config", origin), origin + ".config");
  const std::string scene_path = detail::string(detail::field(m, "scene", origin), origin + ".scene");
  if (scene_path.empty()) throw ValidationError(origin + ": manifest has no scene path");
  const PipelineConfig cfg = parse_pipeline_config(cfg_text, origin + ".config");
  const Scene scene = load_scene(scene_path);

  ManifestCheck out;
  RunOptions opts;
  opts.verify = audit;
  opts.scene_path = scene_path;
  out.rerun = run_pipeline(scene, cfg, opts);
  if (hex64(out.rerun.input_checksum) != m.value("scene_checksum", ""))
    out.mismatches.push_back("scene: input checksum differs");
  std::map<std::string, std::string> recorded;
  for (const auto& s : detail::field(m, "stages", origin)) recorded[s.value("name", "")] = s.value("checksum", "");
  for (const auto& name : stage_names()) {
    auto it = recorded.find(name);
    const std::string now = hex64(out.rerun.checksums.at(name));
    if (it == recorded.end())
      out.mismatches.push_back(name + ": not recorded");
    else if (it->second != now)
      out.mismatches.push_back(name + ": recorded " + it->second + ", rerun " + now);
  }
  if (auto it = m.find("checkpoint"); it != m.end() && out.rerun.manifest.contains("checkpoint")) {
    if ((*it)["checksum"] != out.rerun.manifest["checkpoint"]["checksum"])
      out.mismatches.push_back("checkpoint: file changed since the run");
  }
  return out;
}

}  // namespace pedit
