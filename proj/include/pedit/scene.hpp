#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedit/attributes.hpp"
#include "pedit/error.hpp"
#include "pedit/image.hpp"
#include "pedit/png_io.hpp"
#include "pedit/skeleton.hpp"

namespace pedit {

enum class ViewId : int { FrontLeft = 0, Front, FrontRight, BackLeft, Back, BackRight };

inline constexpr int kViewCount = 6;
inline constexpr std::array<ViewId, kViewCount> kCanonicalViews = {
    ViewId::FrontLeft, ViewId::Front, ViewId::FrontRight,
    ViewId::BackLeft,  ViewId::Back,  ViewId::BackRight};

inline std::string_view view_name(ViewId id) {
  static constexpr std::array<std::string_view, kViewCount> names = {
      "FRONT_LEFT", "FRONT", "FRONT_RIGHT", "BACK_LEFT", "BACK", "BACK_RIGHT"};
  return names[static_cast<int>(id)];
}

inline std::optional<ViewId> parse_view(std::string_view name) {
  for (ViewId id : kCanonicalViews) {
    if (view_name(id) == name) return id;
  }
  return std::nullopt;
}

inline int view_index(ViewId id) { return static_cast<int>(id); }

/// Pinhole camera: world -> camera is x_c = R * x_w + t; pixels = K * x_c / z_c.
/// Camera axes are x right, y down, z forward. World is x forward, y left, z up.
struct CameraView {
  ViewId id = ViewId::Front;
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int width = 0;
  int height = 0;

  friend bool operator==(const CameraView& a, const CameraView& b) {
    return a.id == b.id && a.intrinsics == b.intrinsics && a.rotation == b.rotation &&
           a.translation == b.translation && a.width == b.width && a.height == b.height;
  }
};

/// Oriented box: size is (w, l, h); l runs along the heading, yaw turns about world z.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double yaw = 0.0;

  friend bool operator==(const Box3D& a, const Box3D& b) {
    return a.center == b.center && a.size == b.size && a.yaw == b.yaw;
  }
};

using Skeleton3D = std::vector<Eigen::Vector3d>;

struct TrackFrame {
  int frame = 0;
  Box3D box;
  std::optional<Skeleton3D> skeleton;

  friend bool operator==(const TrackFrame&, const TrackFrame&) = default;
};

struct PedestrianTrack {
  std::string track_id;
  std::vector<TrackFrame> frames;  // contiguous frame indices
  ViewId dominant_view = ViewId::Front;
  AttributeToken attributes = AttributeToken::from_names("white", "black");
  /// Manual override, indexed by view: the track is treated as out of view there.
  std::array<bool, kViewCount> occluded{};

  const TrackFrame* at_frame(int frame) const {
    if (frames.empty()) return nullptr;
    const int offset = frame - frames.front().frame;
    if (offset < 0 || offset >= static_cast<int>(frames.size())) return nullptr;
    return &frames[static_cast<std::size_t>(offset)];
  }

  friend bool operator==(const PedestrianTrack&, const PedestrianTrack&) = default;
};

struct Scene {
  std::array<CameraView, kViewCount> views;  // indexed by view_index()
  std::vector<PedestrianTrack> tracks;
  int frame_count = 0;
  int joint_count = kBodyJointCount;
  std::array<Video, kViewCount> frames;  // [view][frame], RGB

  const CameraView& view(ViewId id) const { return views[static_cast<std::size_t>(view_index(id))]; }
  const Video& video(ViewId id) const { return frames[static_cast<std::size_t>(view_index(id))]; }
  Video& video(ViewId id) { return frames[static_cast<std::size_t>(view_index(id))]; }

  const PedestrianTrack& track(std::string_view id) const {
    for (const auto& t : tracks) {
      if (t.track_id == id) return t;
    }
    throw ValidationError("unknown track_id '" + std::string(id) + "'");
  }

  friend bool operator==(const Scene&, const Scene&) = default;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate_camera(const CameraView& v, const std::string& path) {
  const auto& K = v.intrinsics;
  const std::string who = path + " (" + std::string(view_name(v.id)) + ")";
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0) {
    throw ValidationError(who + ".intrinsics: must be upper-triangular with K[2][2] = 1");
  }
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) {
    throw ValidationError(who + ".intrinsics: focal lengths must be positive");
  }
  const Eigen::Matrix3d gram = v.rotation.transpose() * v.rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ValidationError(who + ".rotation: not orthonormal");
  }
  const double det = v.rotation.determinant();
  if (std::abs(det - 1.0) > 1e-9) {
    throw ValidationError(who + ".rotation: determinant " + std::to_string(det) + ", expected +1");
  }
  if (!v.translation.allFinite()) throw ValidationError(who + ".translation: non-finite");
  if (v.width <= 0 || v.height <= 0) throw ValidationError(who + ".width/height: must be positive");
}

inline void validate_track(const PedestrianTrack& t, int frame_count, int joint_count,
                           const std::string& path) {
  if (t.track_id.empty()) throw ValidationError(path + ".track_id: empty");
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    const auto& f = t.frames[i];
    const std::string fp = path + ".frames[" + std::to_string(i) + "]";
    if (i > 0 && f.frame != t.frames[i - 1].frame + 1) {
      throw ValidationError(fp + ".frame: indices must be contiguous");
    }
    if (f.frame < 0 || f.frame >= frame_count) {
      throw ValidationError(fp + ".frame: outside clip [0, " + std::to_string(frame_count) + ")");
    }
    if (!(f.box.size.array() > 0.0).all()) throw ValidationError(fp + ".size: must be strictly positive");
    if (!f.box.center.allFinite() || !std::isfinite(f.box.yaw)) {
      throw ValidationError(fp + ".center/yaw: non-finite");
    }
    if (f.skeleton && static_cast<int>(f.skeleton->size()) != joint_count) {
      throw ValidationError(fp + ".skeleton: expected " + std::to_string(joint_count) + " joints, got " +
                            std::to_string(f.skeleton->size()));
    }
  }
}

/// Throws ValidationError naming the first offending field.
inline void validate_scene(const Scene& scene) {
  if (scene.frame_count < 1) throw ValidationError("frame_count: must be >= 1");
  if (scene.joint_count < 1) throw ValidationError("joint_count: must be >= 1");
  for (int i = 0; i < kViewCount; ++i) {
    const auto& v = scene.views[static_cast<std::size_t>(i)];
    const std::string path = "views[" + std::to_string(i) + "]";
    if (view_index(v.id) != i) throw ValidationError(path + ".id: views must follow canonical order");
    validate_camera(v, path);
    const auto& frames = scene.frames[static_cast<std::size_t>(i)];
    if (static_cast<int>(frames.size()) != scene.frame_count) {
      throw ValidationError(path + ".frames: expected " + std::to_string(scene.frame_count) + " frames, got " +
                            std::to_string(frames.size()));
    }
    for (std::size_t f = 0; f < frames.size(); ++f) {
      if (frames[f].height() != v.height || frames[f].width() != v.width || frames[f].channels() != 3) {
        throw ValidationError(path + ".frames[" + std::to_string(f) + "]: dimension mismatch with view");
      }
    }
  }
  for (std::size_t i = 0; i < scene.tracks.size(); ++i) {
    validate_track(scene.tracks[i], scene.frame_count, scene.joint_count,
                   "tracks[" + std::to_string(i) + "]");
    for (std::size_t j = 0; j < i; ++j) {
      if (scene.tracks[j].track_id == scene.tracks[i].track_id) {
        throw ValidationError("tracks[" + std::to_string(i) + "].track_id: duplicate");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Descriptor I/O

namespace detail {

using nlohmann::json;

inline const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ValidationError(path + ": expected object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(path + "." + key + ": missing");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path + ": expected number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ValidationError(path + ": expected integer");
  return j.get<int>();
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ValidationError(path + ": expected string");
  return j.get<std::string>();
}

inline Eigen::Vector3d vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(path + ": expected 3-vector");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]"), number(j[2], path + "[2]")};
}

inline Eigen::Matrix3d mat3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(path + ": expected 3x3 matrix");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3(j[r], path + "[" + std::to_string(r) + "]").transpose();
  return m;
}

inline json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json to_json(const Eigen::Matrix3d& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

inline std::string frame_relpath(ViewId v, int frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "%04d.png", frame);
  return "frames/" + std::string(view_name(v)) + "/" + name;
}

}  // namespace detail

inline constexpr std::string_view kSceneFormat = "pedit-scene/1";

inline nlohmann::json scene_descriptor(const Scene& scene) {
  using detail::json;
  json doc;
  doc["format"] = kSceneFormat;
  doc["frame_count"] = scene.frame_count;
  doc["joint_count"] = scene.joint_count;
  json views = json::array();
  for (const auto& v : scene.views) {
    json jv;
    jv["id"] = view_name(v.id);
    jv["width"] = v.width;
    jv["height"] = v.height;
    jv["intrinsics"] = detail::to_json(v.intrinsics);
    jv["rotation"] = detail::to_json(v.rotation);
    jv["translation"] = detail::to_json(v.translation);
    json frames = json::array();
    for (int f = 0; f < scene.frame_count; ++f) frames.push_back(detail::frame_relpath(v.id, f));
    jv["frames"] = std::move(frames);
    views.push_back(std::move(jv));
  }
  doc["views"] = std::move(views);
  json tracks = json::array();
  for (const auto& t : scene.tracks) {
    json jt;
    jt["track_id"] = t.track_id;
    jt["dominant_view"] = view_name(t.dominant_view);
    jt["attributes"] = {{"top", t.attributes.top.name}, {"pants", t.attributes.pants.name}};
    json occluded = json::array();
    for (ViewId v : kCanonicalViews)
      if (t.occluded[static_cast<std::size_t>(view_index(v))]) occluded.push_back(view_name(v));
    if (!occluded.empty()) jt["occluded_views"] = std::move(occluded);
    json frames = json::array();
    for (const auto& f : t.frames) {
      json jf;
      jf["frame"] = f.frame;
      jf["center"] = detail::to_json(f.box.center);
      jf["size"] = detail::to_json(f.box.size);
      jf["yaw"] = f.box.yaw;
      if (f.skeleton) {
        json joints = json::array();
        for (const auto& p : *f.skeleton) joints.push_back(detail::to_json(p));
        jf["skeleton"] = std::move(joints);
      }
      frames.push_back(std::move(jf));
    }
    jt["frames"] = std::move(frames);
    tracks.push_back(std::move(jt));
  }
  doc["tracks"] = std::move(tracks);
  return doc;
}

/// Writes `scene.json` plus one PNG per view per frame under `dir`.
inline void save_scene(const Scene& scene, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create scene directory " + dir.string() + ": " + ec.message());
  for (const auto& v : scene.views) {
    fs::create_directories(dir / "frames" / std::string(view_name(v.id)), ec);
    if (ec) throw IoError("cannot create frame directory: " + ec.message());
    const auto& video = scene.video(v.id);
    for (int f = 0; f < scene.frame_count; ++f) {
      write_png(dir / detail::frame_relpath(v.id, f), video[static_cast<std::size_t>(f)]);
    }
  }
  std::ofstream out(dir / "scene.json");
  if (!out) throw IoError("cannot write " + (dir / "scene.json").string());
  out << scene_descriptor(scene).dump(1) << '\n';
  if (!out) throw IoError("write failed: " + (dir / "scene.json").string());
}

/// Parses a descriptor (no frames loaded). Frame paths are returned per view.
inline Scene parse_scene_descriptor(const nlohmann::json& doc, std::array<std::vector<std::string>, kViewCount>* frame_paths,
                                    const ColorPalette& palette = ColorPalette::standard()) {
  using detail::field;
  Scene scene;
  if (doc.contains("format") && doc["format"] != kSceneFormat) {
    throw ValidationError("format: unsupported '" + doc["format"].dump() + "'");
  }
  scene.frame_count = detail::integer(field(doc, "frame_count", ""), "frame_count");
  if (doc.contains("joint_count")) scene.joint_count = detail::integer(doc["joint_count"], "joint_count");
  const auto& views = field(doc, "views", "");
  if (!views.is_array() || views.size() != kViewCount) {
    throw ValidationError("views: expected exactly 6 entries");
  }
  std::array<bool, kViewCount> seen{};
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string path = "views[" + std::to_string(i) + "]";
    const auto& jv = views[i];
    const auto name = detail::string(field(jv, "id", path), path + ".id");
    const auto id = parse_view(name);
    if (!id) throw ValidationError(path + ".id: unknown view '" + name + "'");
    if (seen[static_cast<std::size_t>(view_index(*id))]) throw ValidationError(path + ".id: duplicate view '" + name + "'");
    seen[static_cast<std::size_t>(view_index(*id))] = true;
    CameraView cam;
    cam.id = *id;
    cam.width = detail::integer(field(jv, "width", path), path + ".width");
    cam.height = detail::integer(field(jv, "height", path), path + ".height");
    cam.intrinsics = detail::mat3(field(jv, "intrinsics", path), path + ".intrinsics");
    cam.rotation = detail::mat3(field(jv, "rotation", path), path + ".rotation");
    cam.translation = detail::vec3(field(jv, "translation", path), path + ".translation");
    validate_camera(cam, path);
    scene.views[static_cast<std::size_t>(view_index(*id))] = cam;
    if (frame_paths) {
      auto& paths = (*frame_paths)[static_cast<std::size_t>(view_index(*id))];
      const auto& jf = field(jv, "frames", path);
      if (!jf.is_array()) throw ValidationError(path + ".frames: expected array");
      paths.clear();
      for (std::size_t f = 0; f < jf.size(); ++f) {
        paths.push_back(detail::string(jf[f], path + ".frames[" + std::to_string(f) + "]"));
      }
    }
  }
  const auto& tracks = field(doc, "tracks", "");
  if (!tracks.is_array()) throw ValidationError("tracks: expected array");
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const std::string path = "tracks[" + std::to_string(i) + "]";
    const auto& jt = tracks[i];
    PedestrianTrack t;
    t.track_id = detail::string(field(jt, "track_id", path), path + ".track_id");
    const auto dv = detail::string(field(jt, "dominant_view", path), path + ".dominant_view");
    const auto dom = parse_view(dv);
    if (!dom) throw ValidationError(path + ".dominant_view: unknown view '" + dv + "'");
    t.dominant_view = *dom;
    const auto& attrs = field(jt, "attributes", path);
    try {
      t.attributes = AttributeToken::from_names(
          detail::string(field(attrs, "top", path + ".attributes"), path + ".attributes.top"),
          detail::string(field(attrs, "pants", path + ".attributes"), path + ".attributes.pants"), palette);
    } catch (const ValidationError& e) {
      throw ValidationError(path + ".attributes: " + e.what());
    }
    if (jt.contains("occluded_views")) {
      const auto& jo = jt["occluded_views"];
      if (!jo.is_array()) throw ValidationError(path + ".occluded_views: expected array");
      for (std::size_t k = 0; k < jo.size(); ++k) {
        const std::string op = path + ".occluded_views[" + std::to_string(k) + "]";
        const auto name = detail::string(jo[k], op);
        const auto v = parse_view(name);
        if (!v) throw ValidationError(op + ": unknown view '" + name + "'");
        t.occluded[static_cast<std::size_t>(view_index(*v))] = true;
      }
    }
    const auto& frames = field(jt, "frames", path);
    if (!frames.is_array()) throw ValidationError(path + ".frames: expected array");
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const std::string fp = path + ".frames[" + std::to_string(k) + "]";
      const auto& jf = frames[k];
      TrackFrame tf;
      tf.frame = detail::integer(field(jf, "frame", fp), fp + ".frame");
      tf.box.center = detail::vec3(field(jf, "center", fp), fp + ".center");
      tf.box.size = detail::vec3(field(jf, "size", fp), fp + ".size");
      tf.box.yaw = detail::number(field(jf, "yaw", fp), fp + ".yaw");
      if (jf.contains("skeleton")) {
        const auto& js = jf["skeleton"];
        if (!js.is_array()) throw ValidationError(fp + ".skeleton: expected array");
        Skeleton3D sk;
        for (std::size_t j = 0; j < js.size(); ++j) {
          sk.push_back(detail::vec3(js[j], fp + ".skeleton[" + std::to_string(j) + "]"));
        }
        tf.skeleton = std::move(sk);
      }
      t.frames.push_back(std::move(tf));
    }
    validate_track(t, scene.frame_count, scene.joint_count, path);
    scene.tracks.push_back(std::move(t));
  }
  return scene;
}

/// Loads and validates a scene directory (or a path to its scene.json).
inline Scene load_scene(const std::filesystem::path& path, const ColorPalette& palette = ColorPalette::standard()) {
  namespace fs = std::filesystem;
  const fs::path descriptor = fs::is_directory(path) ? path / "scene.json" : path;
  std::ifstream in(descriptor);
  if (!in) throw IoError("missing scene descriptor: " + descriptor.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(descriptor.string() + ": malformed descriptor: " + e.what());
  }
  std::array<std::vector<std::string>, kViewCount> paths;
  Scene scene = parse_scene_descriptor(doc, &paths, palette);
  const fs::path root = descriptor.parent_path();
  for (int i = 0; i < kViewCount; ++i) {
    const auto& list = paths[static_cast<std::size_t>(i)];
    if (static_cast<int>(list.size()) != scene.frame_count) {
      throw ValidationError("views[" + std::to_string(i) + "].frames: expected " +
                            std::to_string(scene.frame_count) + " entries");
    }
    auto& video = scene.frames[static_cast<std::size_t>(i)];
    video.clear();
    for (const auto& rel : list) {
      ImageU8 img = read_png(root / rel);
      if (img.channels() != 3) throw ValidationError(rel + ": expected RGB image");
      video.push_back(std::move(img));
    }
  }
  validate_scene(scene);
  return scene;
}

}  // namespace pedit
