#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pedit/bundle.hpp"
#include "pedit/denoiser.hpp"
#include "pedit/fixture.hpp"
#include "pedit/generators.hpp"
#include "pedit/latent.hpp"
#include "pedit/stages.hpp"

namespace pedit {

/// Linear beta schedule with cumulative products.
struct NoiseSchedule {
  int steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  static NoiseSchedule linear(int steps = 100, double beta_start = 1e-4, double beta_end = 0.2) {
    if (steps < 1 || !(beta_start > 0.0) || !(beta_end >= beta_start) || !(beta_end < 1.0)) {
      throw ValidationError("schedule: need steps >= 1 and 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
      const double b = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (steps - 1);
      prod *= 1.0 - b;
      s.beta.push_back(b);
      s.alpha_bar.push_back(prod);
    }
    return s;
  }

  double snr(int t) const { return alpha_bar.at(static_cast<std::size_t>(t)) / (1.0 - alpha_bar.at(static_cast<std::size_t>(t))); }
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise, elementwise.
template <typename Derived>
auto ddpm_forward(const Eigen::MatrixBase<Derived>& x0, int t, const Eigen::MatrixBase<Derived>& noise,
                  const NoiseSchedule& s) {
  if (t < 0 || t >= s.steps) throw ValidationError("ddpm_forward: t out of range");
  if (x0.rows() != noise.rows() || x0.cols() != noise.cols()) throw ValidationError("ddpm_forward: shape mismatch");
  using S = typename Derived::Scalar;
  const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
  return (static_cast<S>(std::sqrt(ab)) * x0 + static_cast<S>(std::sqrt(1.0 - ab)) * noise).eval();
}

inline LatentImage ddpm_forward(const LatentImage& x0, int t, const LatentImage& noise, const NoiseSchedule& s) {
  if (!x0.same_shape(noise)) throw ValidationError("ddpm_forward: shape mismatch");
  if (t < 0 || t >= s.steps) throw ValidationError("ddpm_forward: t out of range");
  const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
  const float a = static_cast<float>(std::sqrt(ab)), b = static_cast<float>(std::sqrt(1.0 - ab));
  LatentImage out = x0;
  auto o = out.data();
  auto n = noise.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * o[i] + b * n[i];
  return out;
}

// ---------------------------------------------------------------------------
// Conditioning tensors

/// Channels stacked after the noisy latent: masked canvas (3), mask (1,
/// optional), pose (3), top colour (3), pants colour (3).
inline int conditioning_channels(bool mask_channel) { return mask_channel ? 13 : 12; }

/// (channels x pixels) matrix of a latent image scaled by `a` and shifted by `b`.
inline Eigen::MatrixXf latent_matrix(const LatentImage& lat, float a = 1.0f, float b = 0.0f) {
  Eigen::MatrixXf m(lat.channels(), static_cast<Eigen::Index>(lat.height()) * lat.width());
  for (int y = 0; y < lat.height(); ++y) {
    for (int x = 0; x < lat.width(); ++x) {
      for (int c = 0; c < lat.channels(); ++c) m(c, static_cast<Eigen::Index>(y) * lat.width() + x) = a * lat.at(y, x, c) + b;
    }
  }
  return m;
}

inline constexpr float kToUnitScale = 1.0f / 127.5f;

/// RGB tile in [-1, 1] at latent resolution.
inline Eigen::MatrixXf rgb_latent(const ImageU8& tile) { return latent_matrix(encode_latent(tile), kToUnitScale, -1.0f); }

inline Eigen::MatrixXf tile_conditioning(const ImageU8& masked, const ImageU8& mask, const ImageU8& pose,
                                         const AttributeToken& attrs, bool mask_channel) {
  const Eigen::MatrixXf m = rgb_latent(masked);
  const Eigen::Index p = m.cols();
  Eigen::MatrixXf cond(conditioning_channels(mask_channel), p);
  Eigen::Index row = 0;
  cond.middleRows(row, 3) = m;
  row += 3;
  if (mask_channel) {
    const ImageU8 ml = downsample_nearest(mask);
    for (int y = 0; y < ml.height(); ++y) {
      for (int x = 0; x < ml.width(); ++x) cond(row, static_cast<Eigen::Index>(y) * ml.width() + x) = ml.at(y, x) ? 1.0f : 0.0f;
    }
    row += 1;
  }
  cond.middleRows(row, 3) = latent_matrix(encode_latent(pose), 1.0f / 255.0f);
  row += 3;
  for (const Rgb& c : {attrs.top.rgb, attrs.pants.rgb}) {
    cond.row(row++).setConstant(c.r * kToUnitScale - 1.0f);
    cond.row(row++).setConstant(c.g * kToUnitScale - 1.0f);
    cond.row(row++).setConstant(c.b * kToUnitScale - 1.0f);
  }
  return cond;
}

/// One training/sampling unit: a tile (or whole canvas) at latent resolution.
struct LatentExample {
  int height = 0, width = 0;
  Eigen::MatrixXf cond;
  Eigen::MatrixXf x0;  // empty when sampling
};

inline ImageU8 slot_view(const ImageU8& canvas, const CanvasLayout& L, int s) {
  return extract(canvas, L.slot_y0(s), L.slot_x0(s), L.tile.height, L.tile.width);
}

inline LatentExample make_example(const ConditioningBundle& b, int f, int s, bool mask_channel, const CanvasClip* target) {
  const auto& L = b.masked_canvas.layout;
  const auto fi = static_cast<std::size_t>(f);
  LatentExample ex;
  ex.height = L.tile.height / kLatentFactor;
  ex.width = L.tile.width / kLatentFactor;
  ex.cond = tile_conditioning(slot_view(b.masked_canvas.frames[fi], L, s), slot_view(b.mask.frames[fi], L, s),
                              slot_view(b.pose[fi], L, s), b.attributes, mask_channel);
  if (target) ex.x0 = rgb_latent(slot_view(target->frames[fi], L, s));
  return ex;
}

inline LatentExample make_canvas_example(const ConditioningBundle& b, int f, bool mask_channel, const CanvasClip* target) {
  const auto fi = static_cast<std::size_t>(f);
  LatentExample ex;
  ex.height = b.masked_canvas.layout.canvas_height() / kLatentFactor;
  ex.width = b.masked_canvas.layout.canvas_width() / kLatentFactor;
  ex.cond = tile_conditioning(b.masked_canvas.frames[fi], b.mask.frames[fi], b.pose[fi], b.attributes, mask_channel);
  if (target) ex.x0 = rgb_latent(target->frames[fi]);
  return ex;
}

// ---------------------------------------------------------------------------
// Model, training, sampling

struct DdpmModel {
  Denoiser<float> net;
  NoiseSchedule schedule = NoiseSchedule::linear();
  bool mask_channel = true;
};

struct TrainingSample {
  ConditioningBundle bundle;
  CanvasClip target;
};

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  int steps = 500;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  int batch_size = 1;
  std::uint64_t seed = 0;
  bool full_canvas = false;
  bool mask_channel = true;
  int hidden = 32;
  int blocks = 3;
  int embed_dim = 16;
  NoiseSchedule schedule = NoiseSchedule::linear();
};

struct TrainResult {
  DdpmModel model;
  std::vector<double> loss;
};

inline DdpmModel make_model(const TrainConfig& cfg) {
  DdpmModel m{Denoiser<float>(DenoiserConfig{3 + conditioning_channels(cfg.mask_channel), cfg.hidden, cfg.blocks, 3,
                                             cfg.embed_dim}),
              cfg.schedule, cfg.mask_channel};
  m.net.init(cfg.seed, true);
  return m;
}

/// Latent units the trainer draws from: every masked tile of every frame,
/// or whole canvas frames with `full_canvas`.
inline std::vector<LatentExample> training_examples(const std::vector<TrainingSample>& data, const TrainConfig& cfg) {
  std::vector<LatentExample> out;
  for (const auto& d : data) {
    d.bundle.validate();
    if (d.target.frames.size() != d.bundle.masked_canvas.frames.size()) throw ValidationError("train: target frame count mismatch");
    for (int f = 0; f < d.bundle.frame_count(); ++f) {
      if (cfg.full_canvas) {
        out.push_back(make_canvas_example(d.bundle, f, cfg.mask_channel, &d.target));
        continue;
      }
      for (int s = 0; s < kViewCount; ++s) {
        if (!d.bundle.masked_canvas.layout.placeholder[static_cast<std::size_t>(s)] && tile_has_mask(d.bundle, f, s)) {
          out.push_back(make_example(d.bundle, f, s, cfg.mask_channel, &d.target));
        }
      }
    }
  }
  if (out.empty()) throw ValidationError("train: dataset has no masked tiles");
  return out;
}

inline Eigen::MatrixXf gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<float>(nd(rng));
  }
  return m;
}

/// Noise-prediction training with a fixed-seed draw of (example, t, noise)
/// per batch element. Gradients of a batch are summed in draw order.
inline TrainResult train_denoiser(const std::vector<TrainingSample>& data, const TrainConfig& cfg) {
  if (data.empty()) throw ValidationError("train: empty dataset");
  if (cfg.steps < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) throw ValidationError("train: invalid configuration");
  const auto examples = training_examples(data, cfg);
  TrainResult res{make_model(cfg), {}};
  auto& net = res.model.net;
  const auto& sched = res.model.schedule;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, examples.size() - 1);
  std::uniform_int_distribution<int> pick_t(0, sched.steps - 1);
  auto& p = net.params();
  std::vector<float> grad, step_grad(p.size());
  std::vector<double> m1(p.size(), 0.0), m2(p.size(), 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int step = 0; step < cfg.steps; ++step) {
    std::fill(step_grad.begin(), step_grad.end(), 0.0f);
    double loss = 0.0;
    for (int k = 0; k < cfg.batch_size; ++k) {
      const auto& ex = examples[pick(rng)];
      const int t = pick_t(rng);
      const Eigen::MatrixXf noise = gaussian_matrix(rng, 3, ex.x0.cols());
      Eigen::MatrixXf input(net.config().in_channels, ex.x0.cols());
      input.topRows(3) = ddpm_forward(ex.x0, t, noise, sched);
      input.bottomRows(ex.cond.rows()) = ex.cond;
      loss += net.loss_and_grad(input, ex.height, ex.width, t, noise, grad);
      for (std::size_t i = 0; i < grad.size(); ++i) step_grad[i] += grad[i];
    }
    loss /= cfg.batch_size;
    if (!std::isfinite(loss)) {
      throw StageError("train", "non-finite loss at step " + std::to_string(step));
    }
    res.loss.push_back(loss);
    const double inv_b = 1.0 / cfg.batch_size;
    if (cfg.optimizer == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= static_cast<float>(cfg.learning_rate * step_grad[i] * inv_b);
    } else {
      const double c1 = 1.0 - std::pow(b1, step + 1), c2 = 1.0 - std::pow(b2, step + 1);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = step_grad[i] * inv_b;
        m1[i] = b1 * m1[i] + (1 - b1) * g;
        m2[i] = b2 * m2[i] + (1 - b2) * g * g;
        p[i] -= static_cast<float>(cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps));
      }
    }
  }
  return res;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Ancestral sampling from pure noise with the conditioning held fixed.
/// The predicted x0 is clipped to [-1, 1] before forming the posterior mean.
inline Eigen::MatrixXf ddpm_sample_latent(const DdpmModel& model, const LatentExample& ex, std::uint64_t seed) {
  const auto& s = model.schedule;
  const auto& net = model.net;
  if (ex.cond.rows() != net.config().in_channels - 3) throw ValidationError("sample: conditioning channel mismatch");
  std::mt19937_64 rng(seed);
  const Eigen::Index n = ex.cond.cols();
  Eigen::MatrixXf x = gaussian_matrix(rng, 3, n);
  Eigen::MatrixXf input(net.config().in_channels, n);
  input.bottomRows(ex.cond.rows()) = ex.cond;
  for (int t = s.steps - 1; t >= 0; --t) {
    input.topRows(3) = x;
    const Eigen::MatrixXf eps = net.forward(input, ex.height, ex.width, t);
    const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
    const double ab_prev = t > 0 ? s.alpha_bar[static_cast<std::size_t>(t - 1)] : 1.0;
    const double beta = s.beta[static_cast<std::size_t>(t)];
    const Eigen::MatrixXf x0 =
        ((x - static_cast<float>(std::sqrt(1.0 - ab)) * eps) / static_cast<float>(std::sqrt(ab))).cwiseMax(-1.0f).cwiseMin(1.0f);
    const float c0 = static_cast<float>(std::sqrt(ab_prev) * beta / (1.0 - ab));
    const float ct = static_cast<float>(std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab));
    x = c0 * x0 + ct * x;
    if (t > 0) x += static_cast<float>(std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab))) * gaussian_matrix(rng, 3, n);
  }
  return x;
}

/// Decodes a (3 x pixels) latent in [-1, 1] to an 8-bit image.
inline ImageU8 decode_rgb(const Eigen::MatrixXf& lat, int height, int width) {
  LatentImage li(height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) li.at(y, x, c) = lat(c, static_cast<Eigen::Index>(y) * width + x);
    }
  }
  const Image<float> up = decode_latent(li);
  ImageU8 out(up.height(), up.width(), 3);
  auto o = out.data();
  auto u = up.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = saturate_u8((static_cast<double>(u[i]) + 1.0) * 127.5);
  return out;
}

/// Samples every masked tile independently (seeded per frame and slot),
/// writes decoded content into masked pixels and keeps the rest verbatim.
inline CanvasClip ddpm_sample(const DdpmModel& model, const ConditioningBundle& b, std::uint64_t seed) {
  b.validate();
  CanvasClip out = b.masked_canvas;
  const auto& L = b.masked_canvas.layout;
  for (int f = 0; f < b.frame_count(); ++f) {
    for (int s = 0; s < kViewCount; ++s) {
      if (!tile_has_mask(b, f, s)) continue;
      const LatentExample ex = make_example(b, f, s, model.mask_channel, nullptr);
      const ImageU8 tile = decode_rgb(ddpm_sample_latent(model, ex, mix_seed(seed, static_cast<std::uint64_t>(f),
                                                                              static_cast<std::uint64_t>(s))),
                                      ex.height, ex.width);
      const auto& m = b.mask.frames[static_cast<std::size_t>(f)];
      for (int y = 0; y < L.tile.height; ++y) {
        for (int x = 0; x < L.tile.width; ++x) {
          if (m.at(L.slot_y0(s) + y, L.slot_x0(s) + x)) {
            std::copy_n(tile.pixel(y, x), 3, out.frames[static_cast<std::size_t>(f)].pixel(L.slot_y0(s) + y, L.slot_x0(s) + x));
          }
        }
      }
    }
  }
  enforce_background(out, b);
  return out;
}

class DdpmGenerator final : public Generator {
 public:
  explicit DdpmGenerator(std::shared_ptr<const DdpmModel> model) : model_(std::move(model)) {
    if (!model_) throw ValidationError("ddpm generator: no model");
  }
  std::string name() const override { return "ddpm"; }
  CanvasClip generate(const ConditioningBundle& b) const override { return ddpm_sample(*model_, b, b.seed); }

 private:
  std::shared_ptr<const DdpmModel> model_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (all little-endian):
//   char[8]  magic "PEDITDM1"
//   u32      in_channels, hidden, blocks, out_channels, embed_dim
//   u32      mask_channel (0/1), schedule steps
//   f64      beta_start, beta_end
//   u64      parameter count N
//   f64[N]   parameters in layout order

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, sizeof v);
  put_u64(os, v);
}
inline std::uint64_t get_uint(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == EOF) throw IoError("checkpoint: truncated file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
inline double get_f64(std::istream& is) {
  const std::uint64_t v = get_uint(is, 8);
  double d;
  std::memcpy(&d, &v, sizeof d);
  return d;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'P', 'E', 'D', 'I', 'T', 'D', 'M', '1'};

inline void save_checkpoint(const DdpmModel& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path);
  os.write(kCheckpointMagic, 8);
  const auto& c = m.net.config();
  for (int v : {c.in_channels, c.hidden, c.blocks, c.out_channels, c.embed_dim}) detail::put_u32(os, static_cast<std::uint32_t>(v));
  detail::put_u32(os, m.mask_channel ? 1u : 0u);
  detail::put_u32(os, static_cast<std::uint32_t>(m.schedule.steps));
  detail::put_f64(os, m.schedule.beta_start);
  detail::put_f64(os, m.schedule.beta_end);
  detail::put_u64(os, m.net.param_count());
  for (float p : m.net.params()) detail::put_f64(os, p);
  if (!os) throw IoError("failed writing checkpoint " + path);
}

inline DdpmModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IoError("checkpoint: bad magic in " + path);
  DenoiserConfig c;
  c.in_channels = static_cast<int>(detail::get_uint(is, 4));
  c.hidden = static_cast<int>(detail::get_uint(is, 4));
  c.blocks = static_cast<int>(detail::get_uint(is, 4));
  c.out_channels = static_cast<int>(detail::get_uint(is, 4));
  c.embed_dim = static_cast<int>(detail::get_uint(is, 4));
  const bool mask_channel = detail::get_uint(is, 4) != 0;
  const int steps = static_cast<int>(detail::get_uint(is, 4));
  const double b0 = detail::get_f64(is);
  const double b1 = detail::get_f64(is);
  const std::uint64_t n = detail::get_uint(is, 8);
  if (c.in_channels != 3 + conditioning_channels(mask_channel) || c.out_channels != 3) {
    throw ValidationError("checkpoint: channel layout does not match conditioning");
  }
  DdpmModel m{Denoiser<float>(c), NoiseSchedule::linear(steps, b0, b1), mask_channel};
  if (n != m.net.param_count()) throw ValidationError("checkpoint: parameter count does not match header");
  for (auto& p : m.net.params()) p = static_cast<float>(detail::get_f64(is));
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic dataset

/// `count` single-frame samples, one fixture pedestrian each, with varied
/// placement, gait phase and clothing. Targets are the fixture renders.
inline std::vector<TrainingSample> make_sprite_dataset(std::uint64_t seed, int count = 4, const StageConfig& cfg = {}) {
  const auto& pal = ColorPalette::standard();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(4.0, 7.0), lat(-1.5, 1.5), ph(0.0, 6.283185307179586);
  std::uniform_int_distribution<std::size_t> col(0, pal.colors().size() - 1);
  std::vector<TrainingSample> out;
  for (int i = 0; i < count; ++i) {
    FixtureSpec spec;
    spec.frame_count = 1;
    spec.seed = rng();
    PedestrianSpec p;
    p.track_id = "ped" + std::to_string(i);
    p.start = {dist(rng), lat(rng)};
    p.velocity = {0.0, 1.2};
    p.phase = ph(rng);
    p.top = pal.colors()[col(rng)].name;
    p.pants = pal.colors()[col(rng)].name;
    spec.pedestrians.push_back(p);
    const Fixture fx = make_fixture(spec);
    const auto& track = fx.scene.tracks.front();
    const TrackCanvas tc = prepare_track(fx.scene, track, track_skeletons(fx.scene, track), cfg);
    out.push_back({make_bundle(tc.canvas, tc.mask, tc.pose, track.attributes, rng(), tc.keypoints), tc.canvas});
  }
  return out;
}

}  // namespace pedit
