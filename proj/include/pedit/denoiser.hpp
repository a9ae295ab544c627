#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "pedit/error.hpp"

namespace pedit {

struct DenoiserConfig {
  int in_channels = 16;
  int hidden = 32;
  int blocks = 3;
  int out_channels = 3;
  int embed_dim = 16;

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Offsets of each tensor inside the flat parameter vector.
struct DenoiserLayout {
  struct Conv {
    std::size_t w = 0, b = 0;
    int cin = 0, cout = 0;
  };
  struct Block {
    Conv conv1, conv2;
    std::size_t emb = 0;  // hidden x embed_dim
  };
  Conv in, out;
  std::vector<Block> blocks;
  std::size_t total = 0;

  explicit DenoiserLayout(const DenoiserConfig& c) {
    if (c.in_channels <= 0 || c.hidden <= 0 || c.blocks < 0 || c.out_channels <= 0 || c.embed_dim <= 0 ||
        c.embed_dim % 2) {
      throw ValidationError("denoiser: invalid configuration");
    }
    auto conv = [&](int cin, int cout) {
      Conv k{total, total + static_cast<std::size_t>(cout) * cin * 9, cin, cout};
      total = k.b + static_cast<std::size_t>(cout);
      return k;
    };
    in = conv(c.in_channels, c.hidden);
    for (int i = 0; i < c.blocks; ++i) {
      Block b;
      b.conv1 = conv(c.hidden, c.hidden);
      b.emb = total;
      total += static_cast<std::size_t>(c.hidden) * c.embed_dim;
      b.conv2 = conv(c.hidden, c.hidden);
      blocks.push_back(b);
    }
    out = conv(c.hidden, c.out_channels);
  }
};

/// Sinusoidal embedding of a (possibly fractional) timestep.
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1> timestep_embedding(double t, int dim) {
  Eigen::Matrix<S, Eigen::Dynamic, 1> e(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double w = std::exp(-std::log(10000.0) * k / half);
    e(k) = static_cast<S>(std::sin(t * w));
    e(k + half) = static_cast<S>(std::cos(t * w));
  }
  return e;
}

/// Residual conv net predicting noise. Activations are (channels x pixels)
/// column-major matrices, pixel index = y * width + x; convolutions are 3x3,
/// zero padded, computed through im2col.
template <typename S>
class Denoiser {
 public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

  struct Cache {
    int height = 0, width = 0;
    Vec emb;
    Mat cols_in, cols_out;
    std::vector<Mat> h_in, u, cols1, cols2;
  };

  explicit Denoiser(DenoiserConfig cfg = {}) : cfg_(cfg), layout_(cfg), params_(layout_.total, S(0)) {}

  const DenoiserConfig& config() const noexcept { return cfg_; }
  const DenoiserLayout& layout() const noexcept { return layout_; }
  std::vector<S>& params() noexcept { return params_; }
  const std::vector<S>& params() const noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }

  /// He-normal weights, zero biases; the output conv starts at zero unless
  /// `zero_output` is false.
  void init(std::uint64_t seed, bool zero_output = true) {
    std::mt19937_64 rng(seed);
    std::fill(params_.begin(), params_.end(), S(0));
    auto fill = [&](std::size_t off, std::size_t n, double stddev) {
      std::normal_distribution<double> nd(0.0, stddev);
      for (std::size_t i = 0; i < n; ++i) params_[off + i] = static_cast<S>(nd(rng));
    };
    auto conv = [&](const DenoiserLayout::Conv& k) {
      fill(k.w, static_cast<std::size_t>(k.cout) * k.cin * 9, std::sqrt(2.0 / (k.cin * 9)));
    };
    conv(layout_.in);
    for (const auto& b : layout_.blocks) {
      conv(b.conv1);
      fill(b.emb, static_cast<std::size_t>(cfg_.hidden) * cfg_.embed_dim, std::sqrt(1.0 / cfg_.embed_dim));
      conv(b.conv2);
    }
    if (!zero_output) conv(layout_.out);
  }

  Mat forward(const Mat& x, int height, int width, double t, Cache* cache = nullptr) const {
    if (x.rows() != cfg_.in_channels || x.cols() != static_cast<Eigen::Index>(height) * width) {
      throw ValidationError("denoiser: input shape mismatch");
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    c.height = height;
    c.width = width;
    c.emb = timestep_embedding<S>(t, cfg_.embed_dim);
    c.h_in.assign(layout_.blocks.size(), Mat());
    c.u.assign(layout_.blocks.size(), Mat());
    c.cols1.assign(layout_.blocks.size(), Mat());
    c.cols2.assign(layout_.blocks.size(), Mat());
    Mat h = conv_forward(layout_.in, x, height, width, c.cols_in);
    for (std::size_t i = 0; i < layout_.blocks.size(); ++i) {
      const auto& b = layout_.blocks[i];
      c.h_in[i] = h;
      Mat u = conv_forward(b.conv1, h.cwiseMax(S(0)), height, width, c.cols1[i]);
      u.colwise() += emb_map(b) * c.emb;
      c.u[i] = u;
      h += conv_forward(b.conv2, u.cwiseMax(S(0)), height, width, c.cols2[i]);
    }
    Mat y = conv_forward(layout_.out, h, height, width, c.cols_out);
    if (!cache) local = Cache{};
    return y;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Mat& dout, const Cache& c, std::vector<S>& grad) const {
    if (grad.size() != params_.size()) grad.assign(params_.size(), S(0));
    Mat dh = conv_backward(layout_.out, dout, c.cols_out, c.height, c.width, grad, true);
    for (std::size_t i = layout_.blocks.size(); i-- > 0;) {
      const auto& b = layout_.blocks[i];
      Mat dr2 = conv_backward(b.conv2, dh, c.cols2[i], c.height, c.width, grad, true);
      Mat du = dr2.cwiseProduct((c.u[i].array() > S(0)).matrix().template cast<S>());
      const Vec demb = du.rowwise().sum();
      Eigen::Map<RowMat>(grad.data() + b.emb, cfg_.hidden, cfg_.embed_dim) += demb * c.emb.transpose();
      Mat dr1 = conv_backward(b.conv1, du, c.cols1[i], c.height, c.width, grad, true);
      dh += dr1.cwiseProduct((c.h_in[i].array() > S(0)).matrix().template cast<S>());
    }
    conv_backward(layout_.in, dh, c.cols_in, c.height, c.width, grad, false);
  }

  /// Mean squared error against `target`; fills `grad` (overwritten).
  S loss_and_grad(const Mat& x, int height, int width, double t, const Mat& target, std::vector<S>& grad) const {
    Cache cache;
    const Mat y = forward(x, height, width, t, &cache);
    const Mat diff = y - target;
    const S n = static_cast<S>(diff.size());
    grad.assign(params_.size(), S(0));
    backward(diff * (S(2) / n), cache, grad);
    return diff.squaredNorm() / n;
  }

 private:
  Eigen::Map<const RowMat> weight(const DenoiserLayout::Conv& k) const {
    return {params_.data() + k.w, k.cout, static_cast<Eigen::Index>(k.cin) * 9};
  }
  Eigen::Map<const Vec> bias(const DenoiserLayout::Conv& k) const { return {params_.data() + k.b, k.cout}; }
  Eigen::Map<const RowMat> emb_map(const DenoiserLayout::Block& b) const {
    return {params_.data() + b.emb, cfg_.hidden, cfg_.embed_dim};
  }

  // Patch rows are ordered (tap, channel): row = (ky * 3 + kx) * cin + ch.
  static void im2col(const Mat& x, int h, int w, Mat& cols) {
    const auto cin = x.rows();
    cols.setZero(cin * 9, static_cast<Eigen::Index>(h) * w);
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        S* dst = cols.col(static_cast<Eigen::Index>(y) * w + xx).data();
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= w) continue;
            const S* src = x.col(static_cast<Eigen::Index>(sy) * w + sx).data();
            std::copy_n(src, cin, dst + (ky * 3 + kx) * cin);
          }
        }
      }
    }
  }

  static Mat col2im(const Mat& cols, Eigen::Index cin, int h, int w) {
    Mat x = Mat::Zero(cin, static_cast<Eigen::Index>(h) * w);
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const auto src = cols.col(static_cast<Eigen::Index>(y) * w + xx);
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= w) continue;
            x.col(static_cast<Eigen::Index>(sy) * w + sx) += src.segment((ky * 3 + kx) * cin, cin);
          }
        }
      }
    }
    return x;
  }

  Mat conv_forward(const DenoiserLayout::Conv& k, const Mat& x, int h, int w, Mat& cols) const {
    im2col(x, h, w, cols);
    Mat y = weight(k) * cols;
    y.colwise() += bias(k);
    return y;
  }

  Mat conv_backward(const DenoiserLayout::Conv& k, const Mat& dy, const Mat& cols, int h, int w, std::vector<S>& grad,
                    bool need_input_grad) const {
    Eigen::Map<RowMat>(grad.data() + k.w, k.cout, static_cast<Eigen::Index>(k.cin) * 9).noalias() +=
        dy * cols.transpose();
    Eigen::Map<Vec>(grad.data() + k.b, k.cout) += dy.rowwise().sum();
    if (!need_input_grad) return {};
    const Mat dcols = weight(k).transpose() * dy;
    return col2im(dcols, k.cin, h, w);
  }

  DenoiserConfig cfg_;
  DenoiserLayout layout_;
  std::vector<S> params_;
};

}  // namespace pedit
