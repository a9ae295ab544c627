#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pedit/image.hpp"

namespace pedit {

inline constexpr int kLatentFactor = 8;

/// Latent grid stored as an interleaved (H/8) x (W/8) x C image.
using LatentImage = Image<float>;

struct LatentClip {
  std::vector<LatentImage> frames;
};

/// 8x8 area average per channel.
template <typename T>
LatentImage encode_latent(const Image<T>& img) {
  if (img.height() % kLatentFactor || img.width() % kLatentFactor) {
    throw ValidationError("encode_latent: dimensions must be divisible by 8");
  }
  const int h = img.height() / kLatentFactor, w = img.width() / kLatentFactor, ch = img.channels();
  LatentImage out(h, w, ch);
  std::vector<double> acc(static_cast<std::size_t>(ch));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int dy = 0; dy < kLatentFactor; ++dy) {
        for (int dx = 0; dx < kLatentFactor; ++dx) {
          const T* p = img.pixel(y * kLatentFactor + dy, x * kLatentFactor + dx);
          for (int c = 0; c < ch; ++c) acc[static_cast<std::size_t>(c)] += static_cast<double>(p[c]);
        }
      }
      for (int c = 0; c < ch; ++c) {
        out.at(y, x, c) = static_cast<float>(acc[static_cast<std::size_t>(c)] / (kLatentFactor * kLatentFactor));
      }
    }
  }
  return out;
}

template <typename T>
LatentClip encode_latent(const std::vector<Image<T>>& clip) {
  LatentClip out;
  for (const auto& f : clip) out.frames.push_back(encode_latent(f));
  return out;
}

/// Bilinear upsample by 8 (cell centres at 8i + 4, borders clamped).
inline Image<float> decode_latent(const LatentImage& lat) {
  Image<float> out(lat.height() * kLatentFactor, lat.width() * kLatentFactor, lat.channels());
  std::vector<double> px(static_cast<std::size_t>(lat.channels()));
  for (int y = 0; y < out.height(); ++y) {
    const double ly = (y + 0.5) / kLatentFactor - 0.5;
    for (int x = 0; x < out.width(); ++x) {
      const double lx = (x + 0.5) / kLatentFactor - 0.5;
      sample_bilinear(lat, ly, lx, px.data());
      for (int c = 0; c < lat.channels(); ++c) out.at(y, x, c) = static_cast<float>(px[static_cast<std::size_t>(c)]);
    }
  }
  return out;
}

inline std::vector<Image<float>> decode_latent(const LatentClip& clip) {
  std::vector<Image<float>> out;
  for (const auto& f : clip.frames) out.push_back(decode_latent(f));
  return out;
}

/// Nearest-neighbour 8x downsample: each cell takes the pixel at (8i+4, 8j+4).
template <typename T>
Image<T> downsample_nearest(const Image<T>& img) {
  if (img.height() % kLatentFactor || img.width() % kLatentFactor) {
    throw ValidationError("downsample_nearest: dimensions must be divisible by 8");
  }
  Image<T> out(img.height() / kLatentFactor, img.width() / kLatentFactor, img.channels());
  const int off = kLatentFactor / 2;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      std::copy_n(img.pixel(y * kLatentFactor + off, x * kLatentFactor + off), img.channels(), out.pixel(y, x));
    }
  }
  return out;
}

}  // namespace pedit
