#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pedit/error.hpp"

namespace pedit {

/// Interleaved row-major image, `channels` values per pixel.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<std::size_t>(height) * width * channels, fill) {
    assert(height >= 0 && width >= 0 && channels > 0);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }

  bool contains(int y, int x) const noexcept {
    return y >= 0 && y < height_ && x >= 0 && x < width_;
  }

  T& at(int y, int x, int c = 0) noexcept { return data_[index(y, x, c)]; }
  const T& at(int y, int x, int c = 0) const noexcept { return data_[index(y, x, c)]; }

  T* pixel(int y, int x) noexcept { return data_.data() + index(y, x, 0); }
  const T* pixel(int y, int x) const noexcept { return data_.data() + index(y, x, 0); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using ImageU8 = Image<std::uint8_t>;
using Video = std::vector<ImageU8>;

/// 8-bit RGB triple.
struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline std::uint8_t saturate_u8(double v) noexcept {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

/// Copies `src` into `dst` with its top-left corner at (y0, x0). Shapes must fit.
template <typename T>
void paste(Image<T>& dst, const Image<T>& src, int y0, int x0) {
  if (src.channels() != dst.channels() || y0 < 0 || x0 < 0 ||
      y0 + src.height() > dst.height() || x0 + src.width() > dst.width()) {
    throw ValidationError("paste: source does not fit destination");
  }
  const std::size_t row = static_cast<std::size_t>(src.width()) * src.channels();
  for (int y = 0; y < src.height(); ++y) {
    std::copy_n(src.pixel(y, 0), row, dst.pixel(y0 + y, x0));
  }
}

template <typename T>
Image<T> extract(const Image<T>& src, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > src.height() || x0 + width > src.width()) {
    throw ValidationError("extract: region outside image");
  }
  Image<T> out(height, width, src.channels());
  const std::size_t row = static_cast<std::size_t>(width) * src.channels();
  for (int y = 0; y < height; ++y) {
    std::copy_n(src.pixel(y0 + y, x0), row, out.pixel(y, 0));
  }
  return out;
}

/// Bilinear sample at continuous pixel-center coordinates (pixel (i,j) has
/// center (i, j)). Neighbour indices are clamped to the image border.
template <typename T>
void sample_bilinear(const Image<T>& img, double y, double x, double* out) {
  const int h = img.height();
  const int w = img.width();
  const double fy = std::floor(y);
  const double fx = std::floor(x);
  const double wy = y - fy;
  const double wx = x - fx;
  const int y0 = std::clamp(static_cast<int>(fy), 0, h - 1);
  const int y1 = std::clamp(static_cast<int>(fy) + 1, 0, h - 1);
  const int x0 = std::clamp(static_cast<int>(fx), 0, w - 1);
  const int x1 = std::clamp(static_cast<int>(fx) + 1, 0, w - 1);
  const T* p00 = img.pixel(y0, x0);
  const T* p01 = img.pixel(y0, x1);
  const T* p10 = img.pixel(y1, x0);
  const T* p11 = img.pixel(y1, x1);
  for (int c = 0; c < img.channels(); ++c) {
    const double top = (1.0 - wx) * static_cast<double>(p00[c]) + wx * static_cast<double>(p01[c]);
    const double bot = (1.0 - wx) * static_cast<double>(p10[c]) + wx * static_cast<double>(p11[c]);
    out[c] = (1.0 - wy) * top + wy * bot;
  }
}

/// Nearest-neighbour lookup at continuous pixel-center coordinates.
template <typename T>
const T* sample_nearest(const Image<T>& img, double y, double x) {
  const int iy = std::clamp(static_cast<int>(std::floor(y + 0.5)), 0, img.height() - 1);
  const int ix = std::clamp(static_cast<int>(std::floor(x + 0.5)), 0, img.width() - 1);
  return img.pixel(iy, ix);
}

template <typename T>
std::size_t count_nonzero(const Image<T>& img) {
  std::size_t n = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const T* p = img.pixel(y, x);
      for (int c = 0; c < img.channels(); ++c) {
        if (p[c] != T{}) {
          ++n;
          break;
        }
      }
    }
  }
  return n;
}

}  // namespace pedit
