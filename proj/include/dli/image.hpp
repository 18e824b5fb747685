#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dli/error.hpp"

namespace dli {

struct Pixel {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// Integer translation applied to a mask or donor frame, in pixels.
struct Offset {
  int dy = 0;
  int dx = 0;

  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Inclusive bounding box.
struct Box {
  int top = 0;
  int left = 0;
  int bottom = -1;
  int right = -1;

  bool empty() const noexcept { return bottom < top || right < left; }
  int height() const noexcept { return empty() ? 0 : bottom - top + 1; }
  int width() const noexcept { return empty() ? 0 : right - left + 1; }
};

/// Three-channel raster of doubles, stored channel-major (all of channel 0,
/// then channel 1, then channel 2). Loaded and injected images keep every
/// intensity in [0, 1]; the Poisson solver's pre-clamp output is the one
/// place values may leave that range.
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  ImageBuffer() = default;

  ImageBuffer(int height, int width, double fill = 0.0) : height_(height), width_(width) {
    check_dims(height, width);
    data_.assign(static_cast<std::size_t>(kChannels) * height * width, fill);
  }

  ImageBuffer(int height, int width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    check_dims(height, width);
    if (data_.size() != static_cast<std::size_t>(kChannels) * height * width) {
      throw Error(ErrorCode::shape, "image data length " + std::to_string(data_.size()) +
                                        " does not match 3x" + std::to_string(height) + "x" +
                                        std::to_string(width));
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int channel, int row, int col) noexcept {
    return data_[channel * plane_size() + static_cast<std::size_t>(row) * width_ + col];
  }
  double at(int channel, int row, int col) const noexcept {
    return data_[channel * plane_size() + static_cast<std::size_t>(row) * width_ + col];
  }

  std::span<double> channel(int c) noexcept { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> channel(int c) const noexcept {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  bool contains(int row, int col) const noexcept {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  bool in_unit_range() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  }

  void clamp_unit() noexcept {
    for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  static void check_dims(int height, int width) {
    if (height < 1 || width < 1) {
      throw Error(ErrorCode::shape, "image dimensions must be positive, got " +
                                        std::to_string(height) + "x" + std::to_string(width));
    }
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Per-pixel label raster: 0 is background, 1..C are defect classes.
class SegMask {
 public:
  using Label = std::uint8_t;

  SegMask() = default;

  SegMask(int height, int width, Label fill = 0) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
      throw Error(ErrorCode::shape, "mask dimensions must be positive");
    }
    labels_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  SegMask(int height, int width, std::vector<Label> labels)
      : height_(height), width_(width), labels_(std::move(labels)) {
    if (height < 1 || width < 1 || labels_.size() != static_cast<std::size_t>(height) * width) {
      throw Error(ErrorCode::shape, "mask label count does not match its dimensions");
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return labels_.size(); }

  Label& at(int row, int col) noexcept { return labels_[static_cast<std::size_t>(row) * width_ + col]; }
  Label at(int row, int col) const noexcept {
    return labels_[static_cast<std::size_t>(row) * width_ + col];
  }

  std::span<const Label> labels() const noexcept { return labels_; }
  std::span<Label> labels() noexcept { return labels_; }

  bool contains(int row, int col) const noexcept {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  /// Sorted distinct nonzero labels present.
  std::vector<int> nonzero_labels() const {
    bool seen[256] = {};
    for (Label l : labels_) seen[l] = true;
    std::vector<int> out;
    for (int l = 1; l < 256; ++l) {
      if (seen[l]) out.push_back(l);
    }
    return out;
  }

  std::size_t count_nonzero() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(labels_.begin(), labels_.end(), [](Label l) { return l != 0; }));
  }

  bool any() const noexcept {
    return std::any_of(labels_.begin(), labels_.end(), [](Label l) { return l != 0; });
  }

  Box bounding_box() const noexcept {
    Box box{height_, width_, -1, -1};
    for (int r = 0; r < height_; ++r) {
      for (int c = 0; c < width_; ++c) {
        if (at(r, c) != 0) {
          box.top = std::min(box.top, r);
          box.left = std::min(box.left, c);
          box.bottom = std::max(box.bottom, r);
          box.right = std::max(box.right, c);
        }
      }
    }
    return box;
  }

  friend bool operator==(const SegMask&, const SegMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Label> labels_;
};

/// Outcome of the single-class check: empty `labels` means the mask is fine.
struct SingleClassReport {
  std::vector<int> labels;

  bool ok() const noexcept { return labels.empty(); }
};

/// A mask passes when it carries at most one distinct nonzero label.
inline SingleClassReport validate_single_class(const SegMask& mask) {
  auto labels = mask.nonzero_labels();
  if (labels.size() <= 1) return {};
  return {std::move(labels)};
}

/// Defect class of a mask: 0 when all background. Throws on a mask that
/// violates the single-class constraint.
inline int mask_class(const SegMask& mask) {
  const auto labels = mask.nonzero_labels();
  if (labels.size() > 1) {
    throw Error(ErrorCode::validation, "mask carries more than one defect class");
  }
  return labels.empty() ? 0 : labels.front();
}

struct Sample {
  ImageBuffer image;
  SegMask mask;
  std::string source_id;

  int defect_class() const { return mask_class(mask); }
  bool is_free() const noexcept { return !mask.any(); }
};

/// Builds a sample, enforcing matching dimensions and the single-class rule.
inline Sample make_sample(ImageBuffer image, SegMask mask, std::string source_id) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw Error(ErrorCode::shape, source_id + ": image is " + std::to_string(image.height()) + "x" +
                                      std::to_string(image.width()) + " but mask is " +
                                      std::to_string(mask.height()) + "x" +
                                      std::to_string(mask.width()));
  }
  if (auto report = validate_single_class(mask); !report.ok()) {
    std::string labels;
    for (int l : report.labels) labels += (labels.empty() ? "" : ",") + std::to_string(l);
    throw Error(ErrorCode::validation, source_id + ": mask has multiple defect labels {" + labels + "}");
  }
  return Sample{std::move(image), std::move(mask), std::move(source_id)};
}

// Resizing. Pixel centers are aligned (half-pixel convention).

inline ImageBuffer resize_bilinear(const ImageBuffer& src, int height, int width) {
  ImageBuffer out(height, width);
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(x));
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double fx = x - x0;
      for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
        const double top = src.at(ch, y0, x0) * (1 - fx) + src.at(ch, y0, x1) * fx;
        const double bot = src.at(ch, y1, x0) * (1 - fx) + src.at(ch, y1, x1) * fx;
        out.at(ch, r, c) = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

inline SegMask resize_nearest(const SegMask& src, int height, int width) {
  SegMask out(height, width);
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int r = 0; r < height; ++r) {
    const int y = std::min(static_cast<int>(std::floor((r + 0.5) * sy)), src.height() - 1);
    for (int c = 0; c < width; ++c) {
      const int x = std::min(static_cast<int>(std::floor((c + 0.5) * sx)), src.width() - 1);
      out.at(r, c) = src.at(y, x);
    }
  }
  return out;
}

/// Optional post-injection resize: bilinear for the image, nearest for labels.
inline Sample resize(const Sample& sample, int height, int width) {
  return Sample{resize_bilinear(sample.image, height, width),
                resize_nearest(sample.mask, height, width), sample.source_id};
}

}  // namespace dli
