#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dli/error.hpp"
#include "dli/image.hpp"
#include "dli/provenance.hpp"
#include "dli/rng.hpp"

namespace dli {

/// Random geometric augmentation applied to a donor (image, mask) pair.
/// Each component can be disabled; with every component off the transform
/// is the identity.
struct TransformParams {
  double flip_h_probability = 0.5;
  double flip_v_probability = 0.5;
  /// Rotation drawn uniformly from [-max_rotation_deg, max_rotation_deg].
  double max_rotation_deg = 180.0;
  double scale_min = 0.8;
  double scale_max = 1.25;
  /// When false the defect keeps its donor position in the target frame.
  bool translate = true;

  void validate() const {
    if (!(scale_min > 0.0) || scale_min > scale_max) {
      throw Error(ErrorCode::config, "scale range must satisfy 0 < scale_min <= scale_max");
    }
    if (!(max_rotation_deg >= 0.0)) throw Error(ErrorCode::config, "max_rotation_deg must be >= 0");
    for (double p : {flip_h_probability, flip_v_probability}) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::config, "flip probabilities must lie in [0, 1]");
    }
  }

  static TransformParams identity() {
    return TransformParams{0.0, 0.0, 0.0, 1.0, 1.0, false};
  }
};

/// Draws concrete parameters. Always consumes exactly four draws.
inline TransformRecord draw_transform(const TransformParams& params, Rng& rng) {
  TransformRecord t;
  t.flip_h = rng.bernoulli(params.flip_h_probability);
  t.flip_v = rng.bernoulli(params.flip_v_probability);
  t.rotation_deg = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg);
  t.scale = rng.uniform(params.scale_min, params.scale_max);
  return t;
}

namespace detail {

inline double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace detail

/// Applies `t` about the frame center, keeping the donor frame size. Output
/// pixel q samples the donor at the inverse-mapped location: bilinear for the
/// image (edge-replicated), nearest for the mask (zero outside the frame).
/// Positive angles rotate counter-clockwise as displayed (row axis down).
inline Sample apply_transform(const Sample& donor, const TransformRecord& t) {
  const int h = donor.image.height();
  const int w = donor.image.width();
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;
  const double theta = t.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double inv_scale = 1.0 / t.scale;

  Sample out{ImageBuffer(h, w), SegMask(h, w), donor.source_id};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      // Undo rotation, then scale, then flips.
      const double qx = c - cx;
      const double qy = r - cy;
      double x = (qx * cos_t - qy * sin_t) * inv_scale;
      double y = (qx * sin_t + qy * cos_t) * inv_scale;
      if (t.flip_h) x = -x;
      if (t.flip_v) y = -y;
      x = detail::snap(x + cx);
      y = detail::snap(y + cy);

      const long mr = std::lround(y);
      const long mc = std::lround(x);
      if (mr >= 0 && mc >= 0 && mr < h && mc < w) {
        out.mask.at(r, c) = donor.mask.at(static_cast<int>(mr), static_cast<int>(mc));
      }

      const double yc = std::clamp(y, 0.0, h - 1.0);
      const double xc = std::clamp(x, 0.0, w - 1.0);
      const int y0 = static_cast<int>(std::floor(yc));
      const int x0 = static_cast<int>(std::floor(xc));
      const int y1 = std::min(y0 + 1, h - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double fy = yc - y0;
      const double fx = xc - x0;
      for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
        const auto& im = donor.image;
        double v = im.at(ch, y0, x0);
        if (fx != 0.0 || fy != 0.0) {
          const double top = im.at(ch, y0, x0) * (1 - fx) + im.at(ch, y0, x1) * fx;
          const double bot = im.at(ch, y1, x0) * (1 - fx) + im.at(ch, y1, x1) * fx;
          v = top * (1 - fy) + bot * fy;
        }
        out.image.at(ch, r, c) = v;
      }
    }
  }
  return out;
}

struct TransformedDefect {
  Sample sample;
  TransformRecord record;
  int attempts = 0;
};

/// Draws and applies a random transform, redrawing while the transformed
/// mask comes out empty.
inline TransformedDefect transform_defect(const Sample& donor, const TransformParams& params, Rng& rng,
                                          int max_retries = 16) {
  params.validate();
  if (!donor.mask.any()) {
    throw Error(ErrorCode::transform, donor.source_id + ": donor mask is empty");
  }
  for (int attempt = 1; attempt <= std::max(1, max_retries); ++attempt) {
    const TransformRecord record = draw_transform(params, rng);
    Sample out = apply_transform(donor, record);
    if (out.mask.any()) return {std::move(out), record, attempt};
  }
  throw Error(ErrorCode::transform, donor.source_id + ": every transform attempt emptied the mask");
}

}  // namespace dli
