#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dli/dataset.hpp"
#include "dli/image.hpp"
#include "dli/rng.hpp"

// Deterministic synthetic fixtures: textured tiles with blob-shaped defects.
// Used by the verify command and the test suites; nothing here depends on
// real data.

namespace dli::synthetic {

/// Per-class donor counts and defect-free count of the Magnetic Tiles
/// dataset (blowhole, break, crack, fray, uneven).
inline const std::vector<std::size_t> kMagneticTilesClassCounts{115, 85, 57, 32, 103};
inline constexpr std::size_t kMagneticTilesFreeCount = 952;

/// Smooth shaded background with mild per-pixel noise, values in [0.15, 0.85].
inline ImageBuffer textured_image(int height, int width, Rng& rng) {
  ImageBuffer img(height, width);
  double base[3];
  double slope_r[3];
  double slope_c[3];
  for (int ch = 0; ch < 3; ++ch) {
    base[ch] = rng.uniform(0.35, 0.65);
    slope_r[ch] = rng.uniform(-0.15, 0.15) / height;
    slope_c[ch] = rng.uniform(-0.15, 0.15) / width;
  }
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double v = base[ch] + slope_r[ch] * r + slope_c[ch] * c + rng.uniform(-0.05, 0.05);
        img.at(ch, r, c) = std::clamp(v, 0.15, 0.85);
      }
    }
  }
  return img;
}

/// Fills an axis-aligned ellipse (possibly a single pixel) with `label`.
inline void paint_ellipse(SegMask& mask, double cy, double cx, double ry, double rx, SegMask::Label label) {
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      const double dy = (r - cy) / std::max(ry, 0.5);
      const double dx = (c - cx) / std::max(rx, 0.5);
      if (dy * dy + dx * dx <= 1.0) mask.at(r, c) = label;
    }
  }
}

/// A defective sample: textured tile plus a darkened elliptic defect of the
/// given class, sized by `max_radius`.
inline Sample defective_sample(int height, int width, int defect_class, double max_radius, Rng& rng,
                               std::string id) {
  ImageBuffer img = textured_image(height, width, rng);
  SegMask mask(height, width);
  const double ry = rng.uniform(0.5, max_radius);
  const double rx = rng.uniform(0.5, max_radius);
  const double cy = rng.uniform(max_radius + 1, height - max_radius - 2);
  const double cx = rng.uniform(max_radius + 1, width - max_radius - 2);
  paint_ellipse(mask, cy, cx, ry, rx, static_cast<SegMask::Label>(defect_class));
  if (!mask.any()) mask.at(static_cast<int>(cy), static_cast<int>(cx)) = static_cast<SegMask::Label>(defect_class);
  const double shade = rng.uniform(0.3, 0.7);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (mask.at(r, c) == 0) continue;
      for (int ch = 0; ch < 3; ++ch) img.at(ch, r, c) = std::clamp(img.at(ch, r, c) * shade, 0.0, 1.0);
    }
  }
  return make_sample(std::move(img), std::move(mask), std::move(id));
}

inline Sample free_sample(int height, int width, Rng& rng, std::string id) {
  return make_sample(textured_image(height, width, rng), SegMask(height, width), std::move(id));
}

struct IndexSpec {
  std::vector<std::size_t> class_counts = kMagneticTilesClassCounts;
  std::size_t free_count = kMagneticTilesFreeCount;
  int height = 24;
  int width = 24;
  double max_radius = 3.0;
};

/// In-memory index with the requested pool sizes. Sample ids are
/// "free/NNNN" and "class_K/NNNN".
inline DatasetIndex make_index(const IndexSpec& spec, std::uint64_t seed) {
  DatasetIndex index(static_cast<int>(spec.class_counts.size()));
  for (std::size_t i = 0; i < spec.free_count; ++i) {
    Rng rng(derive_seed(seed, 0, i));
    index.add(free_sample(spec.height, spec.width, rng, "free/" + std::to_string(i)));
  }
  for (std::size_t k = 0; k < spec.class_counts.size(); ++k) {
    const int c = static_cast<int>(k) + 1;
    for (std::size_t i = 0; i < spec.class_counts[k]; ++i) {
      Rng rng(derive_seed(seed, c, i));
      index.add(defective_sample(spec.height, spec.width, c, spec.max_radius, rng,
                                 "class_" + std::to_string(c) + "/" + std::to_string(i)));
    }
  }
  return index;
}

/// Random seamless-clone problem in a shared frame: target, source and a
/// region mask that stays at least one pixel off the frame edge.
struct CloneInstance {
  ImageBuffer target;
  ImageBuffer source;
  SegMask region;
};

/// Region is a union of up to three ellipses inside a box of at most
/// max_side x max_side, so |region| <= max_side^2.
inline CloneInstance random_clone_instance(Rng& rng, int max_side) {
  const int side = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, max_side - 1))));
  const int height = side + 2 + static_cast<int>(rng.below(6));
  const int width = side + 2 + static_cast<int>(rng.below(6));
  CloneInstance inst{ImageBuffer(height, width), ImageBuffer(height, width), SegMask(height, width)};
  for (double& v : inst.target.data()) v = rng.uniform();
  for (double& v : inst.source.data()) v = rng.uniform();

  const int top = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(height - side - 1)));
  const int left = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(width - side - 1)));
  SegMask blob(side, side);
  const int blobs = 1 + static_cast<int>(rng.below(3));
  for (int b = 0; b < blobs; ++b) {
    paint_ellipse(blob, rng.uniform(0, side - 1), rng.uniform(0, side - 1), rng.uniform(0.5, side / 2.0),
                  rng.uniform(0.5, side / 2.0), 1);
  }
  if (!blob.any()) blob.at(side / 2, side / 2) = 1;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) inst.region.at(top + r, left + c) = blob.at(r, c);
  }
  return inst;
}

}  // namespace dli::synthetic
