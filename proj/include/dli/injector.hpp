#pragma once

#include <string>
#include <utility>

#include "dli/error.hpp"
#include "dli/image.hpp"
#include "dli/poisson.hpp"
#include "dli/provenance.hpp"
#include "dli/rng.hpp"
#include "dli/transform.hpp"

namespace dli {

struct InjectionConfig {
  /// Chance of Poisson cloning; cut-paste otherwise.
  double poisson_probability = 0.5;
  TransformParams transform;
  SolverConfig solver;
  int max_placement_retries = 16;

  void validate() const {
    if (!(poisson_probability >= 0.0 && poisson_probability <= 1.0)) {
      throw Error(ErrorCode::config, "poisson_probability must lie in [0, 1]");
    }
    if (max_placement_retries < 1) throw Error(ErrorCode::config, "max_placement_retries must be >= 1");
    transform.validate();
    solver.validate();
  }
};

struct InjectedImage {
  ImageBuffer image;
  SegMask mask;
};

namespace detail {

// Donor mask shifted into a frame of the given size. Throws when any defect
// pixel lands outside the frame, or within `margin` pixels of its edge.
inline SegMask place_mask(const SegMask& mask, Offset offset, int height, int width, int margin) {
  SegMask out(height, width);
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      const auto label = mask.at(r, c);
      if (label == 0) continue;
      const int tr = r + offset.dy;
      const int tc = c + offset.dx;
      if (tr < margin || tc < margin || tr >= height - margin || tc >= width - margin) {
        throw Error(ErrorCode::placement, "defect pixel lands at (" + std::to_string(tr) + "," +
                                              std::to_string(tc) + ") outside the usable " +
                                              std::to_string(height) + "x" + std::to_string(width) +
                                              " target area");
      }
      out.at(tr, tc) = label;
    }
  }
  return out;
}

}  // namespace detail

/// Copies the donor pixels under its mask, shifted by `offset`, onto the target.
inline InjectedImage cut_paste(const ImageBuffer& target, const Sample& donor, Offset offset) {
  SegMask mask = detail::place_mask(donor.mask, offset, target.height(), target.width(), 0);
  ImageBuffer image = target;
  for (int r = 0; r < donor.mask.height(); ++r) {
    for (int c = 0; c < donor.mask.width(); ++c) {
      if (donor.mask.at(r, c) == 0) continue;
      for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
        image.at(ch, r + offset.dy, c + offset.dx) = donor.image.at(ch, r, c);
      }
    }
  }
  return {std::move(image), std::move(mask)};
}

/// Seamlessly clones the masked donor region into the target: the interior
/// takes the donor's Laplacian, the boundary stays the target's.
inline InjectedImage poisson_inject(const ImageBuffer& target, const Sample& donor, Offset offset,
                                    const SolverConfig& solver = {}) {
  SegMask mask = detail::place_mask(donor.mask, offset, target.height(), target.width(), 1);
  const RegionTopology region = build_region(donor.mask, offset, target.height(), target.width());
  const GuidanceField guidance = guidance_field(donor.image, region, offset);
  return {solve(target, guidance, region, solver), std::move(mask)};
}

struct InjectionResult {
  Sample sample;
  Provenance provenance;
};

/// One complete injection: random transform of the donor, uniform placement
/// among offsets that keep the defect one pixel off every target edge, then
/// a Poisson-or-cut-paste draw. Everything random comes from `rng`.
inline InjectionResult inject(const ImageBuffer& target, const Sample& donor, const InjectionConfig& cfg, Rng& rng,
                              std::string target_id = "target") {
  cfg.validate();
  const int defect_class = donor.defect_class();
  if (defect_class == 0) {
    throw Error(ErrorCode::injection, donor.source_id + ": donor has no defect to inject");
  }
  const int th = target.height();
  const int tw = target.width();

  for (int attempt = 1; attempt <= cfg.max_placement_retries; ++attempt) {
    const TransformRecord record = draw_transform(cfg.transform, rng);
    Sample moved = apply_transform(donor, record);
    const Box box = moved.mask.bounding_box();
    if (box.empty()) continue;

    // Offsets keeping rows in [1, th-2] and cols in [1, tw-2].
    const int dy_lo = 1 - box.top;
    const int dy_hi = th - 2 - box.bottom;
    const int dx_lo = 1 - box.left;
    const int dx_hi = tw - 2 - box.right;
    if (dy_lo > dy_hi || dx_lo > dx_hi) continue;

    Offset offset{};
    if (cfg.transform.translate) {
      offset.dy = dy_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(dy_hi - dy_lo + 1)));
      offset.dx = dx_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(dx_hi - dx_lo + 1)));
    } else if (dy_lo > 0 || dy_hi < 0 || dx_lo > 0 || dx_hi < 0) {
      continue;
    }

    const InjectionMethod method =
        rng.bernoulli(cfg.poisson_probability) ? InjectionMethod::poisson : InjectionMethod::cut_paste;
    InjectedImage out = method == InjectionMethod::poisson ? poisson_inject(target, moved, offset, cfg.solver)
                                                           : cut_paste(target, moved, offset);

    Provenance prov;
    prov.method = method;
    prov.donor_id = donor.source_id;
    prov.defect_class = defect_class;
    prov.transform = record;
    prov.placement = offset;
    prov.seed = rng.seed();
    prov.attempts = attempt;
    return {Sample{std::move(out.image), std::move(out.mask), std::move(target_id) + "+" + donor.source_id},
            std::move(prov)};
  }
  throw Error(ErrorCode::injection, "no valid placement of " + donor.source_id + " into a " + std::to_string(th) +
                                        "x" + std::to_string(tw) + " target after " +
                                        std::to_string(cfg.max_placement_retries) + " attempts");
}

}  // namespace dli
