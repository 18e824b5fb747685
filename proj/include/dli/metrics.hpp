#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dli/dataset.hpp"
#include "dli/error.hpp"
#include "dli/image.hpp"

// Reference loss and metric kernels with analytic gradients.

namespace dli::metrics {

inline constexpr double kEpsilon = 1e-7;
inline constexpr double kDiceSmoothing = 1e-6;

inline double clamp_probability(double p) noexcept { return std::clamp(p, kEpsilon, 1.0 - kEpsilon); }

/// Per-class probability rasters, C x H x W, clamped to [eps, 1 - eps] on
/// construction. Channel k holds class k + 1.
class PredictionMap {
 public:
  PredictionMap(int classes, int height, int width, std::vector<double> values)
      : classes_(classes), height_(height), width_(width), values_(std::move(values)) {
    if (classes < 1 || height < 1 || width < 1 ||
        values_.size() != static_cast<std::size_t>(classes) * height * width) {
      throw Error(ErrorCode::shape, "prediction map size does not match C x H x W");
    }
    for (double& v : values_) v = clamp_probability(v);
  }

  int classes() const noexcept { return classes_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }

  std::span<const double> channel(int k) const noexcept {
    return {values_.data() + static_cast<std::size_t>(k) * plane_size(), plane_size()};
  }

 private:
  int classes_;
  int height_;
  int width_;
  std::vector<double> values_;
};

struct LossWithGradient {
  double loss = 0.0;
  /// d loss / d prediction, evaluated at the clamped prediction.
  std::vector<double> gradient;
};

namespace detail {

inline void check_shapes(std::size_t pred, std::size_t gt) {
  if (pred != gt || pred == 0) {
    throw Error(ErrorCode::shape, "prediction has " + std::to_string(pred) + " pixels, ground truth " +
                                      std::to_string(gt));
  }
}

inline double bce_term(double p, double g) { return -(g * std::log(p) + (1.0 - g) * std::log(1.0 - p)); }

}  // namespace detail

/// Mean binary cross-entropy over one probability raster.
inline LossWithGradient bce_loss(std::span<const double> pred, std::span<const std::uint8_t> gt) {
  detail::check_shapes(pred.size(), gt.size());
  const double n = static_cast<double>(pred.size());
  LossWithGradient out{0.0, std::vector<double>(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = clamp_probability(pred[i]);
    const double g = gt[i] != 0 ? 1.0 : 0.0;
    out.loss += detail::bce_term(p, g);
    out.gradient[i] = (-g / p + (1.0 - g) / (1.0 - p)) / n;
  }
  out.loss /= n;
  return out;
}

/// Soft Dice loss 1 - (2 sum(p g) + s) / (sum p + sum g + s) with s = 1e-6.
/// Probabilities are used as given; no log, so no clamp.
inline LossWithGradient dice_loss(std::span<const double> pred, std::span<const std::uint8_t> gt) {
  detail::check_shapes(pred.size(), gt.size());
  double inter = 0.0;
  double sum_p = 0.0;
  double sum_g = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double g = gt[i] != 0 ? 1.0 : 0.0;
    inter += p * g;
    sum_p += p;
    sum_g += g;
  }
  const double num = 2.0 * inter + kDiceSmoothing;
  const double den = sum_p + sum_g + kDiceSmoothing;
  LossWithGradient out{1.0 - num / den, std::vector<double>(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double g = gt[i] != 0 ? 1.0 : 0.0;
    out.gradient[i] = -(2.0 * g * den - num) / (den * den);
  }
  return out;
}

inline std::vector<std::uint8_t> class_indicator(const SegMask& gt, int label) {
  std::vector<std::uint8_t> out(gt.size());
  const auto labels = gt.labels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = labels[i] == label ? 1 : 0;
  return out;
}

/// Class-weighted cross-entropy: every pixel's BCE term (per class channel)
/// is scaled by the weight of that pixel's ground-truth label, averaged over
/// pixels and then over class channels.
inline double wce_loss(const PredictionMap& pred, const SegMask& gt, const std::map<int, double>& weights) {
  if (gt.height() != pred.height() || gt.width() != pred.width()) {
    throw Error(ErrorCode::shape, "ground truth does not match the prediction map");
  }
  const auto labels = gt.labels();
  std::vector<double> pixel_weight(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = weights.find(labels[i]);
    if (it == weights.end()) {
      throw Error(ErrorCode::config, "no class weight for label " + std::to_string(labels[i]));
    }
    pixel_weight[i] = it->second;
  }
  double total = 0.0;
  for (int k = 0; k < pred.classes(); ++k) {
    const auto p = pred.channel(k);
    double channel_sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = labels[i] == k + 1 ? 1.0 : 0.0;
      channel_sum += pixel_weight[i] * detail::bce_term(p[i], g);
    }
    total += channel_sum / static_cast<double>(p.size());
  }
  return total / pred.classes();
}

/// Weights proportional to inverse pixel frequency, normalized to mean 1 over
/// the labels that occur. Labels with zero pixels get no weight.
inline std::map<int, double> inverse_frequency_weights(const std::map<int, std::uint64_t>& pixel_counts) {
  std::map<int, double> w;
  double sum = 0.0;
  for (const auto& [label, count] : pixel_counts) {
    if (count == 0) continue;
    w[label] = 1.0 / static_cast<double>(count);
    sum += w[label];
  }
  if (w.empty()) return w;
  const double norm = static_cast<double>(w.size()) / sum;
  for (auto& [label, v] : w) v *= norm;
  return w;
}

inline std::map<int, double> inverse_frequency_weights(const DatasetIndex& index) {
  std::map<int, std::uint64_t> counts;
  for (const auto& s : index.all()) {
    for (auto l : s->mask.labels()) ++counts[l];
  }
  return inverse_frequency_weights(counts);
}

/// Unit-weighted BCE + Dice, each averaged over class channels.
inline double combined_loss(const PredictionMap& pred, const SegMask& gt, double bce_weight = 1.0,
                            double dice_weight = 1.0) {
  double bce = 0.0;
  double dice = 0.0;
  for (int k = 0; k < pred.classes(); ++k) {
    const auto g = class_indicator(gt, k + 1);
    bce += bce_loss(pred.channel(k), g).loss;
    dice += dice_loss(pred.channel(k), g).loss;
  }
  return (bce_weight * bce + dice_weight * dice) / pred.classes();
}

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// 1 where the probability is at least the threshold.
inline std::vector<std::uint8_t> binarize(std::span<const double> pred, double threshold = 0.5) {
  std::vector<std::uint8_t> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = pred[i] >= threshold ? 1 : 0;
  return out;
}

inline ConfusionCounts accumulate(std::span<const std::uint8_t> pred_bin, std::span<const std::uint8_t> gt_bin,
                                  ConfusionCounts counts = {}) {
  detail::check_shapes(pred_bin.size(), gt_bin.size());
  for (std::size_t i = 0; i < pred_bin.size(); ++i) {
    const bool p = pred_bin[i] != 0;
    const bool g = gt_bin[i] != 0;
    counts.tp += p && g;
    counts.fp += p && !g;
    counts.fn += !p && g;
  }
  return counts;
}

/// Per-class counts from label rasters; entry k is class k + 1.
inline void accumulate_per_class(const SegMask& pred, const SegMask& gt, std::vector<ConfusionCounts>& counts) {
  detail::check_shapes(pred.size(), gt.size());
  const auto p = pred.labels();
  const auto g = gt.labels();
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const auto label = static_cast<SegMask::Label>(k + 1);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool pk = p[i] == label;
      const bool gk = g[i] == label;
      counts[k].tp += pk && gk;
      counts[k].fp += pk && !gk;
      counts[k].fn += !pk && gk;
    }
  }
}

/// TP / (TP + FN + FP) over everything accumulated; 1 when all three are zero.
inline double dataset_iou(const ConfusionCounts& c) noexcept {
  const std::uint64_t den = c.tp + c.fn + c.fp;
  return den == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

}  // namespace dli::metrics
