#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dli/balancer.hpp"
#include "dli/dataset.hpp"
#include "dli/metrics.hpp"
#include "dli/poisson.hpp"
#include "dli/rng.hpp"
#include "dli/synthetic.hpp"

// Self-check suites behind `dli verify`.

namespace dli::verify {

struct Check {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

struct Report {
  std::vector<Check> checks;
  bool convergence_failure = false;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

inline constexpr double kOracleTolerance = 1e-4;
inline constexpr double kDenseResidualTolerance = 1e-9;
inline constexpr double kGradientTolerance = 1e-4;
inline constexpr double kFiniteDifferenceStep = 1e-5;

namespace detail {

inline double max_interior_diff(const ImageBuffer& a, const ImageBuffer& b, const RegionTopology& region) {
  double worst = 0.0;
  for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
    for (const Pixel p : region.interior()) {
      worst = std::max(worst, std::abs(a.at(ch, p.row, p.col) - b.at(ch, p.row, p.col)));
    }
  }
  return worst;
}

}  // namespace detail

/// CG against dense-direct on random clone instances plus one full 32x32
/// square, and the residual bounds of both backends.
inline void solver_suite(const SolverConfig& cfg, int instances, int max_side, std::uint64_t seed, Report& report) {
  SolverConfig cg = cfg;
  cg.backend = SolverBackend::conjugate_gradient;
  SolverConfig dense = cfg;
  dense.backend = SolverBackend::dense_direct;

  Check oracle{"solver.cg_vs_dense_max_abs", 0.0, kOracleTolerance, true, {}};
  Check dense_res{"solver.dense_residual", 0.0, kDenseResidualTolerance, true, {}};
  Check cg_res{"solver.cg_residual_ratio", 0.0, cfg.rel_tolerance, true, {}};

  std::vector<synthetic::CloneInstance> cases;
  Rng rng(derive_seed(seed, 0x501e));
  for (int i = 0; i < instances; ++i) cases.push_back(synthetic::random_clone_instance(rng, max_side));
  {
    const int side = 32;
    synthetic::CloneInstance square{ImageBuffer(side + 2, side + 2), ImageBuffer(side + 2, side + 2),
                                    SegMask(side + 2, side + 2)};
    for (double& v : square.target.data()) v = rng.uniform();
    for (double& v : square.source.data()) v = rng.uniform();
    for (int r = 1; r <= side; ++r)
      for (int c = 1; c <= side; ++c) square.region.at(r, c) = 1;
    cases.push_back(std::move(square));
  }

  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& inst = cases[i];
    const auto region = build_region(inst.region, {}, inst.target.height(), inst.target.width());
    const auto guidance = guidance_field(inst.source, region);
    try {
      const auto d = solve_unclamped(inst.target, guidance, region, dense);
      const auto c = solve_unclamped(inst.target, guidance, region, cg);
      oracle.measured = std::max(oracle.measured, detail::max_interior_diff(c.image, d.image, region));
      dense_res.measured = std::max(dense_res.measured, residual(d.image, guidance, region));
      for (const auto& ch : c.channels) {
        if (ch.initial_residual > 0) {
          cg_res.measured = std::max(cg_res.measured, ch.final_residual / ch.initial_residual);
        }
      }
    } catch (const ConvergenceError& e) {
      report.convergence_failure = true;
      oracle.passed = cg_res.passed = false;
      oracle.detail = "instance " + std::to_string(i) + " (|region|=" + std::to_string(region.size()) +
                      "): " + e.what();
      cg_res.detail = oracle.detail;
      break;
    }
  }
  oracle.passed = oracle.passed && oracle.measured <= oracle.threshold;
  dense_res.passed = dense_res.measured <= dense_res.threshold;
  cg_res.passed = cg_res.passed && cg_res.measured <= cg_res.threshold;
  report.checks.push_back(oracle);
  report.checks.push_back(dense_res);
  report.checks.push_back(cg_res);
}

/// Largest relative error between an analytic gradient and central finite
/// differences of the loss, over `instances` random 8x8 problems.
template <typename LossFn>
double gradient_error(LossFn loss, int instances, std::uint64_t seed) {
  double worst = 0.0;
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    std::vector<double> pred(64);
    std::vector<std::uint8_t> gt(64);
    for (auto& p : pred) p = rng.uniform(0.05, 0.95);
    for (auto& g : gt) g = rng.bernoulli(0.3) ? 1 : 0;
    const auto analytic = loss(pred, gt).gradient;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      auto plus = pred;
      auto minus = pred;
      plus[i] += kFiniteDifferenceStep;
      minus[i] -= kFiniteDifferenceStep;
      const double fd = (loss(plus, gt).loss - loss(minus, gt).loss) / (2 * kFiniteDifferenceStep);
      const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-12});
      worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
    }
  }
  return worst;
}

inline void gradient_suite(int instances, std::uint64_t seed, Report& report) {
  const double bce = gradient_error(
      [](const std::vector<double>& p, const std::vector<std::uint8_t>& g) { return metrics::bce_loss(p, g); },
      instances, derive_seed(seed, 0xbce));
  const double dice = gradient_error(
      [](const std::vector<double>& p, const std::vector<std::uint8_t>& g) { return metrics::dice_loss(p, g); },
      instances, derive_seed(seed, 0xd1ce));
  report.checks.push_back({"gradient.bce_rel_error", bce, kGradientTolerance, bce <= kGradientTolerance, {}});
  report.checks.push_back({"gradient.dice_rel_error", dice, kGradientTolerance, dice <= kGradientTolerance, {}});
}

inline void metric_suite(Report& report) {
  using namespace metrics;
  const std::vector<std::uint8_t> ones{1, 1, 1, 1};
  const std::vector<std::uint8_t> gt{1, 0, 1, 0};
  const double iou = dataset_iou(accumulate(ones, gt));
  report.checks.push_back({"metric.iou_2x2", iou, 0.5, iou == 0.5, {}});
  const double same = dataset_iou(accumulate(gt, gt));
  report.checks.push_back({"metric.iou_identity", same, 1.0, same == 1.0, {}});

  Rng rng(7);
  std::vector<double> values(3 * 16);
  for (double& v : values) v = rng.uniform();
  const PredictionMap pred(3, 4, 4, values);
  SegMask labels(4, 4);
  for (auto& l : labels.labels()) l = static_cast<SegMask::Label>(rng.below(4));
  double bce = 0.0;
  for (int k = 0; k < 3; ++k) bce += bce_loss(pred.channel(k), class_indicator(labels, k + 1)).loss;
  bce /= 3;
  const double wce = wce_loss(pred, labels, {{0, 1.0}, {1, 1.0}, {2, 1.0}, {3, 1.0}});
  const double diff = std::abs(wce - bce);
  report.checks.push_back({"metric.wce_unit_equals_bce", diff, 1e-12, diff <= 1e-12, {}});
}

/// Balances `batches` batches of 15 drawn from a synthetic index with the
/// Magnetic Tiles pool sizes at slack 0 and checks the balancer invariants.
inline void balancer_suite(const InjectionConfig& injection, int batches, std::uint64_t seed, Report& report) {
  synthetic::IndexSpec spec;
  const DatasetIndex index = synthetic::make_index(spec, derive_seed(seed, 0x1d));
  BalanceConfig cfg;
  cfg.injection = injection;
  cfg.uniformity_slack = 0;
  const std::size_t batch_size = 15;
  const std::size_t cap = batch_size / static_cast<std::size_t>(index.num_classes());

  int not_uniform = 0;
  int gap_violations = 0;
  int class_violations = 0;
  int destroyed = 0;
  int nondeterministic = 0;
  std::string failure;
  try {
    for (int b = 0; b < batches; ++b) {
      Rng draw(derive_seed(seed, 0xba, b));
      const Batch batch = sample_batch(index, batch_size, cap, draw);
      std::vector<BalanceStep> trace;
      const Batch out = balance_batch(batch, index, cfg, derive_seed(seed, 0xbb, b), &trace);
      const Batch again = balance_batch(batch, index, cfg, derive_seed(seed, 0xbb, b));

      const auto hist = class_histogram(out, index.num_classes());
      if (out.saturated || hist.min() != cap || hist.max() != cap || out.size() != batch.size()) ++not_uniform;
      for (const auto& step : trace) {
        if (step.skipped) continue;
        if (step.target_class != select_minority_class(step.before) || step.after.gap() > step.before.gap()) {
          ++gap_violations;
        }
      }
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!validate_single_class(out.samples[i]->mask).ok()) ++class_violations;
        if (!batch.samples[i]->is_free() && out.samples[i] != batch.samples[i]) ++destroyed;
        if (out.provenance[i] != again.provenance[i] || out.samples[i]->image != again.samples[i]->image ||
            out.samples[i]->mask != again.samples[i]->mask) {
          ++nondeterministic;
        }
      }
    }
  } catch (const ConvergenceError& e) {
    report.convergence_failure = true;
    failure = e.what();
  } catch (const Error& e) {
    failure = e.what();
  }
  auto push = [&](const char* name, int count) {
    report.checks.push_back({name, static_cast<double>(count), 0.0, failure.empty() && count == 0, failure});
  };
  push("balancer.non_uniform_batches", not_uniform);
  push("balancer.monotone_gap_violations", gap_violations);
  push("balancer.single_class_violations", class_violations);
  push("balancer.modified_defective_samples", destroyed);
  push("balancer.nondeterministic_slots", nondeterministic);
}

}  // namespace dli::verify
