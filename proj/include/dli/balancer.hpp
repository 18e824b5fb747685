#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dli/dataset.hpp"
#include "dli/error.hpp"
#include "dli/injector.hpp"
#include "dli/rng.hpp"

namespace dli {

struct BalanceConfig {
  InjectionConfig injection;
  /// Largest max-minus-min class count accepted as balanced.
  int uniformity_slack = 1;
  int max_rounds = 8;

  void validate() const {
    if (uniformity_slack < 0) throw Error(ErrorCode::config, "uniformity_slack must be >= 0");
    if (max_rounds < 1) throw Error(ErrorCode::config, "max_rounds must be >= 1");
    injection.validate();
  }
};

/// Class with the fewest defective images; the lowest id wins ties.
inline int select_minority_class(const ClassHistogram& hist) {
  if (hist.num_classes() < 1) throw Error(ErrorCode::config, "histogram has no classes");
  int best = 1;
  for (int c = 2; c <= hist.num_classes(); ++c) {
    if (hist[c] < hist[best]) best = c;
  }
  return best;
}

inline bool is_balanced(const ClassHistogram& hist, const BalanceConfig& cfg) {
  return hist.gap() <= static_cast<std::size_t>(cfg.uniformity_slack);
}

/// Loop guard of balance_batch. A batch without any defect is treated as
/// imbalanced even though its gap is zero, so all-free batches get one
/// defect per class; the first injection there is the only step that widens
/// the gap.
inline bool needs_balancing(const ClassHistogram& hist, const BalanceConfig& cfg) {
  return !is_balanced(hist, cfg) || hist.total() == 0;
}

/// One injection (or skipped attempt) performed by balance_batch.
struct BalanceStep {
  int round = 0;
  std::size_t position = 0;
  int target_class = 0;
  ClassHistogram before;
  ClassHistogram after;
  InjectionMethod method = InjectionMethod::none;
  bool skipped = false;
  std::string skip_reason;
};

/// Rebalances a batch by injecting minority-class defects into its
/// defect-free slots, in slot order, until needs_balancing turns false. An
/// injected slot counts as defective from then on. Defective input samples
/// are returned untouched. Each injection draws from its own stream, derived
/// from (seed, slot position, round).
inline Batch balance_batch(const Batch& batch, const DatasetIndex& index, const BalanceConfig& cfg,
                           std::uint64_t seed, std::vector<BalanceStep>* trace = nullptr) {
  cfg.validate();
  if (batch.samples.empty()) throw Error(ErrorCode::config, "cannot balance an empty batch");
  const int num_classes = index.num_classes();
  if (num_classes < 1) throw Error(ErrorCode::config, "dataset index has no defect classes");

  Batch out = batch;
  out.provenance.resize(out.samples.size());
  out.saturated = false;
  ClassHistogram hist = class_histogram(out, num_classes);

  std::vector<std::size_t> free_slots;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    if (out.samples[i]->is_free()) free_slots.push_back(i);
  }

  for (int round = 0; round < cfg.max_rounds && needs_balancing(hist, cfg) && !free_slots.empty(); ++round) {
    std::vector<std::size_t> still_free;
    for (std::size_t k = 0; k < free_slots.size(); ++k) {
      const std::size_t slot = free_slots[k];
      if (!needs_balancing(hist, cfg)) {
        still_free.insert(still_free.end(), free_slots.begin() + static_cast<std::ptrdiff_t>(k), free_slots.end());
        break;
      }
      const int target_class = select_minority_class(hist);
      const auto& pool = index.class_pool(target_class);
      if (pool.empty()) {
        throw Error(ErrorCode::unbalanceable,
                    "class " + std::to_string(target_class) + " has no donor samples in the training index");
      }

      Rng rng(derive_seed(seed, slot, round));
      const auto& donor = pool[rng.below(pool.size())];
      const Sample& target = *out.samples[slot];
      BalanceStep step{round, slot, target_class, hist, hist, InjectionMethod::none, false, {}};
      try {
        auto result = inject(target.image, *donor, cfg.injection, rng, target.source_id);
        hist.increment(target_class);
        step.after = hist;
        step.method = result.provenance.method;
        out.samples[slot] = std::make_shared<const Sample>(std::move(result.sample));
        out.provenance[slot] = std::move(result.provenance);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::injection && e.code() != ErrorCode::placement &&
            e.code() != ErrorCode::transform) {
          throw;
        }
        step.skipped = true;
        step.skip_reason = e.what();
        still_free.push_back(slot);
      }
      if (trace) trace->push_back(std::move(step));
    }
    free_slots = std::move(still_free);
  }

  out.saturated = needs_balancing(hist, cfg);
  return out;
}

}  // namespace dli
