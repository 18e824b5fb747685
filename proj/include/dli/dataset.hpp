#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dli/error.hpp"
#include "dli/image.hpp"
#include "dli/provenance.hpp"
#include "dli/rng.hpp"

namespace dli {

using SamplePtr = std::shared_ptr<const Sample>;

/// Partition of a dataset into the defect-free pool and one pool per class.
/// Samples are immutable once indexed and may be shared between workers.
class DatasetIndex {
 public:
  explicit DatasetIndex(int num_classes = 0) : num_classes_(num_classes) {
    for (int c = 1; c <= num_classes_; ++c) class_pools_[c];
  }

  int num_classes() const noexcept { return num_classes_; }

  /// Routes the sample to the free pool or its class pool. Grows the class
  /// range when a higher class id shows up.
  void add(SamplePtr sample) {
    const int c = sample->defect_class();
    if (c == 0) {
      free_pool_.push_back(std::move(sample));
      return;
    }
    if (c > num_classes_) {
      for (int k = num_classes_ + 1; k <= c; ++k) class_pools_[k];
      num_classes_ = c;
    }
    class_pools_[c].push_back(std::move(sample));
  }

  void add(Sample sample) { add(std::make_shared<const Sample>(std::move(sample))); }

  const std::vector<SamplePtr>& free_pool() const noexcept { return free_pool_; }

  const std::vector<SamplePtr>& class_pool(int c) const {
    auto it = class_pools_.find(c);
    if (it == class_pools_.end()) {
      throw Error(ErrorCode::config, "class " + std::to_string(c) + " is outside 1.." +
                                         std::to_string(num_classes_));
    }
    return it->second;
  }

  const std::map<int, std::vector<SamplePtr>>& class_pools() const noexcept { return class_pools_; }

  std::size_t size() const noexcept {
    std::size_t n = free_pool_.size();
    for (const auto& [c, pool] : class_pools_) n += pool.size();
    return n;
  }

  /// Free pool first, then classes in ascending id.
  std::vector<SamplePtr> all() const {
    std::vector<SamplePtr> out(free_pool_);
    for (const auto& [c, pool] : class_pools_) out.insert(out.end(), pool.begin(), pool.end());
    return out;
  }

  std::vector<std::size_t> pool_sizes() const {
    std::vector<std::size_t> sizes;
    for (const auto& [c, pool] : class_pools_) sizes.push_back(pool.size());
    return sizes;
  }

 private:
  int num_classes_ = 0;
  std::vector<SamplePtr> free_pool_;
  std::map<int, std::vector<SamplePtr>> class_pools_;
};

/// Number of defective images per class 1..C within a batch.
class ClassHistogram {
 public:
  explicit ClassHistogram(int num_classes = 0) : counts_(static_cast<std::size_t>(num_classes), 0) {}
  explicit ClassHistogram(std::vector<std::size_t> counts) : counts_(std::move(counts)) {}

  int num_classes() const noexcept { return static_cast<int>(counts_.size()); }

  std::size_t operator[](int c) const { return counts_.at(static_cast<std::size_t>(c - 1)); }
  void increment(int c) { ++counts_.at(static_cast<std::size_t>(c - 1)); }

  std::size_t total() const noexcept { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }
  std::size_t min() const noexcept { return counts_.empty() ? 0 : *std::min_element(counts_.begin(), counts_.end()); }
  std::size_t max() const noexcept { return counts_.empty() ? 0 : *std::max_element(counts_.begin(), counts_.end()); }
  std::size_t gap() const noexcept { return max() - min(); }

  const std::vector<std::size_t>& counts() const noexcept { return counts_; }

  friend bool operator==(const ClassHistogram&, const ClassHistogram&) = default;

 private:
  std::vector<std::size_t> counts_;
};

/// Ordered batch with one provenance record per slot. `saturated` is set by
/// the balancer when it ran out of defect-free slots before reaching balance.
struct Batch {
  std::vector<SamplePtr> samples;
  std::vector<Provenance> provenance;
  bool saturated = false;

  std::size_t size() const noexcept { return samples.size(); }
};

inline Batch make_batch(std::vector<SamplePtr> samples) {
  Batch b;
  b.provenance.resize(samples.size());
  b.samples = std::move(samples);
  return b;
}

inline ClassHistogram class_histogram(const Batch& batch, int num_classes) {
  ClassHistogram hist(num_classes);
  for (const auto& s : batch.samples) {
    const int c = s->defect_class();
    if (c == 0) continue;
    if (c > num_classes) {
      throw Error(ErrorCode::validation, s->source_id + ": class " + std::to_string(c) +
                                             " exceeds configured class count " + std::to_string(num_classes));
    }
    hist.increment(c);
  }
  return hist;
}

namespace detail {

// Returns ceil(fraction * n), tolerant of binary rounding in fraction * n.
inline std::size_t fraction_count(double fraction, std::size_t n) {
  if (n == 0) return 0;
  const double exact = fraction * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
  return std::clamp<std::size_t>(k, 1, n);
}

// Keeps a seeded, uniformly drawn subset of size k, preserving the pool order.
// The permutation depends only on (seed, pool key), so subsets for smaller
// fractions are prefixes of those for larger ones.
inline std::vector<SamplePtr> keep_subset(const std::vector<SamplePtr>& pool, std::size_t k,
                                          std::uint64_t seed, int pool_key) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5ab5u, pool_key));
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    std::swap(order[i], order[i + rng.below(order.size() - i)]);
  }
  order.resize(k);
  std::sort(order.begin(), order.end());
  std::vector<SamplePtr> out;
  out.reserve(k);
  for (std::size_t i : order) out.push_back(pool[i]);
  return out;
}

}  // namespace detail

/// Reduces every pool (free pool included) to ceil(fraction * size) samples.
inline DatasetIndex subsample_per_class(const DatasetIndex& index, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::config, "subsample fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  DatasetIndex out(index.num_classes());
  for (const auto& s : detail::keep_subset(index.free_pool(),
                                           detail::fraction_count(fraction, index.free_pool().size()),
                                           seed, 0)) {
    out.add(s);
  }
  for (const auto& [c, pool] : index.class_pools()) {
    for (const auto& s : detail::keep_subset(pool, detail::fraction_count(fraction, pool.size()), seed, c)) {
      out.add(s);
    }
  }
  return out;
}

/// Draws a batch of distinct samples uniformly from the whole index, deferring
/// any defective sample whose class already holds `per_class_cap` slots.
///
/// With `top_up` set, the batch's most frequent class (lowest id on ties) is
/// then raised to the cap by swapping extra donors of that class into the
/// most recently drawn defect-free slots. A slack-0 balance of such a batch
/// ends at exactly `per_class_cap` images per class whenever the batch holds
/// enough defect-free slots, since the balancer stops at the first uniform
/// histogram.
inline Batch sample_batch(const DatasetIndex& index, std::size_t batch_size, std::size_t per_class_cap, Rng& rng,
                          bool top_up = true) {
  std::vector<SamplePtr> all(index.free_pool());
  std::vector<int> classes(all.size(), 0);
  for (const auto& [c, pool] : index.class_pools()) {
    all.insert(all.end(), pool.begin(), pool.end());
    classes.insert(classes.end(), pool.size(), c);
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> taken(static_cast<std::size_t>(index.num_classes()) + 1, 0);
  std::vector<std::size_t> chosen;
  chosen.reserve(batch_size);
  std::size_t scanned = 0;
  for (; scanned < order.size() && chosen.size() < batch_size; ++scanned) {
    std::swap(order[scanned], order[scanned + rng.below(order.size() - scanned)]);
    const std::size_t i = order[scanned];
    const int c = classes[i];
    if (c != 0 && taken[static_cast<std::size_t>(c)] >= per_class_cap) continue;
    ++taken[static_cast<std::size_t>(c)];
    chosen.push_back(i);
  }

  if (top_up && index.num_classes() > 0) {
    int anchor = 1;
    for (int c = 2; c <= index.num_classes(); ++c) {
      if (taken[static_cast<std::size_t>(c)] > taken[static_cast<std::size_t>(anchor)]) anchor = c;
    }
    // Unused donors of the anchor class, in the order the shuffle reaches them.
    for (std::size_t k = scanned; k < order.size() && taken[static_cast<std::size_t>(anchor)] < per_class_cap; ++k) {
      std::swap(order[k], order[k + rng.below(order.size() - k)]);
      const std::size_t i = order[k];
      if (classes[i] != anchor) continue;
      auto slot = std::find_if(chosen.rbegin(), chosen.rend(), [&](std::size_t j) { return classes[j] == 0; });
      if (slot == chosen.rend()) break;
      *slot = i;
      ++taken[static_cast<std::size_t>(anchor)];
    }
  }

  std::vector<SamplePtr> samples;
  samples.reserve(chosen.size());
  for (std::size_t i : chosen) samples.push_back(all[i]);
  return make_batch(std::move(samples));
}

}  // namespace dli
