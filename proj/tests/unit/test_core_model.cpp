#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <string>

#include "dli/dataset.hpp"
#include "dli/image.hpp"
#include "dli/synthetic.hpp"

using namespace dli;

namespace {

Sample labelled(int label, const std::string& id, int h = 4, int w = 4) {
  SegMask m(h, w);
  if (label != 0) m.at(1, 1) = static_cast<SegMask::Label>(label);
  return make_sample(ImageBuffer(h, w, 0.5), std::move(m), id);
}

SamplePtr ptr(Sample s) { return std::make_shared<const Sample>(std::move(s)); }

std::set<std::string> ids(const std::vector<SamplePtr>& pool) {
  std::set<std::string> out;
  for (const auto& s : pool) out.insert(s->source_id);
  return out;
}

DatasetIndex pools(std::size_t free, const std::vector<std::size_t>& counts) {
  DatasetIndex index(static_cast<int>(counts.size()));
  for (std::size_t i = 0; i < free; ++i) index.add(labelled(0, "f" + std::to_string(i)));
  for (std::size_t k = 0; k < counts.size(); ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i) {
      index.add(labelled(static_cast<int>(k) + 1, "c" + std::to_string(k + 1) + "_" + std::to_string(i)));
    }
  }
  return index;
}

}  // namespace

TEST(ImageBuffer, ChannelMajorLayout) {
  ImageBuffer img(2, 3);
  EXPECT_EQ(img.data().size(), 18u);
  img.at(1, 0, 2) = 0.25;
  EXPECT_EQ(img.data()[6 + 2], 0.25);
  EXPECT_EQ(img.channel(1)[2], 0.25);
}

TEST(ImageBuffer, RejectsBadShapes) {
  EXPECT_THROW(ImageBuffer(0, 3), Error);
  EXPECT_THROW(ImageBuffer(2, 2, std::vector<double>(11)), Error);
  try {
    ImageBuffer(2, -1);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shape);
  }
}

TEST(ImageBuffer, UnitRange) {
  ImageBuffer img(2, 2, 0.5);
  EXPECT_TRUE(img.in_unit_range());
  img.at(0, 0, 0) = 1.5;
  img.at(2, 1, 1) = -0.2;
  EXPECT_FALSE(img.in_unit_range());
  img.clamp_unit();
  EXPECT_TRUE(img.in_unit_range());
  EXPECT_EQ(img.at(0, 0, 0), 1.0);
  EXPECT_EQ(img.at(2, 1, 1), 0.0);
}

TEST(SegMask, BoundingBoxAndCounts) {
  SegMask m(6, 7);
  EXPECT_TRUE(m.bounding_box().empty());
  m.at(2, 3) = 4;
  m.at(4, 1) = 4;
  const Box b = m.bounding_box();
  EXPECT_EQ(b.top, 2);
  EXPECT_EQ(b.left, 1);
  EXPECT_EQ(b.bottom, 4);
  EXPECT_EQ(b.right, 3);
  EXPECT_EQ(m.count_nonzero(), 2u);
}

TEST(ValidateSingleClass, AllZeroIsOk) { EXPECT_TRUE(validate_single_class(SegMask(3, 3)).ok()); }

TEST(ValidateSingleClass, SingleLabelIsOk) {
  SegMask m(3, 3);
  m.at(0, 0) = 3;
  m.at(2, 2) = 3;
  EXPECT_TRUE(validate_single_class(m).ok());
  EXPECT_EQ(mask_class(m), 3);
}

TEST(ValidateSingleClass, ReportsOffendingLabels) {
  SegMask m(3, 3);
  m.at(0, 0) = 5;
  m.at(1, 1) = 2;
  const auto report = validate_single_class(m);
  EXPECT_FALSE(report.ok());
  EXPECT_EQ(report.labels, (std::vector<int>{2, 5}));
  EXPECT_THROW(mask_class(m), Error);
}

TEST(MakeSample, RejectsMismatchAndMultiClass) {
  EXPECT_THROW(make_sample(ImageBuffer(3, 3), SegMask(3, 4), "x"), Error);
  SegMask m(3, 3);
  m.at(0, 0) = 1;
  m.at(0, 1) = 2;
  try {
    make_sample(ImageBuffer(3, 3), m, "bad.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("{1,2}"), std::string::npos);
  }
}

TEST(DatasetIndex, RoutesSamplesToPools) {
  DatasetIndex index(3);
  index.add(labelled(0, "a"));
  index.add(labelled(2, "b"));
  index.add(labelled(2, "c"));
  index.add(labelled(3, "d"));
  EXPECT_EQ(index.free_pool().size(), 1u);
  EXPECT_EQ(index.class_pool(1).size(), 0u);
  EXPECT_EQ(index.class_pool(2).size(), 2u);
  EXPECT_EQ(index.pool_sizes(), (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_EQ(index.size(), 4u);
  EXPECT_THROW(index.class_pool(4), Error);
}

TEST(DatasetIndex, GrowsClassRange) {
  DatasetIndex index;
  index.add(labelled(4, "x"));
  EXPECT_EQ(index.num_classes(), 4);
  EXPECT_EQ(index.pool_sizes(), (std::vector<std::size_t>{0, 0, 0, 1}));
}

TEST(DatasetIndex, PartitionProperty) {
  const auto index = synthetic::make_index({{7, 3, 0, 5}, 11, 12, 12, 2.0}, 9);
  std::multiset<std::string> seen;
  for (const auto& s : index.free_pool()) {
    EXPECT_TRUE(s->is_free());
    seen.insert(s->source_id);
  }
  for (const auto& [c, pool] : index.class_pools()) {
    for (const auto& s : pool) {
      EXPECT_EQ(s->defect_class(), c);
      seen.insert(s->source_id);
    }
  }
  EXPECT_EQ(seen.size(), index.size());
  EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), index.size());
}

TEST(ClassHistogram, AllFreeIsZero) {
  std::vector<SamplePtr> s;
  for (int i = 0; i < 4; ++i) s.push_back(ptr(labelled(0, "f")));
  const auto h = class_histogram(make_batch(s), 5);
  EXPECT_EQ(h.counts(), (std::vector<std::size_t>(5, 0)));
}

TEST(ClassHistogram, MixedBatch) {
  const auto h = class_histogram(
      make_batch({ptr(labelled(1, "b0")), ptr(labelled(1, "b1")), ptr(labelled(2, "k")), ptr(labelled(0, "f"))}), 5);
  EXPECT_EQ(h.counts(), (std::vector<std::size_t>{2, 1, 0, 0, 0}));
}

TEST(ClassHistogram, OnePerClass) {
  std::vector<SamplePtr> s;
  for (int c = 1; c <= 5; ++c) s.push_back(ptr(labelled(c, "x")));
  EXPECT_EQ(class_histogram(make_batch(s), 5).counts(), (std::vector<std::size_t>(5, 1)));
}

TEST(ClassHistogram, ConservationProperty) {
  const auto index = synthetic::make_index({{4, 4, 4}, 10, 8, 8, 2.0}, 3);
  const auto all = index.all();
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SamplePtr> s;
    const std::size_t n = 1 + rng.below(20);
    std::size_t frees = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(all[rng.below(all.size())]);
      frees += s.back()->is_free();
    }
    const auto h = class_histogram(make_batch(s), 3);
    EXPECT_EQ(h.total() + frees, n);
  }
}

TEST(Subsample, IdentityAtFull) {
  const auto index = pools(6, {3, 2});
  const auto sub = subsample_per_class(index, 1.0, 5);
  EXPECT_EQ(ids(sub.free_pool()), ids(index.free_pool()));
  EXPECT_EQ(ids(sub.class_pool(1)), ids(index.class_pool(1)));
  EXPECT_EQ(ids(sub.class_pool(2)), ids(index.class_pool(2)));
}

TEST(Subsample, ExactHalving) {
  const auto sub = subsample_per_class(pools(0, {10, 4}), 0.5, 1);
  EXPECT_EQ(sub.pool_sizes(), (std::vector<std::size_t>{5, 2}));
}

TEST(Subsample, QuarterOfMagneticTilesCounts) {
  const auto index = pools(synthetic::kMagneticTilesFreeCount, synthetic::kMagneticTilesClassCounts);
  const auto sub = subsample_per_class(index, 0.25, 17);
  EXPECT_EQ(sub.pool_sizes(), (std::vector<std::size_t>{29, 22, 15, 8, 26}));
  EXPECT_EQ(sub.free_pool().size(), 238u);
}

TEST(Subsample, NeverEmptiesAPool) {
  const auto sub = subsample_per_class(pools(1, {1, 3}), 0.1, 2);
  EXPECT_EQ(sub.free_pool().size(), 1u);
  EXPECT_EQ(sub.pool_sizes(), (std::vector<std::size_t>{1, 1}));
}

TEST(Subsample, RejectsOutOfRangeFraction) {
  const auto index = pools(2, {2});
  EXPECT_THROW(subsample_per_class(index, 0.0, 1), Error);
  EXPECT_THROW(subsample_per_class(index, 1.5, 1), Error);
}

TEST(Subsample, DeterministicAndMonotone) {
  const auto index = pools(40, {23, 17, 9});
  const double fractions[] = {0.1, 0.25, 0.5, 0.75, 1.0};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::size_t> prev(4, 0);
    std::set<std::string> prev_ids;
    for (double f : fractions) {
      const auto a = subsample_per_class(index, f, seed);
      const auto b = subsample_per_class(index, f, seed);
      EXPECT_EQ(ids(a.all()), ids(b.all()));
      std::vector<std::size_t> sizes{a.free_pool().size()};
      for (auto s : a.pool_sizes()) sizes.push_back(s);
      for (std::size_t k = 0; k < sizes.size(); ++k) EXPECT_LE(prev[k], sizes[k]);
      const auto cur = ids(a.all());
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev_ids.begin(), prev_ids.end()));
      prev = sizes;
      prev_ids = cur;
    }
  }
}

TEST(SampleBatch, RespectsCapAndSize) {
  const auto index = pools(synthetic::kMagneticTilesFreeCount, synthetic::kMagneticTilesClassCounts);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto batch = sample_batch(index, 15, 3, rng);
    ASSERT_EQ(batch.size(), 15u);
    EXPECT_EQ(ids(batch.samples).size(), 15u);
    const auto h = class_histogram(batch, 5);
    EXPECT_EQ(h.max(), 3u);
  }
}

TEST(SampleBatch, WithoutTopUpOnlyCaps) {
  const auto index = pools(50, {30, 30});
  bool below_cap = false;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto h = class_histogram(sample_batch(index, 8, 4, rng, false), 2);
    EXPECT_LE(h.max(), 4u);
    below_cap = below_cap || h.max() < 4;
  }
  EXPECT_TRUE(below_cap);
}

TEST(SampleBatch, Deterministic) {
  const auto index = pools(30, {5, 5, 5});
  Rng a(7), b(7);
  const auto x = sample_batch(index, 9, 3, a);
  const auto y = sample_batch(index, 9, 3, b);
  EXPECT_EQ(x.samples, y.samples);
}

TEST(Resize, NearestKeepsLabelsBilinearKeepsConstants) {
  Sample s = labelled(2, "r", 4, 4);
  const auto big = resize(s, 8, 8);
  EXPECT_EQ(big.mask.nonzero_labels(), (std::vector<int>{2}));
  EXPECT_EQ(big.mask.count_nonzero(), 4u);
  for (double v : big.image.data()) EXPECT_DOUBLE_EQ(v, 0.5);
}
