#include <gtest/gtest.h>

#include <fstream>

#include "dli/config.hpp"
#include "dli/io.hpp"
#include "dli/provenance.hpp"
#include "support/fixtures.hpp"

using namespace dli;
using dli::testing::TempDir;
using dli::testing::rect_mask;
using dli::testing::random_rgb;
using dli::testing::write_directory_dataset;
using dli::testing::write_png;

TEST(Io, ImageRoundTripIsExactOn8Bit) {
  TempDir dir("img");
  Rng rng(1);
  const cv::Mat bgr = random_rgb(5, 7, rng);
  write_png(dir / "a.png", bgr);
  const ImageBuffer img = io::read_image(dir / "a.png");
  ASSERT_EQ(img.height(), 5);
  ASSERT_EQ(img.width(), 7);
  EXPECT_EQ(img.at(0, 2, 3), bgr.at<cv::Vec3b>(2, 3)[2] / 255.0);
  EXPECT_EQ(img.at(2, 2, 3), bgr.at<cv::Vec3b>(2, 3)[0] / 255.0);
  io::write_image(dir / "b.png", img);
  EXPECT_EQ(io::read_image(dir / "b.png"), img);
}

TEST(Io, GrayscaleIsReplicated) {
  TempDir dir("gray");
  cv::Mat g(3, 3, CV_8UC1, cv::Scalar(51));
  write_png(dir / "g.png", g);
  const ImageBuffer img = io::read_image(dir / "g.png");
  for (double v : img.data()) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(Io, UnreadableImageIsDecodeError) {
  TempDir dir("bad");
  std::ofstream(dir / "x.png") << "not a png";
  try {
    io::read_image(dir / "x.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::decode);
  }
}

TEST(Io, BinaryMaskCollapsesToClass) {
  TempDir dir("mask");
  write_png(dir / "m.png", rect_mask(6, 6, 1, 2, 2, 3));
  const SegMask m = io::read_mask(dir / "m.png", 4);
  EXPECT_EQ(m.nonzero_labels(), (std::vector<int>{4}));
  EXPECT_EQ(m.count_nonzero(), 6u);
}

TEST(Io, TwoLabelMaskIsValidationError) {
  TempDir dir("mask2");
  cv::Mat m = rect_mask(6, 6, 1, 1, 2, 2, 1);
  m.at<std::uint8_t>(4, 4) = 2;
  write_png(dir / "m.png", m);
  try {
    io::read_mask(dir / "m.png", 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    EXPECT_NE(std::string(e.what()).find("m.png"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("{1,2}"), std::string::npos);
  }
}

TEST(Io, MaskRoundTripStoresClassIds) {
  TempDir dir("maskrt");
  SegMask m(4, 5);
  m.at(1, 2) = 3;
  io::write_mask(dir / "m.png", m);
  EXPECT_EQ(io::read_mask_raw(dir / "m.png"), m);
}

TEST(Io, ManifestRoundTrip) {
  TempDir dir("manifest");
  const std::vector<io::ManifestRecord> records{{"free/a.png", std::nullopt, 0}, {"c/b.png", "c/b_mask.png", 2}};
  io::write_manifest(dir / "m.jsonl", records);
  const auto back = io::read_manifest(dir / "m.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].image, "free/a.png");
  EXPECT_FALSE(back[0].mask.has_value());
  EXPECT_EQ(back[1].mask.value(), "c/b_mask.png");
  EXPECT_EQ(back[1].defect_class, 2);
  EXPECT_NE(dli::testing::read_file(dir / "m.jsonl").find("\"mask\":null"), std::string::npos);
}

TEST(Io, MalformedManifestLine) {
  TempDir dir("manifest_bad");
  std::ofstream(dir / "m.jsonl") << "{\"image\":\"a.png\",\"class\":0}\n{oops\n";
  EXPECT_THROW(io::read_manifest(dir / "m.jsonl"), Error);
}

TEST(LoadDataset, DirectoryLayoutCounts) {
  TempDir dir("dirs");
  write_directory_dataset(dir.path(), 4, {2, 0, 3});
  const auto index = io::load_dataset(dir.path(), io::Layout::directories);
  EXPECT_EQ(index.free_pool().size(), 4u);
  EXPECT_EQ(index.num_classes(), 3);
  EXPECT_EQ(index.pool_sizes(), (std::vector<std::size_t>{2, 0, 3}));
  for (const auto& s : index.class_pool(3)) EXPECT_EQ(s->defect_class(), 3);
  for (const auto& s : index.all()) EXPECT_TRUE(s->image.in_unit_range());
}

TEST(LoadDataset, EmptyFreeDirOneDefect) {
  TempDir dir("minimal");
  write_directory_dataset(dir.path(), 0, {1});
  const auto index = io::load_dataset(dir.path(), io::Layout::directories);
  EXPECT_EQ(index.free_pool().size(), 0u);
  EXPECT_EQ(index.pool_sizes(), (std::vector<std::size_t>{1}));
}

TEST(LoadDataset, MissingMaskNamesSample) {
  TempDir dir("nomask");
  write_directory_dataset(dir.path(), 1, {2});
  std::filesystem::remove(dir / "class_1/masks/0001.png");
  try {
    io::load_dataset(dir.path(), io::Layout::directories);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ingestion);
    EXPECT_NE(std::string(e.what()).find("class_1/imgs/0001.png"), std::string::npos);
  }
}

TEST(LoadDataset, ManifestLayoutAndClassChecks) {
  TempDir dir("mlayout");
  Rng rng(3);
  write_png(dir / "f.png", random_rgb(6, 6, rng));
  write_png(dir / "d.png", random_rgb(6, 6, rng));
  write_png(dir / "d_mask.png", rect_mask(6, 6, 2, 2, 2, 2));
  write_png(dir / "empty_mask.png", cv::Mat::zeros(6, 6, CV_8UC1));
  io::write_manifest(dir / "manifest.jsonl", {{"f.png", std::nullopt, 0}, {"d.png", "d_mask.png", 2}});
  const auto index = io::load_dataset(dir.path(), io::Layout::manifest);
  EXPECT_EQ(index.free_pool().size(), 1u);
  EXPECT_EQ(index.pool_sizes(), (std::vector<std::size_t>{0, 1}));

  auto expect_code = [&](std::vector<io::ManifestRecord> recs, ErrorCode code) {
    try {
      io::load_records(dir.path(), recs);
      ADD_FAILURE() << "no error";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code) << e.what();
    }
  };
  expect_code({{"d.png", "d_mask.png", 0}}, ErrorCode::validation);
  expect_code({{"d.png", "empty_mask.png", 1}}, ErrorCode::validation);
  expect_code({{"d.png", std::nullopt, 1}}, ErrorCode::ingestion);
  expect_code({{"missing.png", std::nullopt, 0}}, ErrorCode::decode);
}

TEST(LoadDataset, MissingRoot) {
  try {
    io::load_dataset("/nonexistent/dli/root", io::Layout::directories);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ingestion);
  }
}

TEST(Provenance, JsonShape) {
  Provenance none;
  EXPECT_EQ(nlohmann::json(none), (nlohmann::json{{"method", "none"}}));
  Provenance p;
  p.method = InjectionMethod::cut_paste;
  p.donor_id = "class_2/0003";
  p.defect_class = 2;
  p.transform.flip_h = true;
  p.transform.rotation_deg = -12.5;
  p.transform.scale = 1.1;
  p.placement = {3, -1};
  p.seed = 77;
  p.attempts = 2;
  const nlohmann::json j = p;
  EXPECT_EQ(j.at("method"), "cut-paste");
  EXPECT_EQ(j.at("placement").at("dx"), -1);
  EXPECT_EQ(j.get<Provenance>(), p);
  EXPECT_THROW(parse_injection_method("blend"), Error);
}

TEST(RunConfig, DefaultsRoundTrip) {
  RunConfig c;
  c.seed = 42;
  c.resize = std::pair{64, 32};
  c.balance.injection.solver.backend = SolverBackend::dense_direct;
  c.balance.injection.transform.max_rotation_deg = 15;
  const auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.resize, c.resize);
  EXPECT_EQ(back.balance.injection.solver.backend, SolverBackend::dense_direct);
}

TEST(RunConfig, PartialDocumentTakesDefaults) {
  const auto c = run_config_from_json(nlohmann::json::parse(R"({"seed": 5, "balance": {"uniformity_slack": 0},
      "solver": {"rel_tolerance": 0.1}, "injection": {"poisson_probability": 0.25}})"));
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.balance.uniformity_slack, 0);
  EXPECT_EQ(c.balance.max_rounds, 8);
  EXPECT_EQ(c.balance.injection.solver.rel_tolerance, 0.1);
  EXPECT_EQ(c.balance.injection.poisson_probability, 0.25);
  EXPECT_EQ(c.batch.batch_size, 16);
  EXPECT_TRUE(c.batch.top_up);
}

TEST(RunConfig, Rejections) {
  auto code_of = [](const char* text) {
    try {
      run_config_from_json(nlohmann::json::parse(text));
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::injection;  // sentinel: parsed fine
  };
  EXPECT_EQ(code_of(R"({})"), ErrorCode::config);
  EXPECT_EQ(code_of(R"({"seed": 1, "colour": 2})"), ErrorCode::config);
  EXPECT_EQ(code_of(R"({"seed": 1, "solver": {"tolerance": 1}})"), ErrorCode::config);
  EXPECT_EQ(code_of(R"({"seed": 1, "balance": {"uniformity_slack": -1}})"), ErrorCode::config);
  EXPECT_EQ(code_of(R"({"seed": 1, "injection": {"poisson_probability": 2}})"), ErrorCode::config);
  EXPECT_EQ(code_of(R"({"seed": "x"})"), ErrorCode::config);
  EXPECT_EQ(code_of(R"({"seed": 1, "solver": {"backend": "fft"}})"), ErrorCode::config);
}
