#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "dli/image.hpp"
#include "dli/rng.hpp"

namespace dli::testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("dli_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline void write_png(const fs::path& path, const cv::Mat& mat) {
  fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw std::runtime_error("cannot write " + path.string());
}

/// Random 8-bit RGB raster.
inline cv::Mat random_rgb(int h, int w, Rng& rng) {
  cv::Mat m(h, w, CV_8UC3);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      m.at<cv::Vec3b>(r, c) = cv::Vec3b(static_cast<std::uint8_t>(rng.below(256)),
                                        static_cast<std::uint8_t>(rng.below(256)),
                                        static_cast<std::uint8_t>(rng.below(256)));
  return m;
}

/// Binary mask with a filled rectangle of 255s.
inline cv::Mat rect_mask(int h, int w, int top, int left, int rh, int rw, std::uint8_t value = 255) {
  cv::Mat m = cv::Mat::zeros(h, w, CV_8UC1);
  m(cv::Rect(left, top, rw, rh)).setTo(value);
  return m;
}

/// Directory-layout dataset: `free_count` images in free/ and counts[k-1]
/// image/mask pairs under class_<k>/. Images are h x w; each mask holds a
/// small rectangle placed away from the border.
inline void write_directory_dataset(const fs::path& root, std::size_t free_count,
                                    const std::vector<std::size_t>& counts, int h = 8, int w = 8,
                                    std::uint64_t seed = 1) {
  Rng rng(seed);
  char name[32];
  for (std::size_t i = 0; i < free_count; ++i) {
    std::snprintf(name, sizeof name, "%04zu.png", i);
    write_png(root / "free" / name, random_rgb(h, w, rng));
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const fs::path dir = root / ("class_" + std::to_string(k + 1));
    for (std::size_t i = 0; i < counts[k]; ++i) {
      std::snprintf(name, sizeof name, "%04zu.png", i);
      write_png(dir / "imgs" / name, random_rgb(h, w, rng));
      const int top = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(h - 4)));
      const int left = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w - 4)));
      write_png(dir / "masks" / name, rect_mask(h, w, top, left, 2, 2));
    }
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Relative path -> contents for every regular file below `root`.
inline std::vector<std::pair<std::string, std::string>> snapshot_tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), root).generic_string(), read_file(e.path()));
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Random image in [0,1] built with the library's own raster type.
inline ImageBuffer random_image(int h, int w, Rng& rng) {
  ImageBuffer img(h, w);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

}  // namespace dli::testing
