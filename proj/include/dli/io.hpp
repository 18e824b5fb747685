#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "dli/dataset.hpp"
#include "dli/error.hpp"
#include "dli/image.hpp"

namespace dli::io {

namespace fs = std::filesystem;

/// Decodes an 8-bit PNG/JPEG into RGB intensities in [0, 1]. Grayscale files
/// are replicated across the three channels.
inline ImageBuffer read_image(const fs::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorCode::decode, "cannot decode image " + path.string());
  ImageBuffer img(bgr.rows, bgr.cols);
  for (int r = 0; r < bgr.rows; ++r) {
    const auto* row = bgr.ptr<cv::Vec3b>(r);
    for (int c = 0; c < bgr.cols; ++c) {
      img.at(0, r, c) = row[c][2] / 255.0;
      img.at(1, r, c) = row[c][1] / 255.0;
      img.at(2, r, c) = row[c][0] / 255.0;
    }
  }
  return img;
}

/// Reads a single-channel mask as raw 8-bit labels.
inline SegMask read_mask_raw(const fs::path& path) {
  const cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw Error(ErrorCode::decode, "cannot decode mask " + path.string());
  SegMask mask(gray.rows, gray.cols);
  for (int r = 0; r < gray.rows; ++r) {
    const auto* row = gray.ptr<std::uint8_t>(r);
    for (int c = 0; c < gray.cols; ++c) mask.at(r, c) = row[c];
  }
  return mask;
}

/// Reads a mask whose class is implied by where it lives. A binary mask
/// (one distinct nonzero value, e.g. 255) is collapsed to `class_id`; two or
/// more distinct nonzero values fail validation. With class_id 0 the labels
/// are kept as read, so a defect-free record's stray pixels stay visible.
inline SegMask read_mask(const fs::path& path, int class_id) {
  SegMask mask = read_mask_raw(path);
  if (auto report = validate_single_class(mask); !report.ok()) {
    std::string labels;
    for (int l : report.labels) labels += (labels.empty() ? "" : ",") + std::to_string(l);
    throw Error(ErrorCode::validation, path.string() + ": mask has multiple defect labels {" + labels + "}");
  }
  if (class_id == 0) return mask;
  for (auto& l : mask.labels()) l = l != 0 ? static_cast<SegMask::Label>(class_id) : 0;
  return mask;
}

inline void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

inline cv::Mat to_mat(const ImageBuffer& img) {
  cv::Mat bgr(img.height(), img.width(), CV_8UC3);
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  for (int r = 0; r < img.height(); ++r) {
    auto* row = bgr.ptr<cv::Vec3b>(r);
    for (int c = 0; c < img.width(); ++c) {
      row[c] = cv::Vec3b(q(img.at(2, r, c)), q(img.at(1, r, c)), q(img.at(0, r, c)));
    }
  }
  return bgr;
}

inline void write_mat(const fs::path& path, const cv::Mat& mat) {
  ensure_parent(path);
  if (!cv::imwrite(path.string(), mat)) throw Error(ErrorCode::ingestion, "cannot write " + path.string());
}

/// Quantizes to 8 bits per channel.
inline void write_image(const fs::path& path, const ImageBuffer& img) { write_mat(path, to_mat(img)); }

/// Writes labels verbatim as an 8-bit single-channel raster.
inline void write_mask(const fs::path& path, const SegMask& mask) {
  cv::Mat gray(mask.height(), mask.width(), CV_8UC1);
  for (int r = 0; r < mask.height(); ++r) {
    auto* row = gray.ptr<std::uint8_t>(r);
    for (int c = 0; c < mask.width(); ++c) row[c] = mask.at(r, c);
  }
  write_mat(path, gray);
}

// Manifest: one JSON object per line,
//   {"image": "<rel path>", "mask": "<rel path>" | null, "class": k}
// with class 0 meaning defect-free. Paths resolve against the manifest's
// directory.

struct ManifestRecord {
  std::string image;
  std::optional<std::string> mask;
  int defect_class = 0;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

inline nlohmann::json to_json(const ManifestRecord& r) {
  nlohmann::json j;
  j["image"] = r.image;
  j["mask"] = r.mask ? nlohmann::json(*r.mask) : nlohmann::json(nullptr);
  j["class"] = r.defect_class;
  return j;
}

inline std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ingestion, "cannot open manifest " + path.string());
  std::vector<ManifestRecord> records;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.image = j.at("image").get<std::string>();
      if (j.contains("mask") && !j.at("mask").is_null()) r.mask = j.at("mask").get<std::string>();
      r.defect_class = j.at("class").get<int>();
      if (r.defect_class < 0 || r.defect_class > 255) {
        throw Error(ErrorCode::ingestion, "class out of range");
      }
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::ingestion, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

inline void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ingestion, "cannot write manifest " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline bool is_raster(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

inline std::vector<fs::path> list_rasters(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_raster(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Directory convention: root/free/*.png, root/class_<k>/imgs/*.png with a
/// same-stem mask in root/class_<k>/masks/. Returns manifest records with
/// paths relative to root, free images first, classes ascending.
inline std::vector<ManifestRecord> scan_directory_layout(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::ingestion, "dataset root " + root.string() + " does not exist");
  std::vector<ManifestRecord> records;
  for (const auto& p : list_rasters(root / "free")) {
    records.push_back({fs::relative(p, root).generic_string(), std::nullopt, 0});
  }

  std::map<int, fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("class_", 0) != 0) continue;
    try {
      std::size_t used = 0;
      const int k = std::stoi(name.substr(6), &used);
      if (used != name.size() - 6 || k < 1 || k > 255) throw std::invalid_argument(name);
      class_dirs[k] = entry.path();
    } catch (const std::exception&) {
      throw Error(ErrorCode::ingestion, "class directory '" + name + "' is not class_<1..255>");
    }
  }
  for (const auto& [k, dir] : class_dirs) {
    std::map<std::string, fs::path> masks;
    for (const auto& m : list_rasters(dir / "masks")) masks[m.stem().string()] = m;
    for (const auto& img : list_rasters(dir / "imgs")) {
      auto it = masks.find(img.stem().string());
      if (it == masks.end()) {
        throw Error(ErrorCode::ingestion, "missing mask for sample " + fs::relative(img, root).generic_string());
      }
      records.push_back({fs::relative(img, root).generic_string(), fs::relative(it->second, root).generic_string(), k});
    }
  }
  return records;
}

/// Decodes and validates every record. `num_classes` of 0 infers C from the
/// largest class id seen.
inline DatasetIndex load_records(const fs::path& base, const std::vector<ManifestRecord>& records, int num_classes = 0) {
  DatasetIndex index(num_classes);
  for (const auto& r : records) {
    ImageBuffer image = read_image(base / r.image);
    SegMask mask;
    if (r.mask) {
      mask = read_mask(base / *r.mask, r.defect_class);
      if (r.defect_class == 0 && mask.any()) {
        throw Error(ErrorCode::validation, r.image + ": listed as defect-free but its mask has defect pixels");
      }
      if (r.defect_class != 0 && !mask.any()) {
        throw Error(ErrorCode::validation, r.image + ": listed as class " + std::to_string(r.defect_class) +
                                               " but its mask is empty");
      }
    } else {
      if (r.defect_class != 0) throw Error(ErrorCode::ingestion, "missing mask for sample " + r.image);
      mask = SegMask(image.height(), image.width());
    }
    index.add(make_sample(std::move(image), std::move(mask), r.image));
  }
  return index;
}

enum class Layout { directories, manifest };

inline Layout parse_layout(const std::string& s) {
  if (s == "dirs" || s == "directories") return Layout::directories;
  if (s == "manifest") return Layout::manifest;
  throw Error(ErrorCode::config, "unknown dataset layout '" + s + "' (expected dirs or manifest)");
}

/// Manifest path for a root that is either the manifest file itself or a
/// directory holding manifest.jsonl.
inline fs::path manifest_path(const fs::path& root) {
  return fs::is_directory(root) ? root / "manifest.jsonl" : root;
}

inline DatasetIndex load_dataset(const fs::path& root, Layout layout, int num_classes = 0) {
  if (!fs::exists(root)) throw Error(ErrorCode::ingestion, "dataset root " + root.string() + " does not exist");
  if (layout == Layout::directories) return load_records(root, scan_directory_layout(root), num_classes);
  const fs::path manifest = manifest_path(root);
  return load_records(manifest.parent_path(), read_manifest(manifest), num_classes);
}

}  // namespace dli::io
