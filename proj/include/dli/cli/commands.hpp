#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "dli/balancer.hpp"
#include "dli/config.hpp"
#include "dli/dataset.hpp"
#include "dli/error.hpp"
#include "dli/injector.hpp"
#include "dli/io.hpp"
#include "dli/verify.hpp"

namespace dli::cli {

namespace fs = std::filesystem;

/// Process exit codes: 0 success, 1 usage, ErrorCode values for engine
/// failures, kExitVerifyFailed when a verification check fails.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitVerifyFailed = 13;

inline int exit_code(ErrorCode code) { return static_cast<int>(code); }

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

/// Log threshold from DLI_LOG_LEVEL (error|warn|info|debug), default warn.
inline LogLevel log_level() {
  const char* env = std::getenv("DLI_LOG_LEVEL");
  if (env == nullptr) return LogLevel::warn;
  const std::string v(env);
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

inline void log_message(LogLevel level, const std::string& message) {
  static const LogLevel threshold = log_level();
  if (level > threshold) return;
  static std::mutex mu;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard lock(mu);
  std::fprintf(stderr, "[dli %s] %s\n", names[static_cast<int>(level)], message.c_str());
}

inline std::string format_pool_summary(const DatasetIndex& index) {
  std::ostringstream os;
  os << "free=" << index.free_pool().size() << " classes=[";
  const auto sizes = index.pool_sizes();
  for (std::size_t i = 0; i < sizes.size(); ++i) os << (i ? "," : "") << sizes[i];
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------- index

struct IndexResult {
  DatasetIndex index;
  std::vector<io::ManifestRecord> records;
  fs::path manifest;
};

/// Reads and validates a dataset, writes its manifest and prints the pool
/// summary. For the directory layout the manifest defaults to
/// <root>/manifest.jsonl; for a manifest layout it is only rewritten when
/// `manifest_out` is given.
inline IndexResult cmd_index(const fs::path& root, io::Layout layout, const std::optional<fs::path>& manifest_out,
                             int num_classes, std::ostream& out) {
  if (!fs::exists(root)) throw Error(ErrorCode::ingestion, "dataset root " + root.string() + " does not exist");
  IndexResult result;
  fs::path base;
  if (layout == io::Layout::directories) {
    result.records = io::scan_directory_layout(root);
    base = root;
    result.manifest = manifest_out.value_or(root / "manifest.jsonl");
  } else {
    const fs::path manifest = io::manifest_path(root);
    result.records = io::read_manifest(manifest);
    base = manifest.parent_path();
    result.manifest = manifest_out.value_or(manifest);
  }
  if (result.records.empty()) throw Error(ErrorCode::ingestion, "no samples found under " + root.string());
  result.index = io::load_records(base, result.records, num_classes);

  if (layout == io::Layout::directories || manifest_out) {
    // Records are relative to `base`; re-anchor them to the manifest's directory.
    auto records = result.records;
    const fs::path manifest_dir = fs::absolute(result.manifest).parent_path();
    for (auto& r : records) {
      r.image = fs::relative(fs::absolute(base / r.image), manifest_dir).generic_string();
      if (r.mask) *r.mask = fs::relative(fs::absolute(base / *r.mask), manifest_dir).generic_string();
    }
    io::write_manifest(result.manifest, records);
  }
  out << format_pool_summary(result.index) << "\n";
  return result;
}

// ---------------------------------------------------------------- stats

struct ClassStats {
  int defect_class = 0;
  std::size_t count = 0;
  double mean_area_pct = 0.0;
  double std_area_pct = 0.0;
};

struct StatsReport {
  std::size_t free_count = 0;
  std::vector<ClassStats> classes;
};

/// Image counts per class and the mean (population std) of each class's
/// defect area as a percentage of the image.
inline StatsReport compute_stats(const DatasetIndex& index) {
  StatsReport report;
  report.free_count = index.free_pool().size();
  for (const auto& [c, pool] : index.class_pools()) {
    ClassStats s{c, pool.size(), 0.0, 0.0};
    std::vector<double> areas;
    for (const auto& sample : pool) {
      areas.push_back(100.0 * static_cast<double>(sample->mask.count_nonzero()) /
                      static_cast<double>(sample->mask.size()));
    }
    if (!areas.empty()) {
      double sum = 0.0;
      for (double a : areas) sum += a;
      s.mean_area_pct = sum / static_cast<double>(areas.size());
      double var = 0.0;
      for (double a : areas) var += (a - s.mean_area_pct) * (a - s.mean_area_pct);
      s.std_area_pct = std::sqrt(var / static_cast<double>(areas.size()));
    }
    report.classes.push_back(s);
  }
  return report;
}

/// Bar chart of images per class (free first) as a PNG.
inline void write_histogram_png(const fs::path& path, const StatsReport& report) {
  std::vector<std::pair<std::string, std::size_t>> bars{{"free", report.free_count}};
  for (const auto& c : report.classes) bars.emplace_back(std::to_string(c.defect_class), c.count);
  std::size_t peak = 1;
  for (const auto& [name, n] : bars) peak = std::max(peak, n);

  const int bar_w = 48;
  const int gap = 16;
  const int plot_h = 240;
  const int margin = 30;
  const int width = margin * 2 + static_cast<int>(bars.size()) * (bar_w + gap);
  const int height = plot_h + margin * 3;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const int x = margin + static_cast<int>(i) * (bar_w + gap);
    const int h = static_cast<int>(std::lround(plot_h * static_cast<double>(bars[i].second) / peak));
    const int base = margin + plot_h;
    cv::rectangle(canvas, cv::Point(x, base - h), cv::Point(x + bar_w, base), cv::Scalar(180, 120, 40), cv::FILLED);
    cv::putText(canvas, std::to_string(bars[i].second), cv::Point(x, base - h - 4), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(0, 0, 0));
    cv::putText(canvas, bars[i].first, cv::Point(x, base + 18), cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0));
  }
  io::write_mat(path, canvas);
}

inline StatsReport cmd_stats(const fs::path& manifest, const std::optional<fs::path>& histogram_png, int num_classes,
                             std::ostream& out) {
  const fs::path path = io::manifest_path(manifest);
  const DatasetIndex index = io::load_records(path.parent_path(), io::read_manifest(path), num_classes);
  const StatsReport report = compute_stats(index);
  out << std::left << std::setw(8) << "class" << std::setw(10) << "images" << "defect_area_%\n";
  out << std::setw(8) << "free" << std::setw(10) << report.free_count << "-\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& c : report.classes) {
    out << std::setw(8) << c.defect_class << std::setw(10) << c.count << c.mean_area_pct << " +/- "
        << c.std_area_pct << "\n";
  }
  out.unsetf(std::ios::fixed);
  out << format_pool_summary(index) << "\n";
  if (histogram_png) write_histogram_png(*histogram_png, report);
  return report;
}

// ---------------------------------------------------------------- inject

struct InjectOptions {
  fs::path target;
  fs::path donor_image;
  fs::path donor_mask;
  int donor_class = 1;
  /// poisson | cut-paste | random (uses the configured probability)
  std::string method = "random";
  std::uint64_t seed = 0;
  bool identity_transform = false;
  bool overlay = true;
  InjectionConfig injection;
  fs::path output = "dli_inject";
};

/// Side-by-side panel: target | donor | result | result with mask tinted red.
inline cv::Mat overlay_panel(const ImageBuffer& target, const Sample& donor, const Sample& result) {
  auto tint = [](const Sample& s) {
    cv::Mat m = io::to_mat(s.image);
    for (int r = 0; r < m.rows; ++r) {
      for (int c = 0; c < m.cols; ++c) {
        if (s.mask.at(r, c) == 0) continue;
        auto& px = m.at<cv::Vec3b>(r, c);
        px = cv::Vec3b(px[0] / 2, px[1] / 2, static_cast<std::uint8_t>(127 + px[2] / 2));
      }
    }
    return m;
  };
  std::vector<cv::Mat> tiles{io::to_mat(target), tint(donor), io::to_mat(result.image), tint(result)};
  const int h = std::max(target.height(), donor.image.height());
  for (auto& t : tiles) {
    if (t.rows < h) cv::copyMakeBorder(t, t, 0, h - t.rows, 0, 0, cv::BORDER_CONSTANT, cv::Scalar(0, 0, 0));
  }
  cv::Mat panel;
  cv::hconcat(tiles, panel);
  return panel;
}

inline InjectionResult cmd_inject(const InjectOptions& opt, std::ostream& out) {
  const ImageBuffer target = io::read_image(opt.target);
  Sample donor = make_sample(io::read_image(opt.donor_image), io::read_mask(opt.donor_mask, opt.donor_class),
                             opt.donor_image.filename().string());
  if (!donor.mask.any()) throw Error(ErrorCode::validation, opt.donor_mask.string() + ": donor mask is empty");

  InjectionConfig cfg = opt.injection;
  if (opt.method == "poisson") {
    cfg.poisson_probability = 1.0;
  } else if (opt.method == "cut-paste") {
    cfg.poisson_probability = 0.0;
  } else if (opt.method != "random") {
    throw Error(ErrorCode::config, "unknown method '" + opt.method + "' (poisson, cut-paste, random)");
  }
  if (opt.identity_transform) cfg.transform = TransformParams::identity();

  Rng rng(derive_seed(opt.seed, 0x1a));
  InjectionResult result = inject(target, donor, cfg, rng, opt.target.filename().string());

  fs::create_directories(opt.output);
  io::write_image(opt.output / "image.png", result.sample.image);
  io::write_mask(opt.output / "mask.png", result.sample.mask);
  {
    std::ofstream f(opt.output / "provenance.json", std::ios::binary);
    f << nlohmann::json(result.provenance).dump(2) << "\n";
  }
  if (opt.overlay) io::write_mat(opt.output / "overlay.png", overlay_panel(target, donor, result.sample));
  out << "method=" << to_string(result.provenance.method) << " class=" << result.provenance.defect_class
      << " placement=(" << result.provenance.placement.dy << "," << result.provenance.placement.dx << ")\n";
  return result;
}

// ---------------------------------------------------------------- balance

struct BatchOutcome {
  Batch batch;
  ClassHistogram before;
  ClassHistogram after;
  std::vector<BalanceStep> trace;
  std::uint64_t seed = 0;
};

inline std::size_t per_class_cap(const RunConfig& cfg, int num_classes) {
  if (cfg.batch.per_class_cap > 0) return static_cast<std::size_t>(cfg.batch.per_class_cap);
  return std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch.batch_size) / static_cast<std::size_t>(num_classes));
}

/// Draws and balances cfg.batch.num_batches batches. Batch b uses streams
/// derived from (seed, b) only, so results do not depend on `jobs`.
inline std::vector<BatchOutcome> run_balance(const DatasetIndex& index, const RunConfig& cfg) {
  cfg.validate();
  const int n = cfg.batch.num_batches;
  std::vector<BatchOutcome> outcomes(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  const std::size_t cap = per_class_cap(cfg, index.num_classes());

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int b = next++; b < n; b = next++) {
      try {
        auto& o = outcomes[static_cast<std::size_t>(b)];
        Rng draw(derive_seed(cfg.seed, 0xba7c4, b));
        const Batch batch = sample_batch(index, static_cast<std::size_t>(cfg.batch.batch_size), cap, draw, cfg.batch.top_up);
        o.seed = derive_seed(cfg.seed, 0xba1a, b);
        o.before = class_histogram(batch, index.num_classes());
        o.batch = balance_batch(batch, index, cfg.balance, o.seed, &o.trace);
        o.after = class_histogram(o.batch, index.num_classes());
      } catch (...) {
        errors[static_cast<std::size_t>(b)] = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min(cfg.jobs, n));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return outcomes;
}

struct BalanceSummary {
  std::size_t batches = 0;
  std::size_t injections = 0;
  std::size_t poisson = 0;
  std::size_t cut_paste = 0;
  std::size_t skipped = 0;
  std::size_t saturated_batches = 0;

  double poisson_share() const {
    return injections == 0 ? 0.0 : static_cast<double>(poisson) / static_cast<double>(injections);
  }
};

inline BalanceSummary summarize(const std::vector<BatchOutcome>& outcomes) {
  BalanceSummary s;
  s.batches = outcomes.size();
  for (const auto& o : outcomes) {
    s.saturated_batches += o.batch.saturated;
    for (const auto& step : o.trace) {
      if (step.skipped) {
        ++s.skipped;
        continue;
      }
      ++s.injections;
      if (step.method == InjectionMethod::poisson) ++s.poisson;
      if (step.method == InjectionMethod::cut_paste) ++s.cut_paste;
    }
  }
  return s;
}

inline nlohmann::json to_json(const BalanceSummary& s) {
  return {{"batches", s.batches},
          {"injections", s.injections},
          {"poisson", s.poisson},
          {"cut_paste", s.cut_paste},
          {"skipped", s.skipped},
          {"saturated_batches", s.saturated_batches},
          {"poisson_share", s.poisson_share()}};
}

inline std::string batch_dir_name(std::size_t b) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "batch_%05zu", b);
  return buf;
}

/// Writes balanced batches under `output`:
///   batch_NNNNN/SS_image.png, SS_mask.png, batch.json
///   manifest.jsonl   (every emitted sample, re-ingestible)
///   summary.json     (method mix and saturation counts)
/// Mask rasters store class ids.
inline void write_balance_tree(const fs::path& output, const std::vector<BatchOutcome>& outcomes,
                               const RunConfig& cfg) {
  fs::create_directories(output);
  std::vector<io::ManifestRecord> manifest;
  for (std::size_t b = 0; b < outcomes.size(); ++b) {
    const auto& o = outcomes[b];
    const std::string dir = batch_dir_name(b);
    nlohmann::json record;
    record["batch"] = b;
    record["seed"] = o.seed;
    record["histogram_before"] = o.before.counts();
    record["histogram"] = o.after.counts();
    record["saturated"] = o.batch.saturated;
    record["samples"] = nlohmann::json::array();
    for (std::size_t i = 0; i < o.batch.size(); ++i) {
      Sample s = *o.batch.samples[i];
      if (cfg.resize) s = resize(s, cfg.resize->first, cfg.resize->second);
      char stem[16];
      std::snprintf(stem, sizeof stem, "%02zu", i);
      const std::string image = dir + "/" + stem + "_image.png";
      const std::string mask = dir + "/" + stem + "_mask.png";
      io::write_image(output / image, s.image);
      io::write_mask(output / mask, s.mask);
      const int c = s.defect_class();
      manifest.push_back({image, mask, c});
      record["samples"].push_back({{"slot", i},
                                   {"source_id", s.source_id},
                                   {"image", image},
                                   {"mask", mask},
                                   {"class", c},
                                   {"provenance", o.batch.provenance[i]}});
    }
    std::ofstream f(output / dir / "batch.json", std::ios::binary);
    f << record.dump(2) << "\n";
  }
  io::write_manifest(output / "manifest.jsonl", manifest);
  std::ofstream f(output / "summary.json", std::ios::binary);
  f << to_json(summarize(outcomes)).dump(2) << "\n";
}

inline BalanceSummary cmd_balance(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const fs::path output(cfg.output);
  if (cfg.batch.num_batches == 0) {
    write_balance_tree(output, {}, cfg);
    out << "batches=0 injections=0\n";
    return {};
  }
  if (cfg.dataset.root.empty()) throw Error(ErrorCode::config, "dataset.root is not set");
  const DatasetIndex index =
      io::load_dataset(cfg.dataset.root, io::parse_layout(cfg.dataset.layout), cfg.dataset.num_classes);
  if (index.num_classes() < 1) throw Error(ErrorCode::unbalanceable, "dataset has no defect classes");
  if (cfg.batch.batch_size < index.num_classes()) {
    log_message(LogLevel::warn, "batch_size " + std::to_string(cfg.batch.batch_size) + " is smaller than the class count " +
                            std::to_string(index.num_classes()));
  }
  log_message(LogLevel::info, "indexed " + format_pool_summary(index));
  const auto outcomes = run_balance(index, cfg);
  write_balance_tree(output, outcomes, cfg);
  const BalanceSummary s = summarize(outcomes);
  out << "batches=" << s.batches << " injections=" << s.injections << " poisson=" << s.poisson
      << " cut_paste=" << s.cut_paste << " saturated=" << s.saturated_batches << " poisson_share=" << std::fixed
      << std::setprecision(4) << s.poisson_share() << "\n";
  out.unsetf(std::ios::fixed);
  return s;
}

// ---------------------------------------------------------------- verify

inline verify::Report cmd_verify(const RunConfig& cfg, std::ostream& out) {
  verify::Report report;
  const auto& solver = cfg.balance.injection.solver;
  verify::solver_suite(solver, cfg.verify.solver_instances, cfg.verify.max_region_side, cfg.seed, report);
  verify::gradient_suite(cfg.verify.gradient_instances, cfg.seed, report);
  verify::metric_suite(report);
  verify::balancer_suite(cfg.balance.injection, cfg.verify.balance_batches, cfg.seed, report);
  for (const auto& c : report.checks) {
    out << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << " measured=" << std::setprecision(6) << c.measured
        << " threshold=" << c.threshold;
    if (!c.detail.empty()) out << " (" << c.detail << ")";
    out << "\n";
  }
  out << (report.passed() ? "verify: all checks passed\n" : "verify: FAILED\n");
  return report;
}

}  // namespace dli::cli
