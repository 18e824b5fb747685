#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "dli/error.hpp"
#include "dli/image.hpp"

// Discrete Poisson seamless cloning on a 4-connected pixel grid.
//
// For every interior pixel p of the clone region the unknown g satisfies
//
//   4 g(p) - sum_{q in N(p), q interior} g(q)
//       = guidance(p) + sum_{q in N(p), q on boundary} target(q)
//
// where guidance(p) = 4 src(p) - sum_{q in N(p)} src(q) is the 5-point
// Laplacian of the source (the divergence of its gradient field, with the
// sign of the left-hand operator). The matrix is symmetric positive definite.

namespace dli {

enum class SolverBackend { conjugate_gradient, dense_direct };

inline std::string_view to_string(SolverBackend b) {
  return b == SolverBackend::dense_direct ? "dense-direct" : "conjugate-gradient";
}

inline SolverBackend parse_solver_backend(std::string_view s) {
  if (s == "conjugate-gradient" || s == "cg") return SolverBackend::conjugate_gradient;
  if (s == "dense-direct" || s == "dense") return SolverBackend::dense_direct;
  throw Error(ErrorCode::config, "unknown solver backend '" + std::string(s) + "'");
}

struct SolverConfig {
  double rel_tolerance = 1e-8;
  /// 0 selects min(10 * |interior|, 20000).
  int max_iterations = 0;
  SolverBackend backend = SolverBackend::conjugate_gradient;
  /// Largest system the dense backend will factorize.
  std::size_t dense_limit = 4096;

  int iteration_limit(std::size_t unknowns) const noexcept {
    if (max_iterations > 0) return max_iterations;
    return static_cast<int>(std::min<std::size_t>(10 * unknowns, 20000));
  }

  void validate() const {
    if (!(rel_tolerance > 0.0)) throw Error(ErrorCode::config, "rel_tolerance must be positive");
    if (max_iterations < 0) throw Error(ErrorCode::config, "max_iterations must be >= 1 (or 0 for auto)");
  }
};

/// Interior/boundary structure of a clone region placed in a target frame.
class RegionTopology {
 public:
  enum class Kind : std::uint8_t { interior, boundary };

  struct Neighbor {
    Kind kind;
    int index;  // rank in interior() or boundary()
  };

  /// Neighbor order: up, down, left, right.
  using Stencil = std::array<Neighbor, 4>;

  int frame_height() const noexcept { return frame_height_; }
  int frame_width() const noexcept { return frame_width_; }

  /// Row-major ordered interior pixels.
  const std::vector<Pixel>& interior() const noexcept { return interior_; }
  /// Row-major ordered boundary pixels.
  const std::vector<Pixel>& boundary() const noexcept { return boundary_; }
  const std::vector<Stencil>& neighbors() const noexcept { return neighbors_; }

  std::size_t size() const noexcept { return interior_.size(); }

  /// Rank of `p` in interior(), or -1.
  int interior_rank(Pixel p) const noexcept {
    if (p.row < 0 || p.col < 0 || p.row >= frame_height_ || p.col >= frame_width_) return -1;
    return rank_[static_cast<std::size_t>(p.row) * frame_width_ + p.col];
  }

  bool is_interior(Pixel p) const noexcept { return interior_rank(p) >= 0; }

 private:
  friend RegionTopology build_region(const SegMask&, Offset, int, int);

  int frame_height_ = 0;
  int frame_width_ = 0;
  std::vector<Pixel> interior_;
  std::vector<Pixel> boundary_;
  std::vector<Stencil> neighbors_;
  std::vector<int> rank_;
};

inline constexpr std::array<Pixel, 4> kStencilSteps{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

/// Places the nonzero pixels of `mask`, shifted by `offset`, into a
/// frame_height x frame_width target and derives the 4-neighbor boundary.
/// Every shifted pixel must keep at least one pixel of distance to the frame
/// edge so that the boundary lies inside the target.
inline RegionTopology build_region(const SegMask& mask, Offset offset, int frame_height, int frame_width) {
  RegionTopology region;
  region.frame_height_ = frame_height;
  region.frame_width_ = frame_width;
  region.rank_.assign(static_cast<std::size_t>(frame_height) * frame_width, -1);

  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (mask.at(r, c) == 0) continue;
      const Pixel p{r + offset.dy, c + offset.dx};
      if (p.row < 1 || p.col < 1 || p.row > frame_height - 2 || p.col > frame_width - 2) {
        throw Error(ErrorCode::placement,
                    "region pixel (" + std::to_string(p.row) + "," + std::to_string(p.col) +
                        ") touches or leaves the " + std::to_string(frame_height) + "x" +
                        std::to_string(frame_width) + " target border");
      }
      region.interior_.push_back(p);
    }
  }
  if (region.interior_.empty()) {
    throw Error(ErrorCode::empty_region, "mask has no nonzero pixels");
  }
  // Mask scan order plus a constant shift is already row-major in the frame.
  for (std::size_t i = 0; i < region.interior_.size(); ++i) {
    const Pixel p = region.interior_[i];
    region.rank_[static_cast<std::size_t>(p.row) * frame_width + p.col] = static_cast<int>(i);
  }

  std::vector<int> boundary_rank(region.rank_.size(), -1);
  for (const Pixel p : region.interior_) {
    for (const Pixel d : kStencilSteps) {
      const Pixel q{p.row + d.row, p.col + d.col};
      const std::size_t k = static_cast<std::size_t>(q.row) * frame_width + q.col;
      if (region.rank_[k] < 0) boundary_rank[k] = 0;
    }
  }
  for (std::size_t k = 0; k < boundary_rank.size(); ++k) {
    if (boundary_rank[k] == 0) {
      boundary_rank[k] = static_cast<int>(region.boundary_.size());
      region.boundary_.push_back({static_cast<int>(k / frame_width), static_cast<int>(k % frame_width)});
    }
  }

  region.neighbors_.reserve(region.interior_.size());
  for (const Pixel p : region.interior_) {
    RegionTopology::Stencil stencil{};
    for (std::size_t n = 0; n < 4; ++n) {
      const Pixel q{p.row + kStencilSteps[n].row, p.col + kStencilSteps[n].col};
      const std::size_t k = static_cast<std::size_t>(q.row) * frame_width + q.col;
      stencil[n] = region.rank_[k] >= 0
                       ? RegionTopology::Neighbor{RegionTopology::Kind::interior, region.rank_[k]}
                       : RegionTopology::Neighbor{RegionTopology::Kind::boundary, boundary_rank[k]};
    }
    region.neighbors_.push_back(stencil);
  }
  return region;
}

/// Right-hand side contributed by the source gradients: one value per
/// (channel, interior pixel), channel-major.
struct GuidanceField {
  std::size_t pixels = 0;
  std::vector<double> values;

  double at(int channel, std::size_t i) const noexcept { return values[channel * pixels + i]; }
  double& at(int channel, std::size_t i) noexcept { return values[channel * pixels + i]; }
  std::span<const double> channel(int c) const noexcept { return {values.data() + c * pixels, pixels}; }
};

/// 5-point Laplacian of `source` over the region interior. Frame pixel p
/// reads source pixel p - source_offset; reads falling outside the source
/// are clamped to its edge. With a zero offset the source is expected in
/// target coordinates.
inline GuidanceField guidance_field(const ImageBuffer& source, const RegionTopology& region,
                                    Offset source_offset = {}) {
  const int h = source.height();
  const int w = source.width();
  auto value = [&](int ch, int row, int col) {
    return source.at(ch, std::clamp(row - source_offset.dy, 0, h - 1),
                     std::clamp(col - source_offset.dx, 0, w - 1));
  };
  GuidanceField g{region.size(), std::vector<double>(ImageBuffer::kChannels * region.size())};
  for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
    for (std::size_t i = 0; i < region.size(); ++i) {
      const Pixel p = region.interior()[i];
      const double center = value(ch, p.row, p.col);
      double v = 0.0;
      for (const Pixel d : kStencilSteps) v += center - value(ch, p.row + d.row, p.col + d.col);
      g.at(ch, i) = v;
    }
  }
  return g;
}

/// Max over interior pixels and channels of |Laplacian(solution) - guidance|,
/// with boundary values read from `solution` itself.
inline double residual(const ImageBuffer& solution, const GuidanceField& guidance, const RegionTopology& region) {
  double worst = 0.0;
  for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
    for (std::size_t i = 0; i < region.size(); ++i) {
      const Pixel p = region.interior()[i];
      const double center = solution.at(ch, p.row, p.col);
      double lap = 0.0;
      for (const Pixel d : kStencilSteps) lap += center - solution.at(ch, p.row + d.row, p.col + d.col);
      worst = std::max(worst, std::abs(lap - guidance.at(ch, i)));
    }
  }
  return worst;
}

struct ChannelSolveReport {
  int iterations = 0;
  double initial_residual = 0.0;  // max-abs of b - A x0
  double final_residual = 0.0;    // max-abs of b - A x
};

struct SolveResult {
  ImageBuffer image;  // pre-clamp
  std::array<ChannelSolveReport, ImageBuffer::kChannels> channels{};
};

namespace detail {

inline void apply_laplacian(const RegionTopology& region, std::span<const double> x, std::span<double> out) {
  const auto& nb = region.neighbors();
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = 4.0 * x[i];
    for (const auto& n : nb[i]) {
      if (n.kind == RegionTopology::Kind::interior) v -= x[static_cast<std::size_t>(n.index)];
    }
    out[i] = v;
  }
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// b = guidance + Dirichlet data from the target on the boundary.
inline std::vector<double> assemble_rhs(const ImageBuffer& target, const GuidanceField& guidance,
                                        const RegionTopology& region, int ch) {
  std::vector<double> b(region.size());
  for (std::size_t i = 0; i < region.size(); ++i) {
    double v = guidance.at(ch, i);
    for (const auto& n : region.neighbors()[i]) {
      if (n.kind == RegionTopology::Kind::boundary) {
        const Pixel q = region.boundary()[static_cast<std::size_t>(n.index)];
        v += target.at(ch, q.row, q.col);
      }
    }
    b[i] = v;
  }
  return b;
}

// Jacobi-preconditioned conjugate gradient. Stops when the true max-abs
// residual is at most tol * (initial max-abs residual); the recurrence
// residual is re-synchronized with the true one whenever it claims
// convergence.
inline ChannelSolveReport solve_cg(const RegionTopology& region, std::span<const double> b, std::span<double> x,
                                   const SolverConfig& cfg) {
  const std::size_t n = x.size();
  std::vector<double> r(n), z(n), p(n), ap(n), diag(n, 4.0);
  auto true_residual = [&] {
    apply_laplacian(region, x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  };
  auto precondition = [&] {
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  };

  true_residual();
  ChannelSolveReport report;
  report.initial_residual = max_abs(r);
  report.final_residual = report.initial_residual;
  if (report.initial_residual == 0.0) return report;

  // Floor near round-off so an already-tiny initial residual cannot demand
  // an unreachable target.
  const double scale = max_abs(b) + 4.0 * max_abs(x);
  const double target = std::max(cfg.rel_tolerance * report.initial_residual,
                                 64.0 * std::numeric_limits<double>::epsilon() * scale);
  const int limit = cfg.iteration_limit(n);

  precondition();
  p = z;
  double rz = dot(r, z);
  for (int k = 1; k <= limit; ++k) {
    apply_laplacian(region, p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    report.iterations = k;
    if (max_abs(r) <= target) {
      true_residual();
      report.final_residual = max_abs(r);
      if (report.final_residual <= target) return report;
      precondition();
      p = z;
      rz = dot(r, z);
      continue;
    }
    precondition();
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  true_residual();
  report.final_residual = max_abs(r);
  if (report.final_residual <= target) return report;
  std::ostringstream msg;
  msg << "conjugate gradient stopped after " << report.iterations << " iterations with residual ratio "
      << report.final_residual / report.initial_residual << " > " << cfg.rel_tolerance;
  throw ConvergenceError(msg.str(), report.final_residual, report.iterations);
}

}  // namespace detail

/// Solves the clone system for every channel and returns the target with the
/// interior rewritten, before clamping. Pixels outside the interior are
/// copied from `target` untouched.
inline SolveResult solve_unclamped(const ImageBuffer& target, const GuidanceField& guidance,
                                   const RegionTopology& region, const SolverConfig& cfg = {}) {
  cfg.validate();
  if (target.height() != region.frame_height() || target.width() != region.frame_width()) {
    throw Error(ErrorCode::shape, "target frame does not match the region frame");
  }
  if (guidance.pixels != region.size() || guidance.values.size() != ImageBuffer::kChannels * region.size()) {
    throw Error(ErrorCode::shape, "guidance field does not match the region");
  }

  SolveResult result{target, {}};
  const std::size_t n = region.size();

  if (cfg.backend == SolverBackend::dense_direct) {
    if (n > cfg.dense_limit) {
      throw Error(ErrorCode::config, "dense-direct backend limited to " + std::to_string(cfg.dense_limit) +
                                         " unknowns, region has " + std::to_string(n));
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      a(ii, ii) = 4.0;
      for (const auto& nb : region.neighbors()[i]) {
        if (nb.kind == RegionTopology::Kind::interior) a(ii, nb.index) = -1.0;
      }
    }
    Eigen::MatrixXd rhs(static_cast<Eigen::Index>(n), ImageBuffer::kChannels);
    for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
      const auto b = detail::assemble_rhs(target, guidance, region, ch);
      for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i), ch) = b[i];
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::convergence, "dense factorization of the clone system failed");
    }
    const Eigen::MatrixXd sol = llt.solve(rhs);
    std::vector<double> x(n), ax(n);
    for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
      for (std::size_t i = 0; i < n; ++i) {
        const Pixel p = region.interior()[i];
        x[i] = sol(static_cast<Eigen::Index>(i), ch);
        result.image.at(ch, p.row, p.col) = x[i];
      }
      detail::apply_laplacian(region, x, ax);
      double worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(rhs(static_cast<Eigen::Index>(i), ch) - ax[i]));
      }
      result.channels[ch].final_residual = worst;
    }
    return result;
  }

  std::vector<double> x(n);
  for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
    const auto b = detail::assemble_rhs(target, guidance, region, ch);
    for (std::size_t i = 0; i < n; ++i) {
      const Pixel p = region.interior()[i];
      x[i] = target.at(ch, p.row, p.col);
    }
    result.channels[ch] = detail::solve_cg(region, b, x, cfg);
    for (std::size_t i = 0; i < n; ++i) {
      const Pixel p = region.interior()[i];
      result.image.at(ch, p.row, p.col) = x[i];
    }
  }
  return result;
}

/// Seamless clone: solve, then clamp the rewritten interior into [0, 1].
inline ImageBuffer solve(const ImageBuffer& target, const GuidanceField& guidance, const RegionTopology& region,
                         const SolverConfig& cfg = {}) {
  auto result = solve_unclamped(target, guidance, region, cfg);
  for (int ch = 0; ch < ImageBuffer::kChannels; ++ch) {
    for (const Pixel p : region.interior()) {
      double& v = result.image.at(ch, p.row, p.col);
      v = std::clamp(v, 0.0, 1.0);
    }
  }
  return std::move(result.image);
}

}  // namespace dli
