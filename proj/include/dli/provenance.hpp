#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dli/error.hpp"
#include "dli/image.hpp"

namespace dli {

enum class InjectionMethod { none, cut_paste, poisson };

inline std::string_view to_string(InjectionMethod m) {
  switch (m) {
    case InjectionMethod::none: return "none";
    case InjectionMethod::cut_paste: return "cut-paste";
    case InjectionMethod::poisson: return "poisson";
  }
  return "none";
}

inline InjectionMethod parse_injection_method(std::string_view s) {
  if (s == "none") return InjectionMethod::none;
  if (s == "cut-paste" || s == "cut_paste" || s == "cutpaste") return InjectionMethod::cut_paste;
  if (s == "poisson") return InjectionMethod::poisson;
  throw Error(ErrorCode::config, "unknown injection method '" + std::string(s) + "'");
}

/// Concrete geometric parameters drawn for one donor transform.
struct TransformRecord {
  bool flip_h = false;
  bool flip_v = false;
  double rotation_deg = 0.0;
  double scale = 1.0;

  friend bool operator==(const TransformRecord&, const TransformRecord&) = default;
};

/// Audit record for one batch slot. `method == none` means the sample is an
/// original dataset sample.
struct Provenance {
  InjectionMethod method = InjectionMethod::none;
  std::string donor_id;
  int defect_class = 0;
  TransformRecord transform;
  Offset placement;
  std::uint64_t seed = 0;
  int attempts = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

inline void to_json(nlohmann::json& j, const TransformRecord& t) {
  j = {{"flip_h", t.flip_h}, {"flip_v", t.flip_v}, {"rotation_deg", t.rotation_deg}, {"scale", t.scale}};
}

inline void from_json(const nlohmann::json& j, TransformRecord& t) {
  t.flip_h = j.value("flip_h", false);
  t.flip_v = j.value("flip_v", false);
  t.rotation_deg = j.value("rotation_deg", 0.0);
  t.scale = j.value("scale", 1.0);
}

inline void to_json(nlohmann::json& j, const Provenance& p) {
  j = {{"method", std::string(to_string(p.method))}};
  if (p.method == InjectionMethod::none) return;
  j["donor_id"] = p.donor_id;
  j["class"] = p.defect_class;
  j["transform"] = p.transform;
  j["placement"] = {{"dy", p.placement.dy}, {"dx", p.placement.dx}};
  j["seed"] = p.seed;
  j["attempts"] = p.attempts;
}

inline void from_json(const nlohmann::json& j, Provenance& p) {
  p = Provenance{};
  p.method = parse_injection_method(j.at("method").get<std::string>());
  if (p.method == InjectionMethod::none) return;
  p.donor_id = j.at("donor_id").get<std::string>();
  p.defect_class = j.at("class").get<int>();
  p.transform = j.at("transform").get<TransformRecord>();
  p.placement = {j.at("placement").at("dy").get<int>(), j.at("placement").at("dx").get<int>()};
  p.seed = j.at("seed").get<std::uint64_t>();
  p.attempts = j.value("attempts", 0);
}

}  // namespace dli
