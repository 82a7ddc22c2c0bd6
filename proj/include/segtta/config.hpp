#ifndef SEGTTA_CONFIG_HPP
#define SEGTTA_CONFIG_HPP

// Run configuration and dataset manifest, with their JSON forms.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "segtta/backend.hpp"
#include "segtta/error.hpp"
#include "segtta/types.hpp"

namespace segtta {

inline constexpr const char* kBaselineView = "baseline";

/// Restricts which (backend, view) predictions are made; view is
/// "baseline" or an augmentation name.
struct PredictionPair {
  std::string backend;
  std::string view;
  friend bool operator==(const PredictionPair&, const PredictionPair&) = default;
};

struct RunConfig {
  std::vector<BackendDescriptor> backends;
  std::vector<AugmentationSpec> augmentations = default_augmentations();
  VotingMode voting = VotingMode::ThresholdWeighted;
  double tau = kDefaultTau;
  std::uint64_t seed = kDefaultSeed;
  bool include_baseline = true;
  std::size_t jobs = 1;
  std::size_t max_external_processes = 1;
  std::optional<std::vector<PredictionPair>> pairs;
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;
  std::optional<std::filesystem::path> label;
  int classes = 2;
};

struct DatasetManifest {
  std::string name;
  std::vector<ManifestEntry> entries;

  int num_classes() const { return entries.empty() ? 2 : entries.front().classes; }
};

// ---------------------------------------------------------------------------
// enum names

inline std::string to_string(AugmentationKind k) {
  switch (k) {
    case AugmentationKind::Identity: return "identity";
    case AugmentationKind::GaussianBlur: return "gaussian_blur";
    case AugmentationKind::GaussianNoise: return "gaussian_noise";
    case AugmentationKind::GammaCorrection: return "gamma_correction";
    case AugmentationKind::ContrastEnhancement: return "contrast_enhancement";
  }
  return "identity";
}

inline AugmentationKind augmentation_kind_from(const std::string& s) {
  for (auto k : {AugmentationKind::Identity, AugmentationKind::GaussianBlur, AugmentationKind::GaussianNoise,
                 AugmentationKind::GammaCorrection, AugmentationKind::ContrastEnhancement}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorCode::InvalidConfig, "unknown augmentation kind '" + s + "'");
}

inline std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Oracle: return "oracle";
    case BackendKind::NoisyOracle: return "noisy_oracle";
    case BackendKind::Constant: return "constant";
    case BackendKind::ExternalProcess: return "external";
  }
  return "oracle";
}

inline BackendKind backend_kind_from(const std::string& s) {
  for (auto k : {BackendKind::Oracle, BackendKind::NoisyOracle, BackendKind::Constant, BackendKind::ExternalProcess}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorCode::InvalidConfig, "unknown backend kind '" + s + "'");
}

inline std::string to_string(VotingMode m) {
  switch (m) {
    case VotingMode::Majority: return "majority";
    case VotingMode::ConfidenceWeighted: return "confidence_weighted";
    case VotingMode::ThresholdWeighted: return "threshold_weighted";
  }
  return "threshold_weighted";
}

inline VotingMode voting_mode_from(const std::string& s) {
  for (auto m : {VotingMode::Majority, VotingMode::ConfidenceWeighted, VotingMode::ThresholdWeighted}) {
    if (to_string(m) == s) return m;
  }
  fail(ErrorCode::InvalidConfig, "unknown voting mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) fail(ErrorCode::InvalidConfig, where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

/// Canonical JSON for an augmentation: only the fields its kind uses.
inline nlohmann::json to_json(const AugmentationSpec& s) {
  nlohmann::json j{{"kind", to_string(s.kind)}, {"name", s.name}};
  switch (s.kind) {
    case AugmentationKind::Identity: break;
    case AugmentationKind::GaussianBlur:
      j["sigma"] = s.sigma;
      if (s.volumetric) {
        j["mode"] = "3d";
      } else {
        j["mode"] = "2d";
        j["slice_axis"] = s.slice_axis;
      }
      break;
    case AugmentationKind::GaussianNoise: j["sigma"] = s.sigma; break;
    case AugmentationKind::GammaCorrection: j["gamma"] = s.gamma; break;
    case AugmentationKind::ContrastEnhancement:
      j["alpha"] = s.alpha;
      j["beta"] = s.beta;
      break;
  }
  return j;
}

inline AugmentationSpec augmentation_from_json(const nlohmann::json& j) {
  const std::string where = "augmentation";
  detail::reject_unknown_keys(j, {"kind", "name", "sigma", "gamma", "alpha", "beta", "slice_axis", "mode"}, where);
  if (!j.contains("kind")) fail(ErrorCode::InvalidConfig, where + ": missing 'kind'");
  const AugmentationKind kind = augmentation_kind_from(j.at("kind").get<std::string>());
  AugmentationSpec s;
  switch (kind) {
    case AugmentationKind::Identity: s = AugmentationSpec::identity(); break;
    case AugmentationKind::GaussianBlur: s = AugmentationSpec::blur(); break;
    case AugmentationKind::GaussianNoise: s = AugmentationSpec::noise(); break;
    case AugmentationKind::GammaCorrection: s = AugmentationSpec::gamma_correction(); break;
    case AugmentationKind::ContrastEnhancement: s = AugmentationSpec::contrast(); break;
  }
  detail::read_opt(j, "name", s.name, where);
  detail::read_opt(j, "sigma", s.sigma, where);
  detail::read_opt(j, "gamma", s.gamma, where);
  detail::read_opt(j, "alpha", s.alpha, where);
  detail::read_opt(j, "beta", s.beta, where);
  detail::read_opt(j, "slice_axis", s.slice_axis, where);
  std::string mode = "2d";
  detail::read_opt(j, "mode", mode, where);
  if (mode != "2d" && mode != "3d") fail(ErrorCode::InvalidConfig, where + ".mode must be \"2d\" or \"3d\"");
  s.volumetric = mode == "3d";
  try {
    validate(s);
  } catch (const Error& e) {
    fail(ErrorCode::InvalidConfig, where + " '" + s.name + "': " + e.what());
  }
  return s;
}

inline nlohmann::json to_json(const BackendDescriptor& b) {
  nlohmann::json j{{"kind", to_string(b.kind)}, {"name", b.name}};
  switch (b.kind) {
    case BackendKind::NoisyOracle:
      j["jitter"] = b.jitter;
      j["flip"] = b.flip;
      [[fallthrough]];
    case BackendKind::Oracle:
      j["confidence"] = b.confidence;
      break;
    case BackendKind::Constant:
      j["class"] = b.constant_class;
      j["confidence"] = b.confidence;
      break;
    case BackendKind::ExternalProcess:
      j["command"] = b.command;
      j["timeout"] = b.timeout_seconds;
      break;
  }
  return j;
}

inline BackendDescriptor backend_from_json(const nlohmann::json& j) {
  const std::string where = "backend";
  detail::reject_unknown_keys(j, {"kind", "name", "confidence", "jitter", "flip", "class", "command", "timeout"},
                              where);
  if (!j.contains("kind")) fail(ErrorCode::InvalidConfig, where + ": missing 'kind'");
  BackendDescriptor b;
  b.kind = backend_kind_from(j.at("kind").get<std::string>());
  detail::read_opt(j, "name", b.name, where);
  detail::read_opt(j, "confidence", b.confidence, where);
  detail::read_opt(j, "jitter", b.jitter, where);
  detail::read_opt(j, "flip", b.flip, where);
  detail::read_opt(j, "class", b.constant_class, where);
  detail::read_opt(j, "command", b.command, where);
  detail::read_opt(j, "timeout", b.timeout_seconds, where);
  return b;
}

/// Fills default names and checks everything that does not need the dataset.
inline void finalize(RunConfig& c) {
  if (c.backends.empty()) fail(ErrorCode::InvalidConfig, "at least one backend is required");
  try {
    validate_tau(c.tau);
  } catch (const Error& e) {
    fail(ErrorCode::InvalidConfig, e.what());
  }
  if (c.jobs == 0) fail(ErrorCode::InvalidConfig, "jobs must be >= 1");
  if (c.max_external_processes == 0) fail(ErrorCode::InvalidConfig, "max_external_processes must be >= 1");
  std::set<std::string> names;
  for (std::size_t i = 0; i < c.backends.size(); ++i) {
    auto& b = c.backends[i];
    if (b.name.empty()) b.name = to_string(b.kind) + std::to_string(i + 1);
    if (!names.insert(b.name).second) fail(ErrorCode::InvalidConfig, "duplicate backend name '" + b.name + "'");
  }
  std::set<std::string> views{kBaselineView};
  for (auto& a : c.augmentations) {
    if (a.name.empty()) a.name = to_string(a.kind);
    validate(a);
    if (!views.insert(a.name).second) {
      fail(ErrorCode::InvalidConfig, "augmentation name '" + a.name + "' is duplicated or reserved");
    }
  }
  if (!c.include_baseline && c.augmentations.empty()) {
    fail(ErrorCode::InvalidConfig, "nothing to fuse: baseline disabled and no augmentations");
  }
  if (c.pairs) {
    for (const auto& p : *c.pairs) {
      if (!names.contains(p.backend)) fail(ErrorCode::InvalidConfig, "pairs: unknown backend '" + p.backend + "'");
      if (!views.contains(p.view)) fail(ErrorCode::InvalidConfig, "pairs: unknown view '" + p.view + "'");
    }
  }
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["backends"] = nlohmann::json::array();
  for (const auto& b : c.backends) j["backends"].push_back(to_json(b));
  j["augmentations"] = nlohmann::json::array();
  for (const auto& a : c.augmentations) j["augmentations"].push_back(to_json(a));
  j["voting"] = to_string(c.voting);
  j["tau"] = c.tau;
  j["seed"] = c.seed;
  j["include_baseline"] = c.include_baseline;
  j["jobs"] = c.jobs;
  j["max_external_processes"] = c.max_external_processes;
  if (c.pairs) {
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : *c.pairs) j["pairs"].push_back({{"backend", p.backend}, {"view", p.view}});
  }
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  const std::string where = "config";
  detail::reject_unknown_keys(j,
                              {"backends", "augmentations", "voting", "tau", "seed", "include_baseline", "jobs",
                               "max_external_processes", "pairs"},
                              where);
  RunConfig c;
  if (!j.contains("backends") || !j.at("backends").is_array()) {
    fail(ErrorCode::InvalidConfig, "config.backends must be an array");
  }
  for (const auto& b : j.at("backends")) c.backends.push_back(backend_from_json(b));
  if (j.contains("augmentations")) {
    if (!j.at("augmentations").is_array()) fail(ErrorCode::InvalidConfig, "config.augmentations must be an array");
    c.augmentations.clear();
    for (const auto& a : j.at("augmentations")) c.augmentations.push_back(augmentation_from_json(a));
  }
  std::string voting = to_string(c.voting);
  detail::read_opt(j, "voting", voting, where);
  c.voting = voting_mode_from(voting);
  detail::read_opt(j, "tau", c.tau, where);
  detail::read_opt(j, "seed", c.seed, where);
  detail::read_opt(j, "include_baseline", c.include_baseline, where);
  detail::read_opt(j, "jobs", c.jobs, where);
  detail::read_opt(j, "max_external_processes", c.max_external_processes, where);
  if (j.contains("pairs")) {
    std::vector<PredictionPair> pairs;
    for (const auto& p : j.at("pairs")) {
      detail::reject_unknown_keys(p, {"backend", "view"}, "config.pairs[]");
      pairs.push_back({p.at("backend").get<std::string>(), p.at("view").get<std::string>()});
    }
    c.pairs = std::move(pairs);
  }
  finalize(c);
  return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(read_json_file(path)); }

/// Accepts either a bare list of entries or {"name": ..., "entries": [...]}.
/// Relative paths resolve against `base_dir`.
inline DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  DatasetManifest m;
  const nlohmann::json* list = &j;
  if (j.is_object()) {
    detail::reject_unknown_keys(j, {"name", "entries"}, "manifest");
    detail::read_opt(j, "name", m.name, "manifest");
    if (!j.contains("entries")) fail(ErrorCode::InvalidConfig, "manifest: missing 'entries'");
    list = &j.at("entries");
  }
  if (!list->is_array()) fail(ErrorCode::InvalidConfig, "manifest entries must be an array");
  std::set<std::string> ids;
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  for (const auto& e : *list) {
    detail::reject_unknown_keys(e, {"id", "image", "label", "classes"}, "manifest entry");
    if (!e.contains("id") || !e.contains("image") || !e.contains("classes")) {
      fail(ErrorCode::InvalidConfig, "manifest entry needs 'id', 'image' and 'classes'");
    }
    ManifestEntry entry;
    entry.id = e.at("id").get<std::string>();
    entry.image = resolve(e.at("image").get<std::string>());
    if (e.contains("label") && !e.at("label").is_null()) entry.label = resolve(e.at("label").get<std::string>());
    entry.classes = e.at("classes").get<int>();
    if (!ids.insert(entry.id).second) fail(ErrorCode::InvalidConfig, "manifest: duplicate case id '" + entry.id + "'");
    if (entry.classes < 2 || entry.classes > kMaxClasses) {
      fail(ErrorCode::InvalidConfig, "manifest: case '" + entry.id + "' classes must be in [2,256]");
    }
    if (!m.entries.empty() && entry.classes != m.entries.front().classes) {
      fail(ErrorCode::InvalidConfig, "manifest: class count differs across entries");
    }
    m.entries.push_back(std::move(entry));
  }
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  DatasetManifest m = manifest_from_json(read_json_file(path), path.parent_path());
  if (m.name.empty()) m.name = path.stem().string();
  return m;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json j{{"id", e.id}, {"image", e.image.string()}, {"classes", e.classes}};
    if (e.label) j["label"] = e.label->string();
    entries.push_back(std::move(j));
  }
  return {{"name", m.name}, {"entries", std::move(entries)}};
}

}  // namespace segtta

#endif  // SEGTTA_CONFIG_HPP
