#ifndef SEGTTA_PIPELINE_HPP
#define SEGTTA_PIPELINE_HPP

// End-to-end test-time-augmentation runs over a dataset manifest: baseline and
// augmented predictions from every backend, fusion, and scoring. Experiments
// (plain run, leave-one-augmentation-out ablation, threshold sweep) are all
// expressed as sets of fusion variants over one shared prediction pass.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "segtta/augment.hpp"
#include "segtta/backend.hpp"
#include "segtta/config.hpp"
#include "segtta/error.hpp"
#include "segtta/fusion.hpp"
#include "segtta/hash.hpp"
#include "segtta/metrics.hpp"
#include "segtta/nifti.hpp"
#include "segtta/types.hpp"

namespace segtta {

/// Means over the cases of one variant. Overlap means cover cases with ground
/// truth; hd95 covers cases where it is defined.
struct Aggregate {
  std::size_t cases = 0;
  double miou = 0.0, mdice = 0.0, aiou = 0.0, adice = 0.0;
  std::optional<double> hd95_mm;
  std::size_t hd95_undefined = 0;
  double foreground_mm3 = 0.0;

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct CaseOutcome {
  std::string case_id;
  std::optional<std::string> error;
  std::map<std::string, MetricReport> metrics;  // by variant; empty without ground truth
  std::map<std::string, double> foreground_mm3;

  friend bool operator==(const CaseOutcome&, const CaseOutcome&) = default;
};

/// Wall-clock seconds summed over workers.
struct StageTimes {
  double load = 0.0, augment = 0.0, predict = 0.0, fuse = 0.0, metrics = 0.0;
};

struct RunResult {
  std::string kind;  // "run", "ablation" or "sweep"
  std::string dataset;
  int num_classes = 2;
  std::vector<std::string> variants;
  std::string reference;  // deltas are reported against this variant
  std::vector<CaseOutcome> cases;
  std::map<std::string, Aggregate> aggregates;
  nlohmann::json config;
  StageTimes times;
  std::size_t cache_hits = 0;
};

/// Equality of everything except timing and cache statistics.
inline bool same_results(const RunResult& a, const RunResult& b) {
  return a.kind == b.kind && a.dataset == b.dataset && a.num_classes == b.num_classes && a.variants == b.variants &&
         a.reference == b.reference && a.cases == b.cases && a.aggregates == b.aggregates && a.config == b.config;
}

/// Thread-safe store of predictions keyed by a content hash of everything
/// that determines them.
class PredictionCache {
 public:
  std::optional<ProbabilityMap> find(std::uint64_t key) const {
    std::lock_guard lock(mu_);
    auto it = maps_.find(key);
    if (it == maps_.end()) return std::nullopt;
    ++hits_;
    return it->second;
  }

  void insert(std::uint64_t key, const ProbabilityMap& map) {
    std::lock_guard lock(mu_);
    maps_.emplace(key, map);
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return maps_.size();
  }
  std::size_t hits() const {
    std::lock_guard lock(mu_);
    return hits_;
  }

 private:
  mutable std::mutex mu_;
  mutable std::size_t hits_ = 0;
  std::unordered_map<std::uint64_t, ProbabilityMap> maps_;
};

/// Append-only line-delimited JSON event log.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
    if (!out_) fail(ErrorCode::IoFailure, "cannot open run log '" + path.string() + "'");
  }

  void event(const std::string& name, nlohmann::json fields = nlohmann::json::object()) {
    fields["event"] = name;
    std::lock_guard lock(mu_);
    out_ << fields.dump() << '\n';
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

struct RunOptions {
  std::filesystem::path out_dir;  // when set, fused masks go to out_dir/masks
  PredictionCache* cache = nullptr;
  RunLog* log = nullptr;
  std::optional<std::size_t> jobs;  // overrides RunConfig::jobs
};

/// One fusion recipe: which views (and optionally which single backend)
/// contribute, and how they are voted.
struct Variant {
  std::string name;
  std::vector<std::string> views;
  std::optional<std::string> backend;
  VotingMode mode = VotingMode::ThresholdWeighted;
  double tau = kDefaultTau;
};

inline std::uint64_t content_hash(const Volume& v) {
  std::uint64_t h = fnv1a_value(v.dims());
  h = fnv1a_value(v.spacing(), h);
  return fnv1a(std::as_bytes(v.data()), h);
}

inline std::uint64_t content_hash(const LabelMask& m) {
  std::uint64_t h = fnv1a_value(m.dims());
  h = fnv1a_value(m.num_classes(), h);
  return fnv1a(std::as_bytes(m.labels()), h);
}

namespace detail {

struct View {
  std::string name;
  std::optional<AugmentationSpec> spec;  // nullopt: the unaugmented baseline
  std::string canonical;                 // JSON used for hashing and stream keys
};

struct Slot {
  std::size_t backend;
  std::size_t view;
};

inline std::string sanitize_filename(const std::string& s) {
  std::string out = s;
  for (char& ch : out) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return out;
}

class Stopwatch {
 public:
  explicit Stopwatch(std::atomic<long long>& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    sink_ += std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::atomic<long long>& sink_;
  std::chrono::steady_clock::time_point start_;
};

struct Timers {
  std::atomic<long long> load{0}, augment{0}, predict{0}, fuse{0}, metrics{0};
};

/// Lazily-populated per-case working set; released once the case is scored.
struct CaseState {
  std::once_flag load_once;
  std::optional<Volume> volume;  // intensity-normalized
  std::optional<LabelMask> ground_truth;
  std::unique_ptr<std::once_flag[]> view_once;
  std::vector<std::optional<Volume>> views;
  std::vector<std::optional<ProbabilityMap>> maps;
  std::atomic<std::size_t> remaining{0};
  std::atomic<bool> failed{false};
  std::mutex error_mu;
  std::string error;

  void mark_failed(const std::string& what) {
    std::lock_guard lock(error_mu);
    if (!failed.exchange(true)) error = what;
  }
};

inline Aggregate aggregate(const std::vector<CaseOutcome>& cases, const std::string& variant) {
  Aggregate a;
  std::size_t scored = 0, fg_cases = 0, hd_defined = 0;
  double hd_sum = 0.0, fg_sum = 0.0;
  for (const CaseOutcome& c : cases) {
    if (c.error) continue;
    if (auto fg = c.foreground_mm3.find(variant); fg != c.foreground_mm3.end()) {
      fg_sum += fg->second;
      ++fg_cases;
    }
    auto it = c.metrics.find(variant);
    if (it == c.metrics.end()) continue;
    const MetricReport& r = it->second;
    ++scored;
    a.miou += r.miou;
    a.mdice += r.mdice;
    a.aiou += r.aiou;
    a.adice += r.adice;
    if (r.hd95_mm) {
      hd_sum += *r.hd95_mm;
      ++hd_defined;
    } else {
      ++a.hd95_undefined;
    }
  }
  a.cases = scored;
  if (scored > 0) {
    a.miou /= static_cast<double>(scored);
    a.mdice /= static_cast<double>(scored);
    a.aiou /= static_cast<double>(scored);
    a.adice /= static_cast<double>(scored);
  }
  if (hd_defined > 0) a.hd95_mm = hd_sum / static_cast<double>(hd_defined);
  if (fg_cases > 0) a.foreground_mm3 = fg_sum / static_cast<double>(fg_cases);
  return a;
}

inline nlohmann::json config_snapshot(const RunConfig& c) {
  nlohmann::json j = to_json(c);
  // Execution resources do not change results.
  j.erase("jobs");
  j.erase("max_external_processes");
  return j;
}

}  // namespace detail

/// Runs every variant over the manifest with a shared set of predictions.
/// Per-case failures are recorded in the outcome and do not stop the run.
inline RunResult run_variants(RunConfig config, const DatasetManifest& manifest, const std::string& kind,
                              std::vector<Variant> variants, const std::string& reference,
                              const std::string& mask_variant, const RunOptions& options = {}) {
  finalize(config);
  const int num_classes = manifest.num_classes();
  for (const auto& b : config.backends) {
    try {
      validate(b, num_classes);
    } catch (const Error& e) {
      fail(ErrorCode::InvalidConfig, e.what());
    }
  }

  // Views: baseline first (when enabled), then augmentations in config order.
  std::vector<detail::View> views;
  if (config.include_baseline) views.push_back({kBaselineView, std::nullopt, kBaselineView});
  for (const auto& a : config.augmentations) views.push_back({a.name, a, to_json(a).dump()});
  std::vector<std::string> backend_json;
  for (const auto& b : config.backends) backend_json.push_back(to_json(b).dump());

  const auto allowed = [&](std::size_t b, std::size_t v) {
    if (!config.pairs) return true;
    for (const auto& p : *config.pairs) {
      if (p.backend == config.backends[b].name && p.view == views[v].name) return true;
    }
    return false;
  };

  // Map each variant onto prediction slots; drop variants with nothing to fuse.
  std::vector<detail::Slot> slots;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> slot_of;
  std::vector<std::vector<std::size_t>> variant_slots;
  std::vector<Variant> kept;
  for (const Variant& var : variants) {
    std::vector<std::size_t> members;
    for (std::size_t v = 0; v < views.size(); ++v) {
      if (std::find(var.views.begin(), var.views.end(), views[v].name) == var.views.end()) continue;
      for (std::size_t b = 0; b < config.backends.size(); ++b) {
        if (var.backend && *var.backend != config.backends[b].name) continue;
        if (!allowed(b, v)) continue;
        auto [it, inserted] = slot_of.try_emplace({b, v}, slots.size());
        if (inserted) slots.push_back({b, v});
        members.push_back(it->second);
      }
    }
    if (members.empty()) {
      if (var.name == mask_variant || var.name == reference) {
        fail(ErrorCode::InvalidConfig, "variant '" + var.name + "' has no predictions to fuse");
      }
      continue;
    }
    if (var.mode == VotingMode::ThresholdWeighted) validate_tau(var.tau);
    kept.push_back(var);
    variant_slots.push_back(std::move(members));
  }

  if (slots.empty()) fail(ErrorCode::InvalidConfig, "no (backend, view) predictions selected");

  RunResult result;
  result.kind = kind;
  result.dataset = manifest.name;
  result.num_classes = num_classes;
  result.reference = reference;
  for (const auto& v : kept) result.variants.push_back(v.name);
  result.config = detail::config_snapshot(config);
  result.cases.resize(manifest.entries.size());

  const std::size_t ncases = manifest.entries.size();
  std::vector<std::unique_ptr<detail::CaseState>> states(ncases);
  for (std::size_t i = 0; i < ncases; ++i) {
    auto s = std::make_unique<detail::CaseState>();
    s->view_once = std::make_unique<std::once_flag[]>(views.size());
    s->views.resize(views.size());
    s->maps.resize(slots.size());
    s->remaining = slots.size();
    states[i] = std::move(s);
    result.cases[i].case_id = manifest.entries[i].id;
  }

  if (!options.out_dir.empty() && !mask_variant.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir / "masks", ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create '" + (options.out_dir / "masks").string() + "'");
  }

  detail::Timers timers;
  std::counting_semaphore<1 << 16> external_slots(static_cast<std::ptrdiff_t>(config.max_external_processes));
  const auto log = [&](const std::string& name, nlohmann::json fields) {
    if (options.log) options.log->event(name, std::move(fields));
  };

  const auto load_case = [&](std::size_t ci) {
    auto& st = *states[ci];
    const ManifestEntry& entry = manifest.entries[ci];
    detail::Stopwatch sw(timers.load);
    const Volume raw = nifti::read_volume(entry.image);
    std::vector<double> samples(raw.data().begin(), raw.data().end());
    const Volume named(raw.dims(), raw.spacing(), std::move(samples), entry.id);
    st.volume = normalize_intensity(named).volume;
    if (entry.label) {
      LabelMask gt = nifti::read_label_mask(*entry.label, num_classes);
      if (gt.dims() != raw.dims()) {
        fail(ErrorCode::DimsMismatch, "label " + to_string(gt.dims()) + " vs image " + to_string(raw.dims()));
      }
      st.ground_truth = std::move(gt);
    }
    log("case_loaded", {{"case", entry.id}});
  };

  const auto view_of = [&](std::size_t ci, std::size_t vi) -> const Volume& {
    auto& st = *states[ci];
    std::call_once(st.view_once[vi], [&] {
      const detail::View& view = views[vi];
      if (!view.spec) {
        st.views[vi] = *st.volume;
        return;
      }
      detail::Stopwatch sw(timers.augment);
      SeededRng rng(config.seed, {manifest.entries[ci].id, "augment|" + view.canonical});
      st.views[vi] = apply(*view.spec, *st.volume, rng);
    });
    return *st.views[vi];
  };

  const auto run_slot = [&](std::size_t ci, std::size_t si) {
    auto& st = *states[ci];
    const detail::Slot slot = slots[si];
    const BackendDescriptor& backend = config.backends[slot.backend];
    const detail::View& view = views[slot.view];
    const Volume& input = view_of(ci, slot.view);

    std::uint64_t key = fnv1a(backend_json[slot.backend]);
    key = hash_combine(key, fnv1a(view.canonical));
    key = hash_combine(key, content_hash(*st.volume));
    key = hash_combine(key, fnv1a(manifest.entries[ci].id));
    key = hash_combine(key, config.seed);
    key = hash_combine(key, static_cast<std::uint64_t>(num_classes));
    if (st.ground_truth) key = hash_combine(key, content_hash(*st.ground_truth));

    if (options.cache) {
      if (auto hit = options.cache->find(key)) {
        st.maps[si] = std::move(*hit);
        return;
      }
    }
    detail::Stopwatch sw(timers.predict);
    SeededRng rng(config.seed, {manifest.entries[ci].id, "predict|" + backend_json[slot.backend] + "|" + view.canonical});
    PredictContext ctx;
    ctx.ground_truth = st.ground_truth ? &*st.ground_truth : nullptr;
    ctx.view = view.name;
    ctx.log = [&](const std::string& text) {
      log("backend_output", {{"case", manifest.entries[ci].id}, {"backend", backend.name}, {"view", view.name},
                             {"output", text}});
    };
    const bool external = backend.kind == BackendKind::ExternalProcess;
    if (external) external_slots.acquire();
    struct Release {
      std::counting_semaphore<1 << 16>* sem;
      ~Release() {
        if (sem) sem->release();
      }
    } release{external ? &external_slots : nullptr};
    ProbabilityMap map = predict(backend, input, num_classes, rng, ctx);
    if (options.cache) options.cache->insert(key, map);
    st.maps[si] = std::move(map);
  };

  const auto finish_case = [&](std::size_t ci) {
    auto& st = *states[ci];
    CaseOutcome& out = result.cases[ci];
    const ManifestEntry& entry = manifest.entries[ci];
    if (!st.failed) {
      try {
        for (std::size_t k = 0; k < kept.size(); ++k) {
          const Variant& var = kept[k];
          std::vector<ProbabilityMap> members;
          for (std::size_t si : variant_slots[k]) members.push_back(*st.maps[si]);
          LabelMask fused = [&] {
            detail::Stopwatch sw(timers.fuse);
            return fuse(FusionInput(std::move(members), var.mode, var.tau));
          }();
          out.foreground_mm3[var.name] = foreground_volume(fused, st.volume->spacing());
          if (st.ground_truth) {
            detail::Stopwatch sw(timers.metrics);
            out.metrics[var.name] = evaluate(fused, *st.ground_truth, st.volume->spacing());
          }
          if (var.name == mask_variant && !options.out_dir.empty()) {
            nifti::write_label_mask(fused, st.volume->spacing(),
                                    options.out_dir / "masks" / (detail::sanitize_filename(entry.id) + ".nii"));
          }
        }
      } catch (const std::exception& e) {
        st.mark_failed(e.what());
      }
    }
    if (st.failed) {
      out.error = st.error;
      out.metrics.clear();
      out.foreground_mm3.clear();
      log("case_failed", {{"case", entry.id}, {"error", st.error}});
    } else {
      log("case_done", {{"case", entry.id}});
    }
    states[ci].reset();
  };

  const std::size_t total = ncases * slots.size();
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= total) return;
      const std::size_t ci = t / slots.size(), si = t % slots.size();
      auto& st = *states[ci];
      try {
        std::call_once(st.load_once, [&] {
          try {
            load_case(ci);
          } catch (const std::exception& e) {
            st.mark_failed(e.what());
          }
        });
        if (!st.failed) run_slot(ci, si);
      } catch (const std::exception& e) {
        st.mark_failed(std::string(e.what()));
      }
      if (st.remaining.fetch_sub(1, std::memory_order_acq_rel) == 1) finish_case(ci);
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, options.jobs.value_or(config.jobs));
  log("run_start", {{"kind", kind}, {"cases", ncases}, {"predictions_per_case", slots.size()}, {"jobs", jobs}});
  if (jobs == 1 || total <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < std::min(jobs, total); ++i) pool.emplace_back(worker);
  }

  for (const auto& name : result.variants) result.aggregates[name] = detail::aggregate(result.cases, name);
  const auto secs = [](const std::atomic<long long>& ns) { return static_cast<double>(ns.load()) * 1e-9; };
  result.times = {secs(timers.load), secs(timers.augment), secs(timers.predict), secs(timers.fuse),
                  secs(timers.metrics)};
  result.cache_hits = options.cache ? options.cache->hits() : 0;
  log("run_done", {{"kind", kind},
                   {"seconds", {{"load", result.times.load},
                                {"augment", result.times.augment},
                                {"predict", result.times.predict},
                                {"fuse", result.times.fuse},
                                {"metrics", result.times.metrics}}}});
  return result;
}

inline constexpr const char* kFusedVariant = "segtta";

/// Baseline fusion, each backend's baseline alone, baseline plus each single
/// augmentation, and the full ensemble ("segtta"), whose masks are written.
inline RunResult run_segtta(const RunConfig& config, const DatasetManifest& manifest, const RunOptions& options = {}) {
  RunConfig c = config;
  finalize(c);
  std::vector<Variant> variants;
  std::vector<std::string> all_views;
  if (c.include_baseline) all_views.push_back(kBaselineView);
  for (const auto& a : c.augmentations) all_views.push_back(a.name);

  std::string reference = kFusedVariant;
  if (c.include_baseline) {
    variants.push_back({kBaselineView, {kBaselineView}, std::nullopt, c.voting, c.tau});
    reference = kBaselineView;
    if (c.backends.size() > 1) {
      for (const auto& b : c.backends) {
        variants.push_back({std::string(kBaselineView) + ":" + b.name, {kBaselineView}, b.name, c.voting, c.tau});
      }
    }
  }
  for (const auto& a : c.augmentations) {
    std::vector<std::string> views{a.name};
    if (c.include_baseline) views.insert(views.begin(), kBaselineView);
    variants.push_back({"+" + a.name, views, std::nullopt, c.voting, c.tau});
  }
  variants.push_back({kFusedVariant, all_views, std::nullopt, c.voting, c.tau});
  return run_variants(c, manifest, "run", std::move(variants), reference, kFusedVariant, options);
}

/// The full ensemble plus one variant per left-out augmentation.
inline RunResult run_ablation(const RunConfig& config, const DatasetManifest& manifest,
                              const RunOptions& options = {}) {
  RunConfig c = config;
  finalize(c);
  if (c.augmentations.size() < 2) {
    fail(ErrorCode::InsufficientAugmentations, "ablation needs at least two augmentations, got " +
                                                   std::to_string(c.augmentations.size()));
  }
  std::vector<std::string> all_views;
  if (c.include_baseline) all_views.push_back(kBaselineView);
  for (const auto& a : c.augmentations) all_views.push_back(a.name);

  std::vector<Variant> variants{{"full", all_views, std::nullopt, c.voting, c.tau}};
  for (const auto& a : c.augmentations) {
    std::vector<std::string> views;
    for (const auto& v : all_views) {
      if (v != a.name) views.push_back(v);
    }
    variants.push_back({"w/o " + a.name, views, std::nullopt, c.voting, c.tau});
  }
  RunOptions opts = options;
  opts.out_dir.clear();
  return run_variants(c, manifest, "ablation", std::move(variants), "full", {}, opts);
}

inline std::string tau_label(double tau) { return "tau=" + nlohmann::json(tau).dump(); }

/// Threshold-weighted fusion of the full ensemble once per tau.
inline RunResult run_threshold_sweep(const RunConfig& config, const DatasetManifest& manifest,
                                     const std::vector<double>& taus, const RunOptions& options = {}) {
  if (taus.empty()) fail(ErrorCode::InvalidTau, "threshold sweep needs at least one tau");
  std::set<double> seen;
  for (double t : taus) {
    validate_tau(t);
    if (!seen.insert(t).second) fail(ErrorCode::InvalidTau, "duplicate tau " + nlohmann::json(t).dump());
  }
  RunConfig c = config;
  finalize(c);
  std::vector<std::string> all_views;
  if (c.include_baseline) all_views.push_back(kBaselineView);
  for (const auto& a : c.augmentations) all_views.push_back(a.name);

  std::vector<Variant> variants;
  std::string reference = tau_label(taus.front());
  for (double t : taus) {
    variants.push_back({tau_label(t), all_views, std::nullopt, VotingMode::ThresholdWeighted, t});
    if (t == c.tau) reference = tau_label(t);
  }
  RunOptions opts = options;
  opts.out_dir.clear();
  return run_variants(c, manifest, "sweep", std::move(variants), reference, {}, opts);
}

}  // namespace segtta

#endif  // SEGTTA_PIPELINE_HPP
