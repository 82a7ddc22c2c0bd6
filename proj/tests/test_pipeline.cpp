#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace segtta;
using testing_support::TempDir;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected segtta::Error";
  return ErrorCode::InvalidArgument;
}

BackendDescriptor noisy(const std::string& name, double q = 0.9, int jitter = 1, double flip = 0.1) {
  BackendDescriptor b;
  b.kind = BackendKind::NoisyOracle;
  b.name = name;
  b.confidence = q;
  b.jitter = jitter;
  b.flip = flip;
  return b;
}

RunConfig noisy_config(int members = 2) {
  RunConfig c;
  for (int i = 1; i <= members; ++i) c.backends.push_back(noisy("m" + std::to_string(i)));
  return c;
}

}  // namespace

TEST(Pipeline, PerfectOracleScoresPerfectly) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 3, {16, 16, 8}, 3);
  RunConfig c;
  c.backends.push_back({});
  const auto r = run_segtta(c, manifest);
  std::vector<std::string> expected{"baseline"};
  for (const auto& a : default_augmentations()) expected.push_back("+" + a.name);
  expected.push_back("segtta");
  EXPECT_EQ(r.variants, expected);
  EXPECT_EQ(r.reference, "baseline");
  for (const auto& cs : r.cases) {
    ASSERT_FALSE(cs.error) << *cs.error;
    for (const auto& [name, m] : cs.metrics) {
      EXPECT_EQ(m.miou, 1.0) << name;
      EXPECT_EQ(m.mdice, 1.0) << name;
      EXPECT_EQ(*m.hd95_mm, 0.0) << name;
    }
  }
  EXPECT_EQ(r.aggregates.at("segtta").cases, 3u);
}

TEST(Pipeline, DuplicateBackendsMatchSingle) {
  // Deterministic members that differ only in name produce identical maps;
  // threshold fusion ignores that duplication.
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 2, {16, 14, 6}, 3);
  BackendDescriptor soft;
  soft.name = "soft";
  soft.confidence = 0.8;
  RunConfig one;
  one.backends = {soft};
  RunConfig three = one;
  for (const char* name : {"soft_copy1", "soft_copy2"}) {
    three.backends.push_back(soft);
    three.backends.back().name = name;
  }
  const auto r1 = run_segtta(one, manifest);
  const auto r3 = run_segtta(three, manifest);
  for (std::size_t i = 0; i < r1.cases.size(); ++i) {
    EXPECT_EQ(r1.cases[i].metrics.at("segtta"), r3.cases[i].metrics.at("segtta"));
    EXPECT_EQ(r1.cases[i].foreground_mm3.at("segtta"), r3.cases[i].foreground_mm3.at("segtta"));
  }
}

TEST(Pipeline, FailedCaseIsIsolated) {
  TempDir tmp;
  auto manifest = testing_support::write_phantoms(tmp.path(), 3, {12, 12, 4}, 2);
  manifest.entries[1].image = tmp / "does_not_exist.nii";
  const auto r = run_segtta(noisy_config(), manifest);
  ASSERT_TRUE(r.cases[1].error);
  EXPECT_NE(r.cases[1].error->find("does_not_exist"), std::string::npos);
  EXPECT_TRUE(r.cases[1].metrics.empty());
  EXPECT_FALSE(r.cases[0].error);
  EXPECT_FALSE(r.cases[2].error);
  EXPECT_EQ(r.aggregates.at("segtta").cases, 2u);

  // The remaining cases score exactly as in a run without the broken one.
  DatasetManifest healthy = manifest;
  healthy.entries.erase(healthy.entries.begin() + 1);
  const auto h = run_segtta(noisy_config(), healthy);
  EXPECT_EQ(h.cases[0], r.cases[0]);
  EXPECT_EQ(h.cases[1], r.cases[2]);
  EXPECT_EQ(h.aggregates, r.aggregates);
}

TEST(Pipeline, MismatchedLabelFailsCase) {
  TempDir tmp;
  auto manifest = testing_support::write_phantoms(tmp.path(), 2, {12, 12, 4}, 2);
  nifti::write_label_mask(LabelMask::background({5, 5, 5}, 2), {}, *manifest.entries[0].label);
  const auto r = run_segtta(noisy_config(), manifest);
  ASSERT_TRUE(r.cases[0].error);
  EXPECT_FALSE(r.cases[1].error);
}

TEST(Pipeline, CacheIsTransparent) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 3, {14, 12, 5}, 3);
  const auto plain = run_segtta(noisy_config(), manifest);
  PredictionCache cache;
  const auto first = run_segtta(noisy_config(), manifest, {.cache = &cache});
  const std::size_t stored = cache.size();
  EXPECT_EQ(stored, 3u * 2u * 5u);
  EXPECT_EQ(cache.hits(), 0u);
  const auto second = run_segtta(noisy_config(), manifest, {.cache = &cache});
  EXPECT_EQ(cache.size(), stored);
  EXPECT_EQ(second.cache_hits, stored);
  EXPECT_TRUE(same_results(plain, first));
  EXPECT_TRUE(same_results(plain, second));

  // Ablation and sweep reuse the same predictions.
  run_ablation(noisy_config(), manifest, {.cache = &cache});
  EXPECT_EQ(cache.size(), stored);

  RunConfig reseeded = noisy_config();
  reseeded.seed = 7;
  const auto other = run_segtta(reseeded, manifest, {.cache = &cache});
  EXPECT_EQ(cache.size(), 2 * stored);
  EXPECT_FALSE(same_results(other, plain));
}

TEST(Pipeline, DeterministicAcrossJobCounts) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 6, {16, 16, 6}, 3);
  const auto serial = run_segtta(noisy_config(3), manifest, {.jobs = 1});
  for (std::size_t jobs : {2u, 4u, 8u}) {
    const auto parallel = run_segtta(noisy_config(3), manifest, {.jobs = jobs});
    EXPECT_TRUE(same_results(serial, parallel)) << jobs;
    EXPECT_EQ(emit_report(serial, ReportFormat::Csv), emit_report(parallel, ReportFormat::Csv));
  }
}

TEST(Pipeline, AggregatesAreCaseMeans) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 4, {16, 16, 6}, 3);
  const auto r = run_segtta(noisy_config(), manifest);
  for (const auto& v : r.variants) {
    double miou = 0, dice = 0, hd = 0, fg = 0;
    std::size_t hd_n = 0;
    for (const auto& cs : r.cases) {
      const auto& m = cs.metrics.at(v);
      miou += m.miou;
      dice += m.mdice;
      fg += cs.foreground_mm3.at(v);
      if (m.hd95_mm) {
        hd += *m.hd95_mm;
        ++hd_n;
      }
    }
    const auto& a = r.aggregates.at(v);
    EXPECT_NEAR(a.miou, miou / 4, 1e-12);
    EXPECT_NEAR(a.mdice, dice / 4, 1e-12);
    EXPECT_NEAR(a.foreground_mm3, fg / 4, 1e-9);
    if (hd_n) {
      EXPECT_NEAR(*a.hd95_mm, hd / hd_n, 1e-12);
    }
  }
}

TEST(Pipeline, UnlabelledCasesReportVolumeOnly) {
  TempDir tmp;
  auto manifest = testing_support::write_phantoms(tmp.path(), 2, {12, 12, 4}, 2);
  for (auto& e : manifest.entries) e.label.reset();
  RunConfig c;
  BackendDescriptor bg;
  bg.kind = BackendKind::Constant;
  c.backends = {bg};
  const auto r = run_segtta(c, manifest);
  EXPECT_TRUE(r.cases[0].metrics.empty());
  EXPECT_EQ(r.cases[0].foreground_mm3.at("segtta"), 0.0);
  EXPECT_EQ(r.aggregates.at("segtta").cases, 0u);
  // Oracle backends need ground truth: every case fails, none crash the run.
  RunConfig o;
  o.backends.push_back({});
  const auto ro = run_segtta(o, manifest);
  for (const auto& cs : ro.cases) EXPECT_TRUE(cs.error);
}

TEST(Pipeline, MasksWrittenForFusedVariant) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 2, {12, 10, 4}, 3);
  const auto out = tmp / "out";
  RunConfig c;
  c.backends.push_back({});
  run_segtta(c, manifest, {.out_dir = out});
  for (const auto& e : manifest.entries) {
    const auto mask = nifti::read_label_mask(out / "masks" / (e.id + ".nii"), 3);
    EXPECT_EQ(mask, nifti::read_label_mask(*e.label, 3));
  }
}

TEST(Pipeline, LogRecordsEvents) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 2, {10, 10, 4}, 2);
  {
    RunLog log(tmp / "log.jsonl");
    run_segtta(noisy_config(), manifest, {.log = &log});
  }
  std::ifstream in(tmp / "log.jsonl");
  std::map<std::string, int> counts;
  for (std::string line; std::getline(in, line);) ++counts[nlohmann::json::parse(line).at("event").get<std::string>()];
  EXPECT_EQ(counts["run_start"], 1);
  EXPECT_EQ(counts["case_loaded"], 2);
  EXPECT_EQ(counts["case_done"], 2);
  EXPECT_EQ(counts["run_done"], 1);
}

TEST(Ablation, OneRowPerLeftOutAugmentation) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 2, {14, 12, 4}, 2);
  const auto r = run_ablation(noisy_config(), manifest);
  ASSERT_EQ(r.variants.size(), 5u);
  EXPECT_EQ(r.variants[0], "full");
  EXPECT_EQ(r.reference, "full");
  for (const auto& a : default_augmentations()) {
    EXPECT_NE(std::find(r.variants.begin(), r.variants.end(), "w/o " + a.name), r.variants.end());
  }
  // "full" is the same ensemble as the main run.
  const auto run = run_segtta(noisy_config(), manifest);
  for (std::size_t i = 0; i < r.cases.size(); ++i) {
    EXPECT_EQ(r.cases[i].metrics.at("full"), run.cases[i].metrics.at("segtta"));
  }

  RunConfig single = noisy_config();
  single.augmentations = {AugmentationSpec::blur()};
  EXPECT_EQ(code_of([&] { run_ablation(single, manifest); }), ErrorCode::InsufficientAugmentations);
}

TEST(Sweep, SingleTauMatchesRun) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 3, {14, 12, 4}, 3);
  for (double tau : {0.3, 0.9}) {
    RunConfig c = noisy_config();
    c.tau = tau;
    const auto sweep = run_threshold_sweep(c, manifest, {tau});
    const auto run = run_segtta(c, manifest);
    ASSERT_EQ(sweep.variants, std::vector<std::string>{tau_label(tau)});
    for (std::size_t i = 0; i < run.cases.size(); ++i) {
      EXPECT_EQ(sweep.cases[i].metrics.at(tau_label(tau)), run.cases[i].metrics.at("segtta"));
    }
  }
}

TEST(Sweep, ForegroundShrinksWithTau) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 3, {16, 16, 6}, 3);
  const std::vector<double> taus{0.2, 0.4, 0.6, 0.8, 1.0};
  const auto r = run_threshold_sweep(noisy_config(3), manifest, taus);
  for (const auto& cs : r.cases) {
    for (std::size_t i = 1; i < taus.size(); ++i) {
      EXPECT_LE(cs.foreground_mm3.at(tau_label(taus[i])), cs.foreground_mm3.at(tau_label(taus[i - 1])));
    }
  }
  EXPECT_EQ(code_of([&] { run_threshold_sweep(noisy_config(), manifest, {}); }), ErrorCode::InvalidTau);
  EXPECT_EQ(code_of([&] { run_threshold_sweep(noisy_config(), manifest, {0.5, 0.5}); }), ErrorCode::InvalidTau);
  EXPECT_EQ(code_of([&] { run_threshold_sweep(noisy_config(), manifest, {0.0}); }), ErrorCode::InvalidTau);
}

TEST(Pipeline, ExternalProcessLimit) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 4, {8, 8, 2}, 2);
  const auto counter = tmp / "counter";
  std::filesystem::create_directories(counter);
  ::setenv("FAKE_MODEL_COUNTER_DIR", counter.c_str(), 1);
  RunConfig c;
  BackendDescriptor b;
  b.kind = BackendKind::ExternalProcess;
  b.name = "ext";
  b.command = "'" + testing_support::fake_model() + "' counted {input} {output} {classes}";
  b.timeout_seconds = 30;
  c.backends = {b};
  c.augmentations = {AugmentationSpec::gamma_correction()};
  c.jobs = 4;

  const auto peak = [&] {
    int p = 0, runs = 0;
    for (const auto& e : std::filesystem::directory_iterator(counter)) {
      if (!e.path().filename().string().starts_with("peak_")) continue;
      int v = 0;
      std::ifstream(e.path()) >> v;
      p = std::max(p, v);
      ++runs;
      std::filesystem::remove(e.path());
    }
    EXPECT_EQ(runs, 8);
    return p;
  };
  c.max_external_processes = 1;
  const auto r1 = run_segtta(c, manifest);
  EXPECT_EQ(peak(), 1);
  c.max_external_processes = 2;
  const auto r2 = run_segtta(c, manifest);
  EXPECT_LE(peak(), 2);
  ::unsetenv("FAKE_MODEL_COUNTER_DIR");
  for (const auto& cs : r1.cases) EXPECT_FALSE(cs.error) << *cs.error;
  EXPECT_TRUE(same_results(r1, r2));
}

TEST(Pipeline, InvalidBackendForDataset) {
  TempDir tmp;
  const auto manifest = testing_support::write_phantoms(tmp.path(), 1, {8, 8, 2}, 2);
  RunConfig c;
  c.backends = {noisy("weak", 0.4)};  // not above 1/C for C = 2
  EXPECT_EQ(code_of([&] { run_segtta(c, manifest); }), ErrorCode::InvalidConfig);
}
