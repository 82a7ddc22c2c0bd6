#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "support.hpp"

using namespace segtta;

namespace {

Volume line_volume(std::vector<double> values) {
  const Dims d{values.size(), 1, 1};
  return Volume(d, {}, std::move(values), "v");
}

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

}  // namespace

TEST(Volume, RejectsLengthMismatchAndNonFinite) {
  EXPECT_EQ(code_of([] { Volume({2, 2, 1}, {}, {1.0, 2.0, 3.0}); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { Volume({2, 1, 1}, {}, {1.0, std::nan("")}); }), ErrorCode::NonFiniteData);
  EXPECT_EQ(code_of([] { Volume({1, 1, 1}, {}, {std::numeric_limits<double>::infinity()}); }),
            ErrorCode::NonFiniteData);
  EXPECT_EQ(code_of([] { Volume({0, 1, 1}, {}, {}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { Volume({1, 1, 1}, {1.0, -1.0, 1.0}, {0.0}); }), ErrorCode::InvalidArgument);
}

TEST(Volume, StorageIsXFastest) {
  const Dims d{3, 2, 2};
  std::vector<double> data(d.count());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(i);
  const Volume v(d, {}, data);
  EXPECT_EQ(v.at(1, 0, 0), 1.0);
  EXPECT_EQ(v.at(0, 1, 0), 3.0);
  EXPECT_EQ(v.at(0, 0, 1), 6.0);
  EXPECT_EQ(d.stride(2), 6u);
}

TEST(Normalize, AffineExamples) {
  auto n = normalize_intensity(line_volume({0, 50, 100}));
  EXPECT_EQ(std::vector<double>(n.volume.data().begin(), n.volume.data().end()), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(n.original_min, 0.0);
  EXPECT_EQ(n.original_max, 100.0);

  n = normalize_intensity(line_volume({-10, 10}));
  EXPECT_EQ(n.volume[0], 0.0);
  EXPECT_EQ(n.volume[1], 1.0);
}

TEST(Normalize, ConstantVolumeConvention) {
  const auto n = normalize_intensity(line_volume({7, 7, 7}));
  for (double x : n.volume.data()) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(n.original_min, 7.0);
  EXPECT_EQ(n.original_max, 8.0);
  const Volume back = denormalize_intensity(n);
  for (double x : back.data()) EXPECT_EQ(x, 7.0);
}

TEST(Normalize, InverseRoundTrip) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-500.0, 3000.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> values(257);
    for (double& x : values) x = u(gen);
    const Volume v = line_volume(values);
    const auto n = normalize_intensity(v);
    EXPECT_GE(n.volume.min(), 0.0);
    EXPECT_LE(n.volume.max(), 1.0);
    const Volume back = denormalize_intensity(n);
    for (std::size_t i = 0; i < values.size(); ++i) {
      EXPECT_LE(std::abs(back[i] - values[i]), 1e-9 * std::max(1.0, std::abs(values[i])));
    }
  }
}

TEST(LabelMask, RejectsOutOfRangeLabels) {
  EXPECT_EQ(code_of([] { LabelMask({2, 1, 1}, 2, {0, 2}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { LabelMask({2, 1, 1}, 1, {0, 0}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { LabelMask({2, 1, 1}, 2, {0}); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(LabelMask({3, 1, 1}, 3, {0, 2, 1}).foreground_count(), 2u);
}

TEST(ProbabilityMap, ToleranceAndRenormalization) {
  const Dims d{1, 1, 1};
  EXPECT_EQ(code_of([&] { ProbabilityMap(d, 2, {0.3, 0.6}); }), ErrorCode::NotProbabilistic);
  EXPECT_EQ(code_of([&] { ProbabilityMap(d, 2, {-0.01, 1.01}); }), ErrorCode::NotProbabilistic);
  EXPECT_EQ(code_of([&] { ProbabilityMap(d, 2, {std::nan(""), 1.0}); }), ErrorCode::NotProbabilistic);

  const ProbabilityMap p(d, 3, {0.2004, 0.3, 0.5});  // sums to 1.0004, inside tolerance
  const double sum = p.at(0, 0) + p.at(0, 1) + p.at(0, 2);
  EXPECT_NEAR(sum, 1.0, 1e-12);

  // Renormalizing an already-normalized map changes nothing.
  const ProbabilityMap again(d, 3, {p.at(0, 0), p.at(0, 1), p.at(0, 2)});
  EXPECT_TRUE(std::ranges::equal(again.probs(), p.probs()));
}

TEST(ProbabilityMap, FromLabelsAndArgmax) {
  const LabelMask m({4, 1, 1}, 3, {0, 1, 2, 1});
  const auto p = ProbabilityMap::from_labels(m, 0.8, "t");
  EXPECT_EQ(p.source_tag(), "t");
  EXPECT_EQ(p.argmax(), m);
  EXPECT_DOUBLE_EQ(p.at(1, 1), 0.8);
  EXPECT_DOUBLE_EQ(p.at(1, 0), 0.1);

  const ProbabilityMap tie({1, 1, 1}, 3, {0.4, 0.4, 0.2});
  EXPECT_EQ(tie.argmax()[0], 0);
}

TEST(Rng, SameKeySameStreamDifferentKeysDiffer) {
  SeededRng a(2024, {"case1", "augment|x"}), b(2024, {"case1", "augment|x"});
  SeededRng c(2024, {"case2", "augment|x"}), d(2025, {"case1", "augment|x"});
  std::vector<std::uint64_t> sa, sb, sc, sd;
  for (int i = 0; i < 64; ++i) {
    sa.push_back(a.next_u64());
    sb.push_back(b.next_u64());
    sc.push_back(c.next_u64());
    sd.push_back(d.next_u64());
  }
  EXPECT_EQ(sa, sb);
  EXPECT_NE(sa, sc);
  EXPECT_NE(sa, sd);
}

TEST(Rng, PinnedFirstValues) {
  // Regression pin: changing the stream derivation silently changes every
  // seeded result, so the first outputs of one stream are fixed here.
  SeededRng r(2024, {"case000", "phantom"});
  EXPECT_EQ(r.next_u64(), 0x41409886987732c7ULL);
  EXPECT_EQ(r.next_u64(), 0x27cc3f9c9f2a31dcULL);
  EXPECT_EQ(r.next_u64(), 0x5df3dadd13ca8281ULL);
}

TEST(Rng, BelowIsUnbiasedEnough) {
  SeededRng r(1, {"x", "y"});
  std::vector<int> counts(3, 0);
  const int n = 30000;
  for (int i = 0; i < n; ++i) ++counts[r.below(3)];
  for (int c : counts) EXPECT_NEAR(c, n / 3.0, 4.0 * std::sqrt(n * (1.0 / 3) * (2.0 / 3)));
}

TEST(Rng, NormalMoments) {
  SeededRng r(7, {"x", "normal"});
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(AugmentationSpec, Validation) {
  auto bad = AugmentationSpec::blur(0.0);
  EXPECT_EQ(code_of([&] { validate(bad); }), ErrorCode::InvalidSigma);
  bad = AugmentationSpec::noise(-0.1);
  EXPECT_EQ(code_of([&] { validate(bad); }), ErrorCode::InvalidSigma);
  bad = AugmentationSpec::gamma_correction(0.0);
  EXPECT_EQ(code_of([&] { validate(bad); }), ErrorCode::InvalidGamma);
  bad = AugmentationSpec::contrast(-1.0);
  EXPECT_EQ(code_of([&] { validate(bad); }), ErrorCode::InvalidAlpha);
  EXPECT_NO_THROW(validate(AugmentationSpec::noise(0.0)));
  EXPECT_EQ(default_augmentations().size(), 4u);
}

TEST(Tau, Range) {
  EXPECT_EQ(code_of([] { validate_tau(0.0); }), ErrorCode::InvalidTau);
  EXPECT_EQ(code_of([] { validate_tau(1.0001); }), ErrorCode::InvalidTau);
  EXPECT_EQ(code_of([] { validate_tau(std::nan("")); }), ErrorCode::InvalidTau);
  EXPECT_NO_THROW(validate_tau(1.0));
  EXPECT_NO_THROW(validate_tau(1e-9));
}

TEST(Error, MessageNamesCode) {
  try {
    fail(ErrorCode::CorruptHeader, "sizeof_hdr is 12");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptHeader);
    EXPECT_NE(std::string(e.what()).find("CorruptHeader"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("sizeof_hdr"), std::string::npos);
  }
}
