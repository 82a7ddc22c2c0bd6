#include <gtest/gtest.h>

#include "support.hpp"

using namespace segtta;
using testing_support::as_ints;

namespace {

ProbabilityMap one_voxel(std::vector<double> p, std::string tag) {
  const int c = static_cast<int>(p.size());
  return ProbabilityMap({1, 1, 1}, c, std::move(p), std::move(tag));
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

TEST(Majority, Examples) {
  const auto a = one_voxel({0.1, 0.8, 0.1}, "a"), b = one_voxel({0.2, 0.7, 0.1}, "b"),
             c = one_voxel({0.1, 0.2, 0.7}, "c");
  EXPECT_EQ(majority_vote(FusionInput({a, b, c}, VotingMode::Majority))[0], 1);
  EXPECT_EQ(majority_vote(FusionInput({a, c}, VotingMode::Majority))[0], 1);  // 1-vs-2 tie -> lower
  EXPECT_EQ(majority_vote(FusionInput({a}, VotingMode::Majority))[0], 1);
  // Map-level ties break low too.
  EXPECT_EQ(majority_vote(FusionInput({one_voxel({0.4, 0.4, 0.2}, "t")}, VotingMode::Majority))[0], 0);
}

TEST(ConfidenceWeighted, HandComputedExample) {
  // weights (0.9, 0.6); scores (0.81 + 0.24, 0.09 + 0.36) = (1.05, 0.45)
  const auto in = FusionInput({one_voxel({0.9, 0.1}, "p1"), one_voxel({0.4, 0.6}, "p2")}, VotingMode::ConfidenceWeighted);
  EXPECT_EQ(confidence_weighted_vote(in)[0], 0);
  const auto uniform = FusionInput({one_voxel({0.5, 0.5}, "u1"), one_voxel({0.5, 0.5}, "u2"), one_voxel({0.5, 0.5}, "u3")},
                                   VotingMode::ConfidenceWeighted);
  EXPECT_EQ(confidence_weighted_vote(uniform)[0], 0);
}

TEST(ThresholdWeighted, SingleMapExample) {
  const auto p = one_voxel({0.3, 0.7}, "p");
  EXPECT_EQ(threshold_weighted_vote(FusionInput({p}, VotingMode::ThresholdWeighted, 0.6))[0], 1);
  EXPECT_EQ(threshold_weighted_vote(FusionInput({p}, VotingMode::ThresholdWeighted, 0.75))[0], 0);
}

TEST(ThresholdWeighted, UnanimousBackgroundStaysBackground) {
  for (double tau : {0.01, 0.3, 0.6, 1.0}) {
    const auto in = FusionInput({one_voxel({1, 0, 0}, "a"), one_voxel({1, 0, 0}, "b")}, VotingMode::ThresholdWeighted, tau);
    EXPECT_EQ(threshold_weighted_vote(in)[0], 0);
  }
}

TEST(ThresholdWeighted, SmallTauEqualsConfidenceWeighted) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 500; ++trial) {
    auto fc = testing_support::random_fusion_case(gen);
    const double tau = 1.0 / (fc.ints.classes + 1);  // strictly below 1/C
    const auto cw = confidence_weighted_vote(FusionInput(fc.maps, VotingMode::ConfidenceWeighted));
    const auto tw = threshold_weighted_vote(FusionInput(fc.maps, VotingMode::ThresholdWeighted, tau));
    ASSERT_EQ(cw, tw);
  }
}

TEST(ThresholdWeighted, UnanimityAtOrAboveTau) {
  for (double tau : {0.5, 0.6, 0.8}) {
    const auto in = FusionInput({one_voxel({0.1, 0.1, 0.8}, "a"), one_voxel({0.0, 0.2, 0.8}, "b")},
                                VotingMode::ThresholdWeighted, tau);
    EXPECT_EQ(threshold_weighted_vote(in)[0], 2);
  }
}

TEST(Fusion, InvalidInputs) {
  EXPECT_EQ(code_of([] { FusionInput({}, VotingMode::Majority); }), ErrorCode::InconsistentMaps);
  const auto two = one_voxel({0.5, 0.5}, "a");
  const auto three = one_voxel({0.2, 0.3, 0.5}, "b");
  EXPECT_EQ(code_of([&] { FusionInput({two, three}, VotingMode::Majority); }), ErrorCode::InconsistentMaps);
  const ProbabilityMap wide({2, 1, 1}, 2, {0.5, 0.5, 0.5, 0.5}, "w");
  EXPECT_EQ(code_of([&] { FusionInput({two, wide}, VotingMode::Majority); }), ErrorCode::InconsistentMaps);
  EXPECT_EQ(code_of([&] { FusionInput({two}, VotingMode::ThresholdWeighted, 0.0); }), ErrorCode::InvalidTau);
  EXPECT_EQ(code_of([&] { FusionInput({two}, VotingMode::ThresholdWeighted, 1.5); }), ErrorCode::InvalidTau);
  EXPECT_NO_THROW(FusionInput({two}, VotingMode::Majority, 0.0));
}

TEST(Fusion, MatchesIntegerOracle) {
  std::mt19937_64 gen(2024);
  const std::pair<long long, long long> taus[] = {{3, 10}, {1, 2}, {3, 5}, {2, 3}, {9, 10}, {1, 1}};
  for (int trial = 0; trial < 3000; ++trial) {
    auto fc = testing_support::random_fusion_case(gen);
    ASSERT_EQ(as_ints(majority_vote(FusionInput(fc.maps, VotingMode::Majority))), oracle::majority(fc.ints));
    ASSERT_EQ(as_ints(confidence_weighted_vote(FusionInput(fc.maps, VotingMode::ConfidenceWeighted))),
              oracle::confidence_weighted(fc.ints));
    for (auto [num, den] : taus) {
      const double tau = static_cast<double>(num) / static_cast<double>(den);
      ASSERT_EQ(as_ints(threshold_weighted_vote(FusionInput(fc.maps, VotingMode::ThresholdWeighted, tau))),
                oracle::threshold_weighted(fc.ints, num, den))
          << "trial " << trial << " tau " << tau;
    }
  }
}

TEST(Fusion, PermutationInvariant) {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 300; ++trial) {
    auto fc = testing_support::random_fusion_case(gen);
    auto shuffled = fc.maps;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    for (auto mode : {VotingMode::Majority, VotingMode::ConfidenceWeighted, VotingMode::ThresholdWeighted}) {
      ASSERT_EQ(fuse(FusionInput(fc.maps, mode, 0.6)), fuse(FusionInput(shuffled, mode, 0.6)));
    }
  }
}

TEST(Fusion, DuplicateMapsDoNotChangeThresholdVote) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 300; ++trial) {
    auto fc = testing_support::random_fusion_case(gen);
    auto doubled = fc.maps;
    for (const auto& m : fc.maps) doubled.push_back(m.with_tag(m.source_tag() + "_copy"));
    for (double tau : {0.3, 0.6, 0.9}) {
      ASSERT_EQ(threshold_weighted_vote(FusionInput(fc.maps, VotingMode::ThresholdWeighted, tau)),
                threshold_weighted_vote(FusionInput(doubled, VotingMode::ThresholdWeighted, tau)));
    }
  }
}

TEST(Fusion, ForegroundVolumeMonotoneInTau) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 1000; ++trial) {
    auto fc = testing_support::random_fusion_case(gen);
    double prev = INFINITY;
    for (double tau : {0.1, 0.3, 0.45, 0.6, 0.75, 0.9, 1.0}) {
      const double fg = foreground_volume(threshold_weighted_vote(FusionInput(fc.maps, VotingMode::ThresholdWeighted, tau)),
                                          {1, 1, 1});
      ASSERT_LE(fg, prev);
      prev = fg;
    }
  }
}

TEST(ForegroundVolume, Examples) {
  const Dims d{5, 4, 1};
  EXPECT_EQ(foreground_volume(LabelMask::background(d, 2), {1, 1, 1}), 0.0);
  std::vector<Label> ten(d.count(), 0);
  std::fill(ten.begin(), ten.begin() + 10, 1);
  const LabelMask m(d, 2, ten);
  EXPECT_EQ(foreground_volume(m, {1, 1, 1}), 10.0);
  EXPECT_EQ(foreground_volume(m, {0.5, 0.5, 2}), 5.0);
}
