#ifndef SEGTTA_FUSION_HPP
#define SEGTTA_FUSION_HPP

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "segtta/error.hpp"
#include "segtta/types.hpp"

namespace segtta {

/// A validated set of probability maps to fuse. Maps are held in a canonical
/// order (source tag, then contents) so every floating-point sum is formed in
/// the same order whatever order the caller supplied them in.
class FusionInput {
 public:
  FusionInput(std::vector<ProbabilityMap> maps, VotingMode mode = VotingMode::ThresholdWeighted,
              double tau = kDefaultTau)
      : maps_(std::move(maps)), mode_(mode), tau_(tau) {
    if (maps_.empty()) fail(ErrorCode::InconsistentMaps, "fusion needs at least one probability map");
    const ProbabilityMap& first = maps_.front();
    for (const ProbabilityMap& m : maps_) {
      if (m.dims() != first.dims() || m.num_classes() != first.num_classes()) {
        fail(ErrorCode::InconsistentMaps, "map '" + m.source_tag() + "' " + to_string(m.dims()) + "x" +
                                              std::to_string(m.num_classes()) + " differs from '" +
                                              first.source_tag() + "'");
      }
    }
    if (mode_ == VotingMode::ThresholdWeighted) validate_tau(tau_);
    std::stable_sort(maps_.begin(), maps_.end(), [](const ProbabilityMap& a, const ProbabilityMap& b) {
      if (a.source_tag() != b.source_tag()) return a.source_tag() < b.source_tag();
      return std::ranges::lexicographical_compare(a.probs(), b.probs());
    });
  }

  const std::vector<ProbabilityMap>& maps() const noexcept { return maps_; }
  VotingMode mode() const noexcept { return mode_; }
  double tau() const noexcept { return tau_; }
  const Dims& dims() const noexcept { return maps_.front().dims(); }
  int num_classes() const noexcept { return maps_.front().num_classes(); }

 private:
  std::vector<ProbabilityMap> maps_;
  VotingMode mode_;
  double tau_;
};

namespace detail {

inline std::size_t argmax_low(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < p.size(); ++c) {
    if (p[c] > p[best]) best = c;
  }
  return best;
}

/// Per voxel: S(c) = sum_k w_k P_k(c) with w_k = max_c P_k(c), and W = sum_k w_k.
/// `decide(S, W)` picks the label.
template <typename Decide>
LabelMask weighted_vote(const FusionInput& in, Decide decide) {
  const std::size_t nvox = in.dims().count();
  const std::size_t c = static_cast<std::size_t>(in.num_classes());
  std::vector<Label> labels(nvox);
  std::vector<double> score(c);
  for (std::size_t v = 0; v < nvox; ++v) {
    std::fill(score.begin(), score.end(), 0.0);
    double total_weight = 0.0;
    for (const ProbabilityMap& m : in.maps()) {
      auto p = m.voxel(v);
      const double w = *std::max_element(p.begin(), p.end());
      total_weight += w;
      for (std::size_t k = 0; k < c; ++k) score[k] += w * p[k];
    }
    labels[v] = static_cast<Label>(decide(std::span<const double>(score), total_weight));
  }
  return LabelMask(in.dims(), in.num_classes(), std::move(labels));
}

}  // namespace detail

/// One vote per map for its argmax class; most votes wins, ties to the lower class.
inline LabelMask majority_vote(const FusionInput& in) {
  const std::size_t nvox = in.dims().count();
  const std::size_t c = static_cast<std::size_t>(in.num_classes());
  std::vector<Label> labels(nvox);
  std::vector<std::size_t> votes(c);
  for (std::size_t v = 0; v < nvox; ++v) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const ProbabilityMap& m : in.maps()) ++votes[detail::argmax_low(m.voxel(v))];
    labels[v] = static_cast<Label>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return LabelMask(in.dims(), in.num_classes(), std::move(labels));
}

/// argmax_c sum_k w_k P_k(c), ties to the lower class.
inline LabelMask confidence_weighted_vote(const FusionInput& in) {
  return detail::weighted_vote(in, [](std::span<const double> s, double) { return detail::argmax_low(s); });
}

/// Confidence-weighted argmax, kept only when its normalized score S/W reaches
/// tau; background otherwise.
inline LabelMask threshold_weighted_vote(const FusionInput& in) {
  validate_tau(in.tau());
  const double tau = in.tau();
  return detail::weighted_vote(in, [tau](std::span<const double> s, double total_weight) -> std::size_t {
    const std::size_t best = detail::argmax_low(s);
    return s[best] / total_weight >= tau ? best : 0;
  });
}

inline LabelMask fuse(const FusionInput& in) {
  switch (in.mode()) {
    case VotingMode::Majority: return majority_vote(in);
    case VotingMode::ConfidenceWeighted: return confidence_weighted_vote(in);
    case VotingMode::ThresholdWeighted: return threshold_weighted_vote(in);
  }
  return threshold_weighted_vote(in);
}

/// Foreground voxel count times voxel volume, in mm^3.
inline double foreground_volume(const LabelMask& mask, const Spacing& spacing) {
  return static_cast<double>(mask.foreground_count()) * spacing.voxel_volume();
}

}  // namespace segtta

#endif  // SEGTTA_FUSION_HPP
