#ifndef SEGTTA_METRICS_HPP
#define SEGTTA_METRICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segtta/edt.hpp"
#include "segtta/error.hpp"
#include "segtta/types.hpp"

namespace segtta {

/// Overlap and boundary scores between a prediction and its ground truth.
/// Per-class maps hold foreground classes only, and only those present in
/// at least one of the two masks.
struct MetricReport {
  std::map<int, double> per_class_iou;
  std::map<int, double> per_class_dice;
  double miou = 1.0;
  double mdice = 1.0;
  double aiou = 1.0;
  double adice = 1.0;
  std::optional<double> hd95_mm;  // nullopt when undefined
  std::string undefined_reason;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

struct VoxelCoord {
  std::size_t x = 0, y = 0, z = 0;
  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
};

namespace detail {

inline void require_same_grid(const LabelMask& a, const LabelMask& b) {
  if (a.dims() != b.dims()) {
    fail(ErrorCode::DimsMismatch, "masks differ in dims: " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  }
  if (a.num_classes() != b.num_classes()) {
    fail(ErrorCode::DimsMismatch, "masks differ in class count: " + std::to_string(a.num_classes()) + " vs " +
                                      std::to_string(b.num_classes()));
  }
}

inline double ratio_or_one(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

/// Per-class IoU/Dice, their unweighted means over classes present in either
/// mask, and the class-agnostic aIoU/aDice over the merged foreground. When
/// no foreground exists anywhere the means and agnostic scores are 1.
inline MetricReport overlap_metrics(const LabelMask& pred, const LabelMask& gt) {
  detail::require_same_grid(pred, gt);
  const std::size_t c = static_cast<std::size_t>(pred.num_classes());
  std::vector<std::size_t> inter(c, 0), pred_n(c, 0), gt_n(c, 0);
  std::size_t fg_inter = 0, fg_pred = 0, fg_gt = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Label p = pred[i], g = gt[i];
    ++pred_n[p];
    ++gt_n[g];
    if (p == g) ++inter[p];
    fg_pred += p != 0;
    fg_gt += g != 0;
    fg_inter += (p != 0 && g != 0);
  }

  MetricReport r;
  double iou_sum = 0.0, dice_sum = 0.0;
  for (std::size_t k = 1; k < c; ++k) {
    const std::size_t uni = pred_n[k] + gt_n[k] - inter[k];
    if (uni == 0) continue;
    const double iou = static_cast<double>(inter[k]) / static_cast<double>(uni);
    const double dice = 2.0 * static_cast<double>(inter[k]) / static_cast<double>(pred_n[k] + gt_n[k]);
    r.per_class_iou[static_cast<int>(k)] = iou;
    r.per_class_dice[static_cast<int>(k)] = dice;
    iou_sum += iou;
    dice_sum += dice;
  }
  if (!r.per_class_iou.empty()) {
    r.miou = iou_sum / static_cast<double>(r.per_class_iou.size());
    r.mdice = dice_sum / static_cast<double>(r.per_class_dice.size());
  }
  r.aiou = detail::ratio_or_one(fg_inter, fg_pred + fg_gt - fg_inter);
  r.adice = detail::ratio_or_one(2 * fg_inter, fg_pred + fg_gt);
  return r;
}

/// Voxels of the selected classes with at least one 6-neighbor outside the
/// selection; neighbors beyond the grid border count as outside. Storage order.
template <typename InSet>
std::vector<VoxelCoord> surface_voxels(const LabelMask& mask, InSet in_set) {
  const Dims& d = mask.dims();
  std::vector<VoxelCoord> out;
  const auto inside = [&](std::size_t j) { return in_set(mask[j]); };
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        if (!inside(i)) continue;
        const bool interior = x > 0 && x + 1 < d.nx && y > 0 && y + 1 < d.ny && z > 0 && z + 1 < d.nz &&
                              inside(i - 1) && inside(i + 1) && inside(i - d.nx) && inside(i + d.nx) &&
                              inside(i - d.nx * d.ny) && inside(i + d.nx * d.ny);
        if (!interior) out.push_back({x, y, z});
      }
    }
  }
  return out;
}

/// Surface of the class-agnostic foreground.
inline std::vector<VoxelCoord> surface_voxels(const LabelMask& mask) {
  return surface_voxels(mask, [](Label l) { return l != 0; });
}

/// Inclusive linear-interpolation percentile of an ascending sequence, q in [0,1].
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) fail(ErrorCode::InvalidArgument, "percentile of an empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct Hd95Result {
  std::optional<double> value_mm;
  std::string undefined_reason;
};

/// 95th percentile of the pooled directed surface distances pred->gt and
/// gt->pred on the class-agnostic foreground, in millimeters.
inline Hd95Result hd95(const LabelMask& pred, const LabelMask& gt, const Spacing& spacing) {
  if (pred.dims() != gt.dims()) {
    fail(ErrorCode::DimsMismatch, "masks differ in dims: " + to_string(pred.dims()) + " vs " + to_string(gt.dims()));
  }
  const auto pred_surface = surface_voxels(pred);
  const auto gt_surface = surface_voxels(gt);
  if (pred_surface.empty() && gt_surface.empty()) return {0.0, {}};
  if (pred_surface.empty()) return {std::nullopt, "prediction is empty but ground truth is not"};
  if (gt_surface.empty()) return {std::nullopt, "ground truth is empty but prediction is not"};

  const Dims& d = pred.dims();
  const auto flags = [&](const std::vector<VoxelCoord>& surface) {
    std::vector<std::uint8_t> f(d.count(), 0);
    for (const VoxelCoord& v : surface) f[d.index(v.x, v.y, v.z)] = 1;
    return f;
  };
  const auto to_gt = squared_distance_transform(flags(gt_surface), d, spacing);
  const auto to_pred = squared_distance_transform(flags(pred_surface), d, spacing);

  std::vector<double> pooled;
  pooled.reserve(pred_surface.size() + gt_surface.size());
  for (const VoxelCoord& v : pred_surface) pooled.push_back(std::sqrt(to_gt[d.index(v.x, v.y, v.z)]));
  for (const VoxelCoord& v : gt_surface) pooled.push_back(std::sqrt(to_pred[d.index(v.x, v.y, v.z)]));
  std::sort(pooled.begin(), pooled.end());
  return {percentile_sorted(pooled, 0.95), {}};
}

/// Full report: overlap scores plus HD95.
inline MetricReport evaluate(const LabelMask& pred, const LabelMask& gt, const Spacing& spacing) {
  MetricReport r = overlap_metrics(pred, gt);
  Hd95Result h = hd95(pred, gt, spacing);
  r.hd95_mm = h.value_mm;
  r.undefined_reason = std::move(h.undefined_reason);
  return r;
}

}  // namespace segtta

#endif  // SEGTTA_METRICS_HPP
