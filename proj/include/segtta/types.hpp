#ifndef SEGTTA_TYPES_HPP
#define SEGTTA_TYPES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segtta/error.hpp"

namespace segtta {

/// Grid extent. Storage order everywhere is x fastest, then y, then z.
struct Dims {
  std::size_t nx = 0, ny = 0, nz = 0;

  constexpr std::size_t count() const noexcept { return nx * ny * nz; }
  constexpr std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + nx * (y + ny * z);
  }
  constexpr std::array<std::size_t, 3> extents() const noexcept { return {nx, ny, nz}; }
  constexpr std::size_t extent(int axis) const noexcept { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  constexpr std::size_t stride(int axis) const noexcept { return axis == 0 ? 1 : axis == 1 ? nx : nx * ny; }

  friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.nx) + "," + std::to_string(d.ny) + "," + std::to_string(d.nz) + ")";
}

inline void require_valid(const Dims& d, const char* what) {
  if (d.nx == 0 || d.ny == 0 || d.nz == 0) {
    fail(ErrorCode::InvalidArgument, std::string(what) + " dims must be positive, got " + to_string(d));
  }
}

/// Millimeters per voxel along x, y, z.
struct Spacing {
  double dx = 1.0, dy = 1.0, dz = 1.0;

  constexpr double axis(int a) const noexcept { return a == 0 ? dx : a == 1 ? dy : dz; }
  constexpr double voxel_volume() const noexcept { return dx * dy * dz; }

  friend constexpr bool operator==(const Spacing&, const Spacing&) = default;
};

inline Spacing make_spacing(double dx, double dy, double dz) {
  for (double v : {dx, dy, dz}) {
    if (!(std::isfinite(v) && v > 0.0)) {
      fail(ErrorCode::InvalidArgument, "spacing components must be finite and > 0");
    }
  }
  return Spacing{dx, dy, dz};
}

/// A 3D scalar intensity grid. Immutable once constructed.
class Volume {
 public:
  Volume() = default;

  Volume(Dims dims, Spacing spacing, std::vector<double> data, std::string id = {})
      : dims_(dims), spacing_(spacing), data_(std::move(data)), id_(std::move(id)) {
    require_valid(dims_, "volume");
    make_spacing(spacing_.dx, spacing_.dy, spacing_.dz);
    if (data_.size() != dims_.count()) {
      fail(ErrorCode::DimensionMismatch, "volume data length " + std::to_string(data_.size()) +
                                             " != nx*ny*nz " + std::to_string(dims_.count()));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) fail(ErrorCode::NonFiniteData, "volume '" + id_ + "' contains NaN/Inf");
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  const std::string& id() const noexcept { return id_; }
  std::span<const double> data() const noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double at(std::size_t x, std::size_t y, std::size_t z) const noexcept { return data_[dims_.index(x, y, z)]; }

  double min() const noexcept { return *std::min_element(data_.begin(), data_.end()); }
  double max() const noexcept { return *std::max_element(data_.begin(), data_.end()); }

  /// Same geometry and id, new samples.
  Volume with_data(std::vector<double> data) const { return Volume(dims_, spacing_, std::move(data), id_); }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<double> data_;
  std::string id_;
};

struct NormalizedVolume {
  Volume volume;
  double original_min = 0.0;
  double original_max = 1.0;
};

/// Affine map onto [0,1]. A constant volume maps to zeros and records (min, min+1).
inline NormalizedVolume normalize_intensity(const Volume& v) {
  const double lo = v.min();
  double hi = v.max();
  std::vector<double> out(v.size(), 0.0);
  if (hi > lo) {
    const double range = hi - lo;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp((v[i] - lo) / range, 0.0, 1.0);
  } else {
    hi = lo + 1.0;
  }
  return {v.with_data(std::move(out)), lo, hi};
}

inline Volume denormalize_intensity(const NormalizedVolume& n) {
  const double range = n.original_max - n.original_min;
  std::vector<double> out(n.volume.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.volume[i] * range + n.original_min;
  return n.volume.with_data(std::move(out));
}

using Label = std::uint8_t;
inline constexpr int kMaxClasses = 256;

inline void require_valid_classes(int num_classes) {
  if (num_classes < 2 || num_classes > kMaxClasses) {
    fail(ErrorCode::InvalidArgument, "num_classes must be in [2, 256], got " + std::to_string(num_classes));
  }
}

/// Per-voxel class assignment; class 0 is background.
class LabelMask {
 public:
  LabelMask() = default;

  LabelMask(Dims dims, int num_classes, std::vector<Label> labels)
      : dims_(dims), num_classes_(num_classes), labels_(std::move(labels)) {
    require_valid(dims_, "mask");
    require_valid_classes(num_classes_);
    if (labels_.size() != dims_.count()) {
      fail(ErrorCode::DimensionMismatch, "mask labels length " + std::to_string(labels_.size()) +
                                             " != nx*ny*nz " + std::to_string(dims_.count()));
    }
    for (Label l : labels_) {
      if (static_cast<int>(l) >= num_classes_) {
        fail(ErrorCode::InvalidArgument, "label " + std::to_string(l) + " >= num_classes " +
                                             std::to_string(num_classes_));
      }
    }
  }

  static LabelMask background(Dims dims, int num_classes) {
    return LabelMask(dims, num_classes, std::vector<Label>(dims.count(), 0));
  }

  const Dims& dims() const noexcept { return dims_; }
  int num_classes() const noexcept { return num_classes_; }
  std::span<const Label> labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  Label operator[](std::size_t i) const noexcept { return labels_[i]; }
  Label at(std::size_t x, std::size_t y, std::size_t z) const noexcept { return labels_[dims_.index(x, y, z)]; }

  std::size_t foreground_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(labels_.begin(), labels_.end(), [](Label l) { return l != 0; }));
  }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  Dims dims_;
  int num_classes_ = 2;
  std::vector<Label> labels_;
};

inline constexpr double kProbabilityTolerance = 1e-3;

/// Per-voxel categorical distribution. Storage is voxel-major: the C class
/// probabilities of a voxel are contiguous. Sample storage is shared between
/// copies, which is safe because the type is immutable.
class ProbabilityMap {
 public:
  ProbabilityMap() = default;

  /// Validates against kProbabilityTolerance, then clamps into [0,1] and
  /// renormalizes every voxel to sum to one.
  ProbabilityMap(Dims dims, int num_classes, std::vector<double> probs, std::string source_tag = {})
      : dims_(dims), num_classes_(num_classes), source_tag_(std::move(source_tag)) {
    require_valid(dims_, "probability map");
    require_valid_classes(num_classes_);
    const std::size_t c = static_cast<std::size_t>(num_classes_);
    if (probs.size() != dims_.count() * c) {
      fail(ErrorCode::DimensionMismatch, "probability map length " + std::to_string(probs.size()) +
                                             " != voxels*classes " + std::to_string(dims_.count() * c));
    }
    for (std::size_t v = 0; v < dims_.count(); ++v) {
      double* p = probs.data() + v * c;
      double sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        if (!std::isfinite(p[k]) || p[k] < -kProbabilityTolerance || p[k] > 1.0 + kProbabilityTolerance) {
          fail(ErrorCode::NotProbabilistic, "voxel " + std::to_string(v) + " class " + std::to_string(k) +
                                                " probability out of [0,1]");
        }
        p[k] = std::clamp(p[k], 0.0, 1.0);
        sum += p[k];
      }
      if (std::abs(sum - 1.0) > kProbabilityTolerance) {
        fail(ErrorCode::NotProbabilistic, "voxel " + std::to_string(v) + " probabilities sum to " +
                                              std::to_string(sum));
      }
      if (sum != 1.0) {
        for (std::size_t k = 0; k < c; ++k) p[k] /= sum;
      }
    }
    probs_ = std::make_shared<const std::vector<double>>(std::move(probs));
  }

  /// Softened one-hot: the labelled class gets `confidence`, the others share the rest.
  static ProbabilityMap from_labels(const LabelMask& mask, double confidence, std::string source_tag = {}) {
    const int c = mask.num_classes();
    const double rest = (1.0 - confidence) / static_cast<double>(c - 1);
    std::vector<double> probs(mask.size() * static_cast<std::size_t>(c), rest);
    for (std::size_t v = 0; v < mask.size(); ++v) probs[v * c + mask[v]] = confidence;
    return ProbabilityMap(mask.dims(), c, std::move(probs), std::move(source_tag));
  }

  const Dims& dims() const noexcept { return dims_; }
  int num_classes() const noexcept { return num_classes_; }
  const std::string& source_tag() const noexcept { return source_tag_; }
  std::size_t voxel_count() const noexcept { return dims_.count(); }

  std::span<const double> probs() const noexcept {
    return probs_ ? std::span<const double>(*probs_) : std::span<const double>();
  }
  std::span<const double> voxel(std::size_t v) const noexcept {
    const std::size_t c = static_cast<std::size_t>(num_classes_);
    return probs().subspan(v * c, c);
  }
  double at(std::size_t v, int cls) const noexcept { return (*probs_)[v * num_classes_ + cls]; }

  ProbabilityMap with_tag(std::string tag) const {
    ProbabilityMap copy = *this;
    copy.source_tag_ = std::move(tag);
    return copy;
  }

  /// Per-voxel argmax, ties toward the lower class index.
  LabelMask argmax() const {
    std::vector<Label> labels(voxel_count());
    for (std::size_t v = 0; v < labels.size(); ++v) {
      auto p = voxel(v);
      labels[v] = static_cast<Label>(std::max_element(p.begin(), p.end()) - p.begin());
    }
    return LabelMask(dims_, num_classes_, std::move(labels));
  }

  friend bool operator==(const ProbabilityMap& a, const ProbabilityMap& b) {
    return a.dims_ == b.dims_ && a.num_classes_ == b.num_classes_ && a.source_tag_ == b.source_tag_ &&
           std::ranges::equal(a.probs(), b.probs());
  }

 private:
  Dims dims_;
  int num_classes_ = 2;
  std::shared_ptr<const std::vector<double>> probs_;
  std::string source_tag_;
};

enum class AugmentationKind { Identity, GaussianBlur, GaussianNoise, GammaCorrection, ContrastEnhancement };

/// One member of the test-time transform set. Only the parameters of `kind`
/// are meaningful; the rest keep their defaults.
struct AugmentationSpec {
  AugmentationKind kind = AugmentationKind::Identity;
  std::string name;
  double sigma = 1.0;  // blur: voxels; noise: normalized intensity units
  double gamma = 0.8;
  double alpha = 1.3;
  double beta = 0.0;
  int slice_axis = 2;       // blur runs in-plane on slices perpendicular to this axis
  bool volumetric = false;  // blur along all three axes instead

  static AugmentationSpec identity() { return {AugmentationKind::Identity, "identity"}; }
  static AugmentationSpec blur(double sigma = 1.0) {
    AugmentationSpec s{AugmentationKind::GaussianBlur, "gaussian_blur"};
    s.sigma = sigma;
    return s;
  }
  static AugmentationSpec noise(double sigma = 0.05) {
    AugmentationSpec s{AugmentationKind::GaussianNoise, "gaussian_noise"};
    s.sigma = sigma;
    return s;
  }
  static AugmentationSpec gamma_correction(double gamma = 0.8) {
    AugmentationSpec s{AugmentationKind::GammaCorrection, "gamma_correction"};
    s.gamma = gamma;
    return s;
  }
  static AugmentationSpec contrast(double alpha = 1.3, double beta = 0.0) {
    AugmentationSpec s{AugmentationKind::ContrastEnhancement, "contrast_enhancement"};
    s.alpha = alpha;
    s.beta = beta;
    return s;
  }

  friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

/// Blur, noise, gamma, contrast with the default magnitudes.
inline std::vector<AugmentationSpec> default_augmentations() {
  return {AugmentationSpec::gamma_correction(), AugmentationSpec::contrast(), AugmentationSpec::blur(),
          AugmentationSpec::noise()};
}

inline void validate(const AugmentationSpec& s) {
  switch (s.kind) {
    case AugmentationKind::Identity:
      break;
    case AugmentationKind::GaussianBlur:
      if (!(std::isfinite(s.sigma) && s.sigma > 0.0)) fail(ErrorCode::InvalidSigma, "blur sigma must be > 0");
      if (s.slice_axis < 0 || s.slice_axis > 2) fail(ErrorCode::InvalidArgument, "slice_axis must be 0, 1 or 2");
      break;
    case AugmentationKind::GaussianNoise:
      if (!(std::isfinite(s.sigma) && s.sigma >= 0.0)) fail(ErrorCode::InvalidSigma, "noise sigma must be >= 0");
      break;
    case AugmentationKind::GammaCorrection:
      if (!(std::isfinite(s.gamma) && s.gamma > 0.0)) fail(ErrorCode::InvalidGamma, "gamma must be > 0");
      break;
    case AugmentationKind::ContrastEnhancement:
      if (!(std::isfinite(s.alpha) && s.alpha > 0.0)) fail(ErrorCode::InvalidAlpha, "alpha must be > 0");
      if (!std::isfinite(s.beta)) fail(ErrorCode::InvalidArgument, "beta must be finite");
      break;
  }
}

enum class VotingMode { Majority, ConfidenceWeighted, ThresholdWeighted };

inline constexpr double kDefaultTau = 0.6;
inline constexpr std::uint64_t kDefaultSeed = 2024;

inline void validate_tau(double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) fail(ErrorCode::InvalidTau, "tau must lie in (0,1], got " + std::to_string(tau));
}

}  // namespace segtta

#endif  // SEGTTA_TYPES_HPP
