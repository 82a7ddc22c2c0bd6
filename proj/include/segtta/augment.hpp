#ifndef SEGTTA_AUGMENT_HPP
#define SEGTTA_AUGMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "segtta/error.hpp"
#include "segtta/rng.hpp"
#include "segtta/types.hpp"

namespace segtta {

/// Sampled Gaussian truncated at radius ceil(3 sigma) and renormalized to unit mass.
class GaussianKernel1D {
 public:
  explicit GaussianKernel1D(double sigma) : sigma_(sigma) {
    if (!(std::isfinite(sigma) && sigma > 0.0)) fail(ErrorCode::InvalidSigma, "blur sigma must be finite and > 0");
    radius_ = static_cast<int>(std::ceil(3.0 * sigma));
    weights_.resize(2 * static_cast<std::size_t>(radius_) + 1);
    const double denom = 2.0 * sigma * sigma;
    double sum = 0.0;
    for (int i = -radius_; i <= radius_; ++i) {
      const double w = std::exp(-static_cast<double>(i) * i / denom);
      weights_[i + radius_] = w;
      sum += w;
    }
    for (double& w : weights_) w /= sum;
  }

  double sigma() const noexcept { return sigma_; }
  int radius() const noexcept { return radius_; }
  std::span<const double> weights() const noexcept { return weights_; }
  double operator()(int offset) const noexcept { return weights_[offset + radius_]; }

 private:
  double sigma_;
  int radius_ = 0;
  std::vector<double> weights_;
};

namespace detail {

/// Convolves every line along `axis` with edge replication.
inline void convolve_axis(std::vector<double>& data, const Dims& dims, int axis, const GaussianKernel1D& kernel) {
  const std::size_t n = dims.extent(axis);
  if (n == 1) return;  // replicated edges make a single sample a fixed point
  const std::size_t stride = dims.stride(axis);
  const int r = kernel.radius();
  const long last = static_cast<long>(n) - 1;
  std::vector<double> line(n);

  const auto ext = dims.extents();
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  for (std::size_t i2 = 0; i2 < ext[a2]; ++i2) {
    for (std::size_t i1 = 0; i1 < ext[a1]; ++i1) {
      const std::size_t base = i1 * dims.stride(a1) + i2 * dims.stride(a2);
      for (std::size_t k = 0; k < n; ++k) line[k] = data[base + k * stride];
      for (long k = 0; k <= last; ++k) {
        double acc = 0.0;
        for (int j = -r; j <= r; ++j) acc += kernel(j) * line[std::clamp(k - j, 0L, last)];
        data[base + static_cast<std::size_t>(k) * stride] = acc;
      }
    }
  }
}

inline double clamp_unit(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace detail

/// Separable Gaussian smoothing with replicated borders. With a slice axis the
/// blur runs in-plane on each slice perpendicular to it; with std::nullopt it
/// runs along all three axes.
inline Volume gaussian_blur(const Volume& v, double sigma, std::optional<int> slice_axis = 2) {
  const GaussianKernel1D kernel(sigma);
  if (slice_axis && (*slice_axis < 0 || *slice_axis > 2)) {
    fail(ErrorCode::InvalidArgument, "slice_axis must be 0, 1 or 2");
  }
  std::vector<double> data(v.data().begin(), v.data().end());
  for (int axis = 0; axis < 3; ++axis) {
    if (slice_axis && axis == *slice_axis) continue;
    detail::convolve_axis(data, v.dims(), axis, kernel);
  }
  // Rounding can push a convex combination an ulp past the input range.
  const double lo = v.min(), hi = v.max();
  for (double& x : data) x = std::clamp(x, lo, hi);
  return v.with_data(std::move(data));
}

/// I + N(0, sigma^2) per voxel, clipped to [0,1]. Expects an intensity-normalized volume.
inline Volume gaussian_noise(const Volume& v, double sigma, SeededRng& rng) {
  if (!(std::isfinite(sigma) && sigma >= 0.0)) fail(ErrorCode::InvalidSigma, "noise sigma must be finite and >= 0");
  if (v.min() < 0.0 || v.max() > 1.0) {
    fail(ErrorCode::InvalidArgument, "gaussian_noise expects intensities normalized to [0,1]");
  }
  if (sigma == 0.0) return v;
  std::vector<double> data(v.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = detail::clamp_unit(v[i] + sigma * rng.normal());
  return v.with_data(std::move(data));
}

/// (I / I_max)^gamma * I_max with I_max the volume maximum.
inline Volume gamma_correction(const Volume& v, double gamma) {
  if (!(std::isfinite(gamma) && gamma > 0.0)) fail(ErrorCode::InvalidGamma, "gamma must be finite and > 0");
  if (v.min() < 0.0) fail(ErrorCode::InvalidArgument, "gamma_correction expects nonnegative intensities");
  const double peak = v.max();
  if (gamma == 1.0 || peak == 0.0) return v;
  std::vector<double> data(v.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = v[i] == peak ? peak : std::pow(v[i] / peak, gamma) * peak;
  }
  return v.with_data(std::move(data));
}

/// alpha * I + beta, clipped to the input's valid range [min(0, I_min), I_max]
/// (or to [.., range_max] when given).
inline Volume contrast_enhancement(const Volume& v, double alpha, double beta,
                                   std::optional<double> range_max = std::nullopt) {
  if (!(std::isfinite(alpha) && alpha > 0.0)) fail(ErrorCode::InvalidAlpha, "alpha must be finite and > 0");
  if (!std::isfinite(beta)) fail(ErrorCode::InvalidArgument, "beta must be finite");
  const double lo = std::min(0.0, v.min());
  const double hi = range_max.value_or(v.max());
  std::vector<double> data(v.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::clamp(alpha * v[i] + beta, lo, std::max(lo, hi));
  return v.with_data(std::move(data));
}

/// Dispatches one transform of the test-time set.
inline Volume apply(const AugmentationSpec& spec, const Volume& v, SeededRng& rng) {
  validate(spec);
  switch (spec.kind) {
    case AugmentationKind::Identity:
      return v;
    case AugmentationKind::GaussianBlur:
      return gaussian_blur(v, spec.sigma, spec.volumetric ? std::nullopt : std::optional<int>(spec.slice_axis));
    case AugmentationKind::GaussianNoise:
      return gaussian_noise(v, spec.sigma, rng);
    case AugmentationKind::GammaCorrection:
      return gamma_correction(v, spec.gamma);
    case AugmentationKind::ContrastEnhancement:
      return contrast_enhancement(v, spec.alpha, spec.beta);
  }
  return v;
}

}  // namespace segtta

#endif  // SEGTTA_AUGMENT_HPP
