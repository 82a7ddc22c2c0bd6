#ifndef SEGTTA_PHANTOM_HPP
#define SEGTTA_PHANTOM_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "segtta/rng.hpp"
#include "segtta/types.hpp"

namespace segtta {

struct Phantom {
  Volume image;
  LabelMask labels;
};

/// Procedural test case: one random ellipsoid per foreground class (later
/// classes paint over earlier ones) with class-dependent intensity plus mild
/// Gaussian texture.
inline Phantom make_phantom(const Dims& dims, int num_classes, std::uint64_t seed, const std::string& id,
                            const Spacing& spacing = {}) {
  require_valid(dims, "phantom");
  require_valid_classes(num_classes);
  SeededRng rng(seed, {id, "phantom"});
  std::vector<Label> labels(dims.count(), 0);
  const auto ext = dims.extents();
  for (int cls = 1; cls < num_classes; ++cls) {
    std::array<double, 3> center{}, radius{};
    for (int a = 0; a < 3; ++a) {
      const double n = static_cast<double>(ext[a]);
      radius[a] = std::max(0.75, n * (0.12 + 0.14 * rng.uniform()));
      const double margin = std::min(radius[a], n / 2.0);
      center[a] = margin + (n - 2.0 * margin) * rng.uniform() - 0.5;
    }
    for (std::size_t z = 0; z < dims.nz; ++z) {
      for (std::size_t y = 0; y < dims.ny; ++y) {
        for (std::size_t x = 0; x < dims.nx; ++x) {
          const double u = (static_cast<double>(x) - center[0]) / radius[0];
          const double v = (static_cast<double>(y) - center[1]) / radius[1];
          const double w = (static_cast<double>(z) - center[2]) / radius[2];
          if (u * u + v * v + w * w <= 1.0) labels[dims.index(x, y, z)] = static_cast<Label>(cls);
        }
      }
    }
  }
  std::vector<double> image(dims.count());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double base = 0.15 + 0.6 * static_cast<double>(labels[i]) / static_cast<double>(num_classes - 1);
    image[i] = std::max(0.0, base + 0.05 * rng.normal());
  }
  return {Volume(dims, spacing, std::move(image), id), LabelMask(dims, num_classes, std::move(labels))};
}

}  // namespace segtta

#endif  // SEGTTA_PHANTOM_HPP
