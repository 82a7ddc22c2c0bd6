#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "segtta/segtta.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("segtta_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline segtta::LabelMask random_mask(std::mt19937_64& gen, const segtta::Dims& d, int classes, double fg = 0.4) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(1, classes - 1);
  std::vector<segtta::Label> labels(d.count());
  for (auto& l : labels) l = u(gen) < fg ? static_cast<segtta::Label>(cls(gen)) : 0;
  return segtta::LabelMask(d, classes, std::move(labels));
}

/// Union of random axis-aligned ellipsoids, labelled with random foreground classes.
inline segtta::LabelMask random_blobs(std::mt19937_64& gen, const segtta::Dims& d, int classes, int blobs) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(1, classes - 1);
  std::vector<segtta::Label> labels(d.count(), 0);
  for (int b = 0; b < blobs; ++b) {
    const double cx = u(gen) * d.nx, cy = u(gen) * d.ny, cz = u(gen) * d.nz;
    const double rx = 1.0 + u(gen) * d.nx / 4.0, ry = 1.0 + u(gen) * d.ny / 4.0, rz = 1.0 + u(gen) * d.nz / 4.0;
    const auto c = static_cast<segtta::Label>(cls(gen));
    for (std::size_t z = 0; z < d.nz; ++z)
      for (std::size_t y = 0; y < d.ny; ++y)
        for (std::size_t x = 0; x < d.nx; ++x) {
          const double a = (x - cx) / rx, bb = (y - cy) / ry, cc = (z - cz) / rz;
          if (a * a + bb * bb + cc * cc <= 1.0) labels[d.index(x, y, z)] = c;
        }
  }
  return segtta::LabelMask(d, classes, std::move(labels));
}

inline std::vector<int> as_ints(const segtta::LabelMask& m) { return {m.labels().begin(), m.labels().end()}; }

/// Random integer-grid fusion instance and its ProbabilityMap twins.
struct FusionCase {
  oracle::IntMaps ints;
  std::vector<segtta::ProbabilityMap> maps;
  segtta::Dims dims;
};

inline FusionCase random_fusion_case(std::mt19937_64& gen, int max_maps = 4, int max_classes = 3,
                                     std::size_t max_voxels = 64) {
  FusionCase fc;
  std::uniform_int_distribution<int> nmaps(1, max_maps), ncls(2, max_classes);
  std::uniform_int_distribution<std::size_t> nvox(1, max_voxels);
  std::uniform_int_distribution<int> coin(0, 1);
  const int n = nmaps(gen);
  const int c = ncls(gen);
  const std::size_t v = nvox(gen);
  fc.dims = {v, 1, 1};
  fc.ints.denom = coin(gen) ? 8 : 16;
  fc.ints.classes = c;
  fc.ints.voxels = v;
  for (int k = 0; k < n; ++k) {
    std::vector<std::vector<int>> map(v, std::vector<int>(c, 0));
    std::vector<double> probs(v * static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < v; ++i) {
      // Random composition of denom into c parts.
      int left = fc.ints.denom;
      for (int j = 0; j < c - 1; ++j) {
        std::uniform_int_distribution<int> part(0, left);
        map[i][j] = part(gen);
        left -= map[i][j];
      }
      map[i][c - 1] = left;
      std::shuffle(map[i].begin(), map[i].end(), gen);
      for (int j = 0; j < c; ++j) probs[i * c + j] = static_cast<double>(map[i][j]) / fc.ints.denom;
    }
    fc.ints.num.push_back(std::move(map));
    fc.maps.emplace_back(fc.dims, c, std::move(probs), "m" + std::to_string(k));
  }
  return fc;
}

/// Writes `cases` phantoms (float32 image, uint8 label) and returns their manifest.
inline segtta::DatasetManifest write_phantoms(const std::filesystem::path& dir, int cases, const segtta::Dims& dims,
                                              int classes, std::uint64_t seed = 7,
                                              const segtta::Spacing& spacing = {1, 1, 2}) {
  segtta::DatasetManifest m;
  m.name = "phantoms";
  for (int i = 0; i < cases; ++i) {
    const std::string id = "case" + std::to_string(i);
    const auto p = segtta::make_phantom(dims, classes, seed, id, spacing);
    segtta::ManifestEntry e;
    e.id = id;
    e.image = dir / (id + "_image.nii.gz");
    e.label = dir / (id + "_label.nii.gz");
    e.classes = classes;
    segtta::nifti::write_volume(p.image, segtta::nifti::Datatype::Float32, e.image);
    segtta::nifti::write_label_mask(p.labels, spacing, *e.label);
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline std::string fake_model() { return SEGTTA_FAKE_MODEL; }
inline std::filesystem::path golden_dir() { return SEGTTA_GOLDEN_DIR; }
inline std::string cli() { return SEGTTA_CLI; }

}  // namespace testing_support
