#ifndef SEGTTA_BACKEND_HPP
#define SEGTTA_BACKEND_HPP

#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "segtta/error.hpp"
#include "segtta/hash.hpp"
#include "segtta/nifti.hpp"
#include "segtta/process.hpp"
#include "segtta/rng.hpp"
#include "segtta/types.hpp"

namespace segtta {

enum class BackendKind { Oracle, NoisyOracle, Constant, ExternalProcess };

/// A segmentation model as the pipeline sees it. Synthetic kinds derive their
/// output from the case's ground truth; ExternalProcess shells out to a
/// command that exchanges NIfTI files.
struct BackendDescriptor {
  BackendKind kind = BackendKind::Oracle;
  std::string name;
  double confidence = 1.0;  // probability given to the predicted class
  int jitter = 0;           // noisy oracle: boundary shift in voxels
  double flip = 0.0;        // noisy oracle: per-voxel label flip probability
  int constant_class = 0;
  std::string command;  // may contain {input}, {output}, {classes}
  double timeout_seconds = 600.0;

  friend bool operator==(const BackendDescriptor&, const BackendDescriptor&) = default;
};

inline void validate(const BackendDescriptor& b, int num_classes) {
  const std::string who = "backend '" + b.name + "': ";
  switch (b.kind) {
    case BackendKind::NoisyOracle:
      if (!(b.flip >= 0.0 && b.flip <= 1.0)) fail(ErrorCode::InvalidConfig, who + "flip probability must be in [0,1]");
      if (b.jitter < 0) fail(ErrorCode::InvalidConfig, who + "jitter must be >= 0");
      [[fallthrough]];
    case BackendKind::Oracle:
    case BackendKind::Constant:
      if (!(b.confidence > 1.0 / num_classes && b.confidence <= 1.0)) {
        fail(ErrorCode::InvalidConfig, who + "confidence must be in (1/C, 1]");
      }
      if (b.kind == BackendKind::Constant && (b.constant_class < 0 || b.constant_class >= num_classes)) {
        fail(ErrorCode::InvalidConfig, who + "constant class out of range");
      }
      break;
    case BackendKind::ExternalProcess:
      if (!(b.timeout_seconds > 0.0)) fail(ErrorCode::InvalidConfig, who + "timeout must be > 0");
      if (b.command.empty()) fail(ErrorCode::InvalidConfig, who + "command template is empty");
      break;
  }
}

struct PredictContext {
  const LabelMask* ground_truth = nullptr;
  std::string view;  // "baseline" or the augmentation name; goes into source_tag
  /// Receives captured child output for ExternalProcess backends.
  std::function<void(const std::string&)> log;
};

/// Directory used for external-backend file exchange: $SEGTTA_TMPDIR, or a
/// "segtta" folder under the system temp directory.
inline std::filesystem::path exchange_directory() {
  std::filesystem::path dir;
  if (const char* env = std::getenv("SEGTTA_TMPDIR"); env && *env) {
    dir = env;
  } else {
    dir = std::filesystem::temp_directory_path() / "segtta";
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create exchange directory '" + dir.string() + "': " + ec.message());
  return dir;
}

namespace detail {

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

inline const LabelMask& require_ground_truth(const PredictContext& ctx, const Volume& v, int num_classes) {
  if (!ctx.ground_truth) fail(ErrorCode::GroundTruthMissing, "oracle backends need the case's ground truth");
  if (ctx.ground_truth->dims() != v.dims()) {
    fail(ErrorCode::DimsMismatch, "ground truth " + to_string(ctx.ground_truth->dims()) + " vs volume " +
                                      to_string(v.dims()));
  }
  if (ctx.ground_truth->num_classes() != num_classes) {
    fail(ErrorCode::DimsMismatch, "ground truth has " + std::to_string(ctx.ground_truth->num_classes()) +
                                      " classes, expected " + std::to_string(num_classes));
  }
  return *ctx.ground_truth;
}

/// One 6-neighborhood morphological step on the foreground. Dilation gives a
/// background voxel the lowest foreground label among its neighbors; erosion
/// clears foreground voxels that touch a different label.
inline std::vector<Label> shift_boundary(const std::vector<Label>& in, const Dims& d, bool dilate) {
  std::vector<Label> out = in;
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const Label self = in[i];
        if (dilate == (self != 0)) continue;
        Label best = 0;
        bool touches = false;
        const auto visit = [&](std::size_t j) {
          const Label n = in[j];
          if (dilate) {
            if (n != 0 && (best == 0 || n < best)) best = n;
          } else if (n != self) {
            touches = true;
          }
        };
        if (x > 0) visit(i - 1);
        if (x + 1 < d.nx) visit(i + 1);
        if (y > 0) visit(i - d.nx);
        if (y + 1 < d.ny) visit(i + d.nx);
        if (z > 0) visit(i - d.nx * d.ny);
        if (z + 1 < d.nz) visit(i + d.nx * d.ny);
        if (dilate) {
          out[i] = best;
        } else if (touches) {
          out[i] = 0;
        }
      }
    }
  }
  return out;
}

inline ProbabilityMap predict_noisy_oracle(const BackendDescriptor& b, const LabelMask& gt, SeededRng& rng,
                                           std::string tag) {
  std::vector<Label> labels(gt.labels().begin(), gt.labels().end());
  if (b.jitter > 0) {
    const bool dilate = rng.bernoulli(0.5);
    for (int step = 0; step < b.jitter; ++step) labels = shift_boundary(labels, gt.dims(), dilate);
  }
  const int c = gt.num_classes();
  if (b.flip > 0.0) {
    for (Label& l : labels) {
      if (rng.bernoulli(b.flip)) l = static_cast<Label>((l + 1 + rng.below(static_cast<std::uint64_t>(c - 1))) % c);
    }
  }
  return ProbabilityMap::from_labels(LabelMask(gt.dims(), c, std::move(labels)), b.confidence, std::move(tag));
}

inline std::string sanitize(std::string s) {
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return s;
}

inline ProbabilityMap predict_external(const BackendDescriptor& b, const Volume& v, int num_classes,
                                       const PredictContext& ctx, std::string tag) {
  static std::atomic<std::uint64_t> counter{0};
  const auto dir = exchange_directory();
  const std::string stem = sanitize(v.id()) + "_" + sanitize(b.name) + "_" + sanitize(ctx.view) + "_" +
                           std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1));
  const auto input = dir / (stem + "_in.nii");
  const auto output = dir / (stem + "_out.nii");
  const auto capture = dir / (stem + ".log");
  struct Cleanup {
    std::array<std::filesystem::path, 3> paths;
    ~Cleanup() {
      std::error_code ec;
      for (const auto& p : paths) std::filesystem::remove(p, ec);
    }
  } cleanup{{input, output, capture}};

  nifti::write_volume(v, nifti::Datatype::Float32, input);
  std::string cmd = replace_all(b.command, "{input}", input.string());
  cmd = replace_all(cmd, "{output}", output.string());
  cmd = replace_all(cmd, "{classes}", std::to_string(num_classes));

  const ProcessResult run = run_command(cmd, std::chrono::duration<double>(b.timeout_seconds), capture);
  if (ctx.log && !run.output.empty()) ctx.log(run.output);
  const std::string who = "backend '" + b.name + "' on '" + v.id() + "': ";
  if (run.timed_out) fail(ErrorCode::ProcessFailure, who + "timed out after " + std::to_string(b.timeout_seconds) + " s");
  if (run.exit_code != 0) fail(ErrorCode::ProcessFailure, who + "exit code " + std::to_string(run.exit_code));
  if (!std::filesystem::exists(output)) fail(ErrorCode::ProcessFailure, who + "no output file produced");

  ProbabilityMap map;
  try {
    map = nifti::decode_probability_map(nifti::read_file(output), std::move(tag));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotProbabilistic) throw;
    fail(ErrorCode::ProcessFailure, who + "malformed output: " + e.what());
  }
  if (map.dims() != v.dims()) {
    fail(ErrorCode::DimsMismatch, who + "output dims " + to_string(map.dims()) + " vs input " + to_string(v.dims()));
  }
  if (map.num_classes() != num_classes) {
    fail(ErrorCode::ProcessFailure, who + "malformed output: " + std::to_string(map.num_classes()) +
                                        " classes, expected " + std::to_string(num_classes));
  }
  return map;
}

}  // namespace detail

/// Runs one backend on one view. The returned map is tagged "<backend>|<view>".
inline ProbabilityMap predict(const BackendDescriptor& b, const Volume& v, int num_classes, SeededRng& rng,
                              const PredictContext& ctx = {}) {
  require_valid_classes(num_classes);
  validate(b, num_classes);
  std::string tag = b.name + "|" + (ctx.view.empty() ? std::string("baseline") : ctx.view);
  switch (b.kind) {
    case BackendKind::Oracle:
      return ProbabilityMap::from_labels(detail::require_ground_truth(ctx, v, num_classes), b.confidence,
                                         std::move(tag));
    case BackendKind::NoisyOracle:
      return detail::predict_noisy_oracle(b, detail::require_ground_truth(ctx, v, num_classes), rng, std::move(tag));
    case BackendKind::Constant:
      return ProbabilityMap::from_labels(
          LabelMask(v.dims(), num_classes, std::vector<Label>(v.size(), static_cast<Label>(b.constant_class))),
          b.confidence, std::move(tag));
    case BackendKind::ExternalProcess:
      return detail::predict_external(b, v, num_classes, ctx, std::move(tag));
  }
  fail(ErrorCode::InvalidConfig, "unknown backend kind");
}

}  // namespace segtta

#endif  // SEGTTA_BACKEND_HPP
