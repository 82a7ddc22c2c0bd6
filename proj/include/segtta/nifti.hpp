#ifndef SEGTTA_NIFTI_HPP
#define SEGTTA_NIFTI_HPP

// NIfTI-1 single-file (.nii / .nii.gz) reader and writer for volumes, label
// masks and 4D probability maps. Header fields are decoded at their standard
// byte offsets, so either byte order is handled without struct punning.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "segtta/error.hpp"
#include "segtta/types.hpp"

namespace segtta::nifti {

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kCanonicalVoxOffset = 352;

enum class Datatype : std::int16_t { UInt8 = 2, Int16 = 4, Float32 = 16, Float64 = 64 };

inline int bits_per_voxel(Datatype t) {
  switch (t) {
    case Datatype::UInt8: return 8;
    case Datatype::Int16: return 16;
    case Datatype::Float32: return 32;
    case Datatype::Float64: return 64;
  }
  return 0;
}

inline bool is_supported_datatype(std::int16_t code) {
  return code == 2 || code == 4 || code == 16 || code == 64;
}

/// The header fields this library consumes or produces.
struct Header {
  std::int32_t sizeof_hdr = static_cast<std::int32_t>(kHeaderSize);
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = 16;
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{};
  float vox_offset = static_cast<float>(kCanonicalVoxOffset);
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::uint8_t xyzt_units = 2;  // millimeters
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<float, 4> srow_x{}, srow_y{}, srow_z{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};
  bool big_endian = false;  // byte order of the encoded form

  std::size_t voxel_count() const {
    std::size_t n = 1;
    for (int i = 1; i <= dim[0]; ++i) n *= static_cast<std::size_t>(dim[i]);
    return n;
  }
};

// Byte offsets into the 348-byte header.
namespace offset {
inline constexpr std::size_t sizeof_hdr = 0;
inline constexpr std::size_t dim = 40;
inline constexpr std::size_t datatype = 70;
inline constexpr std::size_t bitpix = 72;
inline constexpr std::size_t pixdim = 76;
inline constexpr std::size_t vox_offset = 108;
inline constexpr std::size_t scl_slope = 112;
inline constexpr std::size_t scl_inter = 116;
inline constexpr std::size_t xyzt_units = 123;
inline constexpr std::size_t qform_code = 252;
inline constexpr std::size_t sform_code = 254;
inline constexpr std::size_t srow_x = 280;
inline constexpr std::size_t srow_y = 296;
inline constexpr std::size_t srow_z = 312;
inline constexpr std::size_t magic = 344;
}  // namespace offset

namespace detail {

inline bool host_is_big_endian() { return std::endian::native == std::endian::big; }

template <typename T>
T load(std::span<const std::byte> bytes, std::size_t at, bool swap) {
  std::array<std::byte, sizeof(T)> raw;
  std::memcpy(raw.data(), bytes.data() + at, sizeof(T));
  if (swap) std::reverse(raw.begin(), raw.end());
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

template <typename T>
void store(std::span<std::byte> bytes, std::size_t at, T value, bool swap) {
  std::array<std::byte, sizeof(T)> raw;
  std::memcpy(raw.data(), &value, sizeof(T));
  if (swap) std::reverse(raw.begin(), raw.end());
  std::memcpy(bytes.data() + at, raw.data(), sizeof(T));
}

inline bool has_gz_suffix(const std::filesystem::path& path) { return path.extension() == ".gz"; }

}  // namespace detail

/// Decodes and validates a header. Byte order is detected from dim[0], which
/// must lie in [1,7] in the file's native order.
inline Header parse_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderSize) {
    fail(ErrorCode::CorruptHeader, "sizeof_hdr: file shorter than 348 bytes (" + std::to_string(bytes.size()) + ")");
  }
  using detail::load;
  bool swap = false;
  const auto dim0 = load<std::int16_t>(bytes, offset::dim, false);
  if (dim0 < 1 || dim0 > 7) {
    const auto swapped = load<std::int16_t>(bytes, offset::dim, true);
    if (swapped < 1 || swapped > 7) fail(ErrorCode::CorruptHeader, "dim[0]: not in [1,7] in either byte order");
    swap = true;
  }

  Header h;
  h.big_endian = detail::host_is_big_endian() != swap;
  h.sizeof_hdr = load<std::int32_t>(bytes, offset::sizeof_hdr, swap);
  if (h.sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
    fail(ErrorCode::CorruptHeader, "sizeof_hdr: expected 348, got " + std::to_string(h.sizeof_hdr));
  }
  for (int i = 0; i < 8; ++i) h.dim[i] = load<std::int16_t>(bytes, offset::dim + 2 * i, swap);
  h.datatype = load<std::int16_t>(bytes, offset::datatype, swap);
  h.bitpix = load<std::int16_t>(bytes, offset::bitpix, swap);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = load<float>(bytes, offset::pixdim + 4 * i, swap);
  h.vox_offset = load<float>(bytes, offset::vox_offset, swap);
  h.scl_slope = load<float>(bytes, offset::scl_slope, swap);
  h.scl_inter = load<float>(bytes, offset::scl_inter, swap);
  h.xyzt_units = load<std::uint8_t>(bytes, offset::xyzt_units, false);
  h.qform_code = load<std::int16_t>(bytes, offset::qform_code, swap);
  h.sform_code = load<std::int16_t>(bytes, offset::sform_code, swap);
  for (int i = 0; i < 4; ++i) {
    h.srow_x[i] = load<float>(bytes, offset::srow_x + 4 * i, swap);
    h.srow_y[i] = load<float>(bytes, offset::srow_y + 4 * i, swap);
    h.srow_z[i] = load<float>(bytes, offset::srow_z + 4 * i, swap);
  }
  std::memcpy(h.magic.data(), bytes.data() + offset::magic, 4);

  if (std::memcmp(h.magic.data(), "ni1\0", 4) == 0) {
    fail(ErrorCode::CorruptHeader, "magic: two-file 'ni1' variant is not supported");
  }
  if (std::memcmp(h.magic.data(), "n+1\0", 4) != 0) fail(ErrorCode::CorruptHeader, "magic: expected 'n+1'");
  if (h.dim[0] != 3 && h.dim[0] != 4) {
    fail(ErrorCode::CorruptHeader, "dim[0]: only 3D and 4D images are supported, got " + std::to_string(h.dim[0]));
  }
  for (int i = 1; i <= h.dim[0]; ++i) {
    if (h.dim[i] < 1) fail(ErrorCode::CorruptHeader, "dim[" + std::to_string(i) + "]: must be >= 1");
  }
  if (!is_supported_datatype(h.datatype)) {
    fail(ErrorCode::UnsupportedDatatype, "datatype: code " + std::to_string(h.datatype) + " is not supported");
  }
  if (h.bitpix != bits_per_voxel(static_cast<Datatype>(h.datatype))) {
    fail(ErrorCode::CorruptHeader, "bitpix: " + std::to_string(h.bitpix) + " does not match datatype " +
                                       std::to_string(h.datatype));
  }
  if (!(h.vox_offset >= static_cast<float>(kCanonicalVoxOffset)) || h.vox_offset != std::floor(h.vox_offset)) {
    fail(ErrorCode::CorruptHeader, "vox_offset: must be an integer >= 352");
  }
  for (int i = 1; i <= 3; ++i) {
    if (!(std::isfinite(h.pixdim[i]) && h.pixdim[i] > 0.0f)) {
      fail(ErrorCode::CorruptHeader, "pixdim[" + std::to_string(i) + "]: spacing must be finite and > 0");
    }
  }
  if (!std::isfinite(h.scl_slope) || !std::isfinite(h.scl_inter)) {
    fail(ErrorCode::CorruptHeader, "scl_slope/scl_inter: must be finite");
  }
  return h;
}

/// Encodes a header into its 352-byte on-disk prefix (header + empty extension flag).
inline std::vector<std::byte> serialize_header(const Header& h) {
  using detail::store;
  std::vector<std::byte> out(kCanonicalVoxOffset, std::byte{0});
  const bool swap = h.big_endian != detail::host_is_big_endian();
  store<std::int32_t>(out, offset::sizeof_hdr, h.sizeof_hdr, swap);
  for (int i = 0; i < 8; ++i) store<std::int16_t>(out, offset::dim + 2 * i, h.dim[i], swap);
  store<std::int16_t>(out, offset::datatype, h.datatype, swap);
  store<std::int16_t>(out, offset::bitpix, h.bitpix, swap);
  for (int i = 0; i < 8; ++i) store<float>(out, offset::pixdim + 4 * i, h.pixdim[i], swap);
  store<float>(out, offset::vox_offset, h.vox_offset, swap);
  store<float>(out, offset::scl_slope, h.scl_slope, swap);
  store<float>(out, offset::scl_inter, h.scl_inter, swap);
  store<std::uint8_t>(out, offset::xyzt_units, h.xyzt_units, false);
  store<std::int16_t>(out, offset::qform_code, h.qform_code, swap);
  store<std::int16_t>(out, offset::sform_code, h.sform_code, swap);
  for (int i = 0; i < 4; ++i) {
    store<float>(out, offset::srow_x + 4 * i, h.srow_x[i], swap);
    store<float>(out, offset::srow_y + 4 * i, h.srow_y[i], swap);
    store<float>(out, offset::srow_z + 4 * i, h.srow_z[i], swap);
  }
  std::memcpy(out.data() + offset::magic, h.magic.data(), 4);
  return out;
}

/// A decoded image: header plus samples as doubles in file order (x fastest,
/// then y, z, t), with scl_slope/scl_inter already applied.
struct Image {
  Header header;
  std::vector<double> samples;
};

inline Image decode(std::span<const std::byte> bytes) {
  Image img;
  img.header = parse_header(bytes);
  const Header& h = img.header;
  const bool swap = h.big_endian != detail::host_is_big_endian();
  const auto type = static_cast<Datatype>(h.datatype);
  const std::size_t bpv = static_cast<std::size_t>(bits_per_voxel(type) / 8);
  const std::size_t n = h.voxel_count();
  const std::size_t start = static_cast<std::size_t>(h.vox_offset);
  if (bytes.size() < start || (bytes.size() - start) / bpv < n) {
    fail(ErrorCode::DimensionMismatch, "dim: header declares " + std::to_string(n) + " voxels but data section holds " +
                                           std::to_string(bytes.size() > start ? (bytes.size() - start) / bpv : 0));
  }
  const bool scaled = h.scl_slope != 0.0f;
  const double slope = h.scl_slope, inter = h.scl_inter;
  img.samples.resize(n);
  auto data = bytes.subspan(start);
  for (std::size_t i = 0; i < n; ++i) {
    double raw = 0.0;
    switch (type) {
      case Datatype::UInt8: raw = detail::load<std::uint8_t>(data, i, false); break;
      case Datatype::Int16: raw = detail::load<std::int16_t>(data, 2 * i, swap); break;
      case Datatype::Float32: raw = detail::load<float>(data, 4 * i, swap); break;
      case Datatype::Float64: raw = detail::load<double>(data, 8 * i, swap); break;
    }
    const double value = scaled ? raw * slope + inter : raw;
    if (!std::isfinite(value)) fail(ErrorCode::NonFiniteData, "voxel " + std::to_string(i) + " is NaN/Inf");
    img.samples[i] = value;
  }
  return img;
}

struct WriteOptions {
  bool big_endian = false;
  /// Integer targets: round half to even, then clamp into the type's range.
  /// With clamping off, out-of-range values raise UnrepresentableValue.
  bool clamp = true;
};

namespace detail {

template <typename Int>
Int to_integer(double value, bool clamp) {
  const double rounded = std::nearbyint(value);
  constexpr double lo = std::numeric_limits<Int>::min();
  constexpr double hi = std::numeric_limits<Int>::max();
  if (rounded < lo || rounded > hi) {
    if (!clamp) fail(ErrorCode::UnrepresentableValue, std::to_string(value) + " is outside the integer datatype range");
    return static_cast<Int>(std::clamp(rounded, lo, hi));
  }
  return static_cast<Int>(rounded);
}

}  // namespace detail

/// Encodes samples (file order) under a canonical header built from `dims4`.
inline std::vector<std::byte> encode(std::span<const double> samples, std::array<std::size_t, 4> dims4,
                                     Spacing spacing, Datatype type, const WriteOptions& opts = {}) {
  Header h;
  const bool four_d = dims4[3] > 1;
  h.dim = {static_cast<std::int16_t>(four_d ? 4 : 3), 1, 1, 1, 1, 1, 1, 1};
  for (int i = 0; i < 4; ++i) {
    if (dims4[i] == 0 || dims4[i] > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max())) {
      fail(ErrorCode::InvalidArgument, "dim[" + std::to_string(i + 1) + "] does not fit a NIfTI-1 header");
    }
    h.dim[i + 1] = static_cast<std::int16_t>(dims4[i]);
  }
  h.datatype = static_cast<std::int16_t>(type);
  h.bitpix = static_cast<std::int16_t>(bits_per_voxel(type));
  h.pixdim = {1.0f, static_cast<float>(spacing.dx), static_cast<float>(spacing.dy), static_cast<float>(spacing.dz),
              1.0f, 1.0f, 1.0f, 1.0f};
  h.srow_x = {static_cast<float>(spacing.dx), 0, 0, 0};
  h.srow_y = {0, static_cast<float>(spacing.dy), 0, 0};
  h.srow_z = {0, 0, static_cast<float>(spacing.dz), 0};
  h.big_endian = opts.big_endian;

  std::vector<std::byte> out = serialize_header(h);
  const std::size_t bpv = static_cast<std::size_t>(bits_per_voxel(type) / 8);
  out.resize(kCanonicalVoxOffset + samples.size() * bpv);
  std::span<std::byte> data(out.data() + kCanonicalVoxOffset, samples.size() * bpv);
  const bool swap = opts.big_endian != detail::host_is_big_endian();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    switch (type) {
      case Datatype::UInt8:
        detail::store<std::uint8_t>(data, i, detail::to_integer<std::uint8_t>(samples[i], opts.clamp), false);
        break;
      case Datatype::Int16:
        detail::store<std::int16_t>(data, 2 * i, detail::to_integer<std::int16_t>(samples[i], opts.clamp), swap);
        break;
      case Datatype::Float32: detail::store<float>(data, 4 * i, static_cast<float>(samples[i]), swap); break;
      case Datatype::Float64: detail::store<double>(data, 8 * i, samples[i], swap); break;
    }
  }
  return out;
}

/// Reads a whole file; gzip streams are inflated, plain files pass through.
inline std::vector<std::byte> read_file(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  std::vector<std::byte> bytes;
  std::array<char, 1 << 16> buf;
  for (;;) {
    const int got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (got < 0) {
      int errnum = 0;
      std::string msg = gzerror(f, &errnum);
      gzclose(f);
      fail(ErrorCode::IoFailure, "read error in '" + path.string() + "': " + msg);
    }
    if (got == 0) break;
    const auto* p = reinterpret_cast<const std::byte*>(buf.data());
    bytes.insert(bytes.end(), p, p + got);
  }
  gzclose(f);
  return bytes;
}

/// Writes bytes; a ".gz" suffix selects gzip compression.
inline void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (detail::has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f) fail(ErrorCode::IoFailure, "cannot create '" + path.string() + "'");
    std::size_t done = 0;
    while (done < bytes.size()) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 20));
      if (gzwrite(f, bytes.data() + done, chunk) != static_cast<int>(chunk)) {
        gzclose(f);
        fail(ErrorCode::IoFailure, "write error in '" + path.string() + "'");
      }
      done += chunk;
    }
    if (gzclose(f) != Z_OK) fail(ErrorCode::IoFailure, "close failed for '" + path.string() + "'");
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot create '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoFailure, "write error in '" + path.string() + "'");
}

inline Spacing spacing_of(const Header& h) {
  return Spacing{static_cast<double>(h.pixdim[1]), static_cast<double>(h.pixdim[2]),
                 static_cast<double>(h.pixdim[3])};
}

inline Dims dims_of(const Header& h) {
  return Dims{static_cast<std::size_t>(h.dim[1]), static_cast<std::size_t>(h.dim[2]),
              static_cast<std::size_t>(h.dim[3])};
}

inline Volume decode_volume(std::span<const std::byte> bytes, std::string id = {}) {
  Image img = decode(bytes);
  if (img.header.dim[0] == 4 && img.header.dim[4] != 1) {
    fail(ErrorCode::DimensionMismatch, "dim[4]: expected a 3D volume, got " + std::to_string(img.header.dim[4]) +
                                           " frames");
  }
  return Volume(dims_of(img.header), spacing_of(img.header), std::move(img.samples), std::move(id));
}

inline Volume read_volume(const std::filesystem::path& path) {
  std::string id = path.filename().string();
  for (const char* ext : {".gz", ".nii"}) {
    if (id.size() > std::strlen(ext) && id.ends_with(ext)) id.resize(id.size() - std::strlen(ext));
  }
  return decode_volume(read_file(path), id);
}

inline void write_volume(const Volume& v, Datatype type, const std::filesystem::path& path,
                         const WriteOptions& opts = {}) {
  const Dims& d = v.dims();
  write_file(path, encode(v.data(), {d.nx, d.ny, d.nz, 1}, v.spacing(), type, opts));
}

inline LabelMask to_label_mask(const Volume& v, int num_classes) {
  std::vector<Label> labels(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    if (x < 0.0 || x >= num_classes || x != std::floor(x)) {
      fail(ErrorCode::InvalidArgument, "mask voxel " + std::to_string(i) + " value " + std::to_string(x) +
                                           " is not a class index below " + std::to_string(num_classes));
    }
    labels[i] = static_cast<Label>(x);
  }
  return LabelMask(v.dims(), num_classes, std::move(labels));
}

inline LabelMask read_label_mask(const std::filesystem::path& path, int num_classes) {
  return to_label_mask(read_volume(path), num_classes);
}

inline void write_label_mask(const LabelMask& m, Spacing spacing, const std::filesystem::path& path,
                             const WriteOptions& opts = {}) {
  std::vector<double> samples(m.labels().begin(), m.labels().end());
  const Dims& d = m.dims();
  write_file(path, encode(samples, {d.nx, d.ny, d.nz, 1}, spacing, Datatype::UInt8, opts));
}

/// 4D map: dim[4] carries the classes, stored channel-major in the file.
inline ProbabilityMap decode_probability_map(std::span<const std::byte> bytes, std::string source_tag = {}) {
  Image img = decode(bytes);
  const Header& h = img.header;
  if (h.dim[0] != 4) fail(ErrorCode::DimensionMismatch, "dim[0]: probability maps must be 4D");
  if (h.datatype != static_cast<std::int16_t>(Datatype::Float32) &&
      h.datatype != static_cast<std::int16_t>(Datatype::Float64)) {
    fail(ErrorCode::UnsupportedDatatype, "datatype: probability maps must be float32");
  }
  const int classes = h.dim[4];
  if (classes < 2 || classes > kMaxClasses) {
    fail(ErrorCode::DimensionMismatch, "dim[4]: class count " + std::to_string(classes) + " outside [2,256]");
  }
  const Dims dims = dims_of(h);
  const std::size_t nvox = dims.count();
  std::vector<double> probs(nvox * static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    for (std::size_t v = 0; v < nvox; ++v) probs[v * classes + c] = img.samples[c * nvox + v];
  }
  return ProbabilityMap(dims, classes, std::move(probs), std::move(source_tag));
}

inline ProbabilityMap read_probability_map(const std::filesystem::path& path) {
  return decode_probability_map(read_file(path), path.filename().string());
}

inline std::vector<std::byte> encode_probability_map(const ProbabilityMap& p, Spacing spacing = {},
                                                     const WriteOptions& opts = {}) {
  const Dims& d = p.dims();
  const std::size_t nvox = d.count();
  const int classes = p.num_classes();
  std::vector<double> samples(nvox * static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    for (std::size_t v = 0; v < nvox; ++v) samples[c * nvox + v] = p.at(v, c);
  }
  return encode(samples, {d.nx, d.ny, d.nz, static_cast<std::size_t>(classes)}, spacing, Datatype::Float32, opts);
}

inline void write_probability_map(const ProbabilityMap& p, const std::filesystem::path& path, Spacing spacing = {},
                                  const WriteOptions& opts = {}) {
  write_file(path, encode_probability_map(p, spacing, opts));
}

}  // namespace segtta::nifti

#endif  // SEGTTA_NIFTI_HPP
