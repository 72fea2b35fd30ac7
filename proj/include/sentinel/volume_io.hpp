#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sentinel/volume.hpp"

namespace sentinel {

inline constexpr int kNiftiHeaderSize = 348;
inline constexpr int kNiftiVoxOffset = 352;
inline constexpr std::int16_t kNiftiFloat32 = 16;
inline constexpr std::int16_t kNiftiInt16 = 4;

/// Header fields this toolkit reads from a single-file NIfTI-1 image.
struct NiftiHeaderSubset {
  std::int32_t sizeof_hdr = kNiftiHeaderSize;
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = kNiftiFloat32;
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{};
  float vox_offset = kNiftiVoxOffset;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::string magic;
};

/// Parses and validates the first 348 bytes. Throws CorruptHeader,
/// EndiannessUnsupported, UnsupportedDatatype.
NiftiHeaderSubset parse_nifti_header(std::span<const std::uint8_t> bytes);

/// Reads a little-endian single-file NIfTI-1 volume (float32 or int16).
/// values = raw * scl_slope + scl_inter when scl_slope != 0, else raw.
/// Orientation (qform/sform) is ignored; when present a note is appended to
/// `warnings`. The origin is always (0, 0, 0).
/// Throws InputNotFound, IoFailure, UnsupportedCompression, CorruptHeader,
/// EndiannessUnsupported, UnsupportedDatatype, TruncatedData.
Volume read_volume(const std::filesystem::path& path, Semantics semantics,
                   std::vector<std::string>* warnings = nullptr);

/// Writes float32, slope 1, intercept 0, vox_offset 352, no orientation.
/// Throws IoFailure.
void write_volume(const Volume& v, const std::filesystem::path& path);

/// Raw debugging format: `<stem>.json` (grid, semantics, provenance) next to
/// `<stem>.raw` (little-endian float32, x-fastest). See docs/raw-format.md.
void write_raw_volume(const Volume& v, const std::filesystem::path& stem, const std::string& provenance = {});
Volume read_raw_volume(const std::filesystem::path& stem);

/// Writes a text file atomically enough for our purposes (truncate + write).
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace sentinel
