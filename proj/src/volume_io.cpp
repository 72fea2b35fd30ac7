#include "sentinel/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "json.hpp"
#include "sentinel/error.hpp"

namespace sentinel {

static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");

namespace {

// Byte offsets of the NIfTI-1 header fields we touch.
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffMagic = 344;

template <typename T>
T load(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

template <typename T>
void store(std::vector<std::uint8_t>& bytes, std::size_t offset, T value) {
  std::memcpy(bytes.data() + offset, &value, sizeof(T));
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    throw Error(ErrorKind::InputNotFound, fmt::format("input not found: {}", path.string()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::IoFailure, fmt::format("read failed: {}", path.string()));
  return bytes;
}

void write_all(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, fmt::format("cannot open {} for writing", path.string()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  out.close();
  if (!out) throw Error(ErrorKind::IoFailure, fmt::format("write failed: {}", path.string()));
}

const char* semantics_name(Semantics s) {
  return s == Semantics::HounsfieldUnits ? "HounsfieldUnits" : "MrIntensityArbitrary";
}

}  // namespace

NiftiHeaderSubset parse_nifti_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
    throw Error(ErrorKind::UnsupportedCompression, "gzip-compressed NIfTI (.nii.gz) is not supported");
  }
  if (bytes.size() < static_cast<std::size_t>(kNiftiHeaderSize)) {
    throw Error(ErrorKind::CorruptHeader, fmt::format("file holds {} bytes, fewer than a NIfTI-1 header", bytes.size()));
  }
  NiftiHeaderSubset h;
  h.sizeof_hdr = load<std::int32_t>(bytes, 0);
  if (h.sizeof_hdr != kNiftiHeaderSize) {
    if (__builtin_bswap32(static_cast<std::uint32_t>(h.sizeof_hdr)) == static_cast<std::uint32_t>(kNiftiHeaderSize)) {
      throw Error(ErrorKind::EndiannessUnsupported, "big-endian NIfTI files are not supported");
    }
    if (h.sizeof_hdr == 540) throw Error(ErrorKind::CorruptHeader, "NIfTI-2 headers (sizeof_hdr 540) are not supported");
    throw Error(ErrorKind::CorruptHeader, fmt::format("sizeof_hdr is {}, expected 348", h.sizeof_hdr));
  }
  h.magic.assign(reinterpret_cast<const char*>(bytes.data() + kOffMagic), 3);
  if (h.magic == "ni1") {
    throw Error(ErrorKind::CorruptHeader, "detached header/image pair (magic \"ni1\", .hdr/.img) is not supported");
  }
  if (h.magic != "n+1" || bytes[kOffMagic + 3] != 0) {
    throw Error(ErrorKind::CorruptHeader, "magic is not \"n+1\"");
  }
  for (int i = 0; i < 8; ++i) h.dim[i] = load<std::int16_t>(bytes, kOffDim + 2 * i);
  if (h.dim[0] != 3) throw Error(ErrorKind::CorruptHeader, fmt::format("dim[0] is {}, expected 3", h.dim[0]));
  for (int i = 1; i <= 3; ++i) {
    if (h.dim[i] < 1) throw Error(ErrorKind::CorruptHeader, fmt::format("dim[{}] is {}", i, h.dim[i]));
  }
  h.datatype = load<std::int16_t>(bytes, kOffDatatype);
  h.bitpix = load<std::int16_t>(bytes, kOffBitpix);
  if (h.datatype != kNiftiFloat32 && h.datatype != kNiftiInt16) {
    throw Error(ErrorKind::UnsupportedDatatype,
                fmt::format("datatype {} unsupported (float32=16 and int16=4 only)", h.datatype));
  }
  const int expected_bits = h.datatype == kNiftiFloat32 ? 32 : 16;
  if (h.bitpix != expected_bits) {
    throw Error(ErrorKind::CorruptHeader, fmt::format("bitpix {} does not match datatype {}", h.bitpix, h.datatype));
  }
  for (int i = 0; i < 8; ++i) h.pixdim[i] = load<float>(bytes, kOffPixdim + 4 * i);
  for (int i = 1; i <= 3; ++i) {
    if (!(h.pixdim[i] > 0.0f) || !std::isfinite(h.pixdim[i])) {
      throw Error(ErrorKind::CorruptHeader, fmt::format("pixdim[{}] is {}, expected > 0", i, h.pixdim[i]));
    }
  }
  h.vox_offset = load<float>(bytes, kOffVoxOffset);
  if (!(h.vox_offset >= static_cast<float>(kNiftiVoxOffset)) || h.vox_offset != std::floor(h.vox_offset)) {
    throw Error(ErrorKind::CorruptHeader, fmt::format("vox_offset {} is invalid for a single-file image", h.vox_offset));
  }
  h.scl_slope = load<float>(bytes, kOffSclSlope);
  h.scl_inter = load<float>(bytes, kOffSclInter);
  if (!std::isfinite(h.scl_slope) || !std::isfinite(h.scl_inter)) {
    throw Error(ErrorKind::CorruptHeader, "scl_slope/scl_inter must be finite");
  }
  h.qform_code = load<std::int16_t>(bytes, kOffQformCode);
  h.sform_code = load<std::int16_t>(bytes, kOffSformCode);
  return h;
}

Volume read_volume(const std::filesystem::path& path, Semantics semantics, std::vector<std::string>* warnings) {
  const auto bytes = read_all(path);
  const NiftiHeaderSubset h = parse_nifti_header(bytes);

  const VoxelGrid grid = make_grid({h.dim[1], h.dim[2], h.dim[3]},
                                   {double(h.pixdim[1]), double(h.pixdim[2]), double(h.pixdim[3])});
  const std::size_t count = grid.voxel_count();
  const std::size_t offset = static_cast<std::size_t>(h.vox_offset);
  const std::size_t width = h.datatype == kNiftiFloat32 ? 4 : 2;
  if (bytes.size() < offset + count * width) {
    throw Error(ErrorKind::TruncatedData, fmt::format("{}: expected {} data bytes after offset {}, found {}",
                                                      path.string(), count * width, offset,
                                                      bytes.size() > offset ? bytes.size() - offset : 0));
  }
  if (warnings && (h.qform_code != 0 || h.sform_code != 0)) {
    warnings->push_back(fmt::format("{}: qform/sform orientation ignored (codes {}/{})", path.string(), h.qform_code,
                                    h.sform_code));
  }

  std::vector<float> values(count);
  // slope 1 / intercept 0 is copied verbatim so -0.0 survives a round trip.
  const bool scaled = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
  const auto data = std::span<const std::uint8_t>(bytes).subspan(offset);
  for (std::size_t i = 0; i < count; ++i) {
    const float raw = h.datatype == kNiftiFloat32 ? load<float>(data, 4 * i)
                                                  : static_cast<float>(load<std::int16_t>(data, 2 * i));
    values[i] = scaled ? raw * h.scl_slope + h.scl_inter : raw;
  }
  return Volume(grid, std::move(values), semantics);
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  const VoxelGrid& g = v.grid();
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] > 32767) throw Error(ErrorKind::IoFailure, "dimension exceeds the NIfTI-1 int16 limit");
  }
  std::vector<std::uint8_t> bytes(kNiftiVoxOffset + 4 * v.size(), 0);
  store<std::int32_t>(bytes, 0, kNiftiHeaderSize);
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(g.dims[0]), static_cast<std::int16_t>(g.dims[1]),
                                        static_cast<std::int16_t>(g.dims[2]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<std::int16_t>(bytes, kOffDim + 2 * i, dim[i]);
  store<std::int16_t>(bytes, kOffDatatype, kNiftiFloat32);
  store<std::int16_t>(bytes, kOffBitpix, 32);
  const std::array<float, 8> pixdim{1.0f, float(g.spacing[0]), float(g.spacing[1]), float(g.spacing[2]),
                                    1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) store<float>(bytes, kOffPixdim + 4 * i, pixdim[i]);
  store<float>(bytes, kOffVoxOffset, float(kNiftiVoxOffset));
  store<float>(bytes, kOffSclSlope, 1.0f);
  store<float>(bytes, kOffSclInter, 0.0f);
  bytes[kOffXyztUnits] = 2;  // millimetres
  std::memcpy(bytes.data() + kOffMagic, "n+1\0", 4);
  std::memcpy(bytes.data() + kNiftiVoxOffset, v.values().data(), 4 * v.size());
  write_all(path, bytes.data(), bytes.size());
}

void write_raw_volume(const Volume& v, const std::filesystem::path& stem, const std::string& provenance) {
  const VoxelGrid& g = v.grid();
  nlohmann::ordered_json meta;
  meta["format"] = "sentinel-raw-1";
  meta["dims"] = g.dims;
  meta["spacing_mm"] = g.spacing;
  meta["origin_mm"] = g.origin;
  meta["dtype"] = "float32-le";
  meta["order"] = "x-fastest";
  meta["semantics"] = semantics_name(v.semantics());
  meta["provenance"] = provenance;
  auto json_path = stem;
  json_path += ".json";
  auto raw_path = stem;
  raw_path += ".raw";
  write_text_file(json_path, meta.dump(2) + "\n");
  write_all(raw_path, v.values().data(), 4 * v.size());
}

Volume read_raw_volume(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  auto raw_path = stem;
  raw_path += ".raw";
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, fmt::format("{}: {}", json_path.string(), e.what()));
  }
  try {
    if (meta.at("format") != "sentinel-raw-1" || meta.at("dtype") != "float32-le" || meta.at("order") != "x-fastest") {
      throw Error(ErrorKind::CorruptHeader, fmt::format("{}: unsupported raw format", json_path.string()));
    }
    const auto semantics_text = meta.at("semantics").get<std::string>();
    if (semantics_text != "HounsfieldUnits" && semantics_text != "MrIntensityArbitrary") {
      throw Error(ErrorKind::CorruptHeader, fmt::format("{}: unknown semantics '{}'", json_path.string(), semantics_text));
    }
    const auto semantics =
        semantics_text == "HounsfieldUnits" ? Semantics::HounsfieldUnits : Semantics::MrIntensityArbitrary;
    const VoxelGrid grid = make_grid(meta.at("dims").get<std::array<int, 3>>(),
                                     meta.at("spacing_mm").get<std::array<double, 3>>(),
                                     meta.at("origin_mm").get<std::array<double, 3>>());
    const auto bytes = read_all(raw_path);
    if (bytes.size() != 4 * grid.voxel_count()) {
      throw Error(ErrorKind::TruncatedData,
                  fmt::format("{}: {} bytes, expected {}", raw_path.string(), bytes.size(), 4 * grid.voxel_count()));
    }
    std::vector<float> values(grid.voxel_count());
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return Volume(grid, std::move(values), semantics);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptHeader, fmt::format("{}: {}", json_path.string(), e.what()));
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_all(path, text.data(), text.size());
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace sentinel
