#pragma once
// Hand-built single-file NIfTI-1 images for reader tests. Bytes are laid out
// at the documented header offsets without going through the library writer.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <vector>

namespace fixtures {

namespace fs = std::filesystem;

inline fs::path scratch_dir(const char* name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::create_directories(d);
  return d;
}

template <typename T>
void put(std::vector<std::uint8_t>& b, std::size_t off, T v) {
  std::memcpy(b.data() + off, &v, sizeof(T));
}

struct Fixture {
  std::array<std::int16_t, 3> dims{3, 2, 2};
  std::int16_t datatype = 16;
  std::int16_t bitpix = 32;
  std::array<float, 3> pixdim{1.0f, 1.5f, 2.0f};
  float vox_offset = 352.0f;
  float slope = 1.0f, inter = 0.0f;
  std::int16_t dim0 = 3;
  std::int16_t qform = 0;
  const char* magic = "n+1";
  std::int32_t sizeof_hdr = 348;

  std::vector<std::uint8_t> header() const {
    std::vector<std::uint8_t> b(static_cast<std::size_t>(std::max(352.0f, vox_offset)), 0);
    put(b, 0, sizeof_hdr);
    put<std::int16_t>(b, 40, dim0);
    for (int i = 0; i < 3; ++i) put<std::int16_t>(b, 42 + 2 * i, dims[i]);
    for (int i = 3; i < 7; ++i) put<std::int16_t>(b, 42 + 2 * i, 1);
    put(b, 70, datatype);
    put(b, 72, bitpix);
    put(b, 76, 1.0f);
    for (int i = 0; i < 3; ++i) put(b, 80 + 4 * i, pixdim[i]);
    put(b, 108, vox_offset);
    put(b, 112, slope);
    put(b, 116, inter);
    b[123] = 2;
    put(b, 252, qform);
    std::memcpy(b.data() + 344, magic, 4);
    return b;
  }

  std::size_t count() const { return std::size_t(dims[0]) * dims[1] * dims[2]; }

  /// Header followed by a zeroed float32 payload of the right size.
  std::vector<std::uint8_t> with_float_payload() const {
    auto b = header();
    b.resize(b.size() + 4 * count(), 0);
    return b;
  }
};

inline fs::path write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  return p;
}

inline std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct MalformedCase {
  const char* name;
  std::vector<std::uint8_t> bytes;
};

/// One fixture per rejection rule of the reader, paired with the expected error
/// kind name.
inline std::vector<std::pair<MalformedCase, const char*>> malformed_fixtures() {
  std::vector<std::pair<MalformedCase, const char*>> out;
  Fixture ok;
  out.push_back({{"gzip.nii.gz", {0x1f, 0x8b, 8, 0, 0, 0, 0, 0}}, "UnsupportedCompression"});
  out.push_back({{"short.nii", std::vector<std::uint8_t>(100, 0)}, "CorruptHeader"});
  Fixture f = ok;
  f.sizeof_hdr = static_cast<std::int32_t>(__builtin_bswap32(348));
  out.push_back({{"swapped.nii", f.with_float_payload()}, "EndiannessUnsupported"});
  f = ok;
  f.sizeof_hdr = 540;
  out.push_back({{"nifti2.nii", f.with_float_payload()}, "CorruptHeader"});
  f = ok;
  f.magic = "ni1";
  out.push_back({{"pair.nii", f.with_float_payload()}, "CorruptHeader"});
  f = ok;
  f.magic = "abc";
  out.push_back({{"magic.nii", f.with_float_payload()}, "CorruptHeader"});
  f = ok;
  f.dim0 = 4;
  out.push_back({{"dim4.nii", f.with_float_payload()}, "CorruptHeader"});
  f = ok;
  f.dims = {3, 0, 2};
  out.push_back({{"zerodim.nii", f.with_float_payload()}, "CorruptHeader"});
  f = ok;
  f.datatype = 2;
  f.bitpix = 8;
  out.push_back({{"uint8.nii", f.with_float_payload()}, "UnsupportedDatatype"});
  f = ok;
  f.datatype = 64;
  f.bitpix = 64;
  out.push_back({{"float64.nii", f.with_float_payload()}, "UnsupportedDatatype"});
  f = ok;
  f.bitpix = 16;
  out.push_back({{"bitpix.nii", f.with_float_payload()}, "CorruptHeader"});
  f = ok;
  f.pixdim = {1.0f, 0.0f, 1.0f};
  out.push_back({{"pixdim.nii", f.with_float_payload()}, "CorruptHeader"});
  f = ok;
  f.vox_offset = 300.0f;
  out.push_back({{"voxoffset.nii", f.with_float_payload()}, "CorruptHeader"});
  auto truncated = ok.with_float_payload();
  truncated.resize(truncated.size() - 1);
  out.push_back({{"truncated.nii", truncated}, "TruncatedData"});
  auto nan_payload = ok.with_float_payload();
  const std::uint32_t nan_bits = 0x7fc00000u;
  std::memcpy(nan_payload.data() + 352, &nan_bits, 4);
  out.push_back({{"nan.nii", nan_payload}, "NonFiniteInput"});
  return out;
}

}  // namespace fixtures
