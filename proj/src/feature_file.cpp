#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mambamil/data.hpp"
#include "mambamil/errors.hpp"

namespace mambamil {

namespace {

void put_le(std::vector<unsigned char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint32_t payload_crc(const unsigned char* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in pieces
  while (n > 0) {
    const auto piece = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, piece);
    p += piece;
    n -= piece;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<unsigned char> encode_features(const Tensor& features, bool with_crc) {
  if (features.rank() != 2) throw DimensionError("feature matrix must be [L, D], got " + shape_str(features.shape()));
  const std::size_t l = features.dim(0), d = features.dim(1);
  if (l > UINT32_MAX || d > UINT32_MAX) throw ContractError("feature matrix too large for MMF1");
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw FormatError(FormatError::Kind::kNonFinite, "feature matrix holds non-finite values");
  }
  std::vector<unsigned char> out;
  out.reserve(kFeatureHeaderSize + 8 * l * d + 4);
  out.insert(out.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
  put_le(out, kFeatureVersion, 2);
  put_le(out, l, 4);
  put_le(out, d, 4);
  for (double v : features.data()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  if (with_crc) put_le(out, payload_crc(out.data() + kFeatureHeaderSize, 8 * l * d), 4);
  return out;
}

Tensor decode_features(const std::vector<unsigned char>& bytes, const std::string& origin) {
  using Kind = FormatError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError(Kind::kBadMagic, origin + ": not an MMF1 file (bad magic)");
  }
  if (bytes.size() < kFeatureHeaderSize) throw FormatError(Kind::kTruncated, origin + ": truncated header");
  const auto version = get_le(bytes.data() + 4, 2);
  if (version != kFeatureVersion) {
    throw FormatError(Kind::kBadVersion, origin + ": unsupported MMF1 version " + std::to_string(version));
  }
  const std::size_t l = get_le(bytes.data() + 6, 4);
  const std::size_t d = get_le(bytes.data() + 10, 4);
  const std::size_t payload = 8 * l * d;
  const std::size_t have = bytes.size() - kFeatureHeaderSize;
  if (have < payload) {
    throw FormatError(Kind::kTruncated, origin + ": header declares " + std::to_string(l) + "x" + std::to_string(d) +
                                            " values but the payload holds only " + std::to_string(have / 8));
  }
  const std::size_t extra = have - payload;
  const unsigned char* p = bytes.data() + kFeatureHeaderSize;
  if (extra == 4) {
    const auto stored = static_cast<std::uint32_t>(get_le(p + payload, 4));
    if (stored != payload_crc(p, payload)) throw FormatError(Kind::kChecksum, origin + ": payload CRC-32 mismatch");
  } else if (extra != 0) {
    throw FormatError(Kind::kTrailingBytes, origin + ": " + std::to_string(extra) + " unexpected trailing bytes");
  }
  std::vector<double> values(l * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<double>(get_le(p + 8 * i, 8));
    if (!std::isfinite(values[i])) {
      throw FormatError(Kind::kNonFinite, origin + ": non-finite value at row " + std::to_string(i / d) + ", column " +
                                              std::to_string(i % d));
    }
  }
  return Tensor({l, d}, std::move(values));
}

void write_feature_file(const std::filesystem::path& path, const Tensor& features, bool with_crc) {
  const auto bytes = encode_features(features, with_crc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, "write failed for " + path.string());
}

Tensor read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_features(bytes, path.string());
}

}  // namespace mambamil
