#include "mgmask/vten.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "mgmask/errors.hpp"

namespace mgm {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kMaxRank = 64;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_vten(const Tensor& t) {
  if (t.ndim() > kMaxRank) throw ValidationError("tensor rank exceeds format limit");
  std::vector<std::uint8_t> out;
  out.reserve(16 + 4 * t.ndim() + 4 * t.numel());
  for (char ch : {'V', 'T', 'E', 'N'}) out.push_back(static_cast<std::uint8_t>(ch));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(t.ndim()));
  for (std::size_t d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw ValidationError("tensor extent exceeds u32 range");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : t.values()) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw ValidationError("tensor value not representable as finite f32");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Tensor decode_vten(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw SizeMismatchError("vten: truncated header");
  if (std::memcmp(bytes.data(), "VTEN", 4) != 0) throw BadMagicError("vten: bad magic");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kVersion)
    throw FormatError("vten: unsupported version " + std::to_string(version));
  const std::uint32_t ndim = get_u32(bytes.data() + 8);
  if (ndim > kMaxRank) throw FormatError("vten: rank exceeds format limit");
  if (bytes.size() < 12 + 4ull * ndim) throw SizeMismatchError("vten: truncated extent list");

  std::vector<std::size_t> dims(ndim);
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const std::uint32_t d = get_u32(bytes.data() + 12 + 4ull * i);
    if (d == 0) throw FormatError("vten: zero extent");
    if (numel > std::numeric_limits<std::size_t>::max() / d)
      throw FormatError("vten: extent product overflows");
    dims[i] = d;
    numel *= d;
  }
  const std::size_t payload_off = 12 + 4ull * ndim;
  if (bytes.size() != payload_off + 4ull * numel)
    throw SizeMismatchError("vten: payload size " + std::to_string(bytes.size() - payload_off) +
                            " bytes, header implies " + std::to_string(4ull * numel));

  std::vector<double> data(numel);
  for (std::size_t i = 0; i < numel; ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes.data() + payload_off + 4 * i));
    if (!std::isfinite(f)) throw NonFiniteError("vten: non-finite payload value at index " +
                                                std::to_string(i));
    data[i] = static_cast<double>(f);
  }
  return Tensor(std::move(dims), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw IoError("cannot stat " + path);
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("read failed on " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on " + path);
}

Tensor read_vten(const std::string& path) { return decode_vten(read_file_bytes(path)); }

void write_vten(const Tensor& t, const std::string& path) {
  write_file_bytes(path, encode_vten(t));
}

}  // namespace mgm
