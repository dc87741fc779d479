#include "dicegrad/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "dicegrad/error.hpp"

namespace dicegrad {
namespace {

constexpr std::string_view kMagic = "DRT1";
constexpr std::uint8_t kDtypeF64 = 1;
constexpr std::uint8_t kRank = 3;
constexpr std::size_t kHeaderSize = 4 + 1 + 1 + 3 * 4;

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

std::uint32_t get_u32_le(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + k])) << (8 * k);
  }
  return v;
}

}  // namespace

void put_f64_le(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFFu));
}

double get_f64_le(std::string_view bytes, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + k])) << (8 * k);
  }
  return std::bit_cast<double>(bits);
}

std::string encode_tensor(const BatchTensor& tensor) {
  const auto& s = tensor.shape();
  constexpr auto kU32Max = std::numeric_limits<std::uint32_t>::max();
  if (s.batch > kU32Max || s.classes > kU32Max || s.voxels > kU32Max) {
    throw Error(ErrorCode::FormatError, "dimension exceeds u32 range");
  }
  std::string out;
  out.reserve(kHeaderSize + 8 * tensor.size());
  out.append(kMagic);
  out.push_back(static_cast<char>(kDtypeF64));
  out.push_back(static_cast<char>(kRank));
  put_u32_le(out, static_cast<std::uint32_t>(s.batch));
  put_u32_le(out, static_cast<std::uint32_t>(s.classes));
  put_u32_le(out, static_cast<std::uint32_t>(s.voxels));
  for (const double v : tensor.values()) put_f64_le(out, v);
  return out;
}

BatchTensor decode_tensor(std::string_view bytes) {
  if (bytes.size() < kHeaderSize || bytes.substr(0, 4) != kMagic) {
    throw Error(ErrorCode::FormatError, "missing DRT1 header");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kDtypeF64) {
    throw Error(ErrorCode::FormatError, "unsupported dtype code");
  }
  if (static_cast<std::uint8_t>(bytes[5]) != kRank) {
    throw Error(ErrorCode::FormatError, "expected rank 3");
  }
  const Shape shape{get_u32_le(bytes, 6), get_u32_le(bytes, 10), get_u32_le(bytes, 14)};
  validate_shape(shape);
  if (bytes.size() != kHeaderSize + 8 * shape.size()) {
    throw Error(ErrorCode::FormatError, "payload length does not match dims");
  }
  std::vector<double> values(shape.size());
  for (std::size_t k = 0; k < values.size(); ++k) values[k] = get_f64_le(bytes, kHeaderSize + 8 * k);
  return BatchTensor(shape, std::move(values));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

void write_tensor(const std::filesystem::path& path, const BatchTensor& tensor) {
  write_file(path, encode_tensor(tensor));
}

BatchTensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

}  // namespace dicegrad
