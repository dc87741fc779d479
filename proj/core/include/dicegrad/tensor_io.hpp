#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "dicegrad/tensor.hpp"

namespace dicegrad {

// Portable tensor file: "DRT1", u8 dtype (1 = f64 LE), u8 ndim (3),
// three u32 LE dims (B, C, I), then the row-major f64 LE payload.
std::string encode_tensor(const BatchTensor& tensor);
BatchTensor decode_tensor(std::string_view bytes);

void write_tensor(const std::filesystem::path& path, const BatchTensor& tensor);
BatchTensor read_tensor(const std::filesystem::path& path);

// Little-endian helpers shared by the checkpoint format.
void put_f64_le(std::string& out, double value);
double get_f64_le(std::string_view bytes, std::size_t offset);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dicegrad
