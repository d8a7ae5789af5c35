#pragma once

// PCWT1 tensor container:
//
//   "PCWT1\0"                     6 magic bytes
//   u64 little-endian             header length in bytes
//   UTF-8 JSON header             {name: {"dtype": "f32", "shape": [...],
//                                         "offset": o, "byte_length": n}}
//   payload                       little-endian float32, offsets relative
//                                 to the payload start
//
// Header keys are written sorted and the payload follows header order, so
// serializing the same tensors always produces the same bytes.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pcw {

struct TensorRecord {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

using TensorMap = std::map<std::string, TensorRecord>;

std::string serialize_container(const TensorMap& tensors);
TensorMap parse_container(std::string_view bytes);

TensorMap read_container(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void write_container(const std::filesystem::path& path, const TensorMap& tensors);

// Writes `contents` to `path` atomically (temp file in the same directory,
// then rename). Shared by every file-producing command.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace pcw
