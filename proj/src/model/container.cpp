#include "pcw/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "pcw/error.hpp"

namespace pcw {

namespace {

constexpr char kMagic[6] = {'P', 'C', 'W', 'T', '1', '\0'};

static_assert(std::endian::native == std::endian::little, "PCWT1 I/O assumes a little-endian host");

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

std::string serialize_container(const TensorMap& tensors) {
  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (element_count(t.shape) != t.data.size()) throw LoadError("container: tensor '" + name + "' shape/data mismatch");
    const std::uint64_t bytes = t.data.size() * sizeof(float);
    header[name] = {{"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}, {"byte_length", bytes}};
    offset += bytes;
  }
  const std::string head = header.dump();
  const std::uint64_t head_len = head.size();

  std::string out;
  out.reserve(sizeof(kMagic) + 8 + head.size() + offset);
  out.append(kMagic, sizeof(kMagic));
  out.append(reinterpret_cast<const char*>(&head_len), 8);
  out += head;
  for (const auto& [name, t] : tensors) {
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  return out;
}

TensorMap parse_container(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw LoadError("container: bad magic (expected PCWT1)");
  }
  std::uint64_t head_len = 0;
  std::memcpy(&head_len, bytes.data() + sizeof(kMagic), 8);
  const std::size_t head_start = sizeof(kMagic) + 8;
  if (head_len > bytes.size() - head_start) throw LoadError("container: truncated header");
  const std::string_view payload = bytes.substr(head_start + head_len);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(head_start, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("container: header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) throw LoadError("container: header must be a JSON object");

  TensorMap out;
  for (const auto& [name, entry] : header.items()) {
    try {
      if (entry.at("dtype").get<std::string>() != "f32") throw LoadError("container: tensor '" + name + "' is not f32");
      TensorRecord t;
      t.shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("byte_length").get<std::uint64_t>();
      const std::size_t n = element_count(t.shape);
      if (length != n * sizeof(float)) throw LoadError("container: tensor '" + name + "' byte_length disagrees with shape");
      if (offset > payload.size() || length > payload.size() - offset) {
        throw LoadError("container: tensor '" + name + "' extends past the payload");
      }
      t.data.resize(n);
      std::memcpy(t.data.data(), payload.data() + offset, length);
      out.emplace(name, std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("container: tensor '" + name + "' has a malformed header entry: " + e.what());
    }
  }
  return out;
}

TensorMap read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("container: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_container(ss.str());
}

void write_container(const std::filesystem::path& path, const TensorMap& tensors) {
  write_file_atomic(path, serialize_container(tensors));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  const auto tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot move output into place at " + path.string() + ": " + ec.message());
  }
}

}  // namespace pcw
