#pragma once

// Versioned tensor container used for training checkpoints and regression heads.
//
//   "OTFMRICK"                 8-byte magic
//   u32 version, u32 reserved  currently 1, 0
//   u64 n + JSON header        kind-specific metadata, UTF-8
//   u64 tensor count
//   per tensor: u64 n + name, u32 rank (= 3), 3 x u64 dims, float32 payload
//
// Decoding is strict: unknown versions, reserved bits and trailing bytes are
// rejected. Header field validation is left to each consumer.

#include <array>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "otfmri/core/binary_io.hpp"
#include "otfmri/core/json_util.hpp"
#include "otfmri/core/tensor.hpp"

namespace otfmri::io {

inline constexpr std::array<char, 8> kContainerMagic{'O', 'T', 'F', 'M', 'R', 'I', 'C', 'K'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  json header;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw DataError("container has no tensor '" + name + "'");
  }
};

inline std::vector<std::uint8_t> encode_container(const Container& c) {
  Writer w;
  w.put_bytes(std::string_view(kContainerMagic.data(), kContainerMagic.size()));
  w.put<std::uint32_t>(kContainerVersion);
  w.put<std::uint32_t>(0);
  w.put_string(c.header.dump());
  w.put<std::uint64_t>(c.tensors.size());
  for (const auto& [name, t] : c.tensors) {
    w.put_string(name);
    w.put<std::uint32_t>(3);
    w.put<std::uint64_t>(t.shape().n);
    w.put<std::uint64_t>(t.shape().c);
    w.put<std::uint64_t>(t.shape().l);
    w.put_f32(t.values());
  }
  return w.take();
}

inline Container decode_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.get_bytes(kContainerMagic.size(), "magic");
  if (std::memcmp(magic.data(), kContainerMagic.data(), kContainerMagic.size()) != 0)
    throw DecodeError("bad container magic", 0);
  const auto version_at = r.offset();
  if (r.get<std::uint32_t>("version") != kContainerVersion) throw DecodeError("unsupported container version", version_at);
  if (r.get<std::uint32_t>("reserved") != 0) throw DecodeError("nonzero reserved field", version_at + 4);

  Container c;
  const auto header_at = r.offset();
  const std::string header = r.get_string("header");
  try {
    c.header = json::parse(header);
  } catch (const json::exception& e) {
    throw DecodeError(std::string("bad container header: ") + e.what(), header_at);
  }
  const auto count = r.get<std::uint64_t>("tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.get_string("tensor name");
    const auto rank_at = r.offset();
    if (r.get<std::uint32_t>("rank") != 3) throw DecodeError("tensor '" + name + "' is not rank 3", rank_at);
    Shape s;
    s.n = r.get<std::uint64_t>("dims");
    s.c = r.get<std::uint64_t>("dims");
    s.l = r.get<std::uint64_t>("dims");
    if (s.n != 0 && (s.c == 0 || s.l == 0 || s.size() / s.n / s.c != s.l || s.size() > r.remaining() / sizeof(float)))
      throw DecodeError("truncated tensor '" + name + "'", r.offset());
    Tensor<float> t(s);
    r.get_f32(t.values(), "tensor payload");
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.at_end()) throw DecodeError("trailing bytes after container", r.offset());
  return c;
}

inline void save_container(const Container& c, const std::filesystem::path& path) {
  // Write-then-rename so an interrupted save never clobbers a good file.
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, encode_container(c));
  std::filesystem::rename(tmp, path);
}

inline Container load_container(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("file not found: " + path.string());
  const auto bytes = read_file(path);
  try {
    return decode_container(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace otfmri::io
