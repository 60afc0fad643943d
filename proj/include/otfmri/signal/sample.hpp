#pragma once

// One fMRI trial on the shared surface space, and its flat binary file format:
//
//   offset 0   "OTF1" followed by 12 zero bytes
//   offset 16  V, u64 little-endian
//   offset 24  2*V float32 little-endian values, left hemisphere first
//   then       u64 length + UTF-8 JSON {"subject_id", "image_id", "trial_index"}

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "otfmri/core/binary_io.hpp"
#include "otfmri/core/error.hpp"
#include "otfmri/core/json_util.hpp"

namespace otfmri::signal {

inline constexpr std::size_t kChannels = 2;
inline constexpr std::array<char, 4> kSampleMagic{'O', 'T', 'F', '1'};
inline constexpr std::size_t kSampleHeaderBytes = 16;
// trial_index of a trial-averaged sample.
inline constexpr std::uint64_t kAveragedTrial = std::numeric_limits<std::uint64_t>::max();

struct FmriSample {
  std::string subject_id;
  std::string image_id;
  std::uint64_t trial_index = 0;
  std::array<std::vector<float>, kChannels> channels;

  FmriSample() = default;
  FmriSample(std::string subject, std::string image, std::uint64_t trial, std::size_t vertices)
      : subject_id(std::move(subject)), image_id(std::move(image)), trial_index(trial) {
    for (auto& c : channels) c.assign(vertices, 0.0f);
  }

  std::size_t vertex_count() const { return channels[0].size(); }

  // Throws DataError when the channel lengths differ, are empty, or hold non-finite values.
  void validate() const {
    if (channels[0].empty()) throw DataError("sample has zero vertices");
    if (channels[0].size() != channels[1].size()) throw DataError("hemisphere channels differ in length");
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t v = 0; v < channels[c].size(); ++v)
        if (!std::isfinite(channels[c][v]))
          throw DataError("non-finite value at channel " + std::to_string(c) + ", vertex " + std::to_string(v));
  }

  friend bool operator==(const FmriSample&, const FmriSample&) = default;
};

inline std::string sample_metadata(const FmriSample& s) {
  return json{{"subject_id", s.subject_id}, {"image_id", s.image_id}, {"trial_index", s.trial_index}}.dump();
}

inline std::vector<std::uint8_t> encode_sample(const FmriSample& s) {
  s.validate();
  io::Writer w;
  w.put_bytes(std::string_view(kSampleMagic.data(), kSampleMagic.size()));
  for (std::size_t i = kSampleMagic.size(); i < kSampleHeaderBytes; ++i) w.put<std::uint8_t>(0);
  w.put<std::uint64_t>(s.vertex_count());
  for (const auto& c : s.channels) w.put_f32(c);
  w.put_string(sample_metadata(s));
  return w.take();
}

inline FmriSample decode_sample(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  const auto header = r.get_bytes(kSampleHeaderBytes, "header");
  if (std::memcmp(header.data(), kSampleMagic.data(), kSampleMagic.size()) != 0) throw DecodeError("bad magic", 0);
  for (std::size_t i = kSampleMagic.size(); i < kSampleHeaderBytes; ++i)
    if (header[i] != 0) throw DecodeError("nonzero reserved header byte", i);

  const std::uint64_t v_offset = r.offset();
  const auto vertices = r.get<std::uint64_t>("vertex count");
  if (vertices == 0) throw DecodeError("vertex count is zero", v_offset);
  if (vertices > r.remaining() / (kChannels * sizeof(float)))
    throw DecodeError("truncated payload: declared " + std::to_string(vertices) + " vertices", bytes.size());

  FmriSample s;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const std::uint64_t start = r.offset();
    s.channels[c].resize(vertices);
    r.get_f32(s.channels[c], "payload");
    for (std::size_t v = 0; v < vertices; ++v)
      if (!std::isfinite(s.channels[c][v])) throw DecodeError("non-finite value", start + v * sizeof(float));
  }

  const std::uint64_t meta_offset = r.offset();
  const std::string meta_text = r.get_string("metadata");
  json meta;
  try {
    meta = json::parse(meta_text);
    jsonutil::check_keys(meta, {"subject_id", "image_id", "trial_index"}, {}, "sample metadata");
    s.subject_id = meta.at("subject_id").get<std::string>();
    s.image_id = meta.at("image_id").get<std::string>();
    s.trial_index = meta.at("trial_index").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw DecodeError(std::string("bad metadata block: ") + e.what(), meta_offset);
  }
  if (!r.at_end()) throw DecodeError("trailing bytes after metadata", r.offset());
  return s;
}

inline void save_sample(const FmriSample& s, const std::filesystem::path& path) {
  io::write_file(path, encode_sample(s));
}

inline FmriSample load_sample(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  try {
    return decode_sample(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.detail(), e.offset());
  }
}

// Expected encoded size for a sample with the given identity and vertex count.
inline std::uint64_t encoded_sample_size(const FmriSample& s) {
  return kSampleHeaderBytes + sizeof(std::uint64_t) + kChannels * s.vertex_count() * sizeof(float) +
         sizeof(std::uint64_t) + sample_metadata(s).size();
}

// Concatenated [left, right] vector of length 2V.
inline std::vector<float> flatten(const FmriSample& s) {
  std::vector<float> out;
  out.reserve(2 * s.vertex_count());
  for (const auto& c : s.channels) out.insert(out.end(), c.begin(), c.end());
  return out;
}

}  // namespace otfmri::signal
