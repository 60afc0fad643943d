#pragma once

// Row-major float32 matrix on disk: a JSON sidecar
//   {"n": rows, "d": cols, "dtype": "f32le", "file": "<payload>", "image_ids": [...]}
// next to a headerless little-endian payload of n*d values. image_ids is
// optional and, when present, labels the rows.

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "otfmri/core/binary_io.hpp"
#include "otfmri/core/json_util.hpp"

namespace otfmri::io {

struct MatrixFile {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;                          // rows * cols, row-major
  std::optional<std::vector<std::string>> image_ids;  // one per row

  float operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

// Writes <sidecar> and <sidecar stem>.f32 next to it.
inline void save_matrix(const MatrixFile& m, const std::filesystem::path& sidecar) {
  if (m.values.size() != m.rows * m.cols) throw ConfigError("matrix payload size does not match shape");
  if (m.image_ids && m.image_ids->size() != m.rows) throw ConfigError("image_ids length does not match rows");
  const std::string payload = sidecar.stem().string() + ".f32";
  json j{{"n", m.rows}, {"d", m.cols}, {"dtype", "f32le"}, {"file", payload}};
  if (m.image_ids) j["image_ids"] = *m.image_ids;
  Writer w;
  w.put_f32(m.values);
  write_file(sidecar.parent_path() / payload, w.bytes());
  jsonutil::save(sidecar, j);
}

// Validates the sidecar strictly and rejects non-finite entries, naming the row.
inline MatrixFile load_matrix(const std::filesystem::path& sidecar) {
  const json j = jsonutil::load(sidecar);
  const std::string ctx = sidecar.string();
  jsonutil::check_keys(j, {"n", "d", "dtype", "file"}, {"image_ids"}, ctx);
  if (jsonutil::get<std::string>(j, "dtype", ctx) != "f32le") throw DataError(ctx + ": dtype must be f32le");
  MatrixFile m;
  m.rows = jsonutil::get<std::size_t>(j, "n", ctx);
  m.cols = jsonutil::get<std::size_t>(j, "d", ctx);
  if (j.contains("image_ids")) {
    m.image_ids = jsonutil::get<std::vector<std::string>>(j, "image_ids", ctx);
    if (m.image_ids->size() != m.rows) throw DataError(ctx + ": image_ids length does not match n");
  }
  const auto payload_path = sidecar.parent_path() / jsonutil::get<std::string>(j, "file", ctx);
  const auto bytes = read_file(payload_path);
  if (bytes.size() != m.rows * m.cols * sizeof(float))
    throw DataError(payload_path.string() + ": expected " + std::to_string(m.rows * m.cols * sizeof(float)) +
                    " bytes, found " + std::to_string(bytes.size()));
  m.values.resize(m.rows * m.cols);
  Reader r(bytes);
  r.get_f32(m.values);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    if (!std::isfinite(m.values[i]))
      throw DataError(ctx + ": non-finite value in row " + std::to_string(i / std::max<std::size_t>(1, m.cols)));
  return m;
}

}  // namespace otfmri::io
