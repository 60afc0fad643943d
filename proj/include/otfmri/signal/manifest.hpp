#pragma once

// Declarative dataset description (JSON) and its validator.
//
// {
//   "name": "...", "quality_tier": "low" | "high" | "enhanced", "vertex_count": V,
//   "subjects": [{"subject_id": "...", "trials_per_image": n}, ...],
//   "shared_image_ids": ["...", ...],
//   "sample_index": [{"subject_id", "image_id", "trial_index", "path"}, ...]
// }

#include <compare>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "otfmri/core/json_util.hpp"
#include "otfmri/signal/sample.hpp"

namespace otfmri::signal {

enum class QualityTier { low, high, enhanced };

inline std::string to_string(QualityTier t) {
  switch (t) {
    case QualityTier::low: return "low";
    case QualityTier::high: return "high";
    case QualityTier::enhanced: return "enhanced";
  }
  return "?";
}

inline QualityTier parse_tier(const std::string& s) {
  if (s == "low") return QualityTier::low;
  if (s == "high") return QualityTier::high;
  if (s == "enhanced") return QualityTier::enhanced;
  throw DataError("unknown quality_tier '" + s + "'");
}

struct SubjectEntry {
  std::string subject_id;
  std::uint64_t trials_per_image = 1;
  friend bool operator==(const SubjectEntry&, const SubjectEntry&) = default;
};

struct SampleKey {
  std::string subject_id;
  std::string image_id;
  std::uint64_t trial_index = 0;
  friend auto operator<=>(const SampleKey&, const SampleKey&) = default;
  friend bool operator==(const SampleKey&, const SampleKey&) = default;
};

inline SampleKey key_of(const FmriSample& s) { return {s.subject_id, s.image_id, s.trial_index}; }

struct DatasetManifest {
  std::string name;
  QualityTier quality_tier = QualityTier::low;
  std::uint64_t vertex_count = 0;
  std::vector<SubjectEntry> subjects;
  std::vector<std::string> shared_image_ids;
  std::map<SampleKey, std::string> sample_index;  // relative file paths

  const SubjectEntry* find_subject(const std::string& id) const {
    for (const auto& s : subjects)
      if (s.subject_id == id) return &s;
    return nullptr;
  }

  std::uint64_t expected_sample_count() const {
    std::uint64_t n = 0;
    for (const auto& s : subjects) n += s.trials_per_image * shared_image_ids.size();
    return n;
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline json to_json(const DatasetManifest& m) {
  json subjects = json::array();
  for (const auto& s : m.subjects) subjects.push_back({{"subject_id", s.subject_id}, {"trials_per_image", s.trials_per_image}});
  json index = json::array();
  for (const auto& [k, path] : m.sample_index)
    index.push_back({{"subject_id", k.subject_id}, {"image_id", k.image_id}, {"trial_index", k.trial_index}, {"path", path}});
  return {{"name", m.name},
          {"quality_tier", to_string(m.quality_tier)},
          {"vertex_count", m.vertex_count},
          {"subjects", std::move(subjects)},
          {"shared_image_ids", m.shared_image_ids},
          {"sample_index", std::move(index)}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  constexpr std::string_view ctx = "manifest";
  jsonutil::check_keys(j, {"name", "quality_tier", "vertex_count", "subjects", "shared_image_ids", "sample_index"}, {},
                       ctx);
  DatasetManifest m;
  m.name = jsonutil::get<std::string>(j, "name", ctx);
  m.quality_tier = parse_tier(jsonutil::get<std::string>(j, "quality_tier", ctx));
  m.vertex_count = jsonutil::get<std::uint64_t>(j, "vertex_count", ctx);
  if (m.vertex_count == 0) throw DataError("manifest: vertex_count must be positive");
  for (const auto& s : j.at("subjects")) {
    jsonutil::check_keys(s, {"subject_id", "trials_per_image"}, {}, "manifest subject");
    SubjectEntry e{jsonutil::get<std::string>(s, "subject_id", ctx), jsonutil::get<std::uint64_t>(s, "trials_per_image", ctx)};
    if (e.trials_per_image == 0) throw DataError("manifest: trials_per_image must be positive for " + e.subject_id);
    m.subjects.push_back(std::move(e));
  }
  m.shared_image_ids = jsonutil::get<std::vector<std::string>>(j, "shared_image_ids", ctx);
  for (const auto& e : j.at("sample_index")) {
    jsonutil::check_keys(e, {"subject_id", "image_id", "trial_index", "path"}, {}, "manifest sample_index entry");
    SampleKey k{jsonutil::get<std::string>(e, "subject_id", ctx), jsonutil::get<std::string>(e, "image_id", ctx),
                jsonutil::get<std::uint64_t>(e, "trial_index", ctx)};
    auto path = jsonutil::get<std::string>(e, "path", ctx);
    if (!m.sample_index.emplace(k, std::move(path)).second)
      throw DataError("manifest: duplicate sample_index entry " + k.subject_id + "/" + k.image_id + "/" +
                      std::to_string(k.trial_index));
  }
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(jsonutil::load(path));
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  jsonutil::save(path, to_json(m));
}

enum class ViolationKind {
  missing_file,
  decode_error,
  vertex_mismatch,
  identity_mismatch,
  trial_count_mismatch,
  duplicate_image_id,
  duplicate_subject_id,
  unknown_subject,
  unknown_image,
};

inline std::string to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::missing_file: return "missing_file";
    case ViolationKind::decode_error: return "decode_error";
    case ViolationKind::vertex_mismatch: return "vertex_mismatch";
    case ViolationKind::identity_mismatch: return "identity_mismatch";
    case ViolationKind::trial_count_mismatch: return "trial_count_mismatch";
    case ViolationKind::duplicate_image_id: return "duplicate_image_id";
    case ViolationKind::duplicate_subject_id: return "duplicate_subject_id";
    case ViolationKind::unknown_subject: return "unknown_subject";
    case ViolationKind::unknown_image: return "unknown_image";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind k) const {
    std::size_t n = 0;
    for (const auto& v : violations) n += v.kind == k;
    return n;
  }
};

// Lists every violation; an empty report means the manifest and the files
// under root_dir agree. Throws DataError if root_dir is not a readable directory.
inline ValidationReport validate_manifest(const DatasetManifest& m, const std::filesystem::path& root_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root_dir, ec)) throw DataError("unreadable root directory " + root_dir.string());
  fs::directory_iterator probe(root_dir, ec);
  if (ec) throw DataError("unreadable root directory " + root_dir.string() + ": " + ec.message());

  ValidationReport report;
  auto add = [&](ViolationKind k, std::string d) { report.violations.push_back({k, std::move(d)}); };

  std::set<std::string> images;
  for (const auto& id : m.shared_image_ids)
    if (!images.insert(id).second) add(ViolationKind::duplicate_image_id, id);
  std::set<std::string> subjects;
  for (const auto& s : m.subjects)
    if (!subjects.insert(s.subject_id).second) add(ViolationKind::duplicate_subject_id, s.subject_id);

  std::map<std::pair<std::string, std::string>, std::uint64_t> counts;
  for (const auto& [key, rel] : m.sample_index) {
    const std::string label = key.subject_id + "/" + key.image_id + "/" + std::to_string(key.trial_index);
    if (!subjects.contains(key.subject_id)) add(ViolationKind::unknown_subject, label);
    if (!images.contains(key.image_id)) add(ViolationKind::unknown_image, label);
    ++counts[{key.subject_id, key.image_id}];

    const fs::path path = root_dir / rel;
    if (!fs::is_regular_file(path, ec)) {
      add(ViolationKind::missing_file, label + " -> " + path.string());
      continue;
    }
    FmriSample s;
    try {
      s = load_sample(path);
    } catch (const DataError& e) {
      add(ViolationKind::decode_error, label + ": " + e.what());
      continue;
    }
    if (s.vertex_count() != m.vertex_count)
      add(ViolationKind::vertex_mismatch,
          label + ": V=" + std::to_string(s.vertex_count()) + ", manifest V=" + std::to_string(m.vertex_count));
    if (key_of(s) != key) add(ViolationKind::identity_mismatch, label + ": file metadata disagrees with index");
  }

  for (const auto& s : m.subjects)
    for (const auto& img : images) {
      auto it = counts.find({s.subject_id, img});
      const std::uint64_t have = it == counts.end() ? 0 : it->second;
      if (have != s.trials_per_image)
        add(ViolationKind::trial_count_mismatch, s.subject_id + "/" + img + ": " + std::to_string(have) +
                                                     " trials, expected " + std::to_string(s.trials_per_image));
    }
  return report;
}

}  // namespace otfmri::signal
