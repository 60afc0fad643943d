#pragma once

// Unpaired train/test partition across a low-quality and a high-quality dataset.

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "otfmri/signal/manifest.hpp"

namespace otfmri::signal {

struct SplitSpec {
  std::vector<std::string> train_subjects_low;
  std::vector<std::string> train_subjects_high;
  std::vector<std::string> test_subjects_low;
};

struct SampleRef {
  SampleKey key;
  std::string path;  // relative to the owning manifest's root
};

struct Split {
  std::vector<std::string> image_ids;  // shared by both manifests, sorted
  std::vector<SampleRef> train_low;    // unpaired source side
  std::vector<SampleRef> train_high;   // unpaired target side
  std::vector<SampleRef> test_low;
};

namespace detail {

inline std::vector<SampleRef> collect(const DatasetManifest& m, const std::vector<std::string>& subjects,
                                      const std::set<std::string>& images) {
  const std::set<std::string> wanted(subjects.begin(), subjects.end());
  std::vector<SampleRef> out;
  for (const auto& [key, path] : m.sample_index)  // std::map order: subject, image, trial
    if (wanted.contains(key.subject_id) && images.contains(key.image_id)) out.push_back({key, path});
  return out;
}

inline void require_subjects(const DatasetManifest& m, const std::vector<std::string>& ids, const char* role) {
  for (const auto& id : ids)
    if (!m.find_subject(id)) throw ConfigError(std::string(role) + " subject '" + id + "' not in manifest " + m.name);
}

}  // namespace detail

// Restricts both datasets to the intersection of their shared image ids.
inline Split make_split(const DatasetManifest& low, const DatasetManifest& high, const SplitSpec& spec) {
  detail::require_subjects(low, spec.train_subjects_low, "train_subjects_low");
  detail::require_subjects(high, spec.train_subjects_high, "train_subjects_high");
  detail::require_subjects(low, spec.test_subjects_low, "test_subjects_low");

  std::set<std::string> train(spec.train_subjects_low.begin(), spec.train_subjects_low.end());
  train.insert(spec.train_subjects_high.begin(), spec.train_subjects_high.end());
  for (const auto& t : spec.test_subjects_low)
    if (train.contains(t)) throw ConfigError("test subject '" + t + "' also appears in a training role");

  if (low.vertex_count != high.vertex_count)
    throw ConfigError("manifests disagree on vertex_count: " + std::to_string(low.vertex_count) + " vs " +
                      std::to_string(high.vertex_count));

  const std::set<std::string> a(low.shared_image_ids.begin(), low.shared_image_ids.end());
  const std::set<std::string> b(high.shared_image_ids.begin(), high.shared_image_ids.end());
  std::set<std::string> shared;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(shared, shared.end()));
  if (shared.empty()) throw ConfigError("manifests share no image ids");

  Split s;
  s.image_ids.assign(shared.begin(), shared.end());
  s.train_low = detail::collect(low, spec.train_subjects_low, shared);
  s.train_high = detail::collect(high, spec.train_subjects_high, shared);
  s.test_low = detail::collect(low, spec.test_subjects_low, shared);
  return s;
}

inline std::vector<FmriSample> load_samples(const std::filesystem::path& root, const std::vector<SampleRef>& refs) {
  std::vector<FmriSample> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back(load_sample(root / r.path));
  return out;
}

}  // namespace otfmri::signal
