#pragma once

// Synthetic paired ground truth for the enhancement and decoding stages.
//
// clean(s, i) = W_z z_i + W_c c_i + offset_s
// high trial  = clean + N(0, noise_sigma_high^2)
// low trial   = gain * blur(clean) + bias + N(0, noise_sigma_low^2)
//
// Everything is drawn from one seeded stream in a fixed order: latents z,
// latents c, encoding W_z, encoding W_c, low-subject offsets, high-subject
// offsets, high-tier trial noise, low-tier trial noise.

#include <fftw3.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "otfmri/core/json_util.hpp"
#include "otfmri/core/matrix_io.hpp"
#include "otfmri/core/rng.hpp"
#include "otfmri/signal/manifest.hpp"
#include "otfmri/signal/preprocess.hpp"

namespace otfmri::synth {

using signal::FmriSample;

struct DegradationSpec {
  double blur_fwhm_vertices = 4.0;  // 0 disables the blur
  double gain = 1.5;
  double bias = 0.5;
  double noise_sigma_low = 0.05;

  void validate() const {
    if (gain == 0.0 || !std::isfinite(gain)) throw ConfigError("degradation gain must be finite and nonzero");
    if (!(blur_fwhm_vertices >= 0.0)) throw ConfigError("blur_fwhm_vertices must be >= 0");
    if (!(noise_sigma_low >= 0.0)) throw ConfigError("noise_sigma_low must be >= 0");
    if (!std::isfinite(bias)) throw ConfigError("degradation bias must be finite");
  }
};

struct SynthConfig {
  std::size_t vertex_count = 1024;
  std::size_t n_images = 70;
  std::size_t n_subjects_low = 9;
  std::size_t n_subjects_high = 8;
  std::size_t trials_per_image_low = 10;
  std::size_t trials_per_image_high = 3;
  std::size_t latent_dim_visual = 16;
  std::size_t latent_dim_semantic = 8;
  std::uint64_t encoding_seed = 1;
  double noise_sigma_high = 0.05;
  double subject_offset_sigma = 0.1;
  double encoding_fwhm_vertices = 16.0;  // spatial smoothness of the encoding maps; 0 = white
  DegradationSpec degradation;

  void validate() const {
    if (vertex_count == 0 || n_images == 0 || n_subjects_low == 0 || n_subjects_high == 0 ||
        trials_per_image_low == 0 || trials_per_image_high == 0 || latent_dim_visual == 0 || latent_dim_semantic == 0)
      throw ConfigError("synth counts must all be positive");
    if (!(noise_sigma_high >= 0.0) || !(subject_offset_sigma >= 0.0) || !(encoding_fwhm_vertices >= 0.0))
      throw ConfigError("synth noise sigmas and smoothness must be >= 0");
    degradation.validate();
  }
};

using MatF = std::vector<float>;  // row-major storage helper

struct GroundTruth {
  std::size_t vertex_count = 0;
  std::size_t dim_visual = 0;
  std::size_t dim_semantic = 0;
  std::vector<std::string> image_ids;
  std::vector<std::string> subject_ids;  // low subjects first, then high
  MatF latent_visual;                    // n_images x d_z
  MatF latent_semantic;                  // n_images x d_c
  MatF encoding_visual;                  // 2V x d_z
  MatF encoding_semantic;                // 2V x d_c
  MatF subject_offsets;                  // n_subjects x 2V
  DegradationSpec degradation;

  std::size_t feature_dim() const { return 2 * vertex_count; }

  std::size_t image_index(const std::string& id) const {
    for (std::size_t i = 0; i < image_ids.size(); ++i)
      if (image_ids[i] == id) return i;
    throw DataError("unknown image id " + id);
  }

  std::size_t subject_index(const std::string& id) const {
    for (std::size_t i = 0; i < subject_ids.size(); ++i)
      if (subject_ids[i] == id) return i;
    throw DataError("unknown subject id " + id);
  }

  // W_z z + W_c c as a 2V vector, without the subject offset.
  std::vector<double> encoded(std::span<const float> z, std::span<const float> c) const {
    const std::size_t f = feature_dim();
    std::vector<double> out(f, 0.0);
    for (std::size_t r = 0; r < f; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dim_visual; ++k) acc += double(encoding_visual[r * dim_visual + k]) * z[k];
      for (std::size_t k = 0; k < dim_semantic; ++k) acc += double(encoding_semantic[r * dim_semantic + k]) * c[k];
      out[r] = acc;
    }
    return out;
  }

  std::span<const float> visual(std::size_t image) const { return {latent_visual.data() + image * dim_visual, dim_visual}; }
  std::span<const float> semantic(std::size_t image) const {
    return {latent_semantic.data() + image * dim_semantic, dim_semantic};
  }

  FmriSample clean(const std::string& subject, const std::string& image) const {
    const std::size_t s = subject_index(subject), i = image_index(image);
    const auto e = encoded(visual(i), semantic(i));
    FmriSample out(subject, image, 0, vertex_count);
    for (std::size_t r = 0; r < feature_dim(); ++r)
      out.channels[r / vertex_count][r % vertex_count] =
          static_cast<float>(e[r] + double(subject_offsets[s * feature_dim() + r]));
    return out;
  }
};

struct SynthDataset {
  signal::DatasetManifest low_manifest;
  signal::DatasetManifest high_manifest;
  std::vector<FmriSample> low_samples;   // manifest order
  std::vector<FmriSample> high_samples;
  GroundTruth truth;
};

inline FmriSample degrade(const FmriSample& clean, const DegradationSpec& spec, Rng* rng) {
  FmriSample out = spec.blur_fwhm_vertices > 0.0 ? signal::smooth_spatial(clean, spec.blur_fwhm_vertices) : clean;
  for (auto& ch : out.channels)
    for (auto& v : ch) {
      double x = spec.gain * double(v) + spec.bias;
      if (rng && spec.noise_sigma_low > 0.0) x += rng->normal() * spec.noise_sigma_low;
      v = static_cast<float>(x);
    }
  return out;
}

namespace detail {

inline std::string numbered(const std::string& prefix, std::size_t i, std::size_t count) {
  const int width = std::max(2, static_cast<int>(std::to_string(count).size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i + 1);
  return prefix + buf;
}

// One column per latent dimension: smoothed white noise per hemisphere,
// scaled to unit RMS and then by 1/sqrt(total latent dims).
inline MatF encoding_matrix(std::size_t vertices, std::size_t dims, std::size_t total_dims, double fwhm, Rng& rng) {
  const std::size_t f = 2 * vertices;
  MatF w(f * dims);
  std::vector<float> col(f);
  for (std::size_t k = 0; k < dims; ++k) {
    for (auto& v : col) v = static_cast<float>(rng.normal());
    if (fwhm > 0.0)
      for (std::size_t h = 0; h < 2; ++h) {
        auto sm = signal::gaussian_smooth(std::span<const float>(col.data() + h * vertices, vertices), fwhm);
        std::copy(sm.begin(), sm.end(), col.begin() + static_cast<std::ptrdiff_t>(h * vertices));
      }
    double ss = 0.0;
    for (float v : col) ss += double(v) * v;
    const double scale = 1.0 / (std::sqrt(ss / static_cast<double>(f)) * std::sqrt(static_cast<double>(total_dims)));
    for (std::size_t r = 0; r < f; ++r) w[r * dims + k] = static_cast<float>(col[r] * scale);
  }
  return w;
}

}  // namespace detail

inline SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.encoding_seed);
  SynthDataset ds;
  GroundTruth& gt = ds.truth;
  const std::size_t v = cfg.vertex_count, f = 2 * v;
  gt.vertex_count = v;
  gt.dim_visual = cfg.latent_dim_visual;
  gt.dim_semantic = cfg.latent_dim_semantic;
  gt.degradation = cfg.degradation;
  for (std::size_t i = 0; i < cfg.n_images; ++i) gt.image_ids.push_back(detail::numbered("img", i, cfg.n_images));
  std::vector<std::string> low_ids, high_ids;
  for (std::size_t s = 0; s < cfg.n_subjects_low; ++s) low_ids.push_back(detail::numbered("low-sub", s, cfg.n_subjects_low));
  for (std::size_t s = 0; s < cfg.n_subjects_high; ++s)
    high_ids.push_back(detail::numbered("high-sub", s, cfg.n_subjects_high));
  gt.subject_ids = low_ids;
  gt.subject_ids.insert(gt.subject_ids.end(), high_ids.begin(), high_ids.end());

  gt.latent_visual.resize(cfg.n_images * gt.dim_visual);
  for (auto& x : gt.latent_visual) x = static_cast<float>(rng.normal());
  gt.latent_semantic.resize(cfg.n_images * gt.dim_semantic);
  for (auto& x : gt.latent_semantic) x = static_cast<float>(rng.normal());
  const std::size_t total_dims = gt.dim_visual + gt.dim_semantic;
  gt.encoding_visual = detail::encoding_matrix(v, gt.dim_visual, total_dims, cfg.encoding_fwhm_vertices, rng);
  gt.encoding_semantic = detail::encoding_matrix(v, gt.dim_semantic, total_dims, cfg.encoding_fwhm_vertices, rng);
  gt.subject_offsets.resize(gt.subject_ids.size() * f);
  for (auto& x : gt.subject_offsets) x = static_cast<float>(rng.normal() * cfg.subject_offset_sigma);

  auto make_manifest = [&](const std::string& name, signal::QualityTier tier, const std::vector<std::string>& ids,
                           std::size_t trials) {
    signal::DatasetManifest m;
    m.name = name;
    m.quality_tier = tier;
    m.vertex_count = v;
    for (const auto& id : ids) m.subjects.push_back({id, trials});
    m.shared_image_ids = gt.image_ids;
    return m;
  };
  ds.low_manifest = make_manifest("synth-low", signal::QualityTier::low, low_ids, cfg.trials_per_image_low);
  ds.high_manifest = make_manifest("synth-high", signal::QualityTier::high, high_ids, cfg.trials_per_image_high);

  auto path_for = [](const FmriSample& s) {
    return s.subject_id + "/" + s.image_id + "_t" + std::to_string(s.trial_index) + ".otf";
  };

  for (const auto& subj : high_ids)
    for (const auto& img : gt.image_ids) {
      const FmriSample clean = gt.clean(subj, img);
      for (std::size_t t = 0; t < cfg.trials_per_image_high; ++t) {
        FmriSample s = clean;
        s.trial_index = t;
        for (auto& ch : s.channels)
          for (auto& x : ch) x = static_cast<float>(double(x) + rng.normal() * cfg.noise_sigma_high);
        ds.high_manifest.sample_index.emplace(signal::key_of(s), path_for(s));
        ds.high_samples.push_back(std::move(s));
      }
    }
  for (const auto& subj : low_ids)
    for (const auto& img : gt.image_ids) {
      const FmriSample clean = gt.clean(subj, img);
      for (std::size_t t = 0; t < cfg.trials_per_image_low; ++t) {
        FmriSample s = degrade(clean, cfg.degradation, &rng);
        s.trial_index = t;
        ds.low_manifest.sample_index.emplace(signal::key_of(s), path_for(s));
        ds.low_samples.push_back(std::move(s));
      }
    }
  return ds;
}

// ---- serialization ----------------------------------------------------------

inline json to_json(const DegradationSpec& d) {
  return {{"blur_fwhm_vertices", d.blur_fwhm_vertices},
          {"gain", d.gain},
          {"bias", d.bias},
          {"noise_sigma_low", d.noise_sigma_low}};
}

template <class Err = ConfigError>
DegradationSpec degradation_from_json(const json& j) {
  constexpr std::string_view ctx = "degradation";
  jsonutil::check_keys<Err>(j, {}, {"blur_fwhm_vertices", "gain", "bias", "noise_sigma_low"}, ctx);
  DegradationSpec d;
  if (j.contains("blur_fwhm_vertices")) d.blur_fwhm_vertices = jsonutil::get<double, Err>(j, "blur_fwhm_vertices", ctx);
  if (j.contains("gain")) d.gain = jsonutil::get<double, Err>(j, "gain", ctx);
  if (j.contains("bias")) d.bias = jsonutil::get<double, Err>(j, "bias", ctx);
  if (j.contains("noise_sigma_low")) d.noise_sigma_low = jsonutil::get<double, Err>(j, "noise_sigma_low", ctx);
  return d;
}

inline json to_json(const SynthConfig& c) {
  return {{"vertex_count", c.vertex_count},
          {"n_images", c.n_images},
          {"n_subjects_low", c.n_subjects_low},
          {"n_subjects_high", c.n_subjects_high},
          {"trials_per_image_low", c.trials_per_image_low},
          {"trials_per_image_high", c.trials_per_image_high},
          {"latent_dim_visual", c.latent_dim_visual},
          {"latent_dim_semantic", c.latent_dim_semantic},
          {"encoding_seed", c.encoding_seed},
          {"noise_sigma_high", c.noise_sigma_high},
          {"subject_offset_sigma", c.subject_offset_sigma},
          {"encoding_fwhm_vertices", c.encoding_fwhm_vertices},
          {"degradation", to_json(c.degradation)}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline SynthConfig synth_config_from_json(const json& j) {
  constexpr std::string_view ctx = "synth config";
  jsonutil::check_keys<ConfigError>(
      j, {},
      {"vertex_count", "n_images", "n_subjects_low", "n_subjects_high", "trials_per_image_low", "trials_per_image_high",
       "latent_dim_visual", "latent_dim_semantic", "encoding_seed", "noise_sigma_high", "subject_offset_sigma",
       "encoding_fwhm_vertices", "degradation"},
      ctx);
  SynthConfig c;
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = jsonutil::get<std::decay_t<decltype(field)>, ConfigError>(j, key, ctx);
  };
  opt("vertex_count", c.vertex_count);
  opt("n_images", c.n_images);
  opt("n_subjects_low", c.n_subjects_low);
  opt("n_subjects_high", c.n_subjects_high);
  opt("trials_per_image_low", c.trials_per_image_low);
  opt("trials_per_image_high", c.trials_per_image_high);
  opt("latent_dim_visual", c.latent_dim_visual);
  opt("latent_dim_semantic", c.latent_dim_semantic);
  opt("encoding_seed", c.encoding_seed);
  opt("noise_sigma_high", c.noise_sigma_high);
  opt("subject_offset_sigma", c.subject_offset_sigma);
  opt("encoding_fwhm_vertices", c.encoding_fwhm_vertices);
  if (j.contains("degradation")) c.degradation = degradation_from_json(j.at("degradation"));
  c.validate();
  return c;
}

// truth/index.json plus one float32 matrix per array. The latent matrices are
// also valid regression target files (rows labelled by image id).
inline void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto save = [&](const std::string& name, std::size_t rows, std::size_t cols, const MatF& values,
                  std::optional<std::vector<std::string>> ids = std::nullopt) {
    io::save_matrix({rows, cols, values, std::move(ids)}, dir / (name + ".json"));
    return name + ".json";
  };
  json j{{"vertex_count", gt.vertex_count},
         {"image_ids", gt.image_ids},
         {"subject_ids", gt.subject_ids},
         {"degradation", to_json(gt.degradation)},
         {"latent_visual", save("latent_visual", gt.image_ids.size(), gt.dim_visual, gt.latent_visual, gt.image_ids)},
         {"latent_semantic",
          save("latent_semantic", gt.image_ids.size(), gt.dim_semantic, gt.latent_semantic, gt.image_ids)},
         {"encoding_visual", save("encoding_visual", gt.feature_dim(), gt.dim_visual, gt.encoding_visual)},
         {"encoding_semantic", save("encoding_semantic", gt.feature_dim(), gt.dim_semantic, gt.encoding_semantic)},
         {"subject_offsets", save("subject_offsets", gt.subject_ids.size(), gt.feature_dim(), gt.subject_offsets)}};
  jsonutil::save(dir / "index.json", j);
}

inline GroundTruth load_ground_truth(const std::filesystem::path& dir) {
  const json j = jsonutil::load(dir / "index.json");
  const std::string ctx = (dir / "index.json").string();
  jsonutil::check_keys(j,
                       {"vertex_count", "image_ids", "subject_ids", "degradation", "latent_visual", "latent_semantic",
                        "encoding_visual", "encoding_semantic", "subject_offsets"},
                       {}, ctx);
  GroundTruth gt;
  gt.vertex_count = jsonutil::get<std::size_t>(j, "vertex_count", ctx);
  gt.image_ids = jsonutil::get<std::vector<std::string>>(j, "image_ids", ctx);
  gt.subject_ids = jsonutil::get<std::vector<std::string>>(j, "subject_ids", ctx);
  gt.degradation = degradation_from_json<DataError>(j.at("degradation"));
  auto load = [&](const char* key, std::size_t rows, std::size_t cols) {
    auto m = io::load_matrix(dir / jsonutil::get<std::string>(j, key, ctx));
    if (m.rows != rows || (cols != 0 && m.cols != cols))
      throw DataError(ctx + ": matrix '" + key + "' has unexpected shape");
    return m;
  };
  const std::size_t f = 2 * gt.vertex_count;
  auto zv = load("latent_visual", gt.image_ids.size(), 0);
  auto zc = load("latent_semantic", gt.image_ids.size(), 0);
  gt.dim_visual = zv.cols;
  gt.dim_semantic = zc.cols;
  gt.latent_visual = std::move(zv.values);
  gt.latent_semantic = std::move(zc.values);
  gt.encoding_visual = load("encoding_visual", f, gt.dim_visual).values;
  gt.encoding_semantic = load("encoding_semantic", f, gt.dim_semantic).values;
  gt.subject_offsets = load("subject_offsets", gt.subject_ids.size(), f).values;
  return gt;
}

// Writes <dir>/low/, <dir>/high/ (manifest.json + sample files) and <dir>/truth/.
inline void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
  auto write_tier = [&](const signal::DatasetManifest& m, const std::vector<FmriSample>& samples,
                        const std::filesystem::path& root) {
    std::filesystem::create_directories(root);
    for (const auto& s : samples) signal::save_sample(s, root / m.sample_index.at(signal::key_of(s)));
    signal::save_manifest(m, root / "manifest.json");
  };
  write_tier(ds.low_manifest, ds.low_samples, dir / "low");
  write_tier(ds.high_manifest, ds.high_samples, dir / "high");
  save_ground_truth(ds.truth, dir / "truth");
}

// ---- oracle inverse -----------------------------------------------------------

namespace detail {

// Real DFT of the blur kernel on the 2V-periodic symmetric extension. The
// kernel is symmetric, so the spectrum is real.
inline std::vector<double> blur_spectrum(std::size_t vertices, double fwhm) {
  const std::size_t n = 2 * vertices, bins = n / 2 + 1;
  const auto w = signal::gaussian_kernel(fwhm);
  const auto radius = static_cast<std::ptrdiff_t>(w.size() / 2);
  std::vector<double> spec(bins);
  for (std::size_t f = 0; f < bins; ++f) {
    double acc = 0.0;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k)
      acc += w[static_cast<std::size_t>(k + radius)] *
             std::cos(2.0 * std::numbers::pi * double(f) * double(k) / double(n));
    spec[f] = acc;
  }
  return spec;
}

}  // namespace detail

inline constexpr double kDeconvEpsilon = 1e-3;

// Inverse of the affine part followed by Tikhonov-regularized deconvolution
// X = H Y / (H^2 + eps) on the symmetric extension.
inline FmriSample oracle_enhance(const FmriSample& sample, const DegradationSpec& spec) {
  spec.validate();
  sample.validate();
  const std::size_t v = sample.vertex_count();
  FmriSample out = sample;
  for (auto& ch : out.channels)
    for (auto& x : ch) x = static_cast<float>((double(x) - spec.bias) / spec.gain);
  if (spec.blur_fwhm_vertices <= 0.0) return out;

  const std::size_t n = 2 * v, bins = n / 2 + 1;
  const auto h = detail::blur_spectrum(v, spec.blur_fwhm_vertices);
  std::vector<double> ext(n);
  std::vector<fftw_complex> freq(bins);
  fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), ext.data(), freq.data(), FFTW_ESTIMATE);
  fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), freq.data(), ext.data(), FFTW_ESTIMATE);
  for (auto& ch : out.channels) {
    for (std::size_t i = 0; i < v; ++i) {
      ext[i] = ch[i];
      ext[n - 1 - i] = ch[i];
    }
    fftw_execute(fwd);
    for (std::size_t f = 0; f < bins; ++f) {
      const double g = h[f] / (h[f] * h[f] + kDeconvEpsilon);
      freq[f][0] *= g;
      freq[f][1] *= g;
    }
    fftw_execute(inv);
    for (std::size_t i = 0; i < v; ++i) ch[i] = static_cast<float>(ext[i] / static_cast<double>(n));
  }
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
  return out;
}

// Operator-norm bound of the oracle map on additive noise: ||oracle(y + n) -
// oracle(y)||_2 <= oracle_noise_gain * ||n||_2.
inline double oracle_noise_gain(std::size_t vertices, const DegradationSpec& spec) {
  double g = 1.0;
  if (spec.blur_fwhm_vertices > 0.0) {
    g = 0.0;
    for (double hf : detail::blur_spectrum(vertices, spec.blur_fwhm_vertices))
      g = std::max(g, std::abs(hf) / (hf * hf + kDeconvEpsilon));
  }
  return g / std::abs(spec.gain);
}

}  // namespace otfmri::synth
