#include <gtest/gtest.h>

#include "otfmri/synth/synthgen.hpp"
#include "test_util.hpp"

using namespace otfmri;
using namespace otfmri::synth;

namespace {

SynthConfig tiny(std::size_t v = 64) {
  SynthConfig c;
  c.vertex_count = v;
  c.n_images = 3;
  c.n_subjects_low = 2;
  c.n_subjects_high = 2;
  c.trials_per_image_low = 2;
  c.trials_per_image_high = 1;
  return c;
}

double rel_l2(const FmriSample& a, const FmriSample& b) {
  double d = 0, n = 0;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < a.vertex_count(); ++i) {
      d += std::pow(double(a.channels[c][i]) - b.channels[c][i], 2);
      n += std::pow(double(b.channels[c][i]), 2);
    }
  return std::sqrt(d / n);
}

double l2(const FmriSample& a, const FmriSample& b) {
  double d = 0;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < a.vertex_count(); ++i) d += std::pow(double(a.channels[c][i]) - b.channels[c][i], 2);
  return std::sqrt(d);
}

}  // namespace

TEST(Synth, PaperShapedCounts) {
  SynthConfig c;
  c.vertex_count = 8;
  const auto ds = generate(c);
  EXPECT_EQ(ds.low_manifest.sample_index.size(), 6300u);
  EXPECT_EQ(ds.high_manifest.sample_index.size(), 1680u);
  EXPECT_EQ(ds.low_manifest.expected_sample_count(), 6300u);
  EXPECT_EQ(ds.high_manifest.expected_sample_count(), 1680u);
  EXPECT_EQ(ds.low_manifest.shared_image_ids, ds.high_manifest.shared_image_ids);
  EXPECT_EQ(ds.low_samples.size(), 6300u);
}

TEST(Synth, IdentityDegradationReproducesClean) {
  auto c = tiny();
  c.noise_sigma_high = 0;
  c.degradation = {0.0, 1.0, 0.0, 0.0};
  const auto ds = generate(c);
  for (const auto& s : ds.low_samples) {
    auto clean = ds.truth.clean(s.subject_id, s.image_id);
    clean.trial_index = s.trial_index;
    EXPECT_EQ(s, clean);
  }
  for (const auto& s : ds.high_samples) {
    auto clean = ds.truth.clean(s.subject_id, s.image_id);
    clean.trial_index = s.trial_index;
    EXPECT_EQ(s, clean);
  }
}

TEST(Synth, AffineDegradationIsExact) {
  auto c = tiny();
  c.degradation = {0.0, 2.0, 1.0, 0.0};
  const auto ds = generate(c);
  for (const auto& s : ds.low_samples) {
    const auto clean = ds.truth.clean(s.subject_id, s.image_id);
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t i = 0; i < s.vertex_count(); ++i)
        EXPECT_EQ(s.channels[ch][i], static_cast<float>(2.0 * double(clean.channels[ch][i]) + 1.0));
  }
}

TEST(Synth, MarginalMeanShiftIsAffine) {
  auto c = tiny(128);
  c.degradation = {4.0, 1.5, 0.5, 0.0};
  const auto ds = generate(c);
  for (const auto& s : ds.low_samples) {
    const auto clean = ds.truth.clean(s.subject_id, s.image_id);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      double a = 0, b = 0;
      for (std::size_t i = 0; i < s.vertex_count(); ++i) {
        a += s.channels[ch][i];
        b += clean.channels[ch][i];
      }
      EXPECT_NEAR(a / 128, 1.5 * b / 128 + 0.5, 1e-5);
    }
  }
}

TEST(Synth, SameSeedSameBytes) {
  testutil::TempDir a("synth_a"), b("synth_b");
  write_dataset(generate(tiny()), a.path);
  write_dataset(generate(tiny()), b.path);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a.path);
    ASSERT_TRUE(std::filesystem::exists(b.path / rel)) << rel;
    EXPECT_EQ(io::read_file(e.path()), io::read_file(b.path / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 20u);
  auto other = tiny();
  other.encoding_seed = 2;
  EXPECT_NE(generate(other).low_samples[0], generate(tiny()).low_samples[0]);
}

TEST(Synth, GroundTruthRoundTrip) {
  testutil::TempDir dir("truth");
  const auto ds = generate(tiny());
  save_ground_truth(ds.truth, dir.path);
  const auto gt = load_ground_truth(dir.path);
  EXPECT_EQ(gt.image_ids, ds.truth.image_ids);
  EXPECT_EQ(gt.subject_ids, ds.truth.subject_ids);
  EXPECT_EQ(gt.latent_visual, ds.truth.latent_visual);
  EXPECT_EQ(gt.encoding_semantic, ds.truth.encoding_semantic);
  EXPECT_EQ(gt.subject_offsets, ds.truth.subject_offsets);
  EXPECT_EQ(gt.clean("low-sub01", "img02"), ds.truth.clean("low-sub01", "img02"));
}

TEST(Synth, ConfigJsonStrict) {
  auto j = to_json(tiny());
  const auto back = synth_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  j["unknown"] = 1;
  EXPECT_THROW(synth_config_from_json(j), ConfigError);
  j.erase("unknown");
  j["degradation"]["gain"] = 0.0;
  EXPECT_THROW(synth_config_from_json(j), ConfigError);
}

TEST(Oracle, ExactAffineInverseWithoutBlur) {
  auto c = tiny(256);
  c.degradation = {0.0, 1.5, 0.5, 0.0};
  const auto ds = generate(c);
  for (const auto& s : ds.low_samples) {
    auto clean = ds.truth.clean(s.subject_id, s.image_id);
    EXPECT_LE(rel_l2(oracle_enhance(s, c.degradation), clean), 1e-5);
  }
}

TEST(Oracle, DeconvolvesBlurWithinOnePercent) {
  // Band-limited clean signal: no per-vertex white subject offsets.
  auto c = tiny(1024);
  c.subject_offset_sigma = 0.0;
  c.degradation = {8.0, 1.5, 0.5, 0.0};
  const auto ds = generate(c);
  double worst = 0;
  for (const auto& s : ds.low_samples)
    worst = std::max(worst, rel_l2(oracle_enhance(s, c.degradation), ds.truth.clean(s.subject_id, s.image_id)));
  EXPECT_LE(worst, 0.01);
}

TEST(Oracle, WhiteSubjectOffsetsSetAnErrorFloor) {
  // Offsets above the regularized cutoff are lost; measured floor 0.112.
  auto c = tiny(1024);
  c.degradation = {8.0, 1.5, 0.5, 0.0};
  const auto ds = generate(c);
  double worst = 0;
  for (const auto& s : ds.low_samples)
    worst = std::max(worst, rel_l2(oracle_enhance(s, c.degradation), ds.truth.clean(s.subject_id, s.image_id)));
  EXPECT_NEAR(worst, 0.112, 0.005);
}

TEST(Oracle, NoiseAmplificationBoundedByFilterGain) {
  auto c = tiny(512);
  c.degradation = {8.0, 1.5, 0.5, 0.1};
  const auto ds = generate(c);
  const double gain = oracle_noise_gain(512, c.degradation);
  EXPECT_GT(gain, 1.0 / 1.5);
  auto quiet = c.degradation;
  quiet.noise_sigma_low = 0.0;
  for (const auto& s : ds.low_samples) {
    const auto clean = ds.truth.clean(s.subject_id, s.image_id);
    const auto noiseless = degrade(clean, quiet, nullptr);
    const double noise = l2(s, noiseless);
    const double err = l2(oracle_enhance(s, c.degradation), oracle_enhance(noiseless, c.degradation));
    EXPECT_LE(err, gain * noise * (1 + 1e-4) + 1e-4);
  }
}
