#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <numbers>

#include "otfmri/signal/manifest.hpp"
#include "otfmri/signal/preprocess.hpp"
#include "otfmri/signal/split.hpp"
#include "otfmri/synth/synthgen.hpp"
#include "test_util.hpp"

using namespace otfmri;
using namespace otfmri::signal;

namespace {

FmriSample random_sample(std::size_t v, Rng& rng, std::string subject = "s1", std::string image = "img1",
                         std::uint64_t trial = 0) {
  FmriSample s(std::move(subject), std::move(image), trial, v);
  for (auto& c : s.channels)
    for (auto& x : c) x = static_cast<float>(rng.normal());
  return s;
}

synth::SynthConfig small_config() {
  synth::SynthConfig c;
  c.vertex_count = 32;
  c.n_images = 4;
  c.n_subjects_low = 3;
  c.n_subjects_high = 2;
  c.trials_per_image_low = 2;
  c.trials_per_image_high = 1;
  return c;
}

}  // namespace

// ---- sample files ---------------------------------------------------------------

TEST(SampleFile, RoundTripIsBitExact) {
  Rng rng(1);
  testutil::TempDir dir("sample");
  for (int rep = 0; rep < 20; ++rep) {
    auto s = random_sample(1 + rng.index(1500), rng, "sub-" + std::to_string(rep), "im", rng.index(9));
    s.channels[1][0] = -0.0f;
    s.channels[0][0] = 1e-40f;  // subnormal
    const auto path = dir.path / "x.otf";
    save_sample(s, path);
    const auto back = load_sample(path);
    EXPECT_EQ(back, s);
    EXPECT_EQ(encode_sample(back), io::read_file(path));
    EXPECT_EQ(std::signbit(back.channels[1][0]), true);
  }
}

TEST(SampleFile, FullResolutionSizeMatchesLayout) {
  FmriSample s("sub01", "img01", 2, 32492);
  const auto bytes = encode_sample(s);
  const std::string meta = R"({"image_id":"img01","subject_id":"sub01","trial_index":2})";
  EXPECT_EQ(bytes.size(), 16u + 8u + 2u * 32492u * 4u + 8u + meta.size());
  EXPECT_EQ(bytes.size(), encoded_sample_size(s));
  EXPECT_EQ(decode_sample(bytes).vertex_count(), 32492u);
}

TEST(SampleFile, TruncatedPayloadReportsOffset) {
  Rng rng(2);
  const auto bytes = encode_sample(random_sample(64, rng));
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 16 + 8 + 100);
  try {
    decode_sample(cut);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.offset(), cut.size());
  }
}

TEST(SampleFile, BadMagicAndReservedRejected) {
  Rng rng(3);
  auto bytes = encode_sample(random_sample(4, rng));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_sample(bad), DecodeError);
  bad = bytes;
  bad[9] = 1;
  try {
    decode_sample(bad);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.offset(), 9u);
  }
}

TEST(SampleFile, NonFiniteValueReportsOffset) {
  Rng rng(4);
  auto bytes = encode_sample(random_sample(8, rng));
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const std::size_t at = 16 + 8 + (8 + 3) * 4;  // channel 1, vertex 3
  std::memcpy(bytes.data() + at, &nan, 4);
  try {
    decode_sample(bytes);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.offset(), at);
  }
  FmriSample s("a", "b", 0, 2);
  s.channels[0][1] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(encode_sample(s), DataError);
}

TEST(SampleFile, TrailingBytesAndBadMetadataRejected) {
  Rng rng(5);
  auto bytes = encode_sample(random_sample(4, rng));
  auto bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_sample(bad), DecodeError);

  FmriSample s = random_sample(4, rng);
  io::Writer w;
  w.put_bytes(std::string_view("OTF1"));
  for (int i = 0; i < 12; ++i) w.put<std::uint8_t>(0);
  w.put<std::uint64_t>(4);
  for (const auto& c : s.channels) w.put_f32(c);
  w.put_string(R"({"subject_id":"a","image_id":"b","trial_index":0,"extra":1})");
  EXPECT_THROW(decode_sample(w.bytes()), DecodeError);
}

// ---- manifests ----------------------------------------------------------------

TEST(Manifest, PaperShapedCounts) {
  DatasetManifest low, high;
  for (int i = 0; i < 70; ++i) {
    low.shared_image_ids.push_back("img" + std::to_string(i));
    high.shared_image_ids.push_back("img" + std::to_string(i));
  }
  for (int s = 0; s < 9; ++s) low.subjects.push_back({"l" + std::to_string(s), 10});
  for (int s = 0; s < 8; ++s) high.subjects.push_back({"h" + std::to_string(s), 3});
  EXPECT_EQ(low.expected_sample_count(), 6300u);
  EXPECT_EQ(high.expected_sample_count(), 1680u);
}

TEST(Manifest, GeneratedDatasetValidatesClean) {
  testutil::TempDir dir("manifest");
  const auto ds = synth::generate(small_config());
  synth::write_dataset(ds, dir.path);
  const auto low = load_manifest(dir.path / "low" / "manifest.json");
  EXPECT_EQ(low, ds.low_manifest);
  EXPECT_TRUE(validate_manifest(low, dir.path / "low").ok());
  EXPECT_TRUE(validate_manifest(ds.high_manifest, dir.path / "high").ok());
}

TEST(Manifest, DeletedFileGivesExactlyOneViolation) {
  testutil::TempDir dir("manifest_del");
  const auto ds = synth::generate(small_config());
  synth::write_dataset(ds, dir.path);
  std::filesystem::remove(dir.path / "low" / ds.low_manifest.sample_index.begin()->second);
  const auto r = validate_manifest(ds.low_manifest, dir.path / "low");
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::missing_file);
}

TEST(Manifest, DuplicateImageIdReported) {
  testutil::TempDir dir("manifest_dup");
  const auto ds = synth::generate(small_config());
  synth::write_dataset(ds, dir.path);
  auto m = ds.high_manifest;
  m.shared_image_ids.push_back(m.shared_image_ids.front());
  EXPECT_EQ(validate_manifest(m, dir.path / "high").count(ViolationKind::duplicate_image_id), 1u);
}

TEST(Manifest, VertexAndTrialMismatchesReported) {
  testutil::TempDir dir("manifest_v");
  const auto ds = synth::generate(small_config());
  synth::write_dataset(ds, dir.path);
  auto m = ds.low_manifest;
  m.vertex_count = 31;
  EXPECT_EQ(validate_manifest(m, dir.path / "low").count(ViolationKind::vertex_mismatch), m.sample_index.size());
  m = ds.low_manifest;
  m.subjects[0].trials_per_image = 3;
  EXPECT_EQ(validate_manifest(m, dir.path / "low").count(ViolationKind::trial_count_mismatch), 4u);
}

TEST(Manifest, UnreadableRootThrows) {
  DatasetManifest m;
  EXPECT_THROW(validate_manifest(m, "/nonexistent/otfmri/root"), DataError);
}

TEST(Manifest, JsonIsStrict) {
  const auto ds = synth::generate(small_config());
  auto j = to_json(ds.low_manifest);
  EXPECT_EQ(manifest_from_json(j), ds.low_manifest);
  j["surprise"] = true;
  EXPECT_THROW(manifest_from_json(j), DataError);
}

// ---- split --------------------------------------------------------------------

TEST(Split, PaperShapedPoolSizes) {
  DatasetManifest low, high;
  low.vertex_count = high.vertex_count = 8;
  for (int i = 0; i < 70; ++i) {
    low.shared_image_ids.push_back("img" + std::to_string(i));
    high.shared_image_ids.push_back("img" + std::to_string(i));
  }
  SplitSpec spec;
  for (int s = 0; s < 9; ++s) {
    const std::string id = "l" + std::to_string(s);
    low.subjects.push_back({id, 10});
    for (int i = 0; i < 70; ++i)
      for (int t = 0; t < 10; ++t) low.sample_index[{id, "img" + std::to_string(i), std::uint64_t(t)}] = "x";
    (s < 8 ? spec.train_subjects_low : spec.test_subjects_low).push_back(id);
  }
  for (int s = 0; s < 8; ++s) {
    const std::string id = "h" + std::to_string(s);
    high.subjects.push_back({id, 3});
    for (int i = 0; i < 70; ++i)
      for (int t = 0; t < 3; ++t) high.sample_index[{id, "img" + std::to_string(i), std::uint64_t(t)}] = "x";
    spec.train_subjects_high.push_back(id);
  }
  const auto split = make_split(low, high, spec);
  EXPECT_EQ(split.train_low.size(), 8u * 10 * 70);
  EXPECT_EQ(split.train_high.size(), 8u * 3 * 70);
  EXPECT_EQ(split.test_low.size(), 1u * 10 * 70);
  EXPECT_EQ(split.image_ids.size(), 70u);
  EXPECT_TRUE(std::is_sorted(split.train_low.begin(), split.train_low.end(),
                             [](const SampleRef& a, const SampleRef& b) { return a.key < b.key; }));
  const auto again = make_split(low, high, spec);
  for (std::size_t i = 0; i < split.train_low.size(); ++i) EXPECT_EQ(again.train_low[i].key, split.train_low[i].key);
}

TEST(Split, Rejections) {
  const auto ds = synth::generate(small_config());
  SplitSpec spec{{"low-sub01", "low-sub02"}, {"high-sub01"}, {"low-sub02"}};
  EXPECT_THROW(make_split(ds.low_manifest, ds.high_manifest, spec), ConfigError);
  spec = {{"low-sub01"}, {"high-sub01"}, {"low-sub03"}};
  EXPECT_NO_THROW(make_split(ds.low_manifest, ds.high_manifest, spec));
  auto high = ds.high_manifest;
  for (auto& id : high.shared_image_ids) id += "-other";
  EXPECT_THROW(make_split(ds.low_manifest, high, spec), ConfigError);
  spec = {{"nobody"}, {"high-sub01"}, {"low-sub03"}};
  EXPECT_THROW(make_split(ds.low_manifest, ds.high_manifest, spec), ConfigError);
}

// ---- temporal high-pass -----------------------------------------------------------

namespace {

std::vector<FmriSample> series_from(const Eigen::MatrixXd& m) {  // rows = time, cols = V
  std::vector<FmriSample> out;
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    FmriSample s("s", "t" + std::to_string(t), 0, static_cast<std::size_t>(m.cols()));
    for (Eigen::Index v = 0; v < m.cols(); ++v) {
      s.channels[0][v] = static_cast<float>(m(t, v));
      s.channels[1][v] = static_cast<float>(-m(t, v));
    }
    out.push_back(s);
  }
  return out;
}

// Least-squares removal of cos(pi k (2t+1) / 2n), k = 1..K, keeping the mean,
// solved by QR on the explicit regressors.
Eigen::MatrixXd ls_detrend(const Eigen::MatrixXd& y, std::size_t order) {
  const auto n = y.rows();
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(order) + 1);
  for (Eigen::Index t = 0; t < n; ++t) {
    X(t, 0) = 1.0;
    for (std::size_t k = 1; k <= order; ++k)
      X(t, static_cast<Eigen::Index>(k)) = std::cos(std::numbers::pi * double(k) * (2.0 * double(t) + 1) / (2.0 * double(n)));
  }
  const Eigen::MatrixXd beta = X.householderQr().solve(y);
  Eigen::MatrixXd fit = X.rightCols(static_cast<Eigen::Index>(order)) * beta.bottomRows(static_cast<Eigen::Index>(order));
  return y - fit;
}

}  // namespace

TEST(Highpass, OrderFollowsCutoff) {
  EXPECT_EQ(dct_highpass_order(200, 128.0, 2.0), 6u);
  EXPECT_EQ(dct_highpass_order(10, 1000.0, 2.0), 0u);
  EXPECT_THROW(highpass_temporal(std::vector<FmriSample>(1, FmriSample("a", "b", 0, 3)), 128, 2), ConfigError);
  EXPECT_THROW(highpass_temporal(std::vector<FmriSample>(3, FmriSample("a", "b", 0, 3)), 3, 2), ConfigError);
}

TEST(Highpass, MatchesLeastSquaresDetrending) {
  Rng rng(6);
  Eigen::MatrixXd y(200, 7);
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    for (Eigen::Index v = 0; v < y.cols(); ++v) y(t, v) = 0.02 * double(t) * double(v + 1) + rng.normal() + 3.0;
  const auto out = highpass_temporal(series_from(y), 128.0, 2.0);
  const auto want = ls_detrend(y, dct_highpass_order(200, 128.0, 2.0));
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    for (Eigen::Index v = 0; v < y.cols(); ++v) {
      ASSERT_NEAR(out[t].channels[0][v], want(t, v), 1e-4);
      ASSERT_NEAR(out[t].channels[1][v], -want(t, v), 1e-4);
    }
}

TEST(Highpass, LinearDriftReducedBy95Percent) {
  Eigen::MatrixXd y(200, 1);
  for (Eigen::Index t = 0; t < 200; ++t) y(t, 0) = 0.05 * double(t);
  const auto out = highpass_temporal(series_from(y), 128.0, 2.0);
  auto rms_about_mean = [](const std::vector<double>& x) {
    double m = 0, s = 0;
    for (double v : x) m += v;
    m /= double(x.size());
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / double(x.size()));
  };
  std::vector<double> in, o;
  for (Eigen::Index t = 0; t < 200; ++t) {
    in.push_back(y(t, 0));
    o.push_back(out[t].channels[0][0]);
  }
  EXPECT_LE(rms_about_mean(o), 0.05 * rms_about_mean(in));
}

TEST(Highpass, MeansPreservedAndConstantsUnchanged) {
  Rng rng(7);
  Eigen::MatrixXd y(50, 5);
  for (Eigen::Index t = 0; t < 50; ++t)
    for (Eigen::Index v = 0; v < 5; ++v) y(t, v) = rng.normal() + 10.0 * double(v);
  const auto out = highpass_temporal(series_from(y), 40.0, 2.0);
  for (Eigen::Index v = 0; v < 5; ++v) {
    double a = 0, b = 0;
    for (Eigen::Index t = 0; t < 50; ++t) {
      a += y(t, v);
      b += out[t].channels[0][v];
    }
    EXPECT_NEAR(a / 50, b / 50, 1e-5 * std::max(1.0, std::abs(a / 50)));
  }
  const auto flat = highpass_temporal(std::vector<FmriSample>(30, FmriSample("a", "b", 0, 4)), 20.0, 2.0);
  for (const auto& s : flat)
    for (float v : s.channels[0]) EXPECT_EQ(v, 0.0f);
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(30, 3, 2.5);
  for (const auto& s : highpass_temporal(series_from(c), 20.0, 2.0))
    for (float v : s.channels[0]) EXPECT_NEAR(v, 2.5f, 1e-5);
}

TEST(Highpass, WhiteNoisePowerAboveCutoffKept) {
  // Direct DFT power in bins above 1/cutoff, averaged over vertices.
  const std::size_t n = 200, V = 256;
  const double tr = 2.0, cutoff = 128.0;
  Rng rng(8);
  Eigen::MatrixXd y(n, V);
  for (Eigen::Index t = 0; t < Eigen::Index(n); ++t)
    for (Eigen::Index v = 0; v < Eigen::Index(V); ++v) y(t, v) = rng.normal();
  const auto out = highpass_temporal(series_from(y), cutoff, tr);
  double p_in = 0, p_out = 0;
  for (std::size_t j = 1; j <= n / 2; ++j) {
    if (double(j) / (double(n) * tr) <= 1.0 / cutoff) continue;
    for (std::size_t v = 0; v < V; ++v) {
      std::complex<double> a = 0, b = 0;
      for (std::size_t t = 0; t < n; ++t) {
        const auto e = std::polar(1.0, -2.0 * std::numbers::pi * double(j * t) / double(n));
        a += y(Eigen::Index(t), Eigen::Index(v)) * e;
        b += double(out[t].channels[0][v]) * e;
      }
      p_in += std::norm(a);
      p_out += std::norm(b);
    }
  }
  EXPECT_NEAR(p_out / p_in, 1.0, 0.10);
}

// ---- spatial smoothing ----------------------------------------------------------

TEST(Smoothing, DeltaGivesSampledGaussian) {
  FmriSample s("a", "b", 0, 256);
  s.channels[0][100] = 1.0f;
  const auto out = smooth_spatial(s, 8.0);
  const double sigma = 8.0 / std::sqrt(8.0 * std::log(2.0));
  const int radius = int(std::ceil(4 * sigma));
  double norm = 0;
  for (int k = -radius; k <= radius; ++k) norm += std::exp(-0.5 * k * k / (sigma * sigma));
  double sum = 0;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < 256; ++i) {
    const int k = int(i) - 100;
    const double want = std::abs(k) <= radius ? std::exp(-0.5 * k * k / (sigma * sigma)) / norm : 0.0;
    EXPECT_NEAR(out.channels[0][i], want, 1e-6);
    sum += out.channels[0][i];
    if (out.channels[0][i] > out.channels[0][peak]) peak = i;
  }
  EXPECT_EQ(peak, 100u);
  EXPECT_NEAR(sum, 1.0, 1e-4);
}

TEST(Smoothing, ConstantsSumsAndNearIdentity) {
  Rng rng(9);
  FmriSample c("a", "b", 0, 64);
  for (auto& ch : c.channels) std::fill(ch.begin(), ch.end(), 3.25f);
  for (const auto& ch : smooth_spatial(c, 6.0).channels)
    for (float v : ch) EXPECT_NEAR(v, 3.25f, 1e-6);

  auto s = random_sample(300, rng);
  for (auto& ch : s.channels)
    for (auto& v : ch) v += 2.0f;
  const auto out = smooth_spatial(s, 12.0);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double a = 0, b = 0;
    for (std::size_t i = 0; i < 300; ++i) {
      a += s.channels[ch][i];
      b += out.channels[ch][i];
    }
    EXPECT_NEAR(b, a, 1e-4 * std::abs(a));
  }
  const auto near = smooth_spatial(s, 0.1);
  for (std::size_t i = 0; i < 300; ++i) EXPECT_NEAR(near.channels[0][i], s.channels[0][i], 1e-4);
}

TEST(Smoothing, CommutesWithChannelSwap) {
  Rng rng(10);
  auto s = random_sample(80, rng);
  auto swapped = s;
  std::swap(swapped.channels[0], swapped.channels[1]);
  const auto a = smooth_spatial(s, 5.0);
  const auto b = smooth_spatial(swapped, 5.0);
  EXPECT_EQ(a.channels[0], b.channels[1]);
  EXPECT_EQ(a.channels[1], b.channels[0]);
  EXPECT_THROW(smooth_spatial(s, 0.0), ConfigError);
}

// ---- trial averaging ------------------------------------------------------------

TEST(TrialAverage, BasicCases) {
  Rng rng(11);
  const auto s = random_sample(16, rng);
  const auto avg = trial_average(std::vector<FmriSample>(10, s));
  EXPECT_EQ(avg.channels, s.channels);
  EXPECT_EQ(avg.trial_index, kAveragedTrial);

  FmriSample a("x", "y", 0, 5), b("x", "y", 1, 5);
  for (auto& ch : b.channels) std::fill(ch.begin(), ch.end(), 2.0f);
  for (const auto& ch : trial_average(std::vector<FmriSample>{a, b}).channels)
    for (float v : ch) EXPECT_EQ(v, 1.0f);

  EXPECT_THROW(trial_average(std::vector<FmriSample>{}), ConfigError);
  FmriSample other("x", "z", 0, 5);
  EXPECT_THROW(trial_average(std::vector<FmriSample>{a, other}), ConfigError);
}

TEST(TrialAverage, PermutationInvariant) {
  Rng rng(12);
  std::vector<FmriSample> xs;
  for (int t = 0; t < 7; ++t) xs.push_back(random_sample(33, rng, "s", "i", t));
  const auto a = trial_average(xs);
  std::reverse(xs.begin(), xs.end());
  std::swap(xs[1], xs[4]);
  EXPECT_EQ(trial_average(xs).channels, a.channels);
}

TEST(TrialAverage, NoiseVarianceDropsTenfold) {
  const std::size_t V = 4096;
  const double sigma = 0.7;
  Rng rng(13);
  const auto signal = random_sample(V, rng);
  std::vector<FmriSample> trials;
  for (int t = 0; t < 10; ++t) {
    auto s = signal;
    s.trial_index = t;
    for (auto& ch : s.channels)
      for (auto& v : ch) v += static_cast<float>(rng.normal() * sigma);
    trials.push_back(s);
  }
  const auto avg = trial_average(trials);
  double var = 0;
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t i = 0; i < V; ++i) {
      const double d = avg.channels[ch][i] - signal.channels[ch][i];
      var += d * d;
    }
  var /= double(2 * V);
  EXPECT_NEAR(var / (sigma * sigma / 10.0), 1.0, 0.2);
}
