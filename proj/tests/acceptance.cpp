// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "otfmri/gan/train.hpp"
#include "otfmri/metrics/frechet.hpp"
#include "otfmri/regression/noise.hpp"
#include "otfmri/signal/split.hpp"
#include "scenarios.hpp"
#include "test_util.hpp"

using namespace otfmri;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

MatrixXd gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

double mse_to_clean(const std::vector<signal::FmriSample>& xs, const synth::GroundTruth& gt) {
  double acc = 0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    const auto c = gt.clean(x.subject_id, x.image_id);
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t i = 0; i < x.vertex_count(); ++i) {
        acc += std::pow(double(x.channels[ch][i]) - c.channels[ch][i], 2);
        ++n;
      }
  }
  return acc / double(n);
}

// ---- criteria ----------------------------------------------------------------

Outcome frechet_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  const metrics::FeatureSet a{gaussian(300, 8, rng), "a"};
  metrics::FeatureSet b{gaussian(300, 8, rng) * 1.7, "b"};
  b.values.col(0).array() += 1.0;
  const double self = metrics::frechet_distance(a, a);

  metrics::GaussianMoments m0, m3;
  m0.mean = VectorXd::Zero(1);
  m3.mean = VectorXd::Constant(1, 3.0);
  m0.cov = m3.cov = MatrixXd::Identity(1, 1);
  const double one_d = metrics::frechet_distance(m0, m3);

  Eigen::HouseholderQR<MatrixXd> qr(gaussian(8, 8, rng));
  const MatrixXd q = qr.householderQ() * MatrixXd::Identity(8, 8);
  const double ab = metrics::frechet_distance(a, b);
  const double rotated = metrics::frechet_distance(metrics::FeatureSet{a.values * q, "ra"}, metrics::FeatureSet{b.values * q, "rb"});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const bool ok = std::abs(self) <= 1e-6 && std::abs(one_d - 9.0) <= 1e-6 && std::abs(rotated - ab) <= 1e-5 && secs < 1.0;
  return {ok, fmt("FID(a,a)=%.2e  1D=%.9f  |rot diff|=%.2e  %.3fs", self, one_d, std::abs(rotated - ab), secs)};
}

template <class F>
double fd_worst(gan::ParamSet<double>& p, F loss) {
  const auto [l, vars] = loss(true);
  std::vector<Tensor<double>> grads;
  for (const auto& g : ag::grad(l, vars)) grads.push_back(g.value());
  std::vector<Tensor<double>*> ptrs;
  for (std::size_t i = 0; i < p.size(); ++i) ptrs.push_back(&p[i]);
  return testutil::fd_check(ptrs, grads, [&] { return loss(false).first.item(); }).worst;
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2);
  gan::GeneratorArch garch;
  garch.depth = 2;
  garch.base_width = 4;
  garch.reduction = 2;
  gan::DiscriminatorArch darch;
  darch.length = 64;
  darch.stages = 2;
  darch.base_width = 4;
  darch.hidden = 6;

  auto gp = gan::init_generator<double>(garch, 3);
  auto dp = gan::init_discriminator<double>(darch, 4);
  testutil::jitter(gp, rng, 0.05);
  testutil::jitter(dp, rng, 0.05);
  const auto y = testutil::randn(Shape{2, 2, 64}, rng), x = testutil::randn(Shape{2, 2, 64}, rng);
  const auto r = testutil::randn(Shape{2, 2, 64}, rng);
  const std::vector<double> u{0.3, 0.8};

  gan::ParamSet<double> rcab;
  gan::add_rcab_params(rcab, "r", 4, 2, rng);
  testutil::jitter(rcab, rng, 0.2);
  const auto xr = testutil::randn(Shape{2, 4, 64}, rng), rr = testutil::randn(Shape{2, 4, 64}, rng);

  std::vector<std::pair<std::string, double>> errs;
  errs.emplace_back("rcab", fd_worst(rcab, [&](bool g) {
    const gan::BoundParams<double> b(rcab, g);
    return std::pair{ag::sum_all(ag::mul(gan::rcab_forward(ag::constant(xr), gan::RcabWeights<double>::bind(b, "r")),
                                         ag::constant(rr))),
                     b.vars()};
  }));
  errs.emplace_back("generator", fd_worst(gp, [&](bool g) {
    const gan::BoundParams<double> b(gp, g);
    return std::pair{ag::sum_all(ag::mul(gan::generator_forward(garch, b, ag::constant(y)), ag::constant(r))), b.vars()};
  }));
  errs.emplace_back("critic", fd_worst(dp, [&](bool g) {
    const gan::BoundParams<double> b(dp, g);
    return std::pair{gan::w1_estimate(darch, b, ag::constant(x), ag::constant(y)), b.vars()};
  }));
  errs.emplace_back("transport_cost", fd_worst(gp, [&](bool g) {
    const gan::BoundParams<double> b(gp, g);
    const auto yv = ag::constant(y);
    return std::pair{gan::transport_cost(yv, gan::generator_forward(garch, b, yv)), b.vars()};
  }));
  errs.emplace_back("generator_loss", fd_worst(gp, [&](bool g) {
    const gan::BoundParams<double> b(gp, g), d(dp, false);
    return std::pair{gan::generator_loss(garch, b, darch, d, ag::constant(y), 1.0).total, b.vars()};
  }));
  errs.emplace_back("gradient_penalty", fd_worst(dp, [&](bool g) {
    const gan::BoundParams<double> b(dp, g);
    return std::pair{gan::gradient_penalty(darch, b, x, y, 10.0, std::span<const double>(u)), b.vars()};
  }));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  bool ok = secs < 60.0;
  std::string detail;
  for (const auto& [name, e] : errs) {
    ok = ok && e <= 1e-6;
    detail += fmt("%s %.1e  ", name.c_str(), e);
  }
  return {ok, detail + fmt("(float64, tol 1e-6, %.1fs)", secs)};
}

Outcome identity_contract() {
  const gan::GeneratorArch arch;
  const auto p = gan::init_generator<float>(arch, 7);
  const gan::BoundParams<float> b(p, false);
  Rng rng(8);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto yv = testutil::randn<float>(Shape{1, 2, 64 + static_cast<std::size_t>(i) * 13}, rng, 1.0 + i % 5);
    const auto g = gan::generator_forward(arch, b, ag::constant(yv)).value();
    for (std::size_t k = 0; k < yv.size(); ++k) worst = std::max(worst, std::abs(double(g.data()[k]) - yv.data()[k]));
  }
  return {worst <= 1e-5, fmt("max |G(y)-y| = %.2e over 100 inputs", worst)};
}

Outcome shape_contract() {
  const gan::GeneratorArch arch;
  auto p = gan::init_generator<float>(arch, 9);
  Rng rng(10);
  testutil::jitter(p, rng, 0.01);
  const gan::BoundParams<float> b(p, false);
  bool ok = arch.depth == 4;
  std::string detail;
  for (std::size_t v : {64u, 1000u, 32492u}) {
    const auto g = gan::generator_forward(arch, b, ag::constant(testutil::randn<float>(Shape{1, 2, v}, rng)));
    ok = ok && g.shape() == Shape{1, 2, v} && g.value().all_finite();
    detail += fmt("V=%zu -> %zu (padded %zu)  ", v, g.shape().l, arch.padded_length(v));
  }
  return {ok, detail};
}

// Paper-shaped synthetic task with the default architecture and optimizer.
Outcome oracle_enhancement(std::uint64_t steps) {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.vertex_count = 1024;
  const auto ds = synth::generate(sc);
  std::vector<signal::FmriSample> train_low, test_low;
  for (const auto& s : ds.low_samples) (s.subject_id == "low-sub09" ? test_low : train_low).push_back(s);

  gan::TrainConfig tc;
  tc.max_steps = steps;
  gan::DiscriminatorArch da;
  da.length = sc.vertex_count;
  auto state = gan::init_train_state<float>(tc, gan::GeneratorArch{}, da);
  gan::train(state, gan::SamplePool(train_low), gan::SamplePool(ds.high_samples));

  const double raw = mse_to_clean(test_low, ds.truth);
  const double enh = mse_to_clean(gan::enhance(state, test_low), ds.truth);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {enh <= 0.5 * raw, fmt("low-sub09 (%zu trials): raw MSE %.5f  enhanced %.5f  ratio %.3f  (%llu steps, %.0fs)",
                                test_low.size(), raw, enh, enh / raw, static_cast<unsigned long long>(steps), secs)};
}

// transport + lambda |w1|, 500-step moving averages at step 500 and at the end.
Outcome monotone_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.vertex_count = 1024;
  const auto ds = synth::generate(sc);
  std::vector<signal::FmriSample> train_low;
  for (const auto& s : ds.low_samples)
    if (s.subject_id != "low-sub09") train_low.push_back(s);
  gan::TrainConfig tc;
  tc.max_steps = 1000;
  tc.batch_size = 8;
  gan::GeneratorArch ga;
  ga.base_width = 8;
  gan::DiscriminatorArch da;
  da.length = sc.vertex_count;
  da.base_width = 8;
  auto state = gan::init_train_state<float>(tc, ga, da);
  gan::train(state, gan::SamplePool(train_low), gan::SamplePool(ds.high_samples));
  const auto& h = state.history;
  auto window = [&](std::size_t end) {
    double acc = 0;
    for (std::size_t i = end - 500; i < end; ++i) acc += h.transport_cost[i] + tc.lambda * std::abs(h.w1_estimate[i]);
    return acc / 500;
  };
  const double early = window(500), late = window(h.size());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {late < early, fmt("MA500 at step 500 %.4f, at step %zu %.4f  (width 8, batch 8, %.0fs)", early, h.size(), late, secs)};
}

Outcome regression_oracle() {
  const auto r = scenarios::regression_oracle(1024, 10.0);
  const double ne = scenarios::normal_equation_residual(r.train_x, r.train_visual, r.visual.weight, r.visual.alpha);
  return {r.heldout_r2_visual >= 0.9 && r.heldout_r2_semantic >= 0.9 && ne <= 1e-5,
          fmt("held-out R2 visual %.4f (alpha %g)  semantic %.4f (alpha %g)  normal-eq residual %.1e",
              r.heldout_r2_visual, r.visual.alpha, r.heldout_r2_semantic, r.semantic.alpha, ne)};
}

Outcome trial_averaging() {
  const std::size_t v = 4096;
  const double sigma = 0.5;
  Rng rng(11);
  signal::FmriSample clean("s", "i", 0, v);
  for (auto& ch : clean.channels)
    for (auto& x : ch) x = static_cast<float>(rng.normal());
  std::vector<signal::FmriSample> trials;
  for (std::size_t t = 0; t < 10; ++t) {
    auto s = clean;
    s.trial_index = t;
    for (auto& ch : s.channels)
      for (auto& x : ch) x = static_cast<float>(x + sigma * rng.normal());
    trials.push_back(std::move(s));
  }
  const auto avg = signal::trial_average(trials);
  double acc = 0;
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t i = 0; i < v; ++i) acc += std::pow(double(avg.channels[ch][i]) - clean.channels[ch][i], 2);
  const double var = acc / (2 * v), target = sigma * sigma / 10;
  return {std::abs(var / target - 1) <= 0.2, fmt("residual variance %.5f vs sigma^2/10 = %.5f (ratio %.3f)", var, target, var / target)};
}

Outcome forward_noising() {
  const auto sched = regression::NoiseSchedule::linear(1000);
  const std::size_t n = 100000;
  Rng rng(12);
  std::vector<double> x(n), e(n);
  for (auto& a : x) a = rng.normal();
  for (auto& a : e) a = rng.normal();
  double worst = 0;
  for (std::size_t t : {1u, 100u, 500u, 1000u}) {
    const auto xt = regression::forward_noise(x, t, sched, e);
    double m = 0, q = 0;
    for (double a : xt) {
      m += a;
      q += a * a;
    }
    m /= n;
    worst = std::max(worst, std::abs(q / n - m * m - 1));
  }
  const auto ends = regression::NoiseSchedule::from_alpha_bar({1.0, 1.0, 0.0});
  const bool exact = regression::forward_noise(x, 1, ends, e) == x && regression::forward_noise(x, 2, ends, e) == e;
  return {worst <= 0.03 && exact, fmt("max |var-1| = %.4f at n=1e5; endpoints exact: %s", worst, exact ? "yes" : "no")};
}

Outcome determinism() {
  synth::SynthConfig sc;
  sc.vertex_count = 64;
  sc.n_images = 6;
  sc.n_subjects_low = 3;
  sc.n_subjects_high = 2;
  const auto ds = synth::generate(sc);
  const gan::SamplePool low(ds.low_samples), high(ds.high_samples);
  gan::TrainConfig tc;
  tc.max_steps = 6;
  tc.batch_size = 4;
  tc.seed = 5;
  gan::GeneratorArch ga;
  ga.depth = 2;
  ga.base_width = 4;
  gan::DiscriminatorArch da;
  da.length = 64;
  da.stages = 2;
  da.base_width = 4;
  da.hidden = 8;

  auto a = gan::init_train_state<float>(tc, ga, da), b = a;
  gan::train(a, low, high);
  gan::train(b, low, high);
  const bool same_csv = gan::format_loss_csv(a.history) == gan::format_loss_csv(b.history);

  auto half_cfg = tc;
  half_cfg.max_steps = 3;
  auto half = gan::init_train_state<float>(half_cfg, ga, da);
  gan::train(half, low, high);
  auto resumed = gan::from_container<float>(io::decode_container(io::encode_container(gan::to_container(half))));
  resumed.config.max_steps = 6;
  gan::train(resumed, low, high);
  const bool bitwise = io::encode_container(gan::to_container(resumed)) == io::encode_container(gan::to_container(a));
  return {same_csv && bitwise, fmt("identical loss CSVs: %s; resumed checkpoint bytes equal: %s", same_csv ? "yes" : "no",
                                   bitwise ? "yes" : "no")};
}

Outcome manifest_arithmetic() {
  synth::SynthConfig sc;
  sc.vertex_count = 4;
  const auto ds = synth::generate(sc);
  signal::SplitSpec spec;
  for (int i = 1; i <= 8; ++i) {
    spec.train_subjects_low.push_back(fmt("low-sub%02d", i));
    spec.train_subjects_high.push_back(fmt("high-sub%02d", i));
  }
  spec.test_subjects_low = {"low-sub09"};
  const auto split = signal::make_split(ds.low_manifest, ds.high_manifest, spec);
  const std::size_t images = ds.low_manifest.shared_image_ids.size();
  const bool ok = ds.low_manifest.sample_index.size() == 6300 && ds.high_manifest.sample_index.size() == 1680 &&
                  split.train_low.size() == 8 * 10 * images && split.train_high.size() == 8 * 3 * images &&
                  split.test_low.size() == 10 * images && images == 70;
  return {ok, fmt("low %zu, high %zu, train pool %zu + %zu (= %zu per image), test %zu (%zu per image)",
                  ds.low_manifest.sample_index.size(), ds.high_manifest.sample_index.size(), split.train_low.size(),
                  split.train_high.size(), (split.train_low.size() + split.train_high.size()) / images,
                  split.test_low.size(), split.test_low.size() / images)};
}

}  // namespace

int main(int argc, char** argv) {
  std::uint64_t oracle_steps = 300;
  if (argc > 1) oracle_steps = std::stoull(argv[1]);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"frechet distance suite", frechet_suite},
      {"gradient suite", gradient_suite},
      {"identity contract", identity_contract},
      {"shape contract", shape_contract},
      {"trial averaging", trial_averaging},
      {"forward noising", forward_noising},
      {"determinism and resume", determinism},
      {"manifest arithmetic", manifest_arithmetic},
      {"regression oracle", regression_oracle},
      {"oracle enhancement", [&] { return oracle_enhancement(oracle_steps); }},
      {"monotone loss trend", monotone_trend},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
