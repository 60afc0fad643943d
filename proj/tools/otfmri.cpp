// otfmri: synth | train | enhance | fit | predict | eval
//
// Each subcommand reads an optional JSON config (unknown keys rejected),
// applies flag overrides, writes the resolved config to <out>/config.json and
// a JSON report. Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical abort.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "otfmri/gan/train.hpp"
#include "otfmri/metrics/frechet.hpp"
#include "otfmri/regression/ridge.hpp"
#include "otfmri/signal/manifest.hpp"
#include "otfmri/signal/preprocess.hpp"
#include "otfmri/signal/split.hpp"
#include "otfmri/synth/synthgen.hpp"

namespace fs = std::filesystem;
using namespace otfmri;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool resume = false;
};

json load_config(const Common& c) {
  if (c.config.empty()) return json::object();
  json j = jsonutil::load<ConfigError>(c.config);
  if (!j.is_object()) throw ConfigError(c.config + ": config must be a JSON object");
  return j;
}

// Refuses a nonempty output directory unless --force or --resume.
void prepare_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  const fs::path out(c.out);
  if (fs::exists(out) && !fs::is_directory(out)) throw ConfigError(c.out + " exists and is not a directory");
  if (fs::exists(out) && !fs::is_empty(out) && !c.force && !c.resume)
    throw ConfigError("output directory " + c.out + " is not empty (use --force to overwrite)");
  fs::create_directories(out);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::vector<std::string> string_list(const json& j, const char* key, std::string_view ctx) {
  return jsonutil::get<std::vector<std::string>, ConfigError>(j, key, ctx);
}

struct LoadedManifest {
  signal::DatasetManifest manifest;
  fs::path root;
};

LoadedManifest open_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("manifest not found: " + path.string());
  return {signal::load_manifest(path), path.parent_path()};
}

std::vector<signal::FmriSample> load_subjects(const LoadedManifest& m, const std::vector<std::string>& subjects) {
  std::set<std::string> want(subjects.begin(), subjects.end());
  for (const auto& s : want)
    if (!m.manifest.find_subject(s)) throw DataError("subject " + s + " is not in manifest " + m.manifest.name);
  std::vector<signal::FmriSample> out;
  for (const auto& [key, rel] : m.manifest.sample_index)
    if (want.empty() || want.count(key.subject_id)) {
      auto s = signal::load_sample(m.root / rel);
      if (signal::key_of(s) != key) throw DataError(rel + ": sample identity does not match manifest entry");
      if (s.vertex_count() != m.manifest.vertex_count) throw DataError(rel + ": vertex count does not match manifest");
      out.push_back(std::move(s));
    }
  return out;
}

// Trial averages per (subject, image), in manifest order.
std::vector<signal::FmriSample> average_trials(const std::vector<signal::FmriSample>& samples) {
  std::map<std::pair<std::string, std::string>, std::vector<signal::FmriSample>> groups;
  for (const auto& s : samples) groups[{s.subject_id, s.image_id}].push_back(s);
  std::vector<signal::FmriSample> out;
  for (const auto& [k, g] : groups) out.push_back(signal::trial_average(g));
  return out;
}

double mse_to_truth(const std::vector<signal::FmriSample>& xs, const synth::GroundTruth& gt) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    const auto c = gt.clean(x.subject_id, x.image_id);
    if (c.vertex_count() != x.vertex_count()) throw DataError("ground truth vertex count differs from samples");
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t i = 0; i < x.vertex_count(); ++i) {
        const double d = double(x.channels[ch][i]) - c.channels[ch][i];
        acc += d * d;
        ++n;
      }
  }
  return n ? acc / double(n) : 0.0;
}

void print_manifest_summary(const char* label, const signal::DatasetManifest& m) {
  std::printf("%s tier: %zu samples (%zu subjects, %zu shared images, V=%llu)\n", label, m.sample_index.size(),
              m.subjects.size(), m.shared_image_ids.size(), static_cast<unsigned long long>(m.vertex_count));
}

void report_violations(const signal::ValidationReport& r, const std::string& what) {
  if (r.ok()) return;
  for (const auto& v : r.violations) std::fprintf(stderr, "%s: %s: %s\n", what.c_str(), to_string(v.kind).c_str(), v.detail.c_str());
  throw DataError(what + " failed validation with " + std::to_string(r.violations.size()) + " violation(s)");
}

// ---- synth --------------------------------------------------------------------

int cmd_synth(const Common& c) {
  const json raw = load_config(c);
  auto cfg = synth::synth_config_from_json(raw);
  if (c.seed) cfg.encoding_seed = *c.seed;
  prepare_out(c);
  const fs::path out(c.out);
  jsonutil::save(out / "config.json", synth::to_json(cfg));

  const auto ds = synth::generate(cfg);
  synth::write_dataset(ds, out);
  report_violations(signal::validate_manifest(ds.low_manifest, out / "low"), "low manifest");
  report_violations(signal::validate_manifest(ds.high_manifest, out / "high"), "high manifest");

  print_manifest_summary("low", ds.low_manifest);
  print_manifest_summary("high", ds.high_manifest);
  jsonutil::save(out / "report.json", {{"low_samples", ds.low_manifest.sample_index.size()},
                                       {"high_samples", ds.high_manifest.sample_index.size()},
                                       {"low_expected", ds.low_manifest.expected_sample_count()},
                                       {"high_expected", ds.high_manifest.expected_sample_count()},
                                       {"oracle_noise_gain", synth::oracle_noise_gain(cfg.vertex_count, cfg.degradation)}});
  return 0;
}

// ---- train --------------------------------------------------------------------

struct TrainRun {
  json resolved;
  signal::SplitSpec split;
  fs::path low_manifest, high_manifest;
  gan::TrainConfig train;
  gan::GeneratorArch generator;
  json critic;  // critic arch without length; length comes from the data
};

TrainRun parse_train(const json& raw, const Common& c) {
  constexpr std::string_view ctx = "train config";
  jsonutil::check_keys<ConfigError>(raw, {"data", "split"}, {"generator", "critic", "train"}, ctx);
  TrainRun r;
  const auto& data = raw.at("data");
  jsonutil::check_keys<ConfigError>(data, {"low_manifest", "high_manifest"}, {}, "train config data");
  const fs::path base = c.config.empty() ? fs::current_path() : fs::absolute(c.config).parent_path();
  r.low_manifest = resolve(base, jsonutil::get<std::string, ConfigError>(data, "low_manifest", ctx));
  r.high_manifest = resolve(base, jsonutil::get<std::string, ConfigError>(data, "high_manifest", ctx));
  const auto& sp = raw.at("split");
  jsonutil::check_keys<ConfigError>(sp, {"train_subjects_low", "train_subjects_high", "test_subjects_low"}, {}, "split");
  r.split.train_subjects_low = string_list(sp, "train_subjects_low", "split");
  r.split.train_subjects_high = string_list(sp, "train_subjects_high", "split");
  r.split.test_subjects_low = string_list(sp, "test_subjects_low", "split");
  r.generator = gan::generator_arch_from_json(raw.value("generator", json::object()));
  r.critic = raw.value("critic", json::object());
  if (r.critic.contains("length")) throw ConfigError("critic.length is set from the data and may not be configured");
  gan::critic_arch_from_json(r.critic);
  r.train = gan::train_config_from_json(raw.value("train", json::object()));
  if (c.seed) r.train.seed = *c.seed;
  r.train.validate();
  r.generator.validate();

  gan::DiscriminatorArch critic = gan::critic_arch_from_json(r.critic);
  r.resolved = {{"data", {{"low_manifest", r.low_manifest.string()}, {"high_manifest", r.high_manifest.string()}}},
                {"split", sp},
                {"generator", gan::to_json(r.generator)},
                {"critic", gan::to_json(critic)},
                {"train", gan::to_json(r.train)}};
  r.resolved["critic"].erase("length");
  return r;
}

void write_losses(const gan::LossHistory& h, const fs::path& dir) { io::write_text(dir / "losses.csv", gan::format_loss_csv(h)); }

int cmd_train(const Common& c) {
  const TrainRun run = parse_train(load_config(c), c);
  const fs::path out(c.out);
  const fs::path ckpt = out / "checkpoint.ckpt";
  if (c.resume) {
    if (!fs::exists(ckpt)) throw ConfigError("--resume: no checkpoint at " + ckpt.string());
    json frozen = jsonutil::load<ConfigError>(out / "config.json");
    json now = run.resolved;
    frozen["train"].erase("max_steps");
    now["train"].erase("max_steps");
    if (frozen != now) throw ConfigError("--resume: config differs from the frozen run config (only max_steps may change)");
  }
  prepare_out(c);

  const auto low = open_manifest(run.low_manifest);
  const auto high = open_manifest(run.high_manifest);
  const auto split = signal::make_split(low.manifest, high.manifest, run.split);
  const auto low_samples = signal::load_samples(low.root, split.train_low);
  const auto high_samples = signal::load_samples(high.root, split.train_high);
  gan::SamplePool low_pool(low_samples), high_pool(high_samples);

  auto critic = gan::critic_arch_from_json(run.critic);
  critic.length = low.manifest.vertex_count;

  gan::TrainState<float> state;
  if (c.resume) {
    state = gan::load_checkpoint<float>(ckpt);
    if (state.generator_arch != run.generator || state.critic_arch != critic)
      throw ConfigError("--resume: checkpoint architecture differs from config");
    auto expect = state.config;
    expect.max_steps = run.train.max_steps;
    if (expect != run.train) throw ConfigError("--resume: checkpoint training config differs from config");
    state.config.max_steps = run.train.max_steps;
    std::printf("resuming at step %llu\n", static_cast<unsigned long long>(state.step));
  } else {
    state = gan::init_train_state<float>(run.train, run.generator, critic);
  }
  jsonutil::save(out / "config.json", run.resolved);

  auto checkpoint = [&](const gan::TrainState<float>& s) {
    gan::save_checkpoint(s, ckpt);
    write_losses(s.history, out);
  };
  checkpoint(state);
  try {
    gan::train(state, low_pool, high_pool, std::function<void(const gan::TrainState<float>&)>(checkpoint));
  } catch (const NumericalError&) {
    write_losses(state.history, out);
    throw;
  }
  checkpoint(state);

  const auto& h = state.history;
  json report = {{"steps", state.step}, {"train_low_samples", low_samples.size()}, {"train_high_samples", high_samples.size()}};
  if (h.size() > 0)
    report["final"] = {{"transport_cost", h.transport_cost.back()}, {"w1_estimate", h.w1_estimate.back()},
                       {"critic_loss", h.critic_loss.back()}};
  jsonutil::save(out / "report.json", report);
  std::printf("trained to step %llu on %zu low / %zu high trials\n", static_cast<unsigned long long>(state.step),
              low_samples.size(), high_samples.size());
  if (h.size() > 0)
    std::printf("final transport_cost %.6g  w1_estimate %.6g  critic_loss %.6g\n", h.transport_cost.back(),
                h.w1_estimate.back(), h.critic_loss.back());
  return 0;
}

// ---- enhance ------------------------------------------------------------------

int cmd_enhance(const Common& c) {
  const json raw = load_config(c);
  constexpr std::string_view ctx = "enhance config";
  jsonutil::check_keys<ConfigError>(raw, {"checkpoint", "manifest"}, {"subjects", "ground_truth"}, ctx);
  const fs::path base = c.config.empty() ? fs::current_path() : fs::absolute(c.config).parent_path();
  const fs::path ckpt_path = resolve(base, jsonutil::get<std::string, ConfigError>(raw, "checkpoint", ctx));
  const fs::path manifest_path = resolve(base, jsonutil::get<std::string, ConfigError>(raw, "manifest", ctx));
  const auto subjects = raw.contains("subjects") ? string_list(raw, "subjects", ctx) : std::vector<std::string>{};
  std::optional<fs::path> truth_dir;
  if (raw.contains("ground_truth")) truth_dir = resolve(base, jsonutil::get<std::string, ConfigError>(raw, "ground_truth", ctx));
  if (!fs::exists(ckpt_path)) throw ConfigError("checkpoint not found: " + ckpt_path.string());
  prepare_out(c);
  const fs::path out(c.out);
  json resolved = {{"checkpoint", ckpt_path.string()}, {"manifest", manifest_path.string()}, {"subjects", subjects}};
  if (truth_dir) resolved["ground_truth"] = truth_dir->string();
  jsonutil::save(out / "config.json", resolved);

  const auto state = gan::load_checkpoint<float>(ckpt_path);
  const auto src = open_manifest(manifest_path);
  const auto samples = load_subjects(src, subjects);
  const auto enhanced = gan::enhance(state, samples);

  signal::DatasetManifest m;
  m.name = src.manifest.name + "-enhanced";
  m.quality_tier = signal::QualityTier::enhanced;
  m.vertex_count = src.manifest.vertex_count;
  m.shared_image_ids = src.manifest.shared_image_ids;
  for (const auto& s : src.manifest.subjects)
    if (subjects.empty() || std::find(subjects.begin(), subjects.end(), s.subject_id) != subjects.end()) m.subjects.push_back(s);
  const fs::path data = out / "data";
  for (const auto& s : enhanced) {
    const auto key = signal::key_of(s);
    const std::string rel = src.manifest.sample_index.at(key);
    signal::save_sample(s, data / rel);
    m.sample_index.emplace(key, rel);
  }
  signal::save_manifest(m, data / "manifest.json");
  report_violations(signal::validate_manifest(m, data), "enhanced manifest");

  json report = {{"samples", enhanced.size()}, {"manifest", (data / "manifest.json").string()}};
  std::printf("enhanced %zu trials -> %s\n", enhanced.size(), (data / "manifest.json").string().c_str());
  if (truth_dir) {
    const auto gt = synth::load_ground_truth(*truth_dir);
    const double raw_mse = mse_to_truth(samples, gt), enh_mse = mse_to_truth(enhanced, gt);
    report["mse_raw"] = raw_mse;
    report["mse_enhanced"] = enh_mse;
    report["mse_ratio"] = raw_mse > 0.0 ? enh_mse / raw_mse : 0.0;
    std::printf("MSE to clean: raw %.6g  enhanced %.6g  ratio %.4f\n", raw_mse, enh_mse, report["mse_ratio"].get<double>());
  }
  jsonutil::save(out / "report.json", report);
  return 0;
}

// ---- fit ----------------------------------------------------------------------

struct Source {
  fs::path manifest;
  std::vector<std::string> subjects;
};

std::vector<Source> parse_sources(const json& raw, const fs::path& base, std::string_view ctx) {
  const auto& arr = raw.at("sources");
  if (!arr.is_array() || arr.empty()) throw ConfigError(std::string(ctx) + ": sources must be a nonempty array");
  std::vector<Source> out;
  for (const auto& s : arr) {
    jsonutil::check_keys<ConfigError>(s, {"manifest"}, {"subjects"}, "source");
    out.push_back({resolve(base, jsonutil::get<std::string, ConfigError>(s, "manifest", "source")),
                   s.contains("subjects") ? string_list(s, "subjects", "source") : std::vector<std::string>{}});
  }
  return out;
}

json sources_json(const std::vector<Source>& ss) {
  json a = json::array();
  for (const auto& s : ss) a.push_back({{"manifest", s.manifest.string()}, {"subjects", s.subjects}});
  return a;
}

std::map<std::string, fs::path> parse_paths(const json& j, std::string_view ctx, const fs::path& base) {
  jsonutil::check_keys<ConfigError>(j, {}, {"visual", "semantic"}, ctx);
  std::map<std::string, fs::path> out;
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = resolve(base, it.value().get<std::string>());
  return out;
}

json paths_json(const std::map<std::string, fs::path>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = v.string();
  return j;
}

int cmd_fit(const Common& c) {
  const json raw = load_config(c);
  constexpr std::string_view ctx = "fit config";
  jsonutil::check_keys<ConfigError>(raw, {"sources", "targets"}, {"alpha_grid"}, ctx);
  const fs::path base = c.config.empty() ? fs::current_path() : fs::absolute(c.config).parent_path();
  const auto sources = parse_sources(raw, base, ctx);
  const auto targets = parse_paths(raw.at("targets"), "fit targets", base);
  if (targets.empty()) throw ConfigError("fit config: targets must name at least one of visual, semantic");
  const auto grid = raw.contains("alpha_grid") ? jsonutil::get<std::vector<double>, ConfigError>(raw, "alpha_grid", ctx)
                                               : regression::default_alpha_grid();
  if (grid.empty()) throw ConfigError("alpha_grid is empty");
  for (double a : grid)
    if (!(a > 0.0)) throw ConfigError("alpha_grid entries must be > 0");
  prepare_out(c);
  const fs::path out(c.out);
  jsonutil::save(out / "config.json", {{"sources", sources_json(sources)}, {"targets", paths_json(targets)}, {"alpha_grid", grid}});

  std::vector<signal::FmriSample> rows;
  for (const auto& s : sources) {
    auto part = load_subjects(open_manifest(s.manifest), s.subjects);
    rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (rows.size() < 2) throw DataError("fit needs at least 2 training trials");
  const auto X = regression::design_matrix(rows);
  std::vector<std::string> ids;
  for (const auto& r : rows) ids.push_back(r.image_id);

  json report = {{"rows", rows.size()}, {"input_dim", X.cols()}};
  for (const auto& [kind_name, path] : targets) {
    const auto kind = regression::parse_target_kind(kind_name);
    if (!fs::exists(path)) throw DataError("target file not found: " + path.string());
    const auto Y = regression::align_targets(io::load_matrix(path), ids);
    const auto head = regression::fit_head(X, Y, grid, kind);
    regression::save_head(head, out / (kind_name + ".head"));
    const double train_r2 = regression::r2_score(Y, regression::predict_latents(head, X));
    json cv = json::array();
    double best_cv = -std::numeric_limits<double>::infinity();
    for (const auto& s : head.cv) {
      cv.push_back({{"alpha", s.alpha}, {"r2", s.r2}});
      best_cv = std::max(best_cv, s.r2);
    }
    report[kind_name] = {{"alpha", head.alpha}, {"train_r2", train_r2}, {"cv_r2", best_cv}, {"cv", cv}};
    std::printf("%s head: alpha %g  cv R2 %.4f  train R2 %.4f  (%zu rows)\n", kind_name.c_str(), head.alpha, best_cv,
                train_r2, rows.size());
  }
  jsonutil::save(out / "report.json", report);
  return 0;
}

// ---- predict ------------------------------------------------------------------

int cmd_predict(const Common& c) {
  const json raw = load_config(c);
  constexpr std::string_view ctx = "predict config";
  jsonutil::check_keys<ConfigError>(raw, {"manifest", "heads"}, {"subjects", "targets"}, ctx);
  const fs::path base = c.config.empty() ? fs::current_path() : fs::absolute(c.config).parent_path();
  const fs::path manifest = resolve(base, jsonutil::get<std::string, ConfigError>(raw, "manifest", ctx));
  const auto subjects = raw.contains("subjects") ? string_list(raw, "subjects", ctx) : std::vector<std::string>{};
  const auto heads = parse_paths(raw.at("heads"), "predict heads", base);
  const auto targets = raw.contains("targets") ? parse_paths(raw.at("targets"), "predict targets", base)
                                               : std::map<std::string, fs::path>{};
  if (heads.empty()) throw ConfigError("predict config: heads must name at least one of visual, semantic");
  for (const auto& [k, p] : heads)
    if (!fs::exists(p)) throw ConfigError("head file not found: " + p.string());
  prepare_out(c);
  const fs::path out(c.out);
  jsonutil::save(out / "config.json", {{"manifest", manifest.string()}, {"subjects", subjects}, {"heads", paths_json(heads)},
                                       {"targets", paths_json(targets)}});

  const auto averaged = average_trials(load_subjects(open_manifest(manifest), subjects));
  const auto X = regression::design_matrix(averaged);
  std::vector<std::string> ids, subject_of_row;
  for (const auto& s : averaged) {
    ids.push_back(s.image_id);
    subject_of_row.push_back(s.subject_id);
  }

  json report = {{"rows", averaged.size()}, {"row_subjects", subject_of_row}};
  for (const auto& [kind_name, path] : heads) {
    const auto head = regression::load_head(path);
    if (regression::to_string(head.kind) != kind_name)
      throw ConfigError(path.string() + " holds a " + regression::to_string(head.kind) + " head, configured as " + kind_name);
    const auto Z = regression::predict_latents(head, X);
    io::MatrixFile m;
    m.rows = static_cast<std::size_t>(Z.rows());
    m.cols = static_cast<std::size_t>(Z.cols());
    m.image_ids = ids;
    for (Eigen::Index r = 0; r < Z.rows(); ++r)
      for (Eigen::Index j = 0; j < Z.cols(); ++j) m.values.push_back(static_cast<float>(Z(r, j)));
    io::save_matrix(m, out / (kind_name + "_latents.json"));
    json entry = {{"file", (out / (kind_name + "_latents.json")).string()}};
    if (auto t = targets.find(kind_name); t != targets.end()) {
      if (!fs::exists(t->second)) throw DataError("target file not found: " + t->second.string());
      const double r2 = regression::r2_score(regression::align_targets(io::load_matrix(t->second), ids), Z);
      entry["heldout_r2"] = r2;
      std::printf("%s: %zu averaged rows, held-out R2 %.4f\n", kind_name.c_str(), averaged.size(), r2);
    } else {
      std::printf("%s: %zu averaged rows\n", kind_name.c_str(), averaged.size());
    }
    report[kind_name] = entry;
  }
  jsonutil::save(out / "report.json", report);
  return 0;
}

// ---- eval ---------------------------------------------------------------------

json diagnostics_json(const metrics::GaussianMoments& m) {
  const auto d = metrics::diagnose(m);
  return {{"min_eigenvalue", d.min_eigenvalue},
          {"max_eigenvalue", d.max_eigenvalue},
          {"condition", std::isfinite(d.condition) ? json(d.condition) : json("inf")}};
}

int cmd_eval(const Common& c) {
  const json raw = load_config(c);
  constexpr std::string_view ctx = "eval config";
  jsonutil::check_keys<ConfigError>(raw, {"reference"}, {"candidate", "candidates"}, ctx);
  if (raw.contains("candidate") == raw.contains("candidates"))
    throw ConfigError("eval config: give exactly one of candidate, candidates");
  const fs::path base = c.config.empty() ? fs::current_path() : fs::absolute(c.config).parent_path();
  const fs::path ref_path = resolve(base, jsonutil::get<std::string, ConfigError>(raw, "reference", ctx));
  std::vector<fs::path> cand_paths;
  if (raw.contains("candidate"))
    cand_paths.push_back(resolve(base, jsonutil::get<std::string, ConfigError>(raw, "candidate", ctx)));
  else
    for (const auto& p : string_list(raw, "candidates", ctx)) cand_paths.push_back(resolve(base, p));
  if (cand_paths.empty()) throw ConfigError("eval config: candidates is empty");
  prepare_out(c);
  const fs::path out(c.out);
  json cands = json::array();
  for (const auto& p : cand_paths) cands.push_back(p.string());
  jsonutil::save(out / "config.json", {{"reference", ref_path.string()}, {"candidates", cands}});

  const auto ref = metrics::fit_moments(metrics::load_features(ref_path));
  std::vector<metrics::GaussianMoments> moments;
  for (const auto& p : cand_paths) {
    auto m = metrics::fit_moments(metrics::load_features(p));
    if (m.dim() != ref.dim())
      throw ConfigError("feature dimension mismatch: " + p.string() + " has d=" + std::to_string(m.dim()) +
                        ", reference has d=" + std::to_string(ref.dim()));
    moments.push_back(std::move(m));
  }
  std::vector<double> scores;
  for (const auto& m : moments) scores.push_back(metrics::frechet_distance(ref, m));
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto [best, _] = metrics::best_of_k<std::size_t>(order, [&](const std::size_t& i) { return scores[i]; });

  json per = json::array();
  for (std::size_t i = 0; i < scores.size(); ++i)
    per.push_back({{"file", cand_paths[i].string()}, {"fid", scores[i]}, {"moments", diagnostics_json(moments[i])}});
  json report = {{"covariance", "unbiased (n-1 denominator)"},
                 {"reference", {{"file", ref_path.string()}, {"moments", diagnostics_json(ref)}}},
                 {"candidates", per},
                 {"fid", scores[best]},
                 {"best_index", best}};
  jsonutil::save(out / "report.json", report);
  for (std::size_t i = 0; i < scores.size(); ++i) std::printf("candidate %zu: FID %.6g\n", i, scores[i]);
  std::printf("best candidate: %zu (FID %.6g; unbiased covariance)\n", best, scores[best]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unpaired fMRI enhancement, latent regression and Fréchet evaluation"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;

  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const Common&);
  };
  const Cmd cmds[] = {{"synth", "generate a synthetic two-tier dataset with ground truth", cmd_synth},
                      {"train", "train the enhancement GAN on an unpaired split", cmd_train},
                      {"enhance", "apply a checkpoint to a manifest's trials", cmd_enhance},
                      {"fit", "fit visual/semantic ridge heads", cmd_fit},
                      {"predict", "predict latents from trial-averaged data", cmd_predict},
                      {"eval", "Fréchet distance between feature files", cmd_eval}};
  std::vector<std::pair<CLI::App*, const Cmd*>> subs;
  for (const auto& cmd : cmds) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", common.config, "JSON config file");
    sub->add_option("--out", common.out, "output directory")->required();
    sub->add_option("--seed", seed, "seed override");
    sub->add_flag("--force", common.force, "write into a nonempty output directory");
    sub->add_flag("--resume", common.resume, "continue from the checkpoint in --out");
    subs.emplace_back(sub, &cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (const auto& [sub, cmd] : subs) {
      if (!sub->parsed()) continue;
      if (sub->count("--seed")) common.seed = seed;
      if (common.resume && std::string(cmd->name) != "train") throw ConfigError("--resume applies to train only");
      return cmd->run(common);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
