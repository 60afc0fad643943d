#pragma once

// Alternating critic/generator training with Adam, checkpointing and inference.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "otfmri/core/container.hpp"
#include "otfmri/core/json_util.hpp"
#include "otfmri/core/rng.hpp"
#include "otfmri/gan/objective.hpp"
#include "otfmri/signal/sample.hpp"

namespace otfmri::gan {

struct TrainConfig {
  double lambda = 1.0;  // weight of the W1 term against the transport cost
  std::size_t critic_steps_per_gen = 5;
  double lr_generator = 1e-4;
  double lr_critic = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double adam_eps = 1e-8;
  double gp_gamma = 10.0;
  std::size_t batch_size = 16;
  std::uint64_t max_steps = 1000;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_interval = 0;  // 0 disables periodic checkpoints

  void validate() const {
    if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
    if (!(gp_gamma >= 0.0)) throw ConfigError("gp_gamma must be >= 0");
    if (critic_steps_per_gen == 0) throw ConfigError("critic_steps_per_gen must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr_generator > 0.0) || !(lr_critic > 0.0)) throw ConfigError("learning rates must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Per generator step: the generator's transport cost and total loss, and the
// W1 estimate and critic loss from the last critic update before it.
struct LossHistory {
  std::vector<double> transport_cost;
  std::vector<double> w1_estimate;
  std::vector<double> critic_loss;
  std::vector<double> generator_loss;

  std::size_t size() const { return transport_cost.size(); }
  friend bool operator==(const LossHistory&, const LossHistory&) = default;
};

template <class T>
struct AdamState {
  ParamSet<T> m;
  ParamSet<T> v;
  std::uint64_t t = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <class T>
void adam_update(ParamSet<T>& params, AdamState<T>& opt, const std::vector<ag::Var<T>>& grads, double lr, double beta1,
                 double beta2, double eps) {
  ++opt.t;
  const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(beta1, static_cast<double>(opt.t)));
  const T c2 = static_cast<T>(1.0 - std::pow(beta2, static_cast<double>(opt.t)));
  const T step = static_cast<T>(lr), e = static_cast<T>(eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T* g = grads[i].value().data();
    T* p = params[i].data();
    T* m = opt.m[i].data();
    T* v = opt.v[i].data();
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      p[k] -= step * (m[k] / c1) / (std::sqrt(v[k] / c2) + e);
    }
  }
}

// Trials packed as contiguous rows of 2V floats for batch assembly.
class SamplePool {
 public:
  SamplePool() = default;
  explicit SamplePool(const std::vector<signal::FmriSample>& samples) {
    if (samples.empty()) return;
    vertices_ = samples.front().vertex_count();
    rows_.reserve(samples.size() * 2 * vertices_);
    for (const auto& s : samples) {
      if (s.vertex_count() != vertices_) throw DataError("sample pool mixes vertex counts");
      for (const auto& c : s.channels) rows_.insert(rows_.end(), c.begin(), c.end());
    }
  }

  std::size_t size() const { return vertices_ == 0 ? 0 : rows_.size() / (2 * vertices_); }
  std::size_t vertices() const { return vertices_; }

  template <class T>
  Tensor<T> batch(const std::vector<std::size_t>& idx) const {
    const std::size_t f = 2 * vertices_;
    Tensor<T> out(Shape{idx.size(), 2, vertices_});
    for (std::size_t b = 0; b < idx.size(); ++b)
      for (std::size_t k = 0; k < f; ++k) out.data()[b * f + k] = static_cast<T>(rows_[idx[b] * f + k]);
    return out;
  }

 private:
  std::size_t vertices_ = 0;
  std::vector<float> rows_;
};

template <class T>
struct TrainState {
  std::uint64_t step = 0;
  TrainConfig config;
  GeneratorArch generator_arch;
  DiscriminatorArch critic_arch;
  ParamSet<T> generator;
  ParamSet<T> critic;
  AdamState<T> generator_opt;
  AdamState<T> critic_opt;
  Rng rng;
  LossHistory history;
};

// Fresh state: identity generator, random critic, zero optimizer moments.
template <class T>
TrainState<T> init_train_state(const TrainConfig& config, const GeneratorArch& garch, const DiscriminatorArch& darch) {
  config.validate();
  garch.validate();
  darch.validate();
  TrainState<T> s;
  s.config = config;
  s.generator_arch = garch;
  s.critic_arch = darch;
  Rng master(config.seed);
  s.generator = init_generator<T>(garch, master.next_u64());
  s.critic = init_discriminator<T>(darch, master.next_u64());
  s.generator_opt = {s.generator.zeros_like(), s.generator.zeros_like(), 0};
  s.critic_opt = {s.critic.zeros_like(), s.critic.zeros_like(), 0};
  s.rng = Rng(master.next_u64());
  return s;
}

namespace detail {

inline std::vector<std::size_t> draw_indices(Rng& rng, std::size_t count, std::size_t pool) {
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.index(pool));
  return idx;
}

}  // namespace detail

// One generator update preceded by critic_steps_per_gen critic updates.
// `low` is the unpaired source pool (y), `high` the target pool (x).
template <class T>
void train_step(TrainState<T>& s, const SamplePool& low, const SamplePool& high) {
  const auto& cfg = s.config;
  const std::size_t batch = cfg.batch_size;
  double w1 = 0.0, critic_loss = 0.0;

  for (std::size_t k = 0; k < cfg.critic_steps_per_gen; ++k) {
    const auto x = high.batch<T>(detail::draw_indices(s.rng, batch, high.size()));
    const auto y = low.batch<T>(detail::draw_indices(s.rng, batch, low.size()));
    Tensor<T> gy;
    {
      ag::NoGradGuard no_grad;
      const BoundParams<T> gen(s.generator, false);
      gy = generator_forward(s.generator_arch, gen, ag::constant(y)).value();
    }
    const BoundParams<T> critic(s.critic, true);
    const auto w1_var = w1_estimate(s.critic_arch, critic, ag::constant(x), ag::constant(gy));
    const auto gp = gradient_penalty(s.critic_arch, critic, x, gy, static_cast<T>(cfg.gp_gamma), s.rng);
    const auto loss = ag::add(ag::neg(w1_var), gp);
    const auto grads = ag::grad(loss, critic.vars());
    adam_update(s.critic, s.critic_opt, grads, cfg.lr_critic, cfg.beta1, cfg.beta2, cfg.adam_eps);
    w1 = static_cast<double>(w1_var.item());
    critic_loss = static_cast<double>(loss.item());
  }

  const auto y = low.batch<T>(detail::draw_indices(s.rng, batch, low.size()));
  const BoundParams<T> gen(s.generator, true);
  const BoundParams<T> critic(s.critic, false);
  const auto loss = generator_loss(s.generator_arch, gen, s.critic_arch, critic, ag::constant(y), static_cast<T>(cfg.lambda));
  const auto grads = ag::grad(loss.total, gen.vars());
  adam_update(s.generator, s.generator_opt, grads, cfg.lr_generator, cfg.beta1, cfg.beta2, cfg.adam_eps);

  const double transport = static_cast<double>(loss.transport.item());
  const double total = static_cast<double>(loss.total.item());
  if (!std::isfinite(transport) || !std::isfinite(total) || !std::isfinite(w1) || !std::isfinite(critic_loss) ||
      !s.generator.all_finite() || !s.critic.all_finite())
    throw NumericalError("non-finite loss or parameters at step " + std::to_string(s.step + 1));

  ++s.step;
  s.history.transport_cost.push_back(transport);
  s.history.w1_estimate.push_back(w1);
  s.history.critic_loss.push_back(critic_loss);
  s.history.generator_loss.push_back(total);
}

// Runs until state.step == config.max_steps, invoking on_checkpoint every
// checkpoint_interval steps. A NumericalError leaves the last checkpoint
// written by the callback as the most recent good state.
template <class T>
void train(TrainState<T>& s, const SamplePool& low, const SamplePool& high,
           const std::function<void(const TrainState<T>&)>& on_checkpoint = {}) {
  s.config.validate();
  if (low.size() == 0 || high.size() == 0) throw ConfigError("training needs nonempty low and high pools");
  if (low.vertices() != s.critic_arch.length || high.vertices() != s.critic_arch.length)
    throw ConfigError("pool vertex count does not match critic length " + std::to_string(s.critic_arch.length));
  while (s.step < s.config.max_steps) {
    train_step(s, low, high);
    if (on_checkpoint && s.config.checkpoint_interval > 0 && s.step % s.config.checkpoint_interval == 0)
      on_checkpoint(s);
  }
}

// Applies the generator to each trial; identities are preserved.
template <class T>
std::vector<signal::FmriSample> enhance(const GeneratorArch& arch, const ParamSet<T>& params,
                                        const std::vector<signal::FmriSample>& samples, std::size_t batch_size = 16) {
  std::vector<signal::FmriSample> out;
  out.reserve(samples.size());
  if (samples.empty()) return out;
  const std::size_t v = samples.front().vertex_count();
  ag::NoGradGuard no_grad;
  const BoundParams<T> gen(params, false);
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    Tensor<T> y(Shape{end - start, 2, v});
    for (std::size_t i = start; i < end; ++i) {
      if (samples[i].vertex_count() != v) throw DataError("enhance: vertex count differs across samples");
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < v; ++k) y(i - start, c, k) = static_cast<T>(samples[i].channels[c][k]);
    }
    const auto g = generator_forward(arch, gen, ag::constant(std::move(y))).value();
    for (std::size_t i = start; i < end; ++i) {
      signal::FmriSample s = samples[i];
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < v; ++k) s.channels[c][k] = static_cast<float>(g(i - start, c, k));
      out.push_back(std::move(s));
    }
  }
  return out;
}

template <class T>
std::vector<signal::FmriSample> enhance(const TrainState<T>& s, const std::vector<signal::FmriSample>& samples) {
  for (const auto& x : samples)
    if (x.vertex_count() != s.critic_arch.length)
      throw DataError("enhance: sample V=" + std::to_string(x.vertex_count()) + " but model was trained on V=" +
                      std::to_string(s.critic_arch.length));
  return enhance(s.generator_arch, s.generator, samples, s.config.batch_size);
}

// ---- JSON forms -------------------------------------------------------------

inline json to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"critic_steps_per_gen", c.critic_steps_per_gen},
          {"lr_generator", c.lr_generator},
          {"lr_critic", c.lr_critic},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"gp_gamma", c.gp_gamma},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval}};
}

template <class Err = ConfigError>
TrainConfig train_config_from_json(const json& j) {
  constexpr std::string_view ctx = "train config";
  jsonutil::check_keys<Err>(j, {},
                            {"lambda", "critic_steps_per_gen", "lr_generator", "lr_critic", "beta1", "beta2", "adam_eps",
                             "gp_gamma", "batch_size", "max_steps", "seed", "checkpoint_interval"},
                            ctx);
  TrainConfig c;
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = jsonutil::get<std::decay_t<decltype(field)>, Err>(j, key, ctx);
  };
  opt("lambda", c.lambda);
  opt("critic_steps_per_gen", c.critic_steps_per_gen);
  opt("lr_generator", c.lr_generator);
  opt("lr_critic", c.lr_critic);
  opt("beta1", c.beta1);
  opt("beta2", c.beta2);
  opt("adam_eps", c.adam_eps);
  opt("gp_gamma", c.gp_gamma);
  opt("batch_size", c.batch_size);
  opt("max_steps", c.max_steps);
  opt("seed", c.seed);
  opt("checkpoint_interval", c.checkpoint_interval);
  return c;
}

inline json to_json(const GeneratorArch& a) {
  return {{"channels", a.channels}, {"depth", a.depth}, {"base_width", a.base_width}, {"reduction", a.reduction}};
}

template <class Err = ConfigError>
GeneratorArch generator_arch_from_json(const json& j) {
  jsonutil::check_keys<Err>(j, {}, {"channels", "depth", "base_width", "reduction"}, "generator arch");
  GeneratorArch a;
  if (j.contains("channels")) a.channels = jsonutil::get<std::size_t, Err>(j, "channels", "generator arch");
  if (j.contains("depth")) a.depth = jsonutil::get<std::size_t, Err>(j, "depth", "generator arch");
  if (j.contains("base_width")) a.base_width = jsonutil::get<std::size_t, Err>(j, "base_width", "generator arch");
  if (j.contains("reduction")) a.reduction = jsonutil::get<std::size_t, Err>(j, "reduction", "generator arch");
  return a;
}

inline json to_json(const DiscriminatorArch& a) {
  return {{"channels", a.channels}, {"length", a.length}, {"stages", a.stages},
          {"base_width", a.base_width}, {"hidden", a.hidden}, {"slope", a.slope}};
}

template <class Err = ConfigError>
DiscriminatorArch critic_arch_from_json(const json& j) {
  constexpr std::string_view ctx = "critic arch";
  jsonutil::check_keys<Err>(j, {}, {"channels", "length", "stages", "base_width", "hidden", "slope"}, ctx);
  DiscriminatorArch a;
  if (j.contains("channels")) a.channels = jsonutil::get<std::size_t, Err>(j, "channels", ctx);
  if (j.contains("length")) a.length = jsonutil::get<std::size_t, Err>(j, "length", ctx);
  if (j.contains("stages")) a.stages = jsonutil::get<std::size_t, Err>(j, "stages", ctx);
  if (j.contains("base_width")) a.base_width = jsonutil::get<std::size_t, Err>(j, "base_width", ctx);
  if (j.contains("hidden")) a.hidden = jsonutil::get<std::size_t, Err>(j, "hidden", ctx);
  if (j.contains("slope")) a.slope = jsonutil::get<double, Err>(j, "slope", ctx);
  return a;
}

// ---- checkpoints --------------------------------------------------------------

namespace detail {

template <class T>
void put_params(io::Container& c, const std::string& prefix, const ParamSet<T>& p) {
  for (std::size_t i = 0; i < p.size(); ++i) c.tensors.emplace_back(prefix + "/" + p.name(i), p[i].template cast<float>());
}

// Fills `p` (already laid out from the architecture) and consumes the matching
// container tensors; shapes must agree exactly.
template <class T>
void take_params(const std::unordered_map<std::string, const Tensor<float>*>& by_name, std::size_t& used,
                 const std::string& prefix, ParamSet<T>& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string name = prefix + "/" + p.name(i);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint is missing tensor " + name);
    if (it->second->shape() != p[i].shape())
      throw DataError("checkpoint tensor " + name + " has shape " + it->second->shape().str() + ", expected " +
                      p[i].shape().str());
    p[i] = it->second->template cast<T>();
    ++used;
  }
}

}  // namespace detail

template <class T>
io::Container to_container(const TrainState<T>& s) {
  io::Container c;
  c.header = {{"kind", "checkpoint"},
              {"config", to_json(s.config)},
              {"generator_arch", to_json(s.generator_arch)},
              {"critic_arch", to_json(s.critic_arch)},
              {"step", s.step},
              {"rng_state", s.rng.state()},
              {"adam_steps", {{"generator", s.generator_opt.t}, {"critic", s.critic_opt.t}}},
              {"history",
               {{"transport_cost", s.history.transport_cost},
                {"w1_estimate", s.history.w1_estimate},
                {"critic_loss", s.history.critic_loss},
                {"generator_loss", s.history.generator_loss}}}};
  detail::put_params(c, "generator", s.generator);
  detail::put_params(c, "critic", s.critic);
  detail::put_params(c, "generator.adam_m", s.generator_opt.m);
  detail::put_params(c, "generator.adam_v", s.generator_opt.v);
  detail::put_params(c, "critic.adam_m", s.critic_opt.m);
  detail::put_params(c, "critic.adam_v", s.critic_opt.v);
  return c;
}

template <class T>
TrainState<T> from_container(const io::Container& c) {
  const json& h = c.header;
  constexpr std::string_view ctx = "checkpoint header";
  jsonutil::check_keys(h, {"kind", "config", "generator_arch", "critic_arch", "step", "rng_state", "adam_steps", "history"},
                       {}, ctx);
  if (jsonutil::get<std::string>(h, "kind", ctx) != "checkpoint") throw DataError("container is not a checkpoint");
  jsonutil::check_keys(h.at("adam_steps"), {"generator", "critic"}, {}, "checkpoint adam_steps");
  jsonutil::check_keys(h.at("history"), {"transport_cost", "w1_estimate", "critic_loss", "generator_loss"}, {},
                       "checkpoint history");

  TrainState<T> s;
  s.config = train_config_from_json<DataError>(h.at("config"));
  s.generator_arch = generator_arch_from_json<DataError>(h.at("generator_arch"));
  s.critic_arch = critic_arch_from_json<DataError>(h.at("critic_arch"));
  s.step = jsonutil::get<std::uint64_t>(h, "step", ctx);
  try {
    s.rng.set_state(jsonutil::get<std::string>(h, "rng_state", ctx));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  const auto& hist = h.at("history");
  s.history.transport_cost = hist.at("transport_cost").get<std::vector<double>>();
  s.history.w1_estimate = hist.at("w1_estimate").get<std::vector<double>>();
  s.history.critic_loss = hist.at("critic_loss").get<std::vector<double>>();
  s.history.generator_loss = hist.at("generator_loss").get<std::vector<double>>();
  if (s.history.size() != s.step || s.history.w1_estimate.size() != s.step || s.history.critic_loss.size() != s.step ||
      s.history.generator_loss.size() != s.step)
    throw DataError("checkpoint history length does not match step counter");

  s.generator = init_generator<T>(s.generator_arch, 0);
  s.critic = init_discriminator<T>(s.critic_arch, 0);
  s.generator_opt = {s.generator.zeros_like(), s.generator.zeros_like(),
                     jsonutil::get<std::uint64_t>(h.at("adam_steps"), "generator", ctx)};
  s.critic_opt = {s.critic.zeros_like(), s.critic.zeros_like(),
                  jsonutil::get<std::uint64_t>(h.at("adam_steps"), "critic", ctx)};

  std::unordered_map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : c.tensors)
    if (!by_name.emplace(name, &t).second) throw DataError("checkpoint has duplicate tensor " + name);
  std::size_t used = 0;
  detail::take_params(by_name, used, "generator", s.generator);
  detail::take_params(by_name, used, "critic", s.critic);
  detail::take_params(by_name, used, "generator.adam_m", s.generator_opt.m);
  detail::take_params(by_name, used, "generator.adam_v", s.generator_opt.v);
  detail::take_params(by_name, used, "critic.adam_m", s.critic_opt.m);
  detail::take_params(by_name, used, "critic.adam_v", s.critic_opt.v);
  if (used != c.tensors.size()) throw DataError("checkpoint has unexpected extra tensors");
  return s;
}

template <class T>
void save_checkpoint(const TrainState<T>& s, const std::filesystem::path& path) {
  io::save_container(to_container(s), path);
}

template <class T>
TrainState<T> load_checkpoint(const std::filesystem::path& path) {
  return from_container<T>(io::load_container(path));
}

inline std::string format_loss_csv(const LossHistory& h) {
  std::string out = "step,transport_cost,w1_estimate,critic_loss\n";
  char line[160];
  for (std::size_t i = 0; i < h.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", i + 1, h.transport_cost[i], h.w1_estimate[i],
                  h.critic_loss[i]);
    out += line;
  }
  return out;
}

}  // namespace otfmri::gan
