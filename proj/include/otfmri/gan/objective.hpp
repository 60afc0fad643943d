#pragma once

#include <span>
#include <vector>

#include "otfmri/core/autograd.hpp"
#include "otfmri/core/rng.hpp"
#include "otfmri/gan/discriminator.hpp"
#include "otfmri/gan/generator.hpp"

namespace otfmri::gan {

// Mean over the batch of the per-sample mean squared difference over all
// channel values, i.e. E ||y - G(y)||^2 normalised by 2V.
template <class T>
ag::Var<T> transport_cost(const ag::Var<T>& y, const ag::Var<T>& gy) {
  if (y.shape() != gy.shape())
    throw ConfigError("transport_cost shape mismatch: " + y.shape().str() + " vs " + gy.shape().str());
  return ag::mean_all(ag::square(ag::sub(y, gy)));
}

// Critic-form Wasserstein-1 witness: mean D(x) - mean D(G(y)).
template <class T>
ag::Var<T> w1_estimate(const DiscriminatorArch& arch, const BoundParams<T>& critic, const ag::Var<T>& x,
                       const ag::Var<T>& gy) {
  if (x.shape().n == 0 || gy.shape().n == 0) throw ConfigError("w1_estimate needs nonempty batches");
  return ag::sub(ag::mean_all(discriminator_forward(arch, critic, x)),
                 ag::mean_all(discriminator_forward(arch, critic, gy)));
}

// gamma * mean_b (||grad_xhat D(xhat_b)||_2 - 1)^2 with
// xhat_b = u_b x_b + (1 - u_b) gy_b. Differentiable in the critic parameters;
// the interpolates are treated as data.
template <class T>
ag::Var<T> gradient_penalty(const DiscriminatorArch& arch, const BoundParams<T>& critic, const Tensor<T>& x,
                            const Tensor<T>& gy, T gamma, std::span<const T> u) {
  if (gamma < T(0)) throw ConfigError("gradient penalty coefficient must be >= 0");
  if (x.shape() != gy.shape()) throw ConfigError("gradient_penalty shape mismatch");
  const auto [batch, ch, len] = x.shape();
  if (u.size() != batch) throw ConfigError("gradient_penalty needs one interpolation weight per sample");
  if (gamma == T(0)) return ag::constant(Tensor<T>::scalar(T(0)));

  Tensor<T> mixed(x.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < ch * len; ++i) {
      const std::size_t k = b * ch * len + i;
      mixed.data()[k] = u[b] * x.data()[k] + (T(1) - u[b]) * gy.data()[k];
    }
  const auto xhat = ag::leaf(std::move(mixed), true);
  const auto scores = discriminator_forward(arch, critic, xhat);
  const auto g = ag::grad(ag::sum_all(scores), {xhat}, /*create_graph=*/true)[0];
  const auto norms = ag::sqrt(ag::sum_to(ag::square(g), Shape{batch, 1, 1}));
  return ag::scale(ag::mean_all(ag::square(ag::add_scalar(norms, T(-1)))), gamma);
}

template <class T>
ag::Var<T> gradient_penalty(const DiscriminatorArch& arch, const BoundParams<T>& critic, const Tensor<T>& x,
                            const Tensor<T>& gy, T gamma, Rng& rng) {
  std::vector<T> u(x.shape().n);
  for (auto& v : u) v = static_cast<T>(rng.uniform());
  return gradient_penalty(arch, critic, x, gy, gamma, std::span<const T>(u));
}

template <class T>
struct GeneratorLoss {
  ag::Var<T> total;
  ag::Var<T> transport;
  ag::Var<T> adversarial;  // -mean D(G(y))
  ag::Var<T> enhanced;     // G(y)
};

// Generator side of the objective: transport cost + lambda * (-mean D(G(y))).
// The E D(x) part of the W1 witness does not depend on the generator.
template <class T>
GeneratorLoss<T> generator_loss(const GeneratorArch& garch, const BoundParams<T>& gen, const DiscriminatorArch& darch,
                                const BoundParams<T>& critic, const ag::Var<T>& y, T lambda) {
  GeneratorLoss<T> out;
  out.enhanced = generator_forward(garch, gen, y);
  out.transport = transport_cost(y, out.enhanced);
  out.adversarial = ag::neg(ag::mean_all(discriminator_forward(darch, critic, out.enhanced)));
  out.total = ag::add(out.transport, ag::scale(out.adversarial, lambda));
  return out;
}

}  // namespace otfmri::gan
