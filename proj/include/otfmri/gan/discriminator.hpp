#pragma once

// 1D critic: stride-2 convolutions with LeakyReLU and doubling widths,
// followed by a dense head to one unbounded scalar per sample.

#include <cmath>
#include <string>

#include "otfmri/core/autograd.hpp"
#include "otfmri/core/rng.hpp"
#include "otfmri/gan/params.hpp"

namespace otfmri::gan {

struct DiscriminatorArch {
  std::size_t channels = 2;
  std::size_t length = 0;       // vertex count V the dense head is sized for
  std::size_t stages = 4;       // stride-2 stages; 0 gives a purely linear critic when hidden == 0
  std::size_t base_width = 16;  // width after the first stage, doubled per stage
  std::size_t hidden = 64;      // dense hidden units; 0 means a single dense layer
  double slope = 0.2;           // LeakyReLU negative slope

  std::size_t width(std::size_t stage) const { return base_width << stage; }

  std::size_t flat_features() const {
    std::size_t ch = channels, len = length;
    for (std::size_t s = 0; s < stages; ++s) {
      len = ag::detail::conv_out_length(len, 4, {2, 1});
      ch = width(s);
    }
    return ch * len;
  }

  void validate() const {
    if (length == 0) throw ConfigError("critic length must be positive");
    if (channels == 0 || (stages > 0 && base_width == 0)) throw ConfigError("critic widths must be positive");
    std::size_t len = length;
    for (std::size_t s = 0; s < stages; ++s) {
      if (len + 2 < 4) throw ConfigError("critic has too many stages for length " + std::to_string(length));
      len = (len + 2 - 4) / 2 + 1;
    }
  }

  friend bool operator==(const DiscriminatorArch&, const DiscriminatorArch&) = default;
};

//   stage{s}.{w,b}   (w_s, c_prev, 4), stride 2, pad 1
//   dense1.{w,b}     (hidden, F, 1)       only when hidden > 0
//   head.{w,b}       (1, hidden or F, 1)
template <class T>
ParamSet<T> init_discriminator(const DiscriminatorArch& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  ParamSet<T> p;
  std::size_t ch = arch.channels;
  for (std::size_t s = 0; s < arch.stages; ++s) {
    const std::size_t out = arch.width(s);
    p.add("stage" + std::to_string(s) + ".w",
          normal_tensor<T>({out, ch, 4}, std::sqrt(2.0 / static_cast<double>(4 * ch)), rng));
    p.add("stage" + std::to_string(s) + ".b", Tensor<T>({1, out, 1}));
    ch = out;
  }
  const std::size_t features = arch.flat_features();
  std::size_t head_in = features;
  if (arch.hidden > 0) {
    p.add("dense1.w", normal_tensor<T>({arch.hidden, features, 1}, std::sqrt(2.0 / static_cast<double>(features)), rng));
    p.add("dense1.b", Tensor<T>({1, arch.hidden, 1}));
    head_in = arch.hidden;
  }
  p.add("head.w", normal_tensor<T>({1, head_in, 1}, std::sqrt(1.0 / static_cast<double>(head_in)), rng));
  p.add("head.b", Tensor<T>({1, 1, 1}));
  return p;
}

// x: (B, channels, length) -> (B, 1, 1); no output nonlinearity.
template <class T>
ag::Var<T> discriminator_forward(const DiscriminatorArch& arch, const BoundParams<T>& p, const ag::Var<T>& x) {
  if (x.shape().c != arch.channels || x.shape().l != arch.length)
    throw ConfigError("critic expects (B, " + std::to_string(arch.channels) + ", " + std::to_string(arch.length) +
                      "), got " + x.shape().str());
  const T slope = static_cast<T>(arch.slope);
  ag::Var<T> h = x;
  for (std::size_t s = 0; s < arch.stages; ++s) {
    const std::string name = "stage" + std::to_string(s);
    h = ag::leaky_relu(conv_bias(h, p(name + ".w"), p(name + ".b"), 2, 1), slope);
  }
  h = ag::reshape(h, Shape{x.shape().n, h.shape().c * h.shape().l, 1});
  if (arch.hidden > 0) h = ag::leaky_relu(conv_bias(h, p("dense1.w"), p("dense1.b")), slope);
  return conv_bias(h, p("head.w"), p("head.b"));
}

}  // namespace otfmri::gan
