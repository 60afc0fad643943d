#pragma once

// 1D U-Net generator with residual channel attention blocks on every skip
// connection and a global input->output residual.

#include <algorithm>
#include <cmath>
#include <string>

#include "otfmri/core/autograd.hpp"
#include "otfmri/core/rng.hpp"
#include "otfmri/gan/params.hpp"

namespace otfmri::gan {

struct GeneratorArch {
  std::size_t channels = 2;     // hemispheres in and out
  std::size_t depth = 4;        // number of x1/2 downsampling stages
  std::size_t base_width = 16;  // feature width at full resolution, doubled per level
  std::size_t reduction = 4;    // channel-attention bottleneck ratio

  std::size_t width(std::size_t level) const { return base_width << level; }
  std::size_t attention_width(std::size_t level) const { return std::max<std::size_t>(1, width(level) / reduction); }
  std::size_t multiple() const { return std::size_t{1} << depth; }
  // Smallest multiple of 2^depth that is >= length.
  std::size_t padded_length(std::size_t length) const { return (length + multiple() - 1) / multiple() * multiple(); }

  void validate() const {
    if (channels == 0 || base_width == 0 || reduction == 0) throw ConfigError("generator widths must be positive");
    if (depth > 16) throw ConfigError("generator depth too large");
  }

  friend bool operator==(const GeneratorArch&, const GeneratorArch&) = default;
};

// Handles for one residual channel attention block.
template <class T>
struct RcabWeights {
  ag::Var<T> conv1_w, conv1_b;  // (C, C, 3), (1, C, 1)
  ag::Var<T> conv2_w, conv2_b;
  ag::Var<T> att1_w, att1_b;    // (C/r, C, 1), (1, C/r, 1)
  ag::Var<T> att2_w, att2_b;    // (C, C/r, 1), (1, C, 1)

  static RcabWeights bind(const BoundParams<T>& p, const std::string& prefix) {
    return {p(prefix + ".conv1.w"), p(prefix + ".conv1.b"), p(prefix + ".conv2.w"), p(prefix + ".conv2.b"),
            p(prefix + ".att1.w"),  p(prefix + ".att1.b"),  p(prefix + ".att2.w"),  p(prefix + ".att2.b")};
  }
};

// out = x + scale * body(x), body = conv -> ReLU -> conv,
// scale = sigmoid(dense2(ReLU(dense1(mean_L(body(x)))))) broadcast along L.
template <class T>
ag::Var<T> rcab_forward(const ag::Var<T>& x, const RcabWeights<T>& w) {
  const auto [batch, ch, len] = x.shape();
  if (len < 1) throw ConfigError("rcab input must have length >= 1");
  if (w.conv1_w.shape().n != ch || w.conv1_w.shape().c != ch)
    throw ConfigError("rcab weight shape " + w.conv1_w.shape().str() + " does not match input " + x.shape().str());
  const std::size_t pad1 = w.conv1_w.shape().l / 2;
  const std::size_t pad2 = w.conv2_w.shape().l / 2;
  const auto hidden = ag::relu(conv_bias(x, w.conv1_w, w.conv1_b, 1, pad1));
  const auto body = conv_bias(hidden, w.conv2_w, w.conv2_b, 1, pad2);
  const auto pooled = ag::scale(ag::sum_to(body, Shape{batch, ch, 1}), T(1) / static_cast<T>(len));
  const auto squeeze = ag::relu(conv_bias(pooled, w.att1_w, w.att1_b));
  const auto gate = ag::sigmoid(conv_bias(squeeze, w.att2_w, w.att2_b));
  return ag::add(x, ag::mul(body, gate));
}

template <class T>
void add_rcab_params(ParamSet<T>& set, const std::string& prefix, std::size_t ch, std::size_t att, Rng& rng) {
  const double conv_sigma = std::sqrt(2.0 / static_cast<double>(3 * ch));
  set.add(prefix + ".conv1.w", normal_tensor<T>({ch, ch, 3}, conv_sigma, rng));
  set.add(prefix + ".conv1.b", Tensor<T>({1, ch, 1}));
  set.add(prefix + ".conv2.w", normal_tensor<T>({ch, ch, 3}, 0.1 * conv_sigma, rng));
  set.add(prefix + ".conv2.b", Tensor<T>({1, ch, 1}));
  set.add(prefix + ".att1.w", normal_tensor<T>({att, ch, 1}, std::sqrt(2.0 / static_cast<double>(ch)), rng));
  set.add(prefix + ".att1.b", Tensor<T>({1, att, 1}));
  set.add(prefix + ".att2.w", normal_tensor<T>({ch, att, 1}, std::sqrt(1.0 / static_cast<double>(att)), rng));
  set.add(prefix + ".att2.b", Tensor<T>({1, ch, 1}));
}

// Parameter layout (level i has width base_width * 2^i):
//   in.{w,b}                     channels -> w0, kernel 3
//   enc{i}.*                     RCAB on skip i
//   down{i}.{w,b}                stride-2 conv, kernel 4, w_i -> w_{i+1}
//   mid.*                        RCAB at the bottleneck
//   up{i}.{w,b}                  stride-2 transposed conv, w_{i+1} -> w_i
//   fuse{i}.{w,b}                concat(up_i, skip_i) -> w_i, kernel 3
//   out.{w,b}                    w0 -> channels, kernel 3, zero-initialised
template <class T>
ParamSet<T> init_generator(const GeneratorArch& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  ParamSet<T> p;
  const std::size_t w0 = arch.width(0);
  p.add("in.w", normal_tensor<T>({w0, arch.channels, 3}, std::sqrt(2.0 / static_cast<double>(3 * arch.channels)), rng));
  p.add("in.b", Tensor<T>({1, w0, 1}));
  for (std::size_t i = 0; i < arch.depth; ++i) {
    const std::size_t wi = arch.width(i), wn = arch.width(i + 1);
    add_rcab_params(p, "enc" + std::to_string(i), wi, arch.attention_width(i), rng);
    p.add("down" + std::to_string(i) + ".w",
          normal_tensor<T>({wn, wi, 4}, std::sqrt(2.0 / static_cast<double>(4 * wi)), rng));
    p.add("down" + std::to_string(i) + ".b", Tensor<T>({1, wn, 1}));
  }
  add_rcab_params(p, "mid", arch.width(arch.depth), arch.attention_width(arch.depth), rng);
  for (std::size_t k = arch.depth; k-- > 0;) {
    const std::size_t wi = arch.width(k), wn = arch.width(k + 1);
    p.add("up" + std::to_string(k) + ".w",
          normal_tensor<T>({wn, wi, 4}, std::sqrt(2.0 / static_cast<double>(2 * wn)), rng));
    p.add("up" + std::to_string(k) + ".b", Tensor<T>({1, wi, 1}));
    p.add("fuse" + std::to_string(k) + ".w",
          normal_tensor<T>({wi, 2 * wi, 3}, std::sqrt(2.0 / static_cast<double>(6 * wi)), rng));
    p.add("fuse" + std::to_string(k) + ".b", Tensor<T>({1, wi, 1}));
  }
  // Zero output head + global residual: the untrained map is the identity.
  p.add("out.w", Tensor<T>({arch.channels, w0, 3}));
  p.add("out.b", Tensor<T>({1, arch.channels, 1}));
  return p;
}

// y: (B, channels, V) -> (B, channels, V). The length axis is zero-padded to a
// multiple of 2^depth internally and cropped back on output.
template <class T>
ag::Var<T> generator_forward(const GeneratorArch& arch, const BoundParams<T>& p, const ag::Var<T>& y) {
  if (y.shape().c != arch.channels)
    throw ConfigError("generator expects " + std::to_string(arch.channels) + " channels, got " + y.shape().str());
  const std::size_t length = y.shape().l;
  const std::size_t padded = arch.padded_length(length);

  auto h = ag::relu(conv_bias(ag::pad_length(y, padded), p("in.w"), p("in.b"), 1, 1));
  check_finite(h, "in");
  std::vector<ag::Var<T>> skips;
  for (std::size_t i = 0; i < arch.depth; ++i) {
    const std::string lvl = std::to_string(i);
    skips.push_back(rcab_forward(h, RcabWeights<T>::bind(p, "enc" + lvl)));
    check_finite(skips.back(), "enc" + lvl);
    h = ag::relu(conv_bias(h, p("down" + lvl + ".w"), p("down" + lvl + ".b"), 2, 1));
    check_finite(h, "down" + lvl);
  }
  h = rcab_forward(h, RcabWeights<T>::bind(p, "mid"));
  check_finite(h, "mid");
  for (std::size_t k = arch.depth; k-- > 0;) {
    const std::string lvl = std::to_string(k);
    h = ag::relu(ag::add(ag::conv_transpose1d(h, p("up" + lvl + ".w"), 2, 1), p("up" + lvl + ".b")));
    check_finite(h, "up" + lvl);
    h = ag::relu(conv_bias(ag::concat_channels(h, skips[k]), p("fuse" + lvl + ".w"), p("fuse" + lvl + ".b"), 1, 1));
    check_finite(h, "fuse" + lvl);
  }
  const auto delta = conv_bias(h, p("out.w"), p("out.b"), 1, 1);
  check_finite(delta, "out");
  return ag::add(y, ag::crop_length(delta, length));
}

}  // namespace otfmri::gan
