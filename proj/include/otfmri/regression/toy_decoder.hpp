#pragma once

// Linear stand-in for an image decoder: decode(z) = W z + b. encode() is the
// least-squares inverse, so encode(decode(z)) = z when W has full column rank.

#include <Eigen/Dense>

#include "otfmri/core/error.hpp"
#include "otfmri/synth/synthgen.hpp"

namespace otfmri::regression {

class ToyDecoder {
 public:
  ToyDecoder(Eigen::MatrixXd weight, Eigen::VectorXd bias) : w_(std::move(weight)), b_(std::move(bias)) {
    if (w_.rows() != b_.size()) throw ConfigError("toy decoder bias length must equal weight rows");
    pinv_ = w_.completeOrthogonalDecomposition().pseudoInverse();
  }

  // Visual encoding map of a synthetic dataset, no offset.
  static ToyDecoder from_truth(const synth::GroundTruth& gt) {
    const auto f = static_cast<Eigen::Index>(gt.feature_dim());
    const auto d = static_cast<Eigen::Index>(gt.dim_visual);
    Eigen::MatrixXd w(f, d);
    for (Eigen::Index r = 0; r < f; ++r)
      for (Eigen::Index k = 0; k < d; ++k) w(r, k) = gt.encoding_visual[static_cast<std::size_t>(r * d + k)];
    return ToyDecoder(std::move(w), Eigen::VectorXd::Zero(f));
  }

  std::size_t latent_dim() const { return static_cast<std::size_t>(w_.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(w_.rows()); }
  const Eigen::VectorXd& bias() const { return b_; }

  Eigen::VectorXd decode(const Eigen::VectorXd& z) const {
    if (static_cast<std::size_t>(z.size()) != latent_dim())
      throw ConfigError("toy_decode: latent has dimension " + std::to_string(z.size()) + ", expected " +
                        std::to_string(latent_dim()));
    return w_ * z + b_;
  }

  Eigen::VectorXd encode(const Eigen::VectorXd& v) const {
    if (static_cast<std::size_t>(v.size()) != output_dim())
      throw ConfigError("toy encode: vector has dimension " + std::to_string(v.size()) + ", expected " +
                        std::to_string(output_dim()));
    return pinv_ * (v - b_);
  }

 private:
  Eigen::MatrixXd w_;
  Eigen::VectorXd b_;
  Eigen::MatrixXd pinv_;
};

}  // namespace otfmri::regression
