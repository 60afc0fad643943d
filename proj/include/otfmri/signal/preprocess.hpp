#pragma once

// Preprocessing on vertex vectors: DCT high-pass detrending over time,
// Gaussian smoothing along the vertex index, and trial averaging.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "otfmri/signal/sample.hpp"

namespace otfmri::signal {

// Number of non-constant DCT-II regressors whose period 2*n*tr/k exceeds cutoff_s.
inline std::size_t dct_highpass_order(std::size_t n, double cutoff_s, double tr_s) {
  const auto k = static_cast<std::size_t>(std::floor(2.0 * static_cast<double>(n) * tr_s / cutoff_s));
  return std::min(k, n - 1);
}

// Orthonormal DCT-II basis vector k evaluated at time t.
inline double dct_basis(std::size_t k, std::size_t t, std::size_t n) {
  return std::sqrt(2.0 / static_cast<double>(n)) *
         std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(t) + 1.0) /
                  (2.0 * static_cast<double>(n)));
}

// Removes, per vertex, the projection onto the low-frequency DCT components
// (period > cutoff_s). The constant component is kept, so vertex means are
// unchanged.
inline std::vector<FmriSample> highpass_temporal(const std::vector<FmriSample>& series, double cutoff_s, double tr_s) {
  const std::size_t n = series.size();
  if (n < 2) throw ConfigError("highpass_temporal needs at least 2 time points");
  if (!(tr_s > 0.0) || !(cutoff_s > 2.0 * tr_s)) throw ConfigError("highpass_temporal needs cutoff_s > 2 * tr_s > 0");
  const std::size_t v = series[0].vertex_count();
  for (const auto& s : series)
    if (s.vertex_count() != v) throw DataError("highpass_temporal: vertex count differs across time points");

  const std::size_t order = dct_highpass_order(n, cutoff_s, tr_s);
  std::vector<FmriSample> out = series;
  if (order == 0) return out;

  std::vector<double> basis(order * n);
  for (std::size_t k = 0; k < order; ++k)
    for (std::size_t t = 0; t < n; ++t) basis[k * n + t] = dct_basis(k + 1, t, n);

  std::vector<double> coef(order * v);
  for (std::size_t c = 0; c < kChannels; ++c) {
    std::fill(coef.begin(), coef.end(), 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const auto& x = series[t].channels[c];
      for (std::size_t k = 0; k < order; ++k) {
        const double phi = basis[k * n + t];
        double* row = coef.data() + k * v;
        for (std::size_t i = 0; i < v; ++i) row[i] += phi * x[i];
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      auto& y = out[t].channels[c];
      for (std::size_t i = 0; i < v; ++i) {
        double fit = 0.0;
        for (std::size_t k = 0; k < order; ++k) fit += coef[k * v + i] * basis[k * n + t];
        y[i] = static_cast<float>(static_cast<double>(series[t].channels[c][i]) - fit);
      }
    }
  }
  return out;
}

inline double fwhm_to_sigma(double fwhm) { return fwhm / std::sqrt(8.0 * std::log(2.0)); }

// Normalized Gaussian weights for offsets -radius..radius, radius = max(1, ceil(4 sigma)).
inline std::vector<double> gaussian_kernel(double fwhm) {
  if (!(fwhm > 0.0)) throw ConfigError("smoothing FWHM must be positive");
  const double sigma = fwhm_to_sigma(fwhm);
  const auto radius = static_cast<std::ptrdiff_t>(std::max(1.0, std::ceil(4.0 * sigma)));
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double x = static_cast<double>(k) / sigma;
    w[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * x * x);
    total += w[static_cast<std::size_t>(k + radius)];
  }
  for (auto& x : w) x /= total;
  return w;
}

// Half-sample symmetric reflection: ... x1 x0 | x0 x1 ... x_{n-1} | x_{n-1} x_{n-2} ...
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

// With a symmetric kernel and symmetric reflection the operator is a symmetric
// matrix with unit row sums, so channel sums are preserved.
inline std::vector<float> gaussian_smooth(std::span<const float> x, double fwhm) {
  const auto w = gaussian_kernel(fwhm);
  const auto radius = static_cast<std::ptrdiff_t>(w.size() / 2);
  const std::size_t n = x.size();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k)
      acc += w[static_cast<std::size_t>(k + radius)] * x[reflect_index(static_cast<std::ptrdiff_t>(i) + k, n)];
    out[i] = static_cast<float>(acc);
  }
  return out;
}

inline FmriSample smooth_spatial(const FmriSample& sample, double fwhm_vertices) {
  sample.validate();
  FmriSample out = sample;
  for (std::size_t c = 0; c < kChannels; ++c) out.channels[c] = gaussian_smooth(sample.channels[c], fwhm_vertices);
  return out;
}

// Element-wise mean of repeated trials of one subject viewing one image.
inline FmriSample trial_average(std::span<const FmriSample> samples) {
  if (samples.empty()) throw ConfigError("trial_average needs at least one sample");
  const auto& first = samples.front();
  const std::size_t v = first.vertex_count();
  for (const auto& s : samples) {
    if (s.subject_id != first.subject_id || s.image_id != first.image_id)
      throw ConfigError("trial_average mixes subject/image: " + s.subject_id + "/" + s.image_id + " vs " +
                        first.subject_id + "/" + first.image_id);
    if (s.vertex_count() != v) throw DataError("trial_average: vertex count differs");
  }
  FmriSample out(first.subject_id, first.image_id, kAveragedTrial, v);
  std::vector<double> acc(v);
  for (std::size_t c = 0; c < kChannels; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& s : samples)
      for (std::size_t i = 0; i < v; ++i) acc[i] += s.channels[c][i];
    for (std::size_t i = 0; i < v; ++i) out.channels[c][i] = static_cast<float>(acc[i] / static_cast<double>(samples.size()));
  }
  return out;
}

}  // namespace otfmri::signal
