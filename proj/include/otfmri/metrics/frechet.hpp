#pragma once

// Fréchet distance between Gaussians fitted to two feature sets, and
// best-of-k selection by score.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "otfmri/core/error.hpp"
#include "otfmri/core/matrix_io.hpp"

namespace otfmri::metrics {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FeatureSet {
  MatrixXd values;  // n x d
  std::string source;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }

  void validate() const {
    if (values.rows() < 2) throw DataError(source + ": feature set needs n >= 2 rows");
    if (values.cols() < 1) throw DataError(source + ": feature set needs d >= 1");
    for (Eigen::Index r = 0; r < values.rows(); ++r)
      if (!values.row(r).allFinite()) throw DataError(source + ": non-finite value in row " + std::to_string(r));
  }
};

struct GaussianMoments {
  VectorXd mean;
  MatrixXd cov;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

inline constexpr double kSymmetryTolerance = 1e-8;

// Sample mean and unbiased covariance, symmetrized.
inline GaussianMoments fit_moments(const FeatureSet& f) {
  if (f.values.rows() < 2) throw ConfigError("fit_moments needs n >= 2 rows");
  GaussianMoments m;
  m.mean = f.values.colwise().mean().transpose();
  const MatrixXd c = f.values.rowwise() - m.mean.transpose();
  m.cov = (c.transpose() * c) / static_cast<double>(f.values.rows() - 1);
  m.cov = 0.5 * (m.cov + m.cov.transpose()).eval();
  return m;
}

// Principal square root via eigendecomposition; negative eigenvalues clamp to 0.
inline MatrixXd sqrtm_psd(const MatrixXd& a) {
  if (a.rows() != a.cols()) throw ConfigError("sqrtm_psd needs a square matrix");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * scale)
    throw ConfigError("sqrtm_psd: matrix is not symmetric within tolerance");
  const MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("sqrtm_psd: eigendecomposition failed");
  const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const MatrixXd b = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (b + b.transpose());
}

inline double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
  if (a.dim() != b.dim())
    throw ConfigError("frechet_distance: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                      std::to_string(b.dim()) + ")");
  const MatrixXd ra = sqrtm_psd(a.cov);
  MatrixXd inner = ra * b.cov * ra;
  inner = 0.5 * (inner + inner.transpose()).eval();
  const double trace = a.cov.trace() + b.cov.trace() - 2.0 * sqrtm_psd(inner).trace();
  return (a.mean - b.mean).squaredNorm() + std::max(0.0, trace);
}

inline double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  return frechet_distance(fit_moments(a), fit_moments(b));
}

// Condition diagnostics of a covariance: extreme eigenvalues and their ratio.
struct CovarianceDiagnostics {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double condition = 0.0;  // inf when the smallest eigenvalue is <= 0
};

inline CovarianceDiagnostics diagnose(const GaussianMoments& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m.cov, Eigen::EigenvaluesOnly);
  CovarianceDiagnostics d;
  d.min_eigenvalue = eig.eigenvalues().minCoeff();
  d.max_eigenvalue = eig.eigenvalues().maxCoeff();
  d.condition = d.min_eigenvalue > 0.0 ? d.max_eigenvalue / d.min_eigenvalue : std::numeric_limits<double>::infinity();
  return d;
}

// Index of the lowest score; the first index wins ties.
template <class Item>
std::pair<std::size_t, const Item*> best_of_k(const std::vector<Item>& items, const std::function<double(const Item&)>& score) {
  if (items.empty()) throw ConfigError("best_of_k needs at least one candidate");
  std::size_t best = 0;
  double best_score = score(items[0]);
  for (std::size_t i = 1; i < items.size(); ++i) {
    const double s = score(items[i]);
    if (s < best_score) {
      best = i;
      best_score = s;
    }
  }
  return {best, &items[best]};
}

inline FeatureSet to_feature_set(const io::MatrixFile& m, std::string source) {
  FeatureSet f;
  f.source = std::move(source);
  f.values.resize(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) f.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
  return f;
}

inline FeatureSet load_features(const std::filesystem::path& sidecar) {
  auto f = to_feature_set(io::load_matrix(sidecar), sidecar.string());
  f.validate();
  return f;
}

inline void save_features(const FeatureSet& f, const std::filesystem::path& sidecar) {
  io::MatrixFile m;
  m.rows = f.rows();
  m.cols = f.dim();
  m.values.resize(m.rows * m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c)
      m.values[r * m.cols + c] = static_cast<float>(f.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
  io::save_matrix(m, sidecar);
}

}  // namespace otfmri::metrics
