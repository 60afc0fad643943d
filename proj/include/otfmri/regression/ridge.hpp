#pragma once

// Linear decoding heads: closed-form ridge regression with k-fold selection
// of the regularization strength, and helpers to assemble design/target rows.

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "otfmri/core/container.hpp"
#include "otfmri/core/error.hpp"
#include "otfmri/core/matrix_io.hpp"
#include "otfmri/core/rng.hpp"
#include "otfmri/signal/sample.hpp"

namespace otfmri::regression {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class TargetKind { visual, semantic };

inline std::string to_string(TargetKind k) { return k == TargetKind::visual ? "visual" : "semantic"; }

template <class Err = ConfigError>
TargetKind parse_target_kind(const std::string& s) {
  if (s == "visual") return TargetKind::visual;
  if (s == "semantic") return TargetKind::semantic;
  throw Err("unknown target kind '" + s + "' (expected visual or semantic)");
}

inline const std::vector<double>& default_alpha_grid() {
  static const std::vector<double> grid{1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  return grid;
}

inline constexpr std::size_t kFolds = 5;
inline constexpr std::uint64_t kFoldSeed = 0x0f01d5eedULL;

struct CvScore {
  double alpha = 0.0;
  double r2 = 0.0;
};

struct RegressionHead {
  MatrixXd weight;  // d_out x p
  VectorXd bias;    // d_out
  double alpha = 0.0;
  TargetKind kind = TargetKind::visual;
  std::vector<CvScore> cv;

  std::size_t input_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

struct RidgeFit {
  MatrixXd weight;
  VectorXd bias;
};

namespace detail {

inline void require_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw DataError(std::string(what) + " contains non-finite entries");
}

}  // namespace detail

// W = Y_c^T X_c (X_c^T X_c + alpha I)^-1 on column-centered data. The primal
// p x p system is used when p <= n, the equivalent n x n dual system otherwise.
inline RidgeFit fit_ridge(const MatrixXd& X, const MatrixXd& Y, double alpha) {
  if (X.rows() != Y.rows()) throw ConfigError("design and target row counts differ");
  if (X.rows() < 2) throw ConfigError("ridge regression needs at least 2 rows");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("ridge alpha must be finite and > 0");
  const VectorXd mx = X.colwise().mean().transpose();
  const VectorXd my = Y.colwise().mean().transpose();
  const MatrixXd Xc = X.rowwise() - mx.transpose();
  const MatrixXd Yc = Y.rowwise() - my.transpose();
  const auto n = X.rows(), p = X.cols();

  MatrixXd B;  // p x d_out
  if (p <= n) {
    MatrixXd G = Xc.transpose() * Xc;
    G.diagonal().array() += alpha;
    B = G.llt().solve(Xc.transpose() * Yc);
  } else {
    MatrixXd K = Xc * Xc.transpose();
    K.diagonal().array() += alpha;
    B = Xc.transpose() * K.llt().solve(Yc);
  }
  RidgeFit f;
  f.weight = B.transpose();
  f.bias = my - f.weight * mx;
  if (!f.weight.allFinite() || !f.bias.allFinite()) throw NumericalError("ridge solution is not finite");
  return f;
}

// Coefficient of determination per output column, averaged. A constant
// column scores 1 when predicted exactly and 0 otherwise.
inline double r2_score(const MatrixXd& truth, const MatrixXd& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols()) throw ConfigError("r2_score shape mismatch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    const double mean = truth.col(j).mean();
    const double ss_res = (truth.col(j) - pred.col(j)).squaredNorm();
    const double ss_tot = (truth.col(j).array() - mean).square().sum();
    total += ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  }
  return total / static_cast<double>(truth.cols());
}

// Fold of each row: a fixed-seed permutation dealt round-robin.
inline std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(kFoldSeed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  std::vector<std::size_t> fold(n);
  for (std::size_t k = 0; k < n; ++k) fold[perm[k]] = k % folds;
  return fold;
}

inline MatrixXd select_rows(const MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

inline MatrixXd predict_rows(const RidgeFit& f, const MatrixXd& X) {
  return (X * f.weight.transpose()).rowwise() + f.bias.transpose();
}

// Mean held-out R^2 over min(5, n) folds.
inline double cv_r2(const MatrixXd& X, const MatrixXd& Y, double alpha) {
  const auto n = static_cast<std::size_t>(X.rows());
  const std::size_t folds = std::min(kFolds, n);
  const auto fold = fold_assignment(n, folds);
  double total = 0.0;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
    if (train.size() < 2) throw ConfigError("too few rows for cross-validation");
    const auto fit = fit_ridge(select_rows(X, train), select_rows(Y, train), alpha);
    total += r2_score(select_rows(Y, test), predict_rows(fit, select_rows(X, test)));
  }
  return total / static_cast<double>(folds);
}

// Selects alpha by cross-validated R^2 (ties go to the larger alpha) and
// refits on all rows.
inline RegressionHead fit_head(const MatrixXd& X, const MatrixXd& Y, std::span<const double> alpha_grid, TargetKind kind) {
  if (X.rows() < 2) throw ConfigError("fit_head needs n >= 2 rows");
  if (X.rows() != Y.rows())
    throw ConfigError("design has " + std::to_string(X.rows()) + " rows but targets have " + std::to_string(Y.rows()));
  if (alpha_grid.empty()) throw ConfigError("alpha grid is empty");
  for (double a : alpha_grid)
    if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("alpha grid entries must be finite and > 0");
  detail::require_finite(X, "design matrix");
  detail::require_finite(Y, "target matrix");

  RegressionHead head;
  head.kind = kind;
  double best = -std::numeric_limits<double>::infinity();
  for (double a : alpha_grid) {
    const double r2 = cv_r2(X, Y, a);
    head.cv.push_back({a, r2});
    if (r2 > best || (r2 == best && a > head.alpha)) {
      best = r2;
      head.alpha = a;
    }
  }
  auto fit = fit_ridge(X, Y, head.alpha);
  head.weight = std::move(fit.weight);
  head.bias = std::move(fit.bias);
  return head;
}

inline RegressionHead fit_head(const MatrixXd& X, const MatrixXd& Y, TargetKind kind) {
  return fit_head(X, Y, default_alpha_grid(), kind);
}

inline VectorXd predict_latents(const RegressionHead& head, std::span<const float> x) {
  if (x.size() != head.input_dim())
    throw ConfigError("predict_latents: input has dimension " + std::to_string(x.size()) + ", head expects " +
                      std::to_string(head.input_dim()));
  VectorXd v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) v[static_cast<Eigen::Index>(i)] = x[i];
  return head.weight * v + head.bias;
}

inline VectorXd predict_latents(const RegressionHead& head, const signal::FmriSample& s) {
  return predict_latents(head, signal::flatten(s));
}

inline MatrixXd predict_latents(const RegressionHead& head, const MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != head.input_dim())
    throw ConfigError("predict_latents: input has dimension " + std::to_string(X.cols()) + ", head expects " +
                      std::to_string(head.input_dim()));
  return (X * head.weight.transpose()).rowwise() + head.bias.transpose();
}

// ---- design / target assembly -----------------------------------------------

// One row per sample, channels concatenated.
inline MatrixXd design_matrix(const std::vector<signal::FmriSample>& samples) {
  if (samples.empty()) return MatrixXd(0, 0);
  const std::size_t p = 2 * samples.front().vertex_count();
  MatrixXd X(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(p));
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (2 * samples[r].vertex_count() != p) throw DataError("design rows have differing vertex counts");
    const auto row = signal::flatten(samples[r]);
    for (std::size_t j = 0; j < p; ++j) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = row[j];
  }
  return X;
}

// Target row for each requested image id. Every id missing from the target
// file is reported in one error.
inline MatrixXd align_targets(const io::MatrixFile& targets, const std::vector<std::string>& image_ids) {
  if (!targets.image_ids) throw DataError("target file has no image_ids");
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < targets.rows; ++i)
    if (!row_of.emplace((*targets.image_ids)[i], i).second)
      throw DataError("target file lists image id " + (*targets.image_ids)[i] + " twice");
  std::vector<std::string> missing;
  MatrixXd Y(static_cast<Eigen::Index>(image_ids.size()), static_cast<Eigen::Index>(targets.cols));
  for (std::size_t r = 0; r < image_ids.size(); ++r) {
    auto it = row_of.find(image_ids[r]);
    if (it == row_of.end()) {
      if (missing.empty() || missing.back() != image_ids[r]) missing.push_back(image_ids[r]);
      continue;
    }
    for (std::size_t j = 0; j < targets.cols; ++j)
      Y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = targets(it->second, j);
  }
  if (!missing.empty()) {
    std::string msg = "targets missing for " + std::to_string(missing.size()) + " image id(s):";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  return Y;
}

// ---- serialization ------------------------------------------------------------

inline io::Container to_container(const RegressionHead& h) {
  io::Container c;
  json cv = json::array();
  for (const auto& s : h.cv) cv.push_back({{"alpha", s.alpha}, {"r2", s.r2}});
  c.header = {{"kind", "regression_head"}, {"target", to_string(h.kind)}, {"alpha", h.alpha},
              {"input_dim", h.input_dim()}, {"output_dim", h.output_dim()}, {"cv", cv}};
  Tensor<float> w(Shape{1, h.output_dim(), h.input_dim()});
  for (std::size_t r = 0; r < h.output_dim(); ++r)
    for (std::size_t j = 0; j < h.input_dim(); ++j)
      w(0, r, j) = static_cast<float>(h.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
  Tensor<float> b(Shape{1, 1, h.output_dim()});
  for (std::size_t r = 0; r < h.output_dim(); ++r) b(0, 0, r) = static_cast<float>(h.bias[static_cast<Eigen::Index>(r)]);
  c.tensors.emplace_back("weight", std::move(w));
  c.tensors.emplace_back("bias", std::move(b));
  return c;
}

inline RegressionHead head_from_container(const io::Container& c) {
  constexpr std::string_view ctx = "regression head header";
  jsonutil::check_keys(c.header, {"kind", "target", "alpha", "input_dim", "output_dim", "cv"}, {}, ctx);
  if (jsonutil::get<std::string>(c.header, "kind", ctx) != "regression_head")
    throw DataError("container is not a regression head");
  RegressionHead h;
  h.kind = parse_target_kind<DataError>(jsonutil::get<std::string>(c.header, "target", ctx));
  h.alpha = jsonutil::get<double>(c.header, "alpha", ctx);
  const auto p = jsonutil::get<std::size_t>(c.header, "input_dim", ctx);
  const auto d = jsonutil::get<std::size_t>(c.header, "output_dim", ctx);
  for (const auto& s : c.header.at("cv")) {
    jsonutil::check_keys(s, {"alpha", "r2"}, {}, "regression head cv entry");
    h.cv.push_back({jsonutil::get<double>(s, "alpha", ctx), jsonutil::get<double>(s, "r2", ctx)});
  }
  if (c.tensors.size() != 2) throw DataError("regression head must hold exactly 'weight' and 'bias'");
  const auto& w = c.tensor("weight");
  const auto& b = c.tensor("bias");
  if (w.shape() != Shape{1, d, p} || b.shape() != Shape{1, 1, d})
    throw DataError("regression head tensor shapes do not match header dimensions");
  if (!w.all_finite() || !b.all_finite()) throw DataError("regression head has non-finite weights");
  h.weight.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(p));
  h.bias.resize(static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t j = 0; j < p; ++j) h.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = w(0, r, j);
    h.bias[static_cast<Eigen::Index>(r)] = b(0, 0, r);
  }
  return h;
}

inline void save_head(const RegressionHead& h, const std::filesystem::path& path) {
  io::save_container(to_container(h), path);
}

inline RegressionHead load_head(const std::filesystem::path& path) { return head_from_container(io::load_container(path)); }

}  // namespace otfmri::regression
